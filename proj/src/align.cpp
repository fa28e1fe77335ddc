#include "mgopt/align.hpp"

#include <cmath>
#include <string>

#include "mgopt/errors.hpp"

namespace mgopt {

Var encode(Tape& tape, Var features, Var weight, Var bias) {
  return tape.add_row_broadcast(tape.matmul(features, weight), bias);
}

Var modality_mean(Tape& tape, const std::vector<Var>& latents) {
  if (latents.empty()) {
    throw ContractError("modality_mean: no latents given");
  }
  Var acc = latents.front();
  for (std::size_t m = 1; m < latents.size(); ++m) {
    acc = tape.add(acc, latents[m]);
  }
  return tape.scale(acc, 1.0 / double(latents.size()));
}

Var similarity_logits(Tape& tape, Var latent, Var latent_mean,
                      double temperature) {
  Var prod = tape.matmul(tape.frob_normalize(latent),
                         tape.transpose(tape.frob_normalize(latent_mean)));
  return tape.scale(prod, std::exp(temperature));
}

DenseMatrix build_target_matrix(const std::vector<int>& labels,
                                const LabelMask& mask) {
  const std::size_t n = labels.size();
  std::vector<bool> labeled(n, false);
  int max_label = -1;
  for (std::size_t i : mask.train_indices) {
    if (i >= n) {
      throw ContractError("build_target_matrix: labeled index " +
                          std::to_string(i) + " out of range");
    }
    labeled[i] = true;
    max_label = std::max(max_label, labels[i]);
  }
  std::vector<double> class_count(std::size_t(max_label + 1), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!labeled[i]) continue;
    if (labels[i] < 0) {
      throw ContractError("build_target_matrix: negative label at sample " +
                          std::to_string(i));
    }
    class_count[std::size_t(labels[i])] += 1.0;
  }
  DenseMatrix t(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!labeled[i]) continue;
    const double w = 1.0 / class_count[std::size_t(labels[i])];
    for (std::size_t j = 0; j < n; ++j) {
      if (labeled[j] && labels[j] == labels[i]) t(i, j) = w;
    }
  }
  return t;
}

Var contrastive_loss(Tape& tape, const std::vector<Var>& logits, Var target) {
  if (logits.empty()) {
    throw ContractError("contrastive_loss: no logit matrices given");
  }
  const DenseMatrix& tv = tape.value(target);
  if (tv.rows() != tv.cols()) {
    throw ShapeError("contrastive_loss: target must be square, got " +
                     std::to_string(tv.rows()) + "x" +
                     std::to_string(tv.cols()));
  }
  Var acc{};
  bool first = true;
  for (Var g : logits) {
    Var rows = tape.frob_inner(target, tape.row_log_softmax(g));
    Var cols =
        tape.frob_inner(target, tape.row_log_softmax(tape.transpose(g)));
    Var term = tape.add(rows, cols);
    acc = first ? term : tape.add(acc, term);
    first = false;
  }
  const double scale = -1.0 / (double(logits.size()) * double(tv.rows()));
  return tape.scale(acc, scale);
}

}  // namespace mgopt
