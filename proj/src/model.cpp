#include "mgopt/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>

#include "mgopt/align.hpp"
#include "mgopt/errors.hpp"
#include "mgopt/fsio.hpp"
#include "mgopt/graphopt.hpp"

namespace mgopt {
namespace {

std::string tensor_label(const char* base, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s[%zu]", base, i);
  return buf;
}

std::string tensor_label(const char* base, std::size_t i, std::size_t j) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s[%zu][%zu]", base, i, j);
  return buf;
}

// Single traversal defining the canonical tensor order; every flat view of
// the parameters (labels, values, slots, registration, serialization) goes
// through here so they cannot drift apart.
template <typename Params, typename Fn>
void for_each_tensor(Params& params, Fn&& fn) {
  const std::size_t modalities = params.encoder_weight.size();
  for (std::size_t m = 0; m < modalities; ++m) {
    fn(tensor_label("encoder_weight", m), params.encoder_weight[m]);
    fn(tensor_label("encoder_bias", m), params.encoder_bias[m]);
  }
  for (std::size_t m = 0; m < params.attention.intra_key.size(); ++m)
    for (std::size_t k = 0; k < params.attention.intra_key[m].size(); ++k) {
      fn(tensor_label("intra_key", m, k), params.attention.intra_key[m][k]);
      fn(tensor_label("intra_query", m, k),
         params.attention.intra_query[m][k]);
    }
  for (std::size_t k = 0; k < params.attention.inter_key.size(); ++k) {
    fn(tensor_label("inter_key", k), params.attention.inter_key[k]);
    fn(tensor_label("inter_query", k), params.attention.inter_query[k]);
  }
  fn(std::string("classifier"), params.classifier);
}

std::size_t fused_width(std::size_t latent_dim, std::size_t modalities,
                        Fusion fusion) {
  return fusion == Fusion::kConcat ? latent_dim * modalities : latent_dim;
}

void validate_model_shapes(const MultiOmicsDataset& dataset,
                           const ModelParams& params,
                           const TrainConfig& config) {
  const std::size_t modalities = dataset.view_count();
  if (modalities == 0) throw ContractError("dataset has no views");
  if (params.encoder_weight.size() != modalities ||
      params.encoder_bias.size() != modalities)
    throw ShapeError("encoder tensors do not match the view count");
  const std::size_t d = config.latent_dim;
  for (std::size_t m = 0; m < modalities; ++m) {
    const auto& w = params.encoder_weight[m];
    if (w.rows() != dataset.views[m].features.cols() || w.cols() != d)
      throw ShapeError("encoder weight " + std::to_string(m) +
                       " does not map view features to the latent width");
    if (params.encoder_bias[m].rows() != 1 ||
        params.encoder_bias[m].cols() != d)
      throw ShapeError("encoder bias " + std::to_string(m) +
                       " must be 1 x latent width");
  }
  const auto& att = params.attention;
  if (att.intra_key.size() != modalities ||
      att.intra_query.size() != modalities)
    throw ShapeError("per-modality attention weights missing");
  for (std::size_t m = 0; m < modalities; ++m) {
    if (att.intra_key[m].size() != config.layers ||
        att.intra_query[m].size() != config.layers)
      throw ShapeError("attention weights do not cover every layer");
    for (std::size_t k = 0; k < config.layers; ++k)
      if (att.intra_key[m][k].rows() != d || att.intra_key[m][k].cols() != d ||
          att.intra_query[m][k].rows() != d ||
          att.intra_query[m][k].cols() != d)
        throw ShapeError("attention weights must be square in the latent "
                         "width");
  }
  if (att.inter_key.size() != config.layers ||
      att.inter_query.size() != config.layers)
    throw ShapeError("coupling attention weights do not cover every layer");
  for (std::size_t k = 0; k < config.layers; ++k)
    if (att.inter_key[k].rows() != d || att.inter_key[k].cols() != d ||
        att.inter_query[k].rows() != d || att.inter_query[k].cols() != d)
      throw ShapeError("coupling attention weights must be square in the "
                       "latent width");
  if (params.classifier.rows() !=
      fused_width(d, modalities, config.fusion))
    throw ShapeError("classifier rows do not match the fused width");
  if (params.classifier.cols() != dataset.class_count())
    throw ShapeError("classifier columns do not match the class count");
}

void validate_mask(const LabelMask& mask, std::size_t samples) {
  for (std::size_t i : mask.train_indices)
    if (i >= samples) throw ContractError("labeled index out of range");
  for (std::size_t i : mask.test_indices)
    if (i >= samples) throw ContractError("held-out index out of range");
}

Var cross_entropy_node(Tape& tape, Var logits, const std::vector<int>& labels,
                       const LabelMask& mask, std::size_t classes) {
  if (mask.train_indices.empty())
    throw ContractError("cross entropy needs at least one labeled sample");
  const DenseMatrix& lg = tape.value(logits);
  DenseMatrix onehot(lg.rows(), classes);
  for (std::size_t i : mask.train_indices) {
    if (i >= labels.size()) throw ContractError("labeled index out of range");
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw ContractError("label out of range for the class count");
    onehot(i, static_cast<std::size_t>(y)) = 1.0;
  }
  Var target = tape.constant(std::move(onehot));
  return tape.scale(tape.frob_inner(target, tape.row_log_softmax(logits)),
                    -1.0);
}

std::size_t argmax_row(const DenseMatrix& m, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < m.cols(); ++j)
    if (m(row, j) > m(row, best)) best = j;
  return best;
}

void append_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}

void append_u64(std::string& out, std::uint64_t v) {
  append_bytes(out, &v, sizeof v);
}

void append_f64(std::string& out, double v) { append_bytes(out, &v, sizeof v); }

class ByteReader {
 public:
  explicit ByteReader(const std::string& buf) : buf_(buf) {}

  void read(void* p, std::size_t n) {
    if (pos_ + n > buf_.size())
      throw DataError("model container truncated");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    read(&v, sizeof v);
    return v;
  }
  double f64() {
    double v = 0;
    read(&v, sizeof v);
    return v;
  }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  bool exhausted() const { return pos_ == buf_.size(); }

 private:
  const std::string& buf_;
  std::size_t pos_ = 0;
};

constexpr char kModelMagic[8] = {'M', 'G', 'O', 'M', 'O', 'D', 'L', '1'};

}  // namespace

Fusion fusion_from_string(const std::string& name) {
  if (name == "mean") return Fusion::kMean;
  if (name == "sum") return Fusion::kSum;
  if (name == "concat") return Fusion::kConcat;
  throw ContractError("unknown fusion mode '" + name +
                      "' (expected mean, sum or concat)");
}

std::string fusion_name(Fusion fusion) {
  switch (fusion) {
    case Fusion::kMean: return "mean";
    case Fusion::kSum: return "sum";
    case Fusion::kConcat: return "concat";
  }
  throw ContractError("invalid fusion value");
}

void validate_config(const TrainConfig& config) {
  if (config.layers == 0) throw ContractError("layer count must be >= 1");
  if (!(config.dropout_rate >= 0.0) || config.dropout_rate >= 1.0)
    throw ContractError("dropout rate must lie in [0, 1)");
  if (!(config.label_ratio > 0.0) || !(config.label_ratio < 1.0))
    throw ContractError("label ratio must lie in (0, 1)");
  if (config.latent_dim == 0) throw ContractError("latent width must be >= 1");
  if (!std::isfinite(config.temperature))
    throw ContractError("temperature must be finite");
  if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate))
    throw ContractError("learning rate must be finite and nonnegative");
  if (!(config.weight_decay >= 0.0) || !std::isfinite(config.weight_decay))
    throw ContractError("weight decay must be finite and nonnegative");
  if (!(config.projection_tol > 0.0))
    throw ContractError("projection tolerance must be positive");
  if (config.projection_max_iter == 0)
    throw ContractError("projection iteration budget must be positive");
  if (!(config.spectral_cap > 0.0))
    throw ContractError("spectral cap must be positive");
  fusion_name(config.fusion);
}

ModelParams init_params(const MultiOmicsDataset& dataset,
                        const TrainConfig& config) {
  validate_config(config);
  const std::size_t modalities = dataset.view_count();
  if (modalities == 0) throw ContractError("dataset has no views");
  if (dataset.class_count() == 0) throw ContractError("dataset has no labels");
  const std::size_t d = config.latent_dim;

  ModelParams params;
  params.encoder_weight.reserve(modalities);
  params.encoder_bias.reserve(modalities);
  for (std::size_t m = 0; m < modalities; ++m) {
    params.encoder_weight.emplace_back(dataset.views[m].features.cols(), d);
    params.encoder_bias.emplace_back(1, d);
  }
  params.attention.intra_key.assign(
      modalities, std::vector<DenseMatrix>(config.layers, DenseMatrix(d, d)));
  params.attention.intra_query = params.attention.intra_key;
  params.attention.inter_key.assign(config.layers, DenseMatrix(d, d));
  params.attention.inter_query = params.attention.inter_key;
  params.classifier = DenseMatrix(
      fused_width(d, modalities, config.fusion), dataset.class_count());

  // fan_in is the tensor's input width: its row count, except for the row
  // vector biases which share their encoder's fan_in.
  Rng rng(config.seed);
  std::size_t modality_cursor = 0;
  for_each_tensor(params, [&](const std::string& label, DenseMatrix& t) {
    std::size_t fan_in = t.rows();
    if (label.rfind("encoder_bias", 0) == 0)
      fan_in = dataset.views[modality_cursor++].features.cols();
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.rows(); ++i)
      for (std::size_t j = 0; j < t.cols(); ++j)
        t(i, j) = rng.uniform(-bound, bound);
  });
  return params;
}

std::vector<std::string> parameter_labels(const ModelParams& params) {
  std::vector<std::string> labels;
  for_each_tensor(params, [&](const std::string& label, const DenseMatrix&) {
    labels.push_back(label);
  });
  return labels;
}

std::vector<DenseMatrix> parameter_values(const ModelParams& params) {
  std::vector<DenseMatrix> values;
  for_each_tensor(params, [&](const std::string&, const DenseMatrix& t) {
    values.push_back(t);
  });
  return values;
}

std::vector<DenseMatrix*> parameter_slots(ModelParams& params) {
  std::vector<DenseMatrix*> slots;
  for_each_tensor(params, [&](const std::string&, DenseMatrix& t) {
    slots.push_back(&t);
  });
  return slots;
}

namespace {

ParamVars structure_vars(const ModelParams& shape, const std::vector<Var>& flat) {
  std::size_t expected = 0;
  for_each_tensor(shape, [&](const std::string&, const DenseMatrix&) {
    ++expected;
  });
  if (flat.size() != expected)
    throw ContractError("parameter node list does not match the model shape");
  ParamVars pv;
  std::size_t idx = 0;
  const std::size_t modalities = shape.encoder_weight.size();
  for (std::size_t m = 0; m < modalities; ++m) {
    pv.encoder_weight.push_back(flat[idx++]);
    pv.encoder_bias.push_back(flat[idx++]);
  }
  pv.intra_key.resize(shape.attention.intra_key.size());
  pv.intra_query.resize(shape.attention.intra_query.size());
  for (std::size_t m = 0; m < shape.attention.intra_key.size(); ++m)
    for (std::size_t k = 0; k < shape.attention.intra_key[m].size(); ++k) {
      pv.intra_key[m].push_back(flat[idx++]);
      pv.intra_query[m].push_back(flat[idx++]);
    }
  for (std::size_t k = 0; k < shape.attention.inter_key.size(); ++k) {
    pv.inter_key.push_back(flat[idx++]);
    pv.inter_query.push_back(flat[idx++]);
  }
  pv.classifier = flat[idx++];
  return pv;
}

}  // namespace

ParamVars register_params(Tape& tape, const ModelParams& params) {
  std::vector<Var> flat;
  for_each_tensor(params, [&](const std::string& label, const DenseMatrix& t) {
    flat.push_back(tape.parameter(t, label));
  });
  return structure_vars(params, flat);
}

ParamVars bind_params(const std::vector<Var>& flat, const ModelParams& shape) {
  return structure_vars(shape, flat);
}

GraphResult build_forward_graph(Tape& tape, const MultiOmicsDataset& dataset,
                                const ParamVars& params,
                                const TrainConfig& config, ForwardMode mode,
                                Rng* dropout_rng) {
  validate_config(config);
  const std::size_t modalities = dataset.view_count();
  if (modalities == 0) throw ContractError("dataset has no views");
  if (params.encoder_weight.size() != modalities)
    throw ShapeError("parameter nodes do not match the view count");
  const bool want_dropout =
      mode == ForwardMode::kTrain && config.dropout_rate > 0.0;
  if (want_dropout && dropout_rng == nullptr)
    throw ContractError("train mode with dropout needs a generator");

  GraphResult out;
  out.encoded.reserve(modalities);
  for (std::size_t m = 0; m < modalities; ++m) {
    Var features = tape.constant(dataset.views[m].features);
    Var z = encode(tape, features, params.encoder_weight[m],
                   params.encoder_bias[m]);
    if (want_dropout) z = tape.dropout(z, config.dropout_rate, *dropout_rng);
    out.encoded.push_back(z);
  }

  std::vector<Var> latents = out.encoded;
  out.per_layer_objective.reserve(config.layers + 1);
  auto snapshot = [&](const std::vector<Var>& ls) {
    EmbeddingState state;
    for (std::size_t m = 0; m < modalities; ++m) {
      state.latents.push_back(tape.value(ls[m]));
      state.anchors.push_back(tape.value(out.encoded[m]));
    }
    return state;
  };

  for (std::size_t k = 0; k < config.layers; ++k) {
    std::vector<Var> affinity;
    affinity.reserve(modalities);
    for (std::size_t m = 0; m < modalities; ++m)
      affinity.push_back(intra_attention_node(tape, latents[m],
                                              params.intra_key[m][k],
                                              params.intra_query[m][k],
                                              config.spectral_cap));
    Var coupling = coupling_projection_node(
        tape,
        inter_attention_node(tape, latents, params.inter_key[k],
                             params.inter_query[k]),
        config.projection_tol, config.projection_max_iter);

    MultiplexStructure structure;
    for (std::size_t m = 0; m < modalities; ++m)
      structure.sample_affinity.push_back(tape.value(affinity[m]));
    structure.modality_coupling = tape.value(coupling);
    if (k == 0)
      out.per_layer_objective.push_back(
          objective_value(snapshot(latents), structure));

    std::vector<Var> next;
    next.reserve(modalities);
    for (std::size_t m = 0; m < modalities; ++m) {
      Var pull =
          tape.add(tape.column_mix(coupling, latents, m), out.encoded[m]);
      Var smoothed = tape.scale(
          tape.matmul(affinity[m], tape.matmul(affinity[m], latents[m])),
          1.0 / 9.0);
      Var corrected = tape.add(
          tape.scale(pull, 1.0 / 3.0),
          tape.scale(tape.matmul(affinity[m], pull), 1.0 / 9.0));
      next.push_back(tape.add(smoothed, corrected));
    }
    latents = std::move(next);
    out.per_layer_objective.push_back(
        objective_value(snapshot(latents), structure));
  }

  switch (config.fusion) {
    case Fusion::kMean:
      out.fused = modality_mean(tape, latents);
      break;
    case Fusion::kSum: {
      Var acc = latents[0];
      for (std::size_t m = 1; m < modalities; ++m)
        acc = tape.add(acc, latents[m]);
      out.fused = acc;
      break;
    }
    case Fusion::kConcat:
      out.fused = modalities == 1 ? latents[0] : tape.concat_cols(latents);
      break;
  }
  out.logits = tape.matmul(out.fused, params.classifier);
  return out;
}

LossVars build_loss_graph(Tape& tape, const GraphResult& graph,
                          const MultiOmicsDataset& dataset,
                          const LabelMask& mask, const TrainConfig& config) {
  validate_mask(mask, dataset.sample_count());
  Var target = tape.constant(build_target_matrix(dataset.labels, mask));
  Var mean = modality_mean(tape, graph.encoded);
  std::vector<Var> sims;
  sims.reserve(graph.encoded.size());
  for (Var z : graph.encoded)
    sims.push_back(similarity_logits(tape, z, mean, config.temperature));
  LossVars loss;
  loss.contrastive = contrastive_loss(tape, sims, target);
  loss.cross_entropy = cross_entropy_node(tape, graph.logits, dataset.labels,
                                          mask, dataset.class_count());
  loss.total = tape.add(loss.contrastive, loss.cross_entropy);
  return loss;
}

ForwardResult forward(const MultiOmicsDataset& dataset,
                      const ModelParams& params, const TrainConfig& config,
                      const LabelMask& mask, ForwardMode mode) {
  validate_config(config);
  validate_model_shapes(dataset, params, config);
  validate_mask(mask, dataset.sample_count());
  Tape tape;
  ParamVars pv = register_params(tape, params);
  Rng dropout_rng(Rng::mix(config.seed, 0x64726f70));
  GraphResult graph =
      build_forward_graph(tape, dataset, pv, config, mode, &dropout_rng);
  ForwardResult result;
  result.logits = tape.value(graph.logits);
  result.fused = tape.value(graph.fused);
  result.per_layer_objective = graph.per_layer_objective;
  return result;
}

DenseMatrix fuse(const std::vector<DenseMatrix>& latents, Fusion mode) {
  if (latents.empty()) throw ContractError("fuse needs at least one matrix");
  for (const auto& z : latents)
    if (!z.same_shape(latents[0]))
      throw ShapeError("fuse inputs must share one shape");
  switch (mode) {
    case Fusion::kMean: {
      DenseMatrix acc = latents[0];
      for (std::size_t m = 1; m < latents.size(); ++m)
        axpy(acc, 1.0, latents[m]);
      return scaled(acc, 1.0 / static_cast<double>(latents.size()));
    }
    case Fusion::kSum: {
      DenseMatrix acc = latents[0];
      for (std::size_t m = 1; m < latents.size(); ++m)
        axpy(acc, 1.0, latents[m]);
      return acc;
    }
    case Fusion::kConcat: {
      DenseMatrix out(latents[0].rows(), latents[0].cols() * latents.size());
      for (std::size_t m = 0; m < latents.size(); ++m)
        for (std::size_t i = 0; i < latents[m].rows(); ++i)
          for (std::size_t j = 0; j < latents[m].cols(); ++j)
            out(i, m * latents[0].cols() + j) = latents[m](i, j);
      return out;
    }
  }
  throw ContractError("invalid fusion value");
}

double cross_entropy_loss(const DenseMatrix& logits,
                          const std::vector<int>& labels,
                          const LabelMask& mask) {
  if (mask.train_indices.empty())
    throw ContractError("cross entropy needs at least one labeled sample");
  if (labels.size() != logits.rows())
    throw ShapeError("one label per logit row required");
  DenseMatrix log_probs = row_log_softmax(logits);
  double loss = 0.0;
  for (std::size_t i : mask.train_indices) {
    if (i >= labels.size()) throw ContractError("labeled index out of range");
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols())
      throw ContractError("label out of range for the class count");
    loss -= log_probs(i, static_cast<std::size_t>(y));
  }
  return loss;
}

FitResult fit(const MultiOmicsDataset& dataset, const TrainConfig& config) {
  validate_config(config);
  if (dataset.sample_count() == 0) throw ContractError("dataset is empty");
  LabelMask mask =
      split_semi_supervised(dataset, config.label_ratio, config.seed);

  FitResult result;
  result.params = init_params(dataset, config);
  result.log.reserve(config.epochs);
  const std::vector<std::string> labels = parameter_labels(result.params);
  const std::vector<DenseMatrix*> slots = parameter_slots(result.params);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Tape tape;
    ParamVars pv = register_params(tape, result.params);
    Rng dropout_rng(Rng::mix(config.seed, 0x8000000000000000ull | epoch));
    GraphResult graph = build_forward_graph(tape, dataset, pv, config,
                                            ForwardMode::kTrain, &dropout_rng);
    LossVars loss = build_loss_graph(tape, graph, dataset, mask, config);

    EpochRecord record;
    record.epoch = epoch;
    record.contrastive_loss = tape.value(loss.contrastive)(0, 0);
    record.cross_entropy = tape.value(loss.cross_entropy)(0, 0);
    record.total = tape.value(loss.total)(0, 0);
    if (!std::isfinite(record.total))
      throw DivergenceError(
          "training loss became non-finite at epoch " + std::to_string(epoch),
          epoch);

    const DenseMatrix& logit_values = tape.value(graph.logits);
    std::size_t hits = 0;
    for (std::size_t i : mask.train_indices)
      if (argmax_row(logit_values, i) ==
          static_cast<std::size_t>(dataset.labels[i]))
        ++hits;
    record.train_accuracy = static_cast<double>(hits) /
                            static_cast<double>(mask.train_indices.size());
    result.log.push_back(record);

    auto grads = tape.backward(loss.total);
    const double lr = config.learning_rate;
    const double wd = config.weight_decay;
    for (std::size_t t = 0; t < slots.size(); ++t) {
      DenseMatrix& p = *slots[t];
      const DenseMatrix& g = grads.at(labels[t]);
      for (std::size_t i = 0; i < p.rows(); ++i)
        for (std::size_t j = 0; j < p.cols(); ++j)
          p(i, j) -= lr * g(i, j) + lr * wd * p(i, j);
    }
  }
  return result;
}

EvalReport evaluate(const MultiOmicsDataset& dataset,
                    const ModelParams& params, const TrainConfig& config,
                    const LabelMask& mask) {
  ForwardResult fr = forward(dataset, params, config, mask, ForwardMode::kEval);
  const std::size_t classes = dataset.class_count();

  EvalReport report;
  report.per_layer_objective = fr.per_layer_objective;
  report.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i : mask.test_indices) {
    const int y = dataset.labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw ContractError("label out of range for the class count");
    report.confusion[static_cast<std::size_t>(y)][argmax_row(fr.logits, i)]++;
  }

  std::size_t total = 0, correct = 0;
  for (std::size_t t = 0; t < classes; ++t)
    for (std::size_t p = 0; p < classes; ++p) {
      total += report.confusion[t][p];
      if (t == p) correct += report.confusion[t][p];
    }
  report.accuracy =
      total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);

  report.per_class_f1.assign(classes, 0.0);
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t truth_total = 0, predicted_total = 0;
    for (std::size_t j = 0; j < classes; ++j) {
      truth_total += report.confusion[c][j];
      predicted_total += report.confusion[j][c];
    }
    const std::size_t hit = report.confusion[c][c];
    const std::size_t denom = truth_total + predicted_total;
    report.per_class_f1[c] =
        denom == 0 ? 0.0 : 2.0 * static_cast<double>(hit) /
                               static_cast<double>(denom);
    f1_sum += report.per_class_f1[c];
  }
  report.macro_f1 = classes == 0 ? 0.0 : f1_sum / static_cast<double>(classes);
  return report;
}

std::string config_digest(const TrainConfig& config,
                          const std::vector<std::size_t>& feature_dims,
                          std::size_t classes) {
  char buf[512];
  std::string text;
  std::snprintf(buf, sizeof(buf),
                "layers=%zu;tau=%.17g;lr=%.17g;wd=%.17g;dropout=%.17g;"
                "epochs=%zu;fusion=%s;d=%zu;seed=%llu;ratio=%.17g;"
                "ptol=%.17g;pmax=%zu;cap=%.17g;classes=%zu;dims=",
                config.layers, config.temperature, config.learning_rate,
                config.weight_decay, config.dropout_rate, config.epochs,
                fusion_name(config.fusion).c_str(), config.latent_dim,
                static_cast<unsigned long long>(config.seed),
                config.label_ratio, config.projection_tol,
                config.projection_max_iter, config.spectral_cap, classes);
  text = buf;
  for (std::size_t d : feature_dims) {
    text += std::to_string(d);
    text += ',';
  }
  return "fnv1a64:" + to_hex(fnv1a64(text));
}

void save_model(const std::string& path, const ModelParams& params,
                const TrainConfig& config, const std::string& digest) {
  std::string out;
  append_bytes(out, kModelMagic, sizeof kModelMagic);
  append_u64(out, 1);  // container version
  append_u64(out, digest.size());
  out += digest;

  append_u64(out, config.layers);
  append_f64(out, config.temperature);
  append_f64(out, config.learning_rate);
  append_f64(out, config.weight_decay);
  append_f64(out, config.dropout_rate);
  append_u64(out, config.epochs);
  append_u64(out, static_cast<std::uint64_t>(config.fusion));
  append_u64(out, config.latent_dim);
  append_u64(out, config.seed);
  append_f64(out, config.label_ratio);
  append_f64(out, config.projection_tol);
  append_u64(out, config.projection_max_iter);
  append_f64(out, config.spectral_cap);

  append_u64(out, params.encoder_weight.size());
  std::uint64_t tensor_count = 0;
  for_each_tensor(params, [&](const std::string&, const DenseMatrix&) {
    ++tensor_count;
  });
  append_u64(out, tensor_count);
  for_each_tensor(params, [&](const std::string&, const DenseMatrix& t) {
    append_u64(out, t.rows());
    append_u64(out, t.cols());
    append_bytes(out, t.data(), t.size() * sizeof(double));
  });
  write_file_atomic(path, out);
}

LoadedModel load_model(const std::string& path) {
  const std::string buf = read_file(path);
  ByteReader in(buf);
  char magic[8];
  in.read(magic, sizeof magic);
  if (std::memcmp(magic, kModelMagic, sizeof magic) != 0)
    throw DataError("not a model container: " + path);
  const std::uint64_t version = in.u64();
  if (version != 1)
    throw DataError("unsupported model container version " +
                    std::to_string(version));

  LoadedModel loaded;
  loaded.digest = in.bytes(in.u64());
  TrainConfig& c = loaded.config;
  c.layers = in.u64();
  c.temperature = in.f64();
  c.learning_rate = in.f64();
  c.weight_decay = in.f64();
  c.dropout_rate = in.f64();
  c.epochs = in.u64();
  const std::uint64_t fusion_code = in.u64();
  if (fusion_code > 2) throw DataError("invalid fusion code in container");
  c.fusion = static_cast<Fusion>(fusion_code);
  c.latent_dim = in.u64();
  c.seed = in.u64();
  c.label_ratio = in.f64();
  c.projection_tol = in.f64();
  c.projection_max_iter = in.u64();
  c.spectral_cap = in.f64();

  const std::uint64_t modalities = in.u64();
  const std::uint64_t tensor_count = in.u64();
  const std::uint64_t expected =
      2 * modalities + 2 * modalities * c.layers + 2 * c.layers + 1;
  if (tensor_count != expected)
    throw DataError("model container tensor count mismatch");

  auto read_tensor = [&]() {
    const std::uint64_t rows = in.u64();
    const std::uint64_t cols = in.u64();
    if (rows == 0 || cols == 0 || rows > (1u << 24) || cols > (1u << 24))
      throw DataError("implausible tensor shape in container");
    DenseMatrix t(rows, cols);
    in.read(t.data(), t.size() * sizeof(double));
    return t;
  };

  ModelParams& p = loaded.params;
  for (std::uint64_t m = 0; m < modalities; ++m) {
    p.encoder_weight.push_back(read_tensor());
    p.encoder_bias.push_back(read_tensor());
  }
  p.attention.intra_key.resize(modalities);
  p.attention.intra_query.resize(modalities);
  for (std::uint64_t m = 0; m < modalities; ++m)
    for (std::uint64_t k = 0; k < c.layers; ++k) {
      p.attention.intra_key[m].push_back(read_tensor());
      p.attention.intra_query[m].push_back(read_tensor());
    }
  for (std::uint64_t k = 0; k < c.layers; ++k) {
    p.attention.inter_key.push_back(read_tensor());
    p.attention.inter_query.push_back(read_tensor());
  }
  p.classifier = read_tensor();
  if (!in.exhausted()) throw DataError("trailing bytes in model container");
  return loaded;
}

}  // namespace mgopt
