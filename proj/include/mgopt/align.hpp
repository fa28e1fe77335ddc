#pragma once

#include <vector>

#include "mgopt/autodiff.hpp"
#include "mgopt/dataio.hpp"

namespace mgopt {

// Linear projection into the shared latent space: features * weight + bias,
// bias broadcast over rows.
Var encode(Tape& tape, Var features, Var weight, Var bias);

// Arithmetic mean of the per-modality latents.
Var modality_mean(Tape& tape, const std::vector<Var>& latents);

// Normalized similarity against the modality mean:
//   (Z/|Z|_F)(Zbar/|Zbar|_F)^T * exp(temperature).
// Every entry is bounded by exp(temperature) in magnitude.
Var similarity_logits(Tape& tape, Var latent, Var latent_mean,
                      double temperature);

// Target distribution for the alignment loss. Row i holds 1/k_i at every
// labeled sample of i's class (self included, k_i = size of that labeled
// class) and zero elsewhere; rows of unlabeled samples are all-zero.
DenseMatrix build_target_matrix(const std::vector<int>& labels,
                                const LabelMask& mask);

// Cross-entropy between the target and row-wise softmax of each logit
// matrix, applied along rows and along columns:
//   -(1/(M*N)) sum_m ( <T, logsoftmax(G_m)> + <T, logsoftmax(G_m^T)> ).
Var contrastive_loss(Tape& tape, const std::vector<Var>& logits, Var target);

}  // namespace mgopt
