#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mgopt/attention.hpp"
#include "mgopt/autodiff.hpp"
#include "mgopt/dataio.hpp"
#include "mgopt/matrix.hpp"

namespace mgopt {

enum class Fusion { kMean, kSum, kConcat };

Fusion fusion_from_string(const std::string& name);
std::string fusion_name(Fusion fusion);

struct TrainConfig {
  std::size_t layers = 3;  // propagation depth K
  double temperature = 10.0;
  double learning_rate = 1e-2;
  double weight_decay = 5e-5;
  double dropout_rate = 0.5;
  std::size_t epochs = 200;
  Fusion fusion = Fusion::kMean;
  std::size_t latent_dim = 64;
  std::uint64_t seed = 0;
  double label_ratio = 0.1;
  double projection_tol = kDykstraTol;
  std::size_t projection_max_iter = kDykstraMaxIter;
  double spectral_cap = kSpectralCap;
};

// Throws ContractError when a field is out of range (layers >= 1,
// 0 <= dropout_rate < 1, 0 < label_ratio < 1, positive dimensions and
// tolerances, nonnegative rates).
void validate_config(const TrainConfig& config);

struct AttentionWeights {
  // per modality, per layer (all d x d)
  std::vector<std::vector<DenseMatrix>> intra_key;
  std::vector<std::vector<DenseMatrix>> intra_query;
  // per layer, shared across modality pairs (d x d)
  std::vector<DenseMatrix> inter_key;
  std::vector<DenseMatrix> inter_query;
};

struct ModelParams {
  std::vector<DenseMatrix> encoder_weight;  // [m] D_m x d
  std::vector<DenseMatrix> encoder_bias;    // [m] 1 x d
  AttentionWeights attention;
  DenseMatrix classifier;  // fused-dim x c (fused-dim = d, or M*d for concat)
};

// Seeded uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per tensor, with
// fan_in the tensor's input width. One generator stream fills the tensors
// in the order of parameter_labels.
ModelParams init_params(const MultiOmicsDataset& dataset,
                        const TrainConfig& config);

// Stable flat view of the parameter set. labels/values/slots use the same
// order; backward() keys its gradient map by these labels.
std::vector<std::string> parameter_labels(const ModelParams& params);
std::vector<DenseMatrix> parameter_values(const ModelParams& params);
std::vector<DenseMatrix*> parameter_slots(ModelParams& params);

struct ParamVars {
  std::vector<Var> encoder_weight;
  std::vector<Var> encoder_bias;
  std::vector<std::vector<Var>> intra_key;
  std::vector<std::vector<Var>> intra_query;
  std::vector<Var> inter_key;
  std::vector<Var> inter_query;
  Var classifier;
};

ParamVars register_params(Tape& tape, const ModelParams& params);
// Same structure, but adopting already-created parameter nodes (ordered as
// parameter_labels); used by the finite-difference harness.
ParamVars bind_params(const std::vector<Var>& flat, const ModelParams& shape);

enum class ForwardMode { kTrain, kEval };

struct ForwardResult {
  DenseMatrix logits;  // N x c, softmax deliberately not applied
  DenseMatrix fused;   // N x fused-dim
  std::vector<double> per_layer_objective;  // K+1 smoothness values
};

// Tape-level pipeline: encode every view (dropout in train mode), then K
// rounds of attention-derived structure plus one truncated curvature step,
// then fuse and classify. per_layer_objective[k] is the smoothness value
// after k steps, each measured under that layer's structure.
struct GraphResult {
  Var logits;
  Var fused;
  std::vector<Var> encoded;  // the latents the losses align (post-dropout)
  std::vector<double> per_layer_objective;
};

GraphResult build_forward_graph(Tape& tape, const MultiOmicsDataset& dataset,
                                const ParamVars& params,
                                const TrainConfig& config, ForwardMode mode,
                                Rng* dropout_rng);

struct LossVars {
  Var contrastive;
  Var cross_entropy;
  Var total;
};

LossVars build_loss_graph(Tape& tape, const GraphResult& graph,
                          const MultiOmicsDataset& dataset,
                          const LabelMask& mask, const TrainConfig& config);

// Convenience wrapper over build_forward_graph on a private tape. mask is
// only validated (losses do not enter the forward pass).
ForwardResult forward(const MultiOmicsDataset& dataset,
                      const ModelParams& params, const TrainConfig& config,
                      const LabelMask& mask, ForwardMode mode);

DenseMatrix fuse(const std::vector<DenseMatrix>& latents, Fusion mode);

// Softmax cross entropy summed over the labeled rows only.
double cross_entropy_loss(const DenseMatrix& logits,
                          const std::vector<int>& labels,
                          const LabelMask& mask);

inline double total_loss(double contrastive, double cross_entropy) {
  return contrastive + cross_entropy;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double contrastive_loss = 0.0;
  double cross_entropy = 0.0;
  double total = 0.0;
  double train_accuracy = 0.0;
};

struct FitResult {
  ModelParams params;  // final-epoch parameters, no early stopping
  std::vector<EpochRecord> log;
};

// Full-batch gradient descent with decoupled weight decay on every tensor.
// The labeled set is the seeded stratified split at config.label_ratio.
// Throws DivergenceError (with the epoch) when the loss goes non-finite.
FitResult fit(const MultiOmicsDataset& dataset, const TrainConfig& config);

struct EvalReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][prediction]
  std::vector<double> per_layer_objective;
};

// Argmax predictions on the held-out indices, metrics from the confusion
// matrix. Classes absent from both truth and prediction score F1 = 0.
EvalReport evaluate(const MultiOmicsDataset& dataset,
                    const ModelParams& params, const TrainConfig& config,
                    const LabelMask& mask);

// Digest binding a trained model to its hyperparameters and data shape;
// stored in the container and checked before reuse on another dataset.
std::string config_digest(const TrainConfig& config,
                          const std::vector<std::size_t>& feature_dims,
                          std::size_t classes);

struct LoadedModel {
  ModelParams params;
  TrainConfig config;
  std::string digest;
};

// Versioned binary container: magic, version, digest, config, tensor
// shapes, row-major float64 payloads. Writes are atomic.
void save_model(const std::string& path, const ModelParams& params,
                const TrainConfig& config, const std::string& digest);
LoadedModel load_model(const std::string& path);

}  // namespace mgopt
