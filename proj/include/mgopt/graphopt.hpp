#pragma once

#include <cstddef>
#include <vector>

#include "mgopt/matrix.hpp"

namespace mgopt {

// Current iterates plus the frozen post-encoder anchors that regularize
// every propagation step. Shapes match per modality; anchors never change.
struct EmbeddingState {
  std::vector<DenseMatrix> latents;
  std::vector<DenseMatrix> anchors;
  std::size_t step_count = 0;
};

// Per-modality sample affinities (each symmetric N x N) and the M x M
// modality coupling matrix.
struct MultiplexStructure {
  std::vector<DenseMatrix> sample_affinity;
  DenseMatrix modality_coupling;

  std::size_t modality_count() const { return sample_affinity.size(); }
};

// Evidence record emitted by second_order_step. Objective values are the
// exact outputs of objective_value on the in/out states.
struct StepDiagnostics {
  double objective_before = 0.0;
  double objective_after = 0.0;
  double step_size_used = 0.0;
  double bound = 0.0;                   // max_stable_step of the structure
  double spectral_radius_S_over_3 = 0.0;  // max over modalities
};

// Single-graph propagation (1-alpha)F + alpha*A*F. alpha = 0 reduces to a
// plain feature map, alpha = 1 to one standard adjacency propagation.
DenseMatrix classic_step(const DenseMatrix& features,
                         const DenseMatrix& adjacency, double alpha);

// Smoothness objective over the multiplex structure:
//   1/2 sum_m sum_{i<j} S_ij |Z_i - Z_j|^2          (within one modality)
// + 1/4 sum_{e,n} P_en |Z_e - Z_n|_F^2              (across modalities)
// + 1/2 sum_m |Z_m - anchor_m|_F^2                  (anchor regularizer)
double objective_value(const EmbeddingState& state,
                       const MultiplexStructure& structure);

// Gradient of the objective in modality m, assuming the affinity rows and
// the coupling rows each sum to one:
//   (3I - S_m) Z_m - sum_e P_em Z_e - anchor_m.
DenseMatrix objective_gradient(const EmbeddingState& state,
                               const MultiplexStructure& structure,
                               std::size_t modality);

// One explicit gradient-descent step for every modality, computed from the
// incoming state only (all modalities update simultaneously):
//   Z_m <- [(1-3a)I + aS_m] Z_m + a sum_e P_em Z_e + a anchor_m.
// alpha = 0 returns the state unchanged; negative alpha is rejected.
EmbeddingState first_order_step(const EmbeddingState& state,
                                const MultiplexStructure& structure,
                                double alpha);

// Largest step size with a monotonic-descent guarantee:
//   min over m of 2 / |3I - S_m - P_mm * ones(N,N)|_2.
double max_stable_step(const MultiplexStructure& structure, double tol = 1e-12);

// Exact curvature-corrected update for one modality: solves
//   [3I - S_m - P_mm * ones(N,N)] X = gradient_m
// directly and returns Z_m - X. Ill-conditioned systems are rejected.
DenseMatrix newton_step_exact(const EmbeddingState& state,
                              const MultiplexStructure& structure,
                              std::size_t modality);

// First-term truncation of the series for the inverse curvature matrix:
//   (1/3)(I + S/3).
// Accurate when the spectral radius of S/3 is below one.
DenseMatrix neumann_approx_inverse(const DenseMatrix& sample_affinity);

// One truncated curvature-corrected step for every modality, from the
// incoming state only:
//   Z_m <- (S_m(S_m Z_m))/9 + ((3I + S_m)/9)(sum_e P_em Z_e + anchor_m).
// Pass diagnostics to record objective values and spectral quantities; the
// spectral estimates are skipped when diagnostics is null.
EmbeddingState second_order_step(const EmbeddingState& state,
                                 const MultiplexStructure& structure,
                                 StepDiagnostics* diagnostics = nullptr);

}  // namespace mgopt
