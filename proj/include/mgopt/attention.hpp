#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "mgopt/autodiff.hpp"
#include "mgopt/errors.hpp"
#include "mgopt/matrix.hpp"

namespace mgopt {

// Stopping evidence for the doubly-stochastic projection.
struct ProjectionReport {
  std::size_t iterations_used = 0;
  double max_row_sum_violation = 0.0;
  double max_asymmetry = 0.0;
  bool converged = false;
};

class ProjectionConvergenceError : public ConvergenceError {
 public:
  ProjectionConvergenceError(const std::string& msg, ProjectionReport r);
  ProjectionReport report;
};

inline constexpr double kSpectralCap = 2.7;  // keeps |S/3|_2 at or below 0.9
inline constexpr double kDykstraTol = 1e-8;
inline constexpr std::size_t kDykstraMaxIter = 10000;

// Shifted pairwise cosine between key- and query-projected latent rows:
//   raw_ij = 1 + <k_i/|k_i|, q_j/|q_j|>, entries in [0, 2],
// with k = Z W_K and q = Z W_Q. Zero projected rows are rejected.
DenseMatrix intra_attention_raw(const DenseMatrix& latent,
                                const DenseMatrix& key_weight,
                                const DenseMatrix& query_weight);

// Symmetrized raw attention scaled by min(1, cap/|S|_2) so the downstream
// truncated-inverse step stays within its validity region. The applied
// factor is written to scale_factor_out when given.
DenseMatrix intra_attention(const DenseMatrix& latent,
                            const DenseMatrix& key_weight,
                            const DenseMatrix& query_weight,
                            double cap = kSpectralCap,
                            double* scale_factor_out = nullptr);

// Modality coupling before projection:
//   P_em = 1 + exp(-<Z_e W_K, Z_m W_Q>_F / (N*d)), entries always > 1.
DenseMatrix inter_attention_raw(const std::vector<DenseMatrix>& latents,
                                const DenseMatrix& key_weight,
                                const DenseMatrix& query_weight);

// Euclidean projection onto {P = P^T, P1 = 1, P^T1 = 1} by cyclic
// projections with per-set correction increments. Stops once both the
// worst row/column-sum deviation and the worst asymmetry are at most tol;
// throws ProjectionConvergenceError past max_iter cycles.
std::pair<DenseMatrix, ProjectionReport> dykstra_project(
    const DenseMatrix& raw, double tol = kDykstraTol,
    std::size_t max_iter = kDykstraMaxIter);

// Tape versions used by the trained pipeline. Forward values agree with the
// plain functions above; backward flows through every step, with the
// projection differentiated via its exact affine Jacobian.
Var intra_attention_node(Tape& tape, Var latent, Var key_weight,
                         Var query_weight, double cap = kSpectralCap,
                         double* scale_factor_out = nullptr);
Var inter_attention_node(Tape& tape, const std::vector<Var>& latents,
                         Var key_weight, Var query_weight);
Var coupling_projection_node(Tape& tape, Var raw, double tol = kDykstraTol,
                             std::size_t max_iter = kDykstraMaxIter);

}  // namespace mgopt
