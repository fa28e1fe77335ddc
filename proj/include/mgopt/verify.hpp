#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgopt/graphopt.hpp"
#include "mgopt/matrix.hpp"
#include "mgopt/rng.hpp"

namespace mgopt {

struct VerifyOptions {
  std::size_t seeds = 100;
  std::size_t samples = 16;
  std::size_t dim = 4;
  std::size_t modalities = 3;
  // Multiplies every step size in the first-order sweep. Above 1 the
  // sufficient condition no longer applies and the property is reported as
  // not guaranteed instead of pass/fail.
  double alpha_scale = 1.0;
  std::uint64_t base_seed = 0;
};

struct PropertyResult {
  std::string name;
  bool passed = false;
  bool guaranteed = true;
  double worst_slack = 0.0;       // most adverse margin seen (signed)
  std::int64_t failing_seed = -1; // first seed violating the property
  std::string detail;
  // representative evidence from the first seed (descent suites only)
  std::vector<StepDiagnostics> sample_trajectory;
};

struct VerifyReport {
  std::vector<PropertyResult> properties;
  bool all_passed() const {
    for (const auto& p : properties)
      if (!p.passed) return false;
    return true;
  }
};

// Closed-form Euclidean projection onto {X = X^T, X1 = 1, X^T1 = 1},
// derived from the stationarity conditions; independent of the cyclic
// projection in the attention module so the two can cross-check each other.
DenseMatrix exact_affine_projection(const DenseMatrix& raw);

// Entrywise-positive symmetric matrix scaled to unit row sums (symmetric
// scaling iterations, then one exact affine correction). The spectrum lies
// in [-1, 1] with the largest eigenvalue exactly 1.
DenseMatrix sinkhorn_symmetric_stochastic(std::size_t n, Rng& rng);

// Symmetric with unit row sums and smallest eigenvalue at least min_eigen,
// built by blending an exact projection toward the identity (which keeps
// both constraints).
DenseMatrix psd_symmetric_stochastic(std::size_t m, Rng& rng,
                                     double min_eigen = 0.05);

// Structure/state family used by the descent suites. The construction
// guarantees the descent bounds hold with the stated slacks.
MultiplexStructure make_verification_structure(std::size_t modalities,
                                               std::size_t samples, Rng& rng);
EmbeddingState make_verification_state(std::size_t modalities,
                                       std::size_t samples, std::size_t dim,
                                       Rng& rng);

// One first-order step at {0.25, 0.5, 1.0} x alpha_scale x stability bound
// never increases the objective (absolute slack 1e-9).
PropertyResult verify_first_order_descent(const VerifyOptions& options);

// Ten curvature-corrected steps yield a non-increasing objective
// trajectory (relative slack 1e-8).
PropertyResult verify_second_order_descent(const VerifyOptions& options);

// The truncated inverse is within (1/3) rho^2/(1-rho) of the exact inverse
// in the spectral norm, rho = |S/3|_2 < 1.
PropertyResult verify_truncation_bound(const VerifyOptions& options);

// Cyclic projection output matches the closed-form projection and meets
// the feasibility tolerances; includes the hand-computed 2x2 case.
PropertyResult verify_projection_exactness(const VerifyOptions& options);

VerifyReport run_verification(const VerifyOptions& options);

}  // namespace mgopt
