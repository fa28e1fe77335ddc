#include "mgopt/graphopt.hpp"

#include <algorithm>
#include <string>

#include "mgopt/errors.hpp"

namespace mgopt {

namespace {

void check_consistent(const EmbeddingState& state,
                      const MultiplexStructure& structure) {
  const std::size_t m = state.latents.size();
  if (m == 0) throw ContractError("empty embedding state");
  if (state.anchors.size() != m) {
    throw ShapeError("state has " + std::to_string(m) + " latents but " +
                     std::to_string(state.anchors.size()) + " anchors");
  }
  if (structure.sample_affinity.size() != m ||
      structure.modality_coupling.rows() != m ||
      structure.modality_coupling.cols() != m) {
    throw ShapeError("structure does not cover " + std::to_string(m) +
                     " modalities");
  }
  for (std::size_t i = 0; i < m; ++i) {
    const DenseMatrix& z = state.latents[i];
    if (!z.same_shape(state.anchors[i]) ||
        !z.same_shape(state.latents[0])) {
      throw ShapeError("latent/anchor shape mismatch in modality " +
                       std::to_string(i));
    }
    const DenseMatrix& s = structure.sample_affinity[i];
    if (s.rows() != s.cols() || s.rows() != z.rows()) {
      throw ShapeError("affinity shape mismatch in modality " +
                       std::to_string(i));
    }
  }
}

void check_modality(const EmbeddingState& state, std::size_t modality) {
  if (modality >= state.latents.size()) {
    throw ContractError("modality index " + std::to_string(modality) +
                        " out of range (have " +
                        std::to_string(state.latents.size()) + ")");
  }
}

// sum_e P_em Z_e + anchor_m; the shared pull target of both step forms.
DenseMatrix coupled_pull(const EmbeddingState& state,
                         const MultiplexStructure& structure,
                         std::size_t modality) {
  DenseMatrix pull = state.anchors[modality];
  for (std::size_t e = 0; e < state.latents.size(); ++e) {
    axpy(pull, structure.modality_coupling(e, modality), state.latents[e]);
  }
  return pull;
}

}  // namespace

DenseMatrix classic_step(const DenseMatrix& features,
                         const DenseMatrix& adjacency, double alpha) {
  if (adjacency.rows() != adjacency.cols() ||
      adjacency.cols() != features.rows()) {
    throw ShapeError("classic_step: adjacency " +
                     std::to_string(adjacency.rows()) + "x" +
                     std::to_string(adjacency.cols()) +
                     " does not match features with " +
                     std::to_string(features.rows()) + " rows");
  }
  DenseMatrix out = scaled(features, 1.0 - alpha);
  axpy(out, alpha, matmul(adjacency, features));
  return out;
}

double objective_value(const EmbeddingState& state,
                       const MultiplexStructure& structure) {
  check_consistent(state, structure);
  const std::size_t m = state.latents.size();
  const std::size_t n = state.latents[0].rows();

  double intra = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const DenseMatrix& s = structure.sample_affinity[k];
    const DenseMatrix& z = state.latents[k];
    // 1/4 sum_ij S_ij |Z_i - Z_j|^2 over ordered pairs, evaluated as
    // 1/4 (sum_i r_i|Z_i|^2 + sum_j c_j|Z_j|^2) - 1/2 <SZ, Z>.
    std::vector<double> row_norm(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < z.cols(); ++j)
        row_norm[i] += z(i, j) * z(i, j);
    double weighted = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        weighted += s(i, j) * (row_norm[i] + row_norm[j]);
    intra += 0.25 * weighted - 0.5 * frobenius_inner(matmul(s, z), z);
  }

  double inter = 0.0;
  for (std::size_t e = 0; e < m; ++e) {
    for (std::size_t k = 0; k < m; ++k) {
      if (e == k) continue;
      const DenseMatrix diff = sub(state.latents[e], state.latents[k]);
      inter += structure.modality_coupling(e, k) *
               frobenius_inner(diff, diff);
    }
  }
  inter *= 0.25;

  double reg = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const DenseMatrix diff = sub(state.latents[k], state.anchors[k]);
    reg += 0.5 * frobenius_inner(diff, diff);
  }
  return intra + inter + reg;
}

DenseMatrix objective_gradient(const EmbeddingState& state,
                               const MultiplexStructure& structure,
                               std::size_t modality) {
  check_consistent(state, structure);
  check_modality(state, modality);
  const DenseMatrix& z = state.latents[modality];
  DenseMatrix grad = scaled(z, 3.0);
  axpy(grad, -1.0, matmul(structure.sample_affinity[modality], z));
  axpy(grad, -1.0, coupled_pull(state, structure, modality));
  return grad;
}

EmbeddingState first_order_step(const EmbeddingState& state,
                                const MultiplexStructure& structure,
                                double alpha) {
  check_consistent(state, structure);
  if (alpha < 0.0) {
    throw ContractError("first_order_step: negative step size " +
                        std::to_string(alpha));
  }
  EmbeddingState next;
  next.anchors = state.anchors;
  next.step_count = state.step_count + 1;
  for (std::size_t k = 0; k < state.latents.size(); ++k) {
    DenseMatrix mixer = scaled(structure.sample_affinity[k], alpha);
    mixer = add_scaled_identity(mixer, 1.0 - 3.0 * alpha);
    DenseMatrix z = matmul(mixer, state.latents[k]);
    axpy(z, alpha, coupled_pull(state, structure, k));
    next.latents.push_back(std::move(z));
  }
  return next;
}

double max_stable_step(const MultiplexStructure& structure, double tol) {
  if (structure.sample_affinity.empty()) {
    throw ContractError("max_stable_step: empty structure");
  }
  double best = 0.0;
  for (std::size_t k = 0; k < structure.sample_affinity.size(); ++k) {
    const DenseMatrix& s = structure.sample_affinity[k];
    const double pkk = structure.modality_coupling(k, k);
    DenseMatrix curvature(s.rows(), s.cols());
    for (std::size_t i = 0; i < s.rows(); ++i)
      for (std::size_t j = 0; j < s.cols(); ++j)
        curvature(i, j) = -s(i, j) - pkk;
    curvature = add_scaled_identity(curvature, 3.0);
    const double step = 2.0 / spectral_norm(curvature, tol);
    if (k == 0 || step < best) best = step;
  }
  return best;
}

DenseMatrix newton_step_exact(const EmbeddingState& state,
                              const MultiplexStructure& structure,
                              std::size_t modality) {
  check_consistent(state, structure);
  check_modality(state, modality);
  const DenseMatrix& s = structure.sample_affinity[modality];
  const double pkk = structure.modality_coupling(modality, modality);
  DenseMatrix curvature(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.rows(); ++i)
    for (std::size_t j = 0; j < s.cols(); ++j)
      curvature(i, j) = -s(i, j) - pkk;
  curvature = add_scaled_identity(curvature, 3.0);

  DenseMatrix grad = objective_gradient(state, structure, modality);
  DenseMatrix correction = solve_linear(curvature, grad);
  DenseMatrix out = state.latents[modality];
  axpy(out, -1.0, correction);
  return out;
}

DenseMatrix neumann_approx_inverse(const DenseMatrix& sample_affinity) {
  if (sample_affinity.rows() != sample_affinity.cols()) {
    throw ShapeError("neumann_approx_inverse: matrix is " +
                     std::to_string(sample_affinity.rows()) + "x" +
                     std::to_string(sample_affinity.cols()));
  }
  DenseMatrix inv = scaled(sample_affinity, 1.0 / 9.0);
  inv = add_scaled_identity(inv, 1.0 / 3.0);
  return inv;
}

EmbeddingState second_order_step(const EmbeddingState& state,
                                 const MultiplexStructure& structure,
                                 StepDiagnostics* diagnostics) {
  check_consistent(state, structure);
  EmbeddingState next;
  next.anchors = state.anchors;
  next.step_count = state.step_count + 1;
  for (std::size_t k = 0; k < state.latents.size(); ++k) {
    const DenseMatrix& s = structure.sample_affinity[k];
    DenseMatrix pull = coupled_pull(state, structure, k);

    // S(SZ)/9; never forms S^2 explicitly.
    DenseMatrix z = matmul(s, matmul(s, state.latents[k]));
    z = scaled(z, 1.0 / 9.0);
    axpy(z, 1.0 / 3.0, pull);
    axpy(z, 1.0 / 9.0, matmul(s, pull));
    next.latents.push_back(std::move(z));
  }
  if (diagnostics) {
    diagnostics->objective_before = objective_value(state, structure);
    diagnostics->objective_after = objective_value(next, structure);
    diagnostics->step_size_used = 1.0;
    diagnostics->bound = max_stable_step(structure);
    double radius = 0.0;
    for (const DenseMatrix& s : structure.sample_affinity) {
      radius = std::max(radius, spectral_norm(s) / 3.0);
    }
    diagnostics->spectral_radius_S_over_3 = radius;
  }
  return next;
}

}  // namespace mgopt
