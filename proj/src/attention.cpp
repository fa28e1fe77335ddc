#include "mgopt/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mgopt {

namespace {

// Rows scaled to unit length; throws naming the first zero row.
DenseMatrix unit_rows(const DenseMatrix& a, const char* what) {
  DenseMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double norm = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) norm += a(i, j) * a(i, j);
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      throw DegenerateInputError(std::string(what) + ": projected row " +
                                 std::to_string(i) + " has zero norm");
    }
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) / norm;
  }
  return out;
}

DenseMatrix project_rows(const DenseMatrix& a) {
  // rows shifted so each row sums to one
  const std::size_t m = a.rows();
  DenseMatrix out = a;
  for (std::size_t i = 0; i < m; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) sum += out(i, j);
    const double fix = (1.0 - sum) / double(m);
    for (std::size_t j = 0; j < m; ++j) out(i, j) += fix;
  }
  return out;
}

DenseMatrix project_cols(const DenseMatrix& a) {
  const std::size_t m = a.rows();
  DenseMatrix out = a;
  for (std::size_t j = 0; j < m; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum += out(i, j);
    const double fix = (1.0 - sum) / double(m);
    for (std::size_t i = 0; i < m; ++i) out(i, j) += fix;
  }
  return out;
}

void measure_violations(const DenseMatrix& p, double& row_sum, double& asym) {
  const std::size_t m = p.rows();
  row_sum = 0.0;
  asym = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double rs = 0.0, cs = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      rs += p(i, j);
      cs += p(j, i);
      asym = std::max(asym, std::fabs(p(i, j) - p(j, i)));
    }
    row_sum = std::max({row_sum, std::fabs(rs - 1.0), std::fabs(cs - 1.0)});
  }
}

}  // namespace

ProjectionConvergenceError::ProjectionConvergenceError(const std::string& msg,
                                                       ProjectionReport r)
    : ConvergenceError(msg,
                       std::max(r.max_row_sum_violation, r.max_asymmetry)),
      report(r) {}

DenseMatrix intra_attention_raw(const DenseMatrix& latent,
                                const DenseMatrix& key_weight,
                                const DenseMatrix& query_weight) {
  DenseMatrix keys =
      unit_rows(matmul(latent, key_weight), "intra_attention keys");
  DenseMatrix queries =
      unit_rows(matmul(latent, query_weight), "intra_attention queries");
  return shifted(matmul(keys, transposed(queries)), 1.0);
}

DenseMatrix intra_attention(const DenseMatrix& latent,
                            const DenseMatrix& key_weight,
                            const DenseMatrix& query_weight, double cap,
                            double* scale_factor_out) {
  DenseMatrix raw = intra_attention_raw(latent, key_weight, query_weight);
  DenseMatrix sym = scaled(add(raw, transposed(raw)), 0.5);
  const double norm = spectral_norm(sym);
  const double factor = norm > cap ? cap / norm : 1.0;
  if (scale_factor_out) *scale_factor_out = factor;
  return factor == 1.0 ? sym : scaled(sym, factor);
}

DenseMatrix inter_attention_raw(const std::vector<DenseMatrix>& latents,
                                const DenseMatrix& key_weight,
                                const DenseMatrix& query_weight) {
  if (latents.empty()) {
    throw ContractError("inter_attention_raw: no latents given");
  }
  const std::size_t m = latents.size();
  const double cells = double(latents[0].rows()) * double(latents[0].cols());
  std::vector<DenseMatrix> keys, queries;
  keys.reserve(m);
  queries.reserve(m);
  for (const DenseMatrix& z : latents) {
    keys.push_back(matmul(z, key_weight));
    queries.push_back(matmul(z, query_weight));
  }
  DenseMatrix p(m, m);
  for (std::size_t e = 0; e < m; ++e)
    for (std::size_t k = 0; k < m; ++k)
      p(e, k) = 1.0 + std::exp(-frobenius_inner(keys[e], queries[k]) / cells);
  return p;
}

std::pair<DenseMatrix, ProjectionReport> dykstra_project(
    const DenseMatrix& raw, double tol, std::size_t max_iter) {
  if (raw.rows() != raw.cols()) {
    throw ShapeError("dykstra_project: input is " + std::to_string(raw.rows()) +
                     "x" + std::to_string(raw.cols()));
  }
  if (!(tol > 0.0)) {
    throw ContractError("dykstra_project: tolerance must be positive");
  }
  const std::size_t m = raw.rows();
  DenseMatrix x = raw;
  DenseMatrix inc_sym(m, m), inc_row(m, m), inc_col(m, m);

  ProjectionReport report;
  for (std::size_t cycle = 1; cycle <= max_iter; ++cycle) {
    DenseMatrix y = add(x, inc_sym);
    DenseMatrix projected = scaled(add(y, transposed(y)), 0.5);
    inc_sym = sub(y, projected);
    x = projected;

    y = add(x, inc_row);
    projected = project_rows(y);
    inc_row = sub(y, projected);
    x = projected;

    y = add(x, inc_col);
    projected = project_cols(y);
    inc_col = sub(y, projected);
    x = projected;

    measure_violations(x, report.max_row_sum_violation, report.max_asymmetry);
    report.iterations_used = cycle;
    if (report.max_row_sum_violation <= tol && report.max_asymmetry <= tol) {
      report.converged = true;
      return {x, report};
    }
  }
  throw ProjectionConvergenceError(
      "dykstra_project: no convergence after " + std::to_string(max_iter) +
          " cycles (row-sum violation " +
          std::to_string(report.max_row_sum_violation) + ", asymmetry " +
          std::to_string(report.max_asymmetry) + ")",
      report);
}

Var intra_attention_node(Tape& tape, Var latent, Var key_weight,
                         Var query_weight, double cap,
                         double* scale_factor_out) {
  Var keys = tape.row_l2_normalize(tape.matmul(latent, key_weight));
  Var queries = tape.row_l2_normalize(tape.matmul(latent, query_weight));
  Var raw = tape.shift(tape.matmul(keys, tape.transpose(queries)), 1.0);
  Var sym = tape.symmetrize(raw);
  return tape.spectral_scale(sym, cap, 1e-12, 10000, scale_factor_out);
}

Var inter_attention_node(Tape& tape, const std::vector<Var>& latents,
                         Var key_weight, Var query_weight) {
  if (latents.empty()) {
    throw ContractError("inter_attention_node: no latents given");
  }
  const std::size_t m = latents.size();
  const DenseMatrix& z0 = tape.value(latents[0]);
  const double cells = double(z0.rows()) * double(z0.cols());
  std::vector<Var> keys, queries;
  keys.reserve(m);
  queries.reserve(m);
  for (Var z : latents) {
    keys.push_back(tape.matmul(z, key_weight));
    queries.push_back(tape.matmul(z, query_weight));
  }
  std::vector<Var> entries;
  entries.reserve(m * m);
  for (std::size_t e = 0; e < m; ++e)
    for (std::size_t k = 0; k < m; ++k) {
      Var inner = tape.frob_inner(keys[e], queries[k]);
      entries.push_back(
          tape.shift(tape.exp(tape.scale(inner, -1.0 / cells)), 1.0));
    }
  return tape.assemble_scalars(m, m, entries);
}

Var coupling_projection_node(Tape& tape, Var raw, double tol,
                             std::size_t max_iter) {
  auto [projected, report] =
      dykstra_project(tape.value(raw), tol, max_iter);
  (void)report;
  return tape.doubly_stochastic_replace(raw, std::move(projected));
}

}  // namespace mgopt
