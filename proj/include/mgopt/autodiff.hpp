#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mgopt/matrix.hpp"
#include "mgopt/rng.hpp"

namespace mgopt {

class Tape;

enum class OpTag : std::uint8_t {
  Constant,
  Parameter,
  Add,
  Sub,
  MatMul,
  Transpose,
  Scale,
  Shift,
  Hadamard,
  Exp,
  RowSoftmax,
  RowLogSoftmax,
  RowL2Normalize,
  FrobNormalize,
  SumAll,
  FrobInner,
  ConcatCols,
  Dropout,
  AddRowBroadcast,
  ColumnMix,
  AddScaledIdentity,
  Symmetrize,
  AssembleScalars,
  SpectralScale,
  DoublyStochasticReplace,
};

// Lightweight handle into a Tape. Vars from different tapes must not be
// mixed; ops check and throw ContractError.
class Var {
 public:
  Var() = default;
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Append-only record of matrix operations with reverse-mode differentiation.
// Nodes always reference earlier nodes, so the tape order is a topological
// order and backward() is a single reverse sweep.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(DenseMatrix value);
  Var parameter(DenseMatrix value, std::string label);

  const DenseMatrix& value(Var v) const;
  // Gradient stored on the node by the last backward() run; zeros if the
  // node was unreachable from the output.
  DenseMatrix grad(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var scale(Var a, double factor);
  Var shift(Var a, double offset);
  Var hadamard(Var a, Var b);
  Var exp(Var a);
  Var row_softmax(Var a);
  Var row_log_softmax(Var a);
  // Scales each row to unit Euclidean norm; throws DegenerateInputError
  // naming the first zero-norm row.
  Var row_l2_normalize(Var a);
  // Divides by the Frobenius norm; throws DegenerateInputError at zero.
  Var frob_normalize(Var a);
  Var sum_all(Var a);
  Var frob_inner(Var a, Var b);
  Var concat_cols(const std::vector<Var>& parts);
  // Inverted dropout: surviving entries are scaled by 1/(1-rate) so the
  // expected value is unchanged. rate must lie in [0, 1).
  Var dropout(Var a, double rate, Rng& rng);
  // a is n x d, row is 1 x d, added to every row of a.
  Var add_row_broadcast(Var a, Var row);
  // Sum_e weights(e, column) * parts[e]; weights is differentiable too.
  Var column_mix(Var weights, const std::vector<Var>& parts,
                 std::size_t column);
  Var add_scaled_identity(Var a, double factor);
  Var symmetrize(Var a);
  // Packs rows*cols scalar (1x1) nodes into a matrix, row-major order.
  Var assemble_scalars(std::size_t rows, std::size_t cols,
                       const std::vector<Var>& entries);
  // Multiplies by min(1, cap / |a|_2). The factor is differentiated exactly
  // through the dominant singular pair, so finite differences agree.
  Var spectral_scale(Var a, double cap, double tol, std::size_t max_iter,
                     double* factor_out = nullptr);
  // Forward value becomes `projected` (computed by the caller, e.g. via
  // Dykstra). Backward applies the tangent projector of the affine set
  // {symmetric, all row and column sums 1}, which is the exact Jacobian of
  // that projection.
  Var doubly_stochastic_replace(Var raw, DenseMatrix projected);

  // Gradients of `output` (must be 1x1) with respect to every registered
  // parameter. Previous gradients are cleared first, so repeated calls give
  // identical results.
  std::map<std::string, DenseMatrix> backward(Var output);

 private:
  using PullFn = std::function<void(Tape&, const DenseMatrix&)>;

  struct Node {
    DenseMatrix value;
    OpTag op = OpTag::Constant;
    std::string label;
    std::vector<std::size_t> parents;
    DenseMatrix grad;
    PullFn pull;
  };

  Var emplace(DenseMatrix value, OpTag op, std::vector<std::size_t> parents,
              PullFn pull, std::string label = {});
  void check_mine(Var v, const char* op) const;
  void accumulate(std::size_t id, const DenseMatrix& delta);
  void accumulate_scaled(std::size_t id, double factor,
                         const DenseMatrix& delta);

  std::deque<Node> nodes_;
  std::vector<std::size_t> parameters_;
};

struct GradCheckReport {
  // label -> |analytic - numeric|_F / max(|analytic|_F, |numeric|_F, 1e-12)
  std::vector<std::pair<std::string, double>> per_parameter;
  double max_rel_err = 0.0;
};

// Rebuilds the computation on a fresh tape from the given parameter nodes
// (one per entry of `values`, same order) and returns the scalar output.
// Must be deterministic across calls; freeze any dropout masks.
using TapeFunction = std::function<Var(Tape&, const std::vector<Var>&)>;

// Central finite differences with step h, compared against backward().
GradCheckReport grad_check(const TapeFunction& f,
                           const std::vector<DenseMatrix>& values,
                           const std::vector<std::string>& labels,
                           double h = 1e-5);

}  // namespace mgopt
