#include "mgopt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

#include "mgopt/errors.hpp"

namespace mgopt {

namespace {

DenseMatrix column_sums_row(const DenseMatrix& g) {
  DenseMatrix out(1, g.cols());
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) out(0, j) += g(i, j);
  return out;
}

}  // namespace

Var Tape::emplace(DenseMatrix value, OpTag op, std::vector<std::size_t> parents,
                  PullFn pull, std::string label) {
  const std::size_t id = nodes_.size();
  for (std::size_t p : parents) {
    if (p >= id) {
      throw GraphError("tape: node would reference a later node (cycle)");
    }
  }
  Node node;
  node.value = std::move(value);
  node.op = op;
  node.label = std::move(label);
  node.parents = std::move(parents);
  node.pull = std::move(pull);
  nodes_.push_back(std::move(node));
  return Var(this, id);
}

void Tape::check_mine(Var v, const char* op) const {
  if (!v.valid() || v.tape_ != this || v.id() >= nodes_.size()) {
    throw ContractError(std::string(op) +
                        ": operand does not belong to this tape");
  }
}

void Tape::accumulate(std::size_t id, const DenseMatrix& delta) {
  Node& n = nodes_[id];
  if (n.op == OpTag::Constant) return;  // gradients of constants are unused
  if (n.grad.empty()) n.grad = DenseMatrix(n.value.rows(), n.value.cols());
  axpy(n.grad, 1.0, delta);
}

void Tape::accumulate_scaled(std::size_t id, double factor,
                             const DenseMatrix& delta) {
  Node& n = nodes_[id];
  if (n.op == OpTag::Constant) return;
  if (n.grad.empty()) n.grad = DenseMatrix(n.value.rows(), n.value.cols());
  axpy(n.grad, factor, delta);
}

Var Tape::constant(DenseMatrix value) {
  return emplace(std::move(value), OpTag::Constant, {}, nullptr);
}

Var Tape::parameter(DenseMatrix value, std::string label) {
  if (label.empty()) throw ContractError("parameter: label must be non-empty");
  for (std::size_t id : parameters_) {
    if (nodes_[id].label == label) {
      throw ContractError("parameter: duplicate label '" + label + "'");
    }
  }
  Var v = emplace(std::move(value), OpTag::Parameter, {}, nullptr,
                  std::move(label));
  parameters_.push_back(v.id());
  return v;
}

const DenseMatrix& Tape::value(Var v) const {
  check_mine(v, "value");
  return nodes_[v.id()].value;
}

DenseMatrix Tape::grad(Var v) const {
  check_mine(v, "grad");
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return DenseMatrix(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::add(Var a, Var b) {
  check_mine(a, "add");
  check_mine(b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return emplace(mgopt::add(nodes_[ia].value, nodes_[ib].value), OpTag::Add,
                 {ia, ib}, [ia, ib](Tape& t, const DenseMatrix& g) {
                   t.accumulate(ia, g);
                   t.accumulate(ib, g);
                 });
}

Var Tape::sub(Var a, Var b) {
  check_mine(a, "sub");
  check_mine(b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return emplace(mgopt::sub(nodes_[ia].value, nodes_[ib].value), OpTag::Sub,
                 {ia, ib}, [ia, ib](Tape& t, const DenseMatrix& g) {
                   t.accumulate(ia, g);
                   t.accumulate_scaled(ib, -1.0, g);
                 });
}

Var Tape::matmul(Var a, Var b) {
  check_mine(a, "matmul");
  check_mine(b, "matmul");
  const std::size_t ia = a.id(), ib = b.id();
  return emplace(mgopt::matmul(nodes_[ia].value, nodes_[ib].value),
                 OpTag::MatMul, {ia, ib},
                 [ia, ib](Tape& t, const DenseMatrix& g) {
                   t.accumulate(ia, mgopt::matmul(g, transposed(t.nodes_[ib].value)));
                   t.accumulate(ib, mgopt::matmul(transposed(t.nodes_[ia].value), g));
                 });
}

Var Tape::transpose(Var a) {
  check_mine(a, "transpose");
  const std::size_t ia = a.id();
  return emplace(transposed(nodes_[ia].value), OpTag::Transpose, {ia},
                 [ia](Tape& t, const DenseMatrix& g) {
                   t.accumulate(ia, transposed(g));
                 });
}

Var Tape::scale(Var a, double factor) {
  check_mine(a, "scale");
  const std::size_t ia = a.id();
  return emplace(scaled(nodes_[ia].value, factor), OpTag::Scale, {ia},
                 [ia, factor](Tape& t, const DenseMatrix& g) {
                   t.accumulate_scaled(ia, factor, g);
                 });
}

Var Tape::shift(Var a, double offset) {
  check_mine(a, "shift");
  const std::size_t ia = a.id();
  return emplace(shifted(nodes_[ia].value, offset), OpTag::Shift, {ia},
                 [ia](Tape& t, const DenseMatrix& g) { t.accumulate(ia, g); });
}

Var Tape::hadamard(Var a, Var b) {
  check_mine(a, "hadamard");
  check_mine(b, "hadamard");
  const std::size_t ia = a.id(), ib = b.id();
  return emplace(mgopt::hadamard(nodes_[ia].value, nodes_[ib].value),
                 OpTag::Hadamard, {ia, ib},
                 [ia, ib](Tape& t, const DenseMatrix& g) {
                   t.accumulate(ia, mgopt::hadamard(g, t.nodes_[ib].value));
                   t.accumulate(ib, mgopt::hadamard(g, t.nodes_[ia].value));
                 });
}

Var Tape::exp(Var a) {
  check_mine(a, "exp");
  const std::size_t ia = a.id();
  const DenseMatrix& x = nodes_[ia].value;
  DenseMatrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) = std::exp(x(i, j));
  Var out = emplace(std::move(y), OpTag::Exp, {ia}, nullptr);
  const std::size_t io = out.id();
  nodes_[io].pull = [ia, io](Tape& t, const DenseMatrix& g) {
    t.accumulate(ia, mgopt::hadamard(g, t.nodes_[io].value));
  };
  return out;
}

Var Tape::row_softmax(Var a) {
  check_mine(a, "row_softmax");
  const std::size_t ia = a.id();
  Var out = emplace(mgopt::row_softmax(nodes_[ia].value), OpTag::RowSoftmax,
                    {ia}, nullptr);
  const std::size_t io = out.id();
  nodes_[io].pull = [ia, io](Tape& t, const DenseMatrix& g) {
    const DenseMatrix& y = t.nodes_[io].value;
    DenseMatrix d(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j)
        d(i, j) = y(i, j) * (g(i, j) - dot);
    }
    t.accumulate(ia, d);
  };
  return out;
}

Var Tape::row_log_softmax(Var a) {
  check_mine(a, "row_log_softmax");
  const std::size_t ia = a.id();
  const DenseMatrix& x = nodes_[ia].value;
  // Probabilities are kept for the backward pass.
  auto probs = std::make_shared<DenseMatrix>(mgopt::row_softmax(x));
  return emplace(mgopt::row_log_softmax(x), OpTag::RowLogSoftmax, {ia},
                 [ia, probs](Tape& t, const DenseMatrix& g) {
                   const DenseMatrix& p = *probs;
                   DenseMatrix d(g.rows(), g.cols());
                   for (std::size_t i = 0; i < g.rows(); ++i) {
                     double rowsum = 0.0;
                     for (std::size_t j = 0; j < g.cols(); ++j)
                       rowsum += g(i, j);
                     for (std::size_t j = 0; j < g.cols(); ++j)
                       d(i, j) = g(i, j) - p(i, j) * rowsum;
                   }
                   t.accumulate(ia, d);
                 });
}

Var Tape::row_l2_normalize(Var a) {
  check_mine(a, "row_l2_normalize");
  const std::size_t ia = a.id();
  const DenseMatrix& x = nodes_[ia].value;
  auto norms = std::make_shared<std::vector<double>>(x.rows());
  DenseMatrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) s += x(i, j) * x(i, j);
    double n = std::sqrt(s);
    if (n == 0.0) {
      throw DegenerateInputError("row_l2_normalize: row " + std::to_string(i) +
                                 " has zero norm");
    }
    (*norms)[i] = n;
    for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) = x(i, j) / n;
  }
  Var out = emplace(std::move(y), OpTag::RowL2Normalize, {ia}, nullptr);
  const std::size_t io = out.id();
  nodes_[io].pull = [ia, io, norms](Tape& t, const DenseMatrix& g) {
    const DenseMatrix& yv = t.nodes_[io].value;
    DenseMatrix d(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * yv(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j)
        d(i, j) = (g(i, j) - yv(i, j) * dot) / (*norms)[i];
    }
    t.accumulate(ia, d);
  };
  return out;
}

Var Tape::frob_normalize(Var a) {
  check_mine(a, "frob_normalize");
  const std::size_t ia = a.id();
  double n = frobenius_norm(nodes_[ia].value);
  if (n == 0.0) {
    throw DegenerateInputError("frob_normalize: matrix has zero norm");
  }
  Var out = emplace(scaled(nodes_[ia].value, 1.0 / n), OpTag::FrobNormalize,
                    {ia}, nullptr);
  const std::size_t io = out.id();
  nodes_[io].pull = [ia, io, n](Tape& t, const DenseMatrix& g) {
    const DenseMatrix& y = t.nodes_[io].value;
    double dot = frobenius_inner(g, y);
    DenseMatrix d = g;
    axpy(d, -dot, y);
    t.accumulate_scaled(ia, 1.0 / n, d);
  };
  return out;
}

Var Tape::sum_all(Var a) {
  check_mine(a, "sum_all");
  const std::size_t ia = a.id();
  DenseMatrix s(1, 1);
  s(0, 0) = mgopt::sum(nodes_[ia].value);
  return emplace(std::move(s), OpTag::SumAll, {ia},
                 [ia](Tape& t, const DenseMatrix& g) {
                   const DenseMatrix& x = t.nodes_[ia].value;
                   t.accumulate(ia, DenseMatrix(x.rows(), x.cols(), g(0, 0)));
                 });
}

Var Tape::frob_inner(Var a, Var b) {
  check_mine(a, "frob_inner");
  check_mine(b, "frob_inner");
  const std::size_t ia = a.id(), ib = b.id();
  DenseMatrix s(1, 1);
  s(0, 0) = frobenius_inner(nodes_[ia].value, nodes_[ib].value);
  return emplace(std::move(s), OpTag::FrobInner, {ia, ib},
                 [ia, ib](Tape& t, const DenseMatrix& g) {
                   t.accumulate_scaled(ia, g(0, 0), t.nodes_[ib].value);
                   t.accumulate_scaled(ib, g(0, 0), t.nodes_[ia].value);
                 });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: empty input list");
  std::vector<std::size_t> ids;
  std::size_t total_cols = 0;
  const std::size_t rows = value(parts.front()).rows();
  for (Var p : parts) {
    check_mine(p, "concat_cols");
    if (value(p).rows() != rows) {
      throw ShapeError("concat_cols: row counts differ");
    }
    total_cols += value(p).cols();
    ids.push_back(p.id());
  }
  DenseMatrix out(rows, total_cols);
  std::size_t off = 0;
  for (std::size_t id : ids) {
    const DenseMatrix& x = nodes_[id].value;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) out(i, off + j) = x(i, j);
    off += x.cols();
  }
  return emplace(std::move(out), OpTag::ConcatCols, ids,
                 [ids](Tape& t, const DenseMatrix& g) {
                   std::size_t off = 0;
                   for (std::size_t id : ids) {
                     const DenseMatrix& x = t.nodes_[id].value;
                     DenseMatrix slice(x.rows(), x.cols());
                     for (std::size_t i = 0; i < x.rows(); ++i)
                       for (std::size_t j = 0; j < x.cols(); ++j)
                         slice(i, j) = g(i, off + j);
                     t.accumulate(id, slice);
                     off += x.cols();
                   }
                 });
}

Var Tape::dropout(Var a, double rate, Rng& rng) {
  check_mine(a, "dropout");
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ContractError("dropout: rate must lie in [0, 1), got " +
                        std::to_string(rate));
  }
  const std::size_t ia = a.id();
  const DenseMatrix& x = nodes_[ia].value;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<DenseMatrix>(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j)
      (*mask)(i, j) = rng.uniform() < rate ? 0.0 : keep_scale;
  return emplace(mgopt::hadamard(x, *mask), OpTag::Dropout, {ia},
                 [ia, mask](Tape& t, const DenseMatrix& g) {
                   t.accumulate(ia, mgopt::hadamard(g, *mask));
                 });
}

Var Tape::add_row_broadcast(Var a, Var row) {
  check_mine(a, "add_row_broadcast");
  check_mine(row, "add_row_broadcast");
  const std::size_t ia = a.id(), ir = row.id();
  const DenseMatrix& x = nodes_[ia].value;
  const DenseMatrix& r = nodes_[ir].value;
  if (r.rows() != 1 || r.cols() != x.cols()) {
    throw ShapeError("add_row_broadcast: row vector must be 1x" +
                     std::to_string(x.cols()));
  }
  DenseMatrix out = x;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += r(0, j);
  return emplace(std::move(out), OpTag::AddRowBroadcast, {ia, ir},
                 [ia, ir](Tape& t, const DenseMatrix& g) {
                   t.accumulate(ia, g);
                   t.accumulate(ir, column_sums_row(g));
                 });
}

Var Tape::column_mix(Var weights, const std::vector<Var>& parts,
                     std::size_t column) {
  check_mine(weights, "column_mix");
  if (parts.empty()) throw ContractError("column_mix: empty input list");
  const DenseMatrix& w = value(weights);
  if (w.rows() != parts.size() || column >= w.cols()) {
    throw ShapeError("column_mix: weights are " + std::to_string(w.rows()) +
                     "x" + std::to_string(w.cols()) + " for " +
                     std::to_string(parts.size()) + " parts, column " +
                     std::to_string(column));
  }
  std::vector<std::size_t> ids;
  for (Var p : parts) {
    check_mine(p, "column_mix");
    ids.push_back(p.id());
  }
  const std::size_t iw = weights.id();
  DenseMatrix out(value(parts.front()).rows(), value(parts.front()).cols());
  for (std::size_t e = 0; e < ids.size(); ++e) {
    axpy(out, w(e, column), nodes_[ids[e]].value);
  }
  std::vector<std::size_t> all_parents = ids;
  all_parents.push_back(iw);
  return emplace(std::move(out), OpTag::ColumnMix, all_parents,
                 [ids, iw, column](Tape& t, const DenseMatrix& g) {
                   const DenseMatrix& wv = t.nodes_[iw].value;
                   DenseMatrix wgrad(wv.rows(), wv.cols());
                   for (std::size_t e = 0; e < ids.size(); ++e) {
                     t.accumulate_scaled(ids[e], wv(e, column), g);
                     wgrad(e, column) =
                         frobenius_inner(g, t.nodes_[ids[e]].value);
                   }
                   t.accumulate(iw, wgrad);
                 });
}

Var Tape::add_scaled_identity(Var a, double factor) {
  check_mine(a, "add_scaled_identity");
  const std::size_t ia = a.id();
  return emplace(mgopt::add_scaled_identity(nodes_[ia].value, factor),
                 OpTag::AddScaledIdentity, {ia},
                 [ia](Tape& t, const DenseMatrix& g) { t.accumulate(ia, g); });
}

Var Tape::symmetrize(Var a) {
  check_mine(a, "symmetrize");
  const std::size_t ia = a.id();
  const DenseMatrix& x = nodes_[ia].value;
  if (x.rows() != x.cols()) {
    throw ShapeError("symmetrize: matrix must be square");
  }
  DenseMatrix out = scaled(mgopt::add(x, transposed(x)), 0.5);
  return emplace(std::move(out), OpTag::Symmetrize, {ia},
                 [ia](Tape& t, const DenseMatrix& g) {
                   t.accumulate(ia, scaled(mgopt::add(g, transposed(g)), 0.5));
                 });
}

Var Tape::assemble_scalars(std::size_t rows, std::size_t cols,
                           const std::vector<Var>& entries) {
  if (entries.size() != rows * cols) {
    throw ShapeError("assemble_scalars: expected " +
                     std::to_string(rows * cols) + " entries, got " +
                     std::to_string(entries.size()));
  }
  std::vector<std::size_t> ids;
  DenseMatrix out(rows, cols);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    check_mine(entries[k], "assemble_scalars");
    const DenseMatrix& e = value(entries[k]);
    if (e.rows() != 1 || e.cols() != 1) {
      throw ShapeError("assemble_scalars: entry " + std::to_string(k) +
                       " is not scalar");
    }
    out.data()[k] = e(0, 0);
    ids.push_back(entries[k].id());
  }
  return emplace(std::move(out), OpTag::AssembleScalars, ids,
                 [ids](Tape& t, const DenseMatrix& g) {
                   for (std::size_t k = 0; k < ids.size(); ++k) {
                     DenseMatrix s(1, 1);
                     s(0, 0) = g.data()[k];
                     t.accumulate(ids[k], s);
                   }
                 });
}

Var Tape::spectral_scale(Var a, double cap, double tol, std::size_t max_iter,
                         double* factor_out) {
  check_mine(a, "spectral_scale");
  if (!(cap > 0.0)) {
    throw ContractError("spectral_scale: cap must be positive");
  }
  const std::size_t ia = a.id();
  const DenseMatrix& x = nodes_[ia].value;
  SpectralEstimate est = spectral_norm_detailed(x, tol, max_iter);
  const double sigma = est.value;
  const double factor = (sigma <= cap || sigma == 0.0) ? 1.0 : cap / sigma;
  if (factor_out) *factor_out = factor;
  if (factor == 1.0) {
    return emplace(x, OpTag::SpectralScale, {ia},
                   [ia](Tape& t, const DenseMatrix& g) {
                     t.accumulate(ia, g);
                   });
  }
  // out = cap * X / sigma(X). d sigma = sign(u' X u) * u u' for symmetric X
  // with dominant eigenvector u, hence
  // dX = factor * G - (factor / sigma) * <G, X> * sign * u u'.
  auto u = std::make_shared<std::vector<double>>(std::move(est.vector));
  return emplace(scaled(x, factor), OpTag::SpectralScale, {ia},
                 [ia, u, factor, sigma](Tape& t, const DenseMatrix& g) {
                   const DenseMatrix& xv = t.nodes_[ia].value;
                   const std::size_t n = u->size();
                   double quad = 0.0;  // u' X u
                   for (std::size_t i = 0; i < n; ++i)
                     for (std::size_t j = 0; j < n; ++j)
                       quad += (*u)[i] * xv(i, j) * (*u)[j];
                   const double sign = quad >= 0.0 ? 1.0 : -1.0;
                   const double coef =
                       -(factor / sigma) * frobenius_inner(g, xv) * sign;
                   DenseMatrix d = scaled(g, factor);
                   for (std::size_t i = 0; i < n; ++i)
                     for (std::size_t j = 0; j < n; ++j)
                       d(i, j) += coef * (*u)[i] * (*u)[j];
                   t.accumulate(ia, d);
                 });
}

Var Tape::doubly_stochastic_replace(Var raw, DenseMatrix projected) {
  check_mine(raw, "doubly_stochastic_replace");
  const std::size_t ia = raw.id();
  if (!nodes_[ia].value.same_shape(projected)) {
    throw ShapeError("doubly_stochastic_replace: projected value shape differs");
  }
  if (projected.rows() != projected.cols()) {
    throw ShapeError("doubly_stochastic_replace: matrix must be square");
  }
  return emplace(
      std::move(projected), OpTag::DoublyStochasticReplace, {ia},
      [ia](Tape& t, const DenseMatrix& g) {
        // Tangent projector of {P symmetric, P 1 = 1, P' 1 = 1}: symmetrize,
        // then subtract mu_i + mu_j chosen so all row sums become zero.
        const std::size_t m = g.rows();
        DenseMatrix gs = scaled(mgopt::add(g, transposed(g)), 0.5);
        std::vector<double> r(m, 0.0);
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < m; ++j) r[i] += gs(i, j);
          total += r[i];
        }
        const double shift = total / (2.0 * double(m));
        DenseMatrix d(m, m);
        for (std::size_t i = 0; i < m; ++i) {
          const double mu_i = (r[i] - shift) / double(m);
          for (std::size_t j = 0; j < m; ++j) {
            const double mu_j = (r[j] - shift) / double(m);
            d(i, j) = gs(i, j) - mu_i - mu_j;
          }
        }
        t.accumulate(ia, d);
      });
}

std::map<std::string, DenseMatrix> Tape::backward(Var output) {
  check_mine(output, "backward");
  const Node& out = nodes_[output.id()];
  if (out.value.rows() != 1 || out.value.cols() != 1) {
    throw ContractError("backward: output must be 1x1, got " +
                        std::to_string(out.value.rows()) + "x" +
                        std::to_string(out.value.cols()));
  }
  for (Node& n : nodes_) n.grad = DenseMatrix();
  nodes_[output.id()].grad = DenseMatrix(1, 1, 1.0);
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.grad.empty() && n.pull) n.pull(*this, n.grad);
  }
  std::map<std::string, DenseMatrix> result;
  for (std::size_t id : parameters_) {
    const Node& p = nodes_[id];
    result.emplace(p.label, p.grad.empty()
                                ? DenseMatrix(p.value.rows(), p.value.cols())
                                : p.grad);
  }
  return result;
}

namespace {

double eval_scalar(const TapeFunction& f, const std::vector<DenseMatrix>& vals,
                   const std::vector<std::string>& labels) {
  Tape t;
  std::vector<Var> ps;
  ps.reserve(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i)
    ps.push_back(t.parameter(vals[i], labels[i]));
  Var out = f(t, ps);
  const DenseMatrix& v = t.value(out);
  if (v.rows() != 1 || v.cols() != 1) {
    throw ContractError("grad_check: function output must be scalar");
  }
  if (!std::isfinite(v(0, 0))) {
    throw NumericError("grad_check: function produced a non-finite value");
  }
  return v(0, 0);
}

}  // namespace

GradCheckReport grad_check(const TapeFunction& f,
                           const std::vector<DenseMatrix>& values,
                           const std::vector<std::string>& labels,
                           double h) {
  if (values.size() != labels.size()) {
    throw ContractError("grad_check: values/labels size mismatch");
  }
  if (!(h > 0.0)) throw ContractError("grad_check: step must be positive");

  Tape t;
  std::vector<Var> ps;
  for (std::size_t i = 0; i < values.size(); ++i)
    ps.push_back(t.parameter(values[i], labels[i]));
  Var out = f(t, ps);
  if (!std::isfinite(t.value(out)(0, 0))) {
    throw NumericError("grad_check: function produced a non-finite value");
  }
  auto analytic = t.backward(out);

  GradCheckReport report;
  std::vector<DenseMatrix> work = values;
  for (std::size_t p = 0; p < values.size(); ++p) {
    DenseMatrix numeric(values[p].rows(), values[p].cols());
    for (std::size_t i = 0; i < values[p].rows(); ++i) {
      for (std::size_t j = 0; j < values[p].cols(); ++j) {
        const double orig = work[p](i, j);
        work[p](i, j) = orig + h;
        const double fp = eval_scalar(f, work, labels);
        work[p](i, j) = orig - h;
        const double fm = eval_scalar(f, work, labels);
        work[p](i, j) = orig;
        numeric(i, j) = (fp - fm) / (2.0 * h);
      }
    }
    const DenseMatrix& a = analytic.at(labels[p]);
    const double err = frobenius_norm(sub(a, numeric));
    const double denom = std::max(
        {frobenius_norm(a), frobenius_norm(numeric), 1e-12});
    report.per_parameter.emplace_back(labels[p], err / denom);
    report.max_rel_err = std::max(report.max_rel_err, err / denom);
  }
  return report;
}

}  // namespace mgopt
