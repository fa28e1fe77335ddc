#include "mgopt/matrix.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "mgopt/errors.hpp"
#include "mgopt/rng.hpp"

namespace mgopt {

namespace {

using ERowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<const ERowMajor>;
using EMapMut = Eigen::Map<ERowMajor>;

std::string shape_str(const DenseMatrix& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b,
                        const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) +
                     " vs " + shape_str(b));
  }
}

}  // namespace

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool DenseMatrix::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a) +
                     " * " + shape_str(b));
  }
  DenseMatrix c(a.rows(), b.cols());
  if (c.size() == 0 || a.cols() == 0) return c;
  EMapMut(c.data(), c.rows(), c.cols()).noalias() =
      EMap(a.data(), a.rows(), a.cols()) * EMap(b.data(), b.rows(), b.cols());
  return c;
}

DenseMatrix transposed(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "add");
  DenseMatrix c = a;
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t k = 0; k < c.size(); ++k) pc[k] += pb[k];
  return c;
}

DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "sub");
  DenseMatrix c = a;
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t k = 0; k < c.size(); ++k) pc[k] -= pb[k];
  return c;
}

DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "hadamard");
  DenseMatrix c = a;
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t k = 0; k < c.size(); ++k) pc[k] *= pb[k];
  return c;
}

DenseMatrix scaled(const DenseMatrix& a, double factor) {
  DenseMatrix c = a;
  double* pc = c.data();
  for (std::size_t k = 0; k < c.size(); ++k) pc[k] *= factor;
  return c;
}

DenseMatrix shifted(const DenseMatrix& a, double offset) {
  DenseMatrix c = a;
  double* pc = c.data();
  for (std::size_t k = 0; k < c.size(); ++k) pc[k] += offset;
  return c;
}

DenseMatrix add_scaled_identity(const DenseMatrix& a, double factor) {
  if (a.rows() != a.cols()) {
    throw ShapeError("add_scaled_identity: matrix is " + shape_str(a) +
                     ", expected square");
  }
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.rows(); ++i) c(i, i) += factor;
  return c;
}

void axpy(DenseMatrix& into, double factor, const DenseMatrix& x) {
  require_same_shape(into, x, "axpy");
  double* pi = into.data();
  const double* px = x.data();
  for (std::size_t k = 0; k < into.size(); ++k) pi[k] += factor * px[k];
}

double sum(const DenseMatrix& a) {
  double s = 0.0;
  const double* p = a.data();
  for (std::size_t k = 0; k < a.size(); ++k) s += p[k];
  return s;
}

double frobenius_norm(const DenseMatrix& a) {
  double s = 0.0;
  const double* p = a.data();
  for (std::size_t k = 0; k < a.size(); ++k) s += p[k] * p[k];
  return std::sqrt(s);
}

double frobenius_inner(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "frobenius_inner");
  double s = 0.0;
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t k = 0; k < a.size(); ++k) s += pa[k] * pb[k];
  return s;
}

double max_abs(const DenseMatrix& a) {
  double m = 0.0;
  const double* p = a.data();
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::fabs(p[k]));
  return m;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t k = 0; k < a.size(); ++k)
    m = std::max(m, std::fabs(pa[k] - pb[k]));
  return m;
}

DenseMatrix row_softmax(const DenseMatrix& a) {
  DenseMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double mx = -HUGE_VAL;
    for (std::size_t j = 0; j < a.cols(); ++j) mx = std::max(mx, a(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      out(i, j) = std::exp(a(i, j) - mx);
      denom += out(i, j);
    }
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) /= denom;
  }
  return out;
}

DenseMatrix row_log_softmax(const DenseMatrix& a) {
  DenseMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double mx = -HUGE_VAL;
    for (std::size_t j = 0; j < a.cols(); ++j) mx = std::max(mx, a(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) denom += std::exp(a(i, j) - mx);
    double lse = mx + std::log(denom);
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) - lse;
  }
  return out;
}

DenseMatrix solve_linear(const DenseMatrix& a, const DenseMatrix& b,
                         double cond_limit) {
  if (a.rows() != a.cols()) {
    throw ShapeError("solve_linear: system matrix is " + shape_str(a) +
                     ", expected square");
  }
  if (a.rows() != b.rows()) {
    throw ShapeError("solve_linear: rhs has " + std::to_string(b.rows()) +
                     " rows, expected " + std::to_string(a.rows()));
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(EMap(a.data(), a.rows(), a.cols()));
  double rcond = lu.rcond();
  if (!(rcond > 1.0 / cond_limit)) {
    throw SingularSystemError(
        "solve_linear: system is singular or ill-conditioned (rcond = " +
        std::to_string(rcond) + ")");
  }
  DenseMatrix x(b.rows(), b.cols());
  EMapMut(x.data(), x.rows(), x.cols()) =
      lu.solve(EMap(b.data(), b.rows(), b.cols()).eval());
  return x;
}

SpectralEstimate spectral_norm_detailed(const DenseMatrix& a, double tol,
                                        std::size_t max_iter) {
  if (a.size() == 0) return {};
  const std::size_t n = a.cols();
  EMap ea(a.data(), a.rows(), a.cols());
  // Fixed pseudo-random start: an all-ones start is exactly orthogonal to
  // the dominant eigenspace of matrices like c*I - d*ones(n,n), which this
  // routine must handle.
  Rng start_rng(0x5ee9d0a1u);
  Eigen::VectorXd v(n);
  for (std::size_t i = 0; i < n; ++i) v(i) = start_rng.uniform(-1.0, 1.0);
  v.normalize();
  double estimate = 0.0;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    Eigen::VectorXd w = ea.transpose() * (ea * v);
    double rayleigh = v.dot(w);  // = |A v|^2 for unit v
    double current = std::sqrt(std::max(rayleigh, 0.0));
    double wn = w.norm();
    if (wn == 0.0) {
      // v is in the null space of A^T A; the component seen by the fixed
      // start vector is exactly zero.
      SpectralEstimate r;
      r.value = 0.0;
      r.vector.assign(v.data(), v.data() + n);
      r.iterations = it;
      return r;
    }
    v = w / wn;
    if (it > 1 && std::fabs(current - estimate) <= tol * std::max(current, 1e-300)) {
      SpectralEstimate r;
      r.value = current;
      r.vector.assign(v.data(), v.data() + n);
      r.iterations = it;
      return r;
    }
    estimate = current;
  }
  throw ConvergenceError(
      "spectral_norm: power iteration did not converge within " +
          std::to_string(max_iter) + " iterations (last estimate " +
          std::to_string(estimate) + ")",
      estimate);
}

double spectral_norm(const DenseMatrix& a, double tol, std::size_t max_iter) {
  return spectral_norm_detailed(a, tol, max_iter).value;
}

}  // namespace mgopt
