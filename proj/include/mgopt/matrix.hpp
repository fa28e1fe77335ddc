#pragma once

#include <cstddef>
#include <vector>

namespace mgopt {

// Row-major float64 matrix. Deliberately small surface: the numeric kernels
// that need BLAS-grade speed live in matrix.cpp, everything else is a loop.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix ones(std::size_t rows, std::size_t cols) {
    return DenseMatrix(rows, cols, 1.0);
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }
  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }

  const double* data() const { return data_.data(); }
  double* data() { return data_.data(); }

  bool same_shape(const DenseMatrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

// Shape-checked arithmetic. All functions throw ShapeError on mismatch.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transposed(const DenseMatrix& a);
DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scaled(const DenseMatrix& a, double factor);
// Adds the scalar to every entry.
DenseMatrix shifted(const DenseMatrix& a, double offset);
// a + factor * I; a must be square.
DenseMatrix add_scaled_identity(const DenseMatrix& a, double factor);
// into += factor * x, in place.
void axpy(DenseMatrix& into, double factor, const DenseMatrix& x);

double sum(const DenseMatrix& a);
double frobenius_norm(const DenseMatrix& a);
double frobenius_inner(const DenseMatrix& a, const DenseMatrix& b);
double max_abs(const DenseMatrix& a);
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

// Numerically safe row-wise softmax / log-softmax (max subtraction).
DenseMatrix row_softmax(const DenseMatrix& a);
DenseMatrix row_log_softmax(const DenseMatrix& a);

// Solves a x = b (square a, b may have several columns) by partial-pivot LU.
// Throws SingularSystemError when the estimated condition number exceeds
// cond_limit.
DenseMatrix solve_linear(const DenseMatrix& a, const DenseMatrix& b,
                         double cond_limit = 1e12);

struct SpectralEstimate {
  double value = 0.0;            // largest singular value
  std::vector<double> vector;    // dominant right singular vector
  std::size_t iterations = 0;
};

// Largest singular value by power iteration on A^T A. The start vector is
// pseudo-random from a fixed seed, so results are reproducible and the
// vector is in general position (a constant start is exactly orthogonal to
// the dominant space of c*I - d*ones, which arises here).
// Throws ConvergenceError (carrying the last estimate) after max_iter steps.
SpectralEstimate spectral_norm_detailed(const DenseMatrix& a,
                                        double tol = 1e-12,
                                        std::size_t max_iter = 10000);
double spectral_norm(const DenseMatrix& a, double tol = 1e-12,
                     std::size_t max_iter = 10000);

}  // namespace mgopt
