#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hosfl {

/// Flat parameter / gradient storage. dim() is size().
using Vector = std::vector<double>;

/// Dense row-major matrix. Activations, batches and Jacobians use it.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::size_t size() const { return data.size(); }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// All reductions below accumulate strictly left to right. Replay of client
// updates relies on this, so no reordering, blocking or FMA is allowed.

double dot(std::span<const double> a, std::span<const double> b);
double norm_sq(std::span<const double> a);
double norm(std::span<const double> a);

/// Returns alpha * x + y.
Vector axpy(double alpha, std::span<const double> x, std::span<const double> y);
/// y += alpha * x.
void axpy_inplace(double alpha, std::span<const double> x, std::span<double> y);

void scale_inplace(double alpha, std::span<double> x);

/// Frobenius inner product of two equally shaped matrices.
double frobenius_dot(const Matrix& a, const Matrix& b);

/// Throws NumericError naming `what` if any element is NaN/Inf.
void require_finite(std::span<const double> values, const char* what);
bool all_finite(std::span<const double> values);

void require_same_dim(std::size_t a, std::size_t b, const char* what);

}  // namespace hosfl
