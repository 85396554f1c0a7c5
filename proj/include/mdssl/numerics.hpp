#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace mdssl {

using Vector = std::vector<double>;

/// Dense row-major matrix. Rows usually hold one sample (frame or embedding).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix from_rows(std::span<const Vector> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

inline constexpr double kNormFloor = 1e-12;

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
bool all_finite(std::span<const double> a);

/// Throws NonFiniteError naming `what` if any entry is NaN or Inf.
void require_finite(std::span<const double> a, const char* what);

/// dot(a,b) / (|a| |b|), clamped to [-1, 1].
/// Throws DegenerateInputError when either norm is below kNormFloor.
double cosine(std::span<const double> a, std::span<const double> b);

/// Unbiased (n-1) sample covariance of the rows.
Matrix covariance(const Matrix& rows);

double frobenius_sq(const Matrix& m);

Matrix operator-(const Matrix& a, const Matrix& b);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central-difference gradient of f at p.
Vector finite_diff_grad(const ScalarFunction& f, std::span<const double> p, double h = 1e-5);

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t param_count = 0;
};

/// Per-coordinate comparison. The relative error of coordinate i is
/// |a_i - n_i| / max(|a_i|, |n_i|, abs_floor); the floor keeps coordinates
/// whose true gradient is ~0 from dividing round-off by round-off.
GradCheckReport compare_gradients(std::span<const double> analytic, std::span<const double> numeric,
                                  double abs_floor = 1e-6);

}  // namespace mdssl
