#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "fedrough/errors.hpp"

namespace fedrough {

/// Flat model parameter vector w in R^d.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}
  ParamVector(std::initializer_list<double> values) : values_(values) {}

  std::size_t dim() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  bool all_finite() const noexcept {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

inline void require_same_dim(const ParamVector& a, const ParamVector& b, const char* op) {
  if (a.dim() != b.dim())
    throw ContractError(std::string(op) + ": dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                        std::to_string(b.dim()) + ")");
}

/// params + s * direction
inline ParamVector axpy(const ParamVector& params, const ParamVector& direction, double s) {
  require_same_dim(params, direction, "axpy");
  ParamVector out(params.dim());
  for (std::size_t i = 0; i < params.dim(); ++i) out[i] = params[i] + s * direction[i];
  return out;
}

/// In-place y += s * x.
inline void axpy_inplace(ParamVector& y, const ParamVector& x, double s) {
  require_same_dim(y, x, "axpy_inplace");
  for (std::size_t i = 0; i < y.dim(); ++i) y[i] += s * x[i];
}

inline ParamVector operator-(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b, "subtract");
  ParamVector out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline ParamVector operator+(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b, "add");
  ParamVector out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline ParamVector operator*(double s, const ParamVector& a) {
  ParamVector out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = s * a[i];
  return out;
}

inline double dot(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double squared_norm(const ParamVector& a) { return dot(a, a); }
inline double norm(const ParamVector& a) { return std::sqrt(squared_norm(a)); }

inline double squared_distance(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b, "squared_distance");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace fedrough
