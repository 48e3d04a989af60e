#pragma once

// Roughness Index of a loss landscape at a point.
//
// For M random unit directions d_i the loss is sampled on the uniform grid
// s_j = -l + j*(2l/m), j = 0..m, along w + s*d_i. Each profile is reduced to a
// normalized total variation T_i = TV / (2l * range); the index is the
// coefficient of variation std(T)/mean(T) (population std), clipped at I_max.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <vector>

#include "fedrough/errors.hpp"
#include "fedrough/param_vector.hpp"
#include "fedrough/rng.hpp"

namespace fedrough {

struct RoughnessConfig {
  std::size_t M = 10;   // directions
  double l = 0.01;      // half-width of the projection interval
  std::size_t m = 19;   // sub-intervals; the grid has m+1 points
  double I_max = 10.0;  // clip ceiling
  std::uint64_t seed = 0;

  void validate() const {
    require(M >= 2, "roughness: M must be >= 2");
    require(l > 0.0 && std::isfinite(l), "roughness: l must be positive");
    require(m >= 1, "roughness: m must be >= 1");
    require(I_max > 0.0, "roughness: I_max must be positive");
  }
};

struct Profile {
  std::vector<double> values;  // m+1 samples
  double l = 0.0;

  std::size_t intervals() const noexcept { return values.size() - 1; }
};

struct RoughnessReport {
  std::vector<double> per_direction_T;
  double mean_T = 0.0;
  double std_T = 0.0;
  double ri_raw = 0.0;
  double ri_clipped = 0.0;
  std::size_t loss_evals = 0;
};

/// Grid offset s_j on [-l, l] with m sub-intervals.
inline double grid_point(double l, std::size_t m, std::size_t j) {
  return -l + static_cast<double>(j) * (2.0 * l / static_cast<double>(m));
}

/// Standard-normal direction scaled to unit Euclidean norm.
inline ParamVector sample_direction(Rng& rng, std::size_t dim) {
  require(dim >= 1, "sample_direction: dim must be >= 1");
  ParamVector d(dim);
  for (;;) {
    for (std::size_t i = 0; i < dim; ++i) d[i] = rng.normal();
    const double n = norm(d);
    if (n > 0.0 && std::isfinite(n)) {
      for (double& v : d) v /= n;
      return d;
    }
  }
}

/// Samples loss_at(w_t + s_j d) at the m+1 grid points.
template <class LossAt>
Profile project_profile(LossAt&& loss_at, const ParamVector& w_t, const ParamVector& d, double l, std::size_t m) {
  require(l > 0.0, "project_profile: l must be positive");
  require(m >= 1, "project_profile: m must be >= 1");
  require_same_dim(w_t, d, "project_profile");
  Profile p;
  p.l = l;
  p.values.reserve(m + 1);
  for (std::size_t j = 0; j <= m; ++j) {
    const double s = grid_point(l, m, j);
    const double v = loss_at(axpy(w_t, d, s));
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "non-finite loss at projection offset s=" << s << " (grid index " << j << ")";
      throw NonFiniteLossError(msg.str(), s);
    }
    p.values.push_back(v);
  }
  return p;
}

inline double total_variation(const Profile& p) {
  double tv = 0.0;
  for (std::size_t j = 0; j + 1 < p.values.size(); ++j) tv += std::abs(p.values[j + 1] - p.values[j]);
  return tv;
}

/// TV / (2l * A). Flat profiles (A below 1e-12 relative) map to 1/(2l), the
/// value of any monotone profile; the result is never below 1/(2l).
inline double normalized_tv(const Profile& p) {
  const auto [lo, hi] = std::minmax_element(p.values.begin(), p.values.end());
  const double A = *hi - *lo;
  const double floor_T = 1.0 / (2.0 * p.l);
  if (A < 1e-12 * std::max(1.0, std::abs(*hi))) return floor_T;
  return std::max(total_variation(p) / (2.0 * p.l * A), floor_T);
}

/// Roughness Index of loss_at around w_t. Directions are drawn in order from
/// a stream seeded with cfg.seed.
template <class LossAt>
RoughnessReport roughness_index(LossAt&& loss_at, const ParamVector& w_t, const RoughnessConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  RoughnessReport rep;
  rep.per_direction_T.reserve(cfg.M);
  std::size_t evals = 0;
  auto counted = [&](const ParamVector& w) {
    ++evals;
    return loss_at(w);
  };
  for (std::size_t i = 0; i < cfg.M; ++i) {
    const ParamVector d = sample_direction(rng, w_t.dim());
    rep.per_direction_T.push_back(normalized_tv(project_profile(counted, w_t, d, cfg.l, cfg.m)));
  }
  const double M = static_cast<double>(cfg.M);
  double sum = 0.0;
  for (double t : rep.per_direction_T) sum += t;
  rep.mean_T = sum / M;
  double ss = 0.0;
  for (double t : rep.per_direction_T) ss += (t - rep.mean_T) * (t - rep.mean_T);
  rep.std_T = std::sqrt(ss / M);
  rep.ri_raw = rep.std_T / rep.mean_T;
  rep.ri_clipped = std::min(rep.ri_raw, cfg.I_max);
  rep.loss_evals = evals;
  return rep;
}

}  // namespace fedrough
