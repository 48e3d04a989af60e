#pragma once

// Client-side local updates for FedAvg, RI-FedAvg, FedProx, SCAFFOLD, FedDyn
// and DP-FedAvg, plus server-side client sampling and aggregation.
//
// Local updates are templated on an Objective providing
//   double loss(const ParamVector&, const Batch&) const;
//   std::pair<double, ParamVector> loss_and_gradient(const ParamVector&, const Batch&) const;
// LossModel satisfies it; tests plug in analytic objectives.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "fedrough/data.hpp"
#include "fedrough/errors.hpp"
#include "fedrough/param_vector.hpp"
#include "fedrough/rng.hpp"
#include "fedrough/roughness.hpp"

namespace fedrough {

enum class AlgoKind { fedavg, ri_fedavg, fedprox, scaffold, feddyn, dp_fedavg };

inline const char* to_string(AlgoKind k) {
  switch (k) {
    case AlgoKind::fedavg: return "fedavg";
    case AlgoKind::ri_fedavg: return "ri_fedavg";
    case AlgoKind::fedprox: return "fedprox";
    case AlgoKind::scaffold: return "scaffold";
    case AlgoKind::feddyn: return "feddyn";
    case AlgoKind::dp_fedavg: return "dp_fedavg";
  }
  return "?";
}

inline std::optional<AlgoKind> parse_algo_kind(const std::string& s) {
  for (AlgoKind k : {AlgoKind::fedavg, AlgoKind::ri_fedavg, AlgoKind::fedprox, AlgoKind::scaffold, AlgoKind::feddyn,
                     AlgoKind::dp_fedavg})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

struct RiSettings {
  double lambda = 0.1;
  RoughnessConfig roughness;  // seed is overwritten per (round, client)
  // Rows used for the landscape probe; unset means the full shard.
  std::optional<std::size_t> probe_rows;
  // Bypasses the probe and uses this I_k instead.
  std::optional<double> fixed_ri;
};

struct ProxSettings {
  double mu = 0.01;
};

struct DynSettings {
  double alpha = 0.01;
};

struct DpSettings {
  double clip = 1.0;
  double sigma = 0.5;
};

struct AlgoConfig {
  AlgoKind kind = AlgoKind::fedavg;
  double eta = 0.01;
  std::size_t E = 5;
  std::size_t B = 128;
  std::optional<RiSettings> ri;
  std::optional<ProxSettings> prox;
  std::optional<DynSettings> dyn;
  std::optional<DpSettings> dp;

  /// Defaults for kind with the matching settings block present.
  static AlgoConfig make(AlgoKind kind) {
    AlgoConfig c;
    c.kind = kind;
    switch (kind) {
      case AlgoKind::ri_fedavg: c.ri.emplace(); break;
      case AlgoKind::fedprox: c.prox.emplace(); break;
      case AlgoKind::feddyn: c.dyn.emplace(); break;
      case AlgoKind::dp_fedavg: c.dp.emplace(); break;
      default: break;
    }
    return c;
  }

  void validate() const {
    require(eta > 0.0 && std::isfinite(eta), "algorithm: eta must be positive");
    require(E >= 1, "algorithm: E must be >= 1");
    require(B >= 1, "algorithm: B must be >= 1");
    require(ri.has_value() == (kind == AlgoKind::ri_fedavg), "algorithm: RI settings present iff kind is ri_fedavg");
    require(prox.has_value() == (kind == AlgoKind::fedprox), "algorithm: mu present iff kind is fedprox");
    require(dyn.has_value() == (kind == AlgoKind::feddyn), "algorithm: feddyn_alpha present iff kind is feddyn");
    require(dp.has_value() == (kind == AlgoKind::dp_fedavg), "algorithm: DP settings present iff kind is dp_fedavg");
    if (ri) {
      require(ri->lambda >= 0.0, "algorithm: lambda must be >= 0");
      ri->roughness.validate();
      if (ri->fixed_ri) require(*ri->fixed_ri >= 0.0, "algorithm: fixed_ri must be >= 0");
      if (ri->probe_rows) require(*ri->probe_rows >= 1, "algorithm: probe_rows must be >= 1");
    }
    if (prox) require(prox->mu >= 0.0, "algorithm: mu must be >= 0");
    if (dyn) require(dyn->alpha > 0.0, "algorithm: feddyn_alpha must be positive");
    if (dp) {
      require(dp->clip > 0.0, "algorithm: dp_clip must be positive");
      require(dp->sigma >= 0.0, "algorithm: dp_sigma must be >= 0");
    }
  }
};

/// Server-held state. Auxiliary vectors exist only for their algorithm.
struct ServerState {
  ParamVector global;
  std::size_t round = 0;
  std::optional<ParamVector> scaffold_c;
  std::optional<ParamVector> feddyn_h;

  static ServerState init(ParamVector w0, AlgoKind kind) {
    ServerState s;
    const std::size_t d = w0.dim();
    s.global = std::move(w0);
    if (kind == AlgoKind::scaffold) s.scaffold_c = ParamVector(d);
    if (kind == AlgoKind::feddyn) s.feddyn_h = ParamVector(d);
    return s;
  }
};

/// Per-client state carried across rounds (zero until first participation).
struct ClientPersistentState {
  std::optional<ParamVector> scaffold_c_k;
  std::optional<ParamVector> feddyn_grad_accum;
};

struct ClientContext {
  std::size_t client_id = 0;
  std::size_t round = 0;
  std::uint64_t seed = 0;  // per-(round, client) seed; child streams are derived from it
};

struct LocalUpdateResult {
  std::size_t client_id = 0;
  ParamVector client_params;
  std::size_t n_k = 0;
  double drift_sq = 0.0;
  std::optional<double> ri;
  std::size_t loss_evals = 0;
  std::size_t local_steps = 0;
  std::optional<ParamVector> scaffold_delta;  // c_k+ - c_k
};

/// |S_t| = max(floor(C*K), 1) clients without replacement, sorted ascending.
inline std::vector<std::size_t> sample_clients(std::size_t K, double C, std::size_t round, std::uint64_t seed) {
  require(K >= 1, "sample_clients: K must be >= 1");
  require(C > 0.0 && C <= 1.0, "sample_clients: C must lie in (0, 1]");
  const auto want = std::max<std::size_t>(static_cast<std::size_t>(std::floor(C * static_cast<double>(K))), 1);
  std::vector<std::size_t> ids(K);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng rng(derive_seed(seed, Stream::client_sampling, {round}));
  // Partial Fisher-Yates: the first `want` slots are a uniform sample.
  for (std::size_t i = 0; i < want; ++i) {
    const std::size_t j = i + rng.uniform_index(K - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(want);
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// grad_F + 2 * lambda * I_k * (w - w_t)
inline ParamVector ri_regularized_gradient(const ParamVector& grad_F, const ParamVector& w, const ParamVector& w_t,
                                           double lambda, double I_k) {
  require_same_dim(grad_F, w, "ri_regularized_gradient");
  require_same_dim(w, w_t, "ri_regularized_gradient");
  require(lambda >= 0.0 && I_k >= 0.0, "ri_regularized_gradient: lambda and I_k must be >= 0");
  const double coef = 2.0 * lambda * I_k;
  ParamVector out(grad_F.dim());
  for (std::size_t i = 0; i < out.dim(); ++i) out[i] = grad_F[i] + coef * (w[i] - w_t[i]);
  return out;
}

/// Clip to norm `clip`, then add N(0, sigma^2 clip^2 I).
inline ParamVector dp_privatize(const ParamVector& delta, double clip, double sigma, Rng& rng) {
  require(clip > 0.0, "dp_privatize: clip must be positive");
  require(sigma >= 0.0, "dp_privatize: sigma must be >= 0");
  const double n = norm(delta);
  const double scale = n > clip ? clip / n : 1.0;
  ParamVector out(delta.dim());
  for (std::size_t i = 0; i < delta.dim(); ++i) {
    out[i] = delta[i] * scale;
    if (sigma > 0.0) out[i] += sigma * clip * rng.normal();
  }
  return out;
}

/// Roughness Index of the client's local loss at w_t; the probe's direction
/// seed comes from the client context.
template <class Objective>
RoughnessReport client_roughness(const Objective& objective, const ParamVector& w_t, const Dataset& ds,
                                 const ClientShard& shard, const RiSettings& ri, const ClientContext& ctx) {
  std::vector<std::size_t> rows = shard.indices;
  if (ri.probe_rows && *ri.probe_rows < rows.size()) {
    Rng pick(derive_seed(ctx.seed, Stream::roughness_subset));
    pick.shuffle(rows.begin(), rows.end());
    rows.resize(*ri.probe_rows);
    std::sort(rows.begin(), rows.end());
  }
  const Batch probe = ds.gather(rows);
  RoughnessConfig cfg = ri.roughness;
  cfg.seed = derive_seed(ctx.seed, Stream::roughness);
  return roughness_index([&](const ParamVector& w) { return objective.loss(w, probe); }, w_t, cfg);
}

/// E epochs of minibatch updates from the global model, dispatched on cfg.kind.
/// `persistent` is updated in place for SCAFFOLD and FedDyn.
template <class Objective>
LocalUpdateResult local_update(const Objective& objective, const ServerState& server, const Dataset& ds,
                               const ClientShard& shard, const AlgoConfig& cfg, ClientPersistentState& persistent,
                               const ClientContext& ctx) {
  require(shard.n_k() >= 1, "local_update: empty shard");
  const ParamVector& w_t = server.global;
  const std::size_t d = w_t.dim();
  const double eta = cfg.eta;

  LocalUpdateResult res;
  res.client_id = shard.client_id;
  res.n_k = shard.n_k();

  if (cfg.kind == AlgoKind::ri_fedavg) {
    const RiSettings& ri = *cfg.ri;
    double I_k;
    if (ri.fixed_ri) {
      I_k = std::min(*ri.fixed_ri, ri.roughness.I_max);
    } else {
      const auto rep = client_roughness(objective, w_t, ds, shard, ri, ctx);
      I_k = rep.ri_clipped;
      res.loss_evals += rep.loss_evals;
    }
    res.ri = I_k;
  }

  // Gradient correction constant across local steps (SCAFFOLD: c - c_k; FedDyn: -grad_accum_k).
  std::optional<ParamVector> correction;
  if (cfg.kind == AlgoKind::scaffold) {
    require(server.scaffold_c.has_value(), "local_update: SCAFFOLD server control variate missing");
    if (!persistent.scaffold_c_k) persistent.scaffold_c_k = ParamVector(d);
    correction = *server.scaffold_c - *persistent.scaffold_c_k;
  } else if (cfg.kind == AlgoKind::feddyn) {
    if (!persistent.feddyn_grad_accum) persistent.feddyn_grad_accum = ParamVector(d);
    correction = -1.0 * *persistent.feddyn_grad_accum;
  }

  ParamVector w = w_t;
  const std::uint64_t batch_seed = derive_seed(ctx.seed, Stream::batches);
  for (std::size_t e = 0; e < cfg.E; ++e) {
    for (const auto& rows : batch_indices(shard, cfg.B, derive_seed(batch_seed, {e}))) {
      const Batch b = ds.gather(rows);
      auto [_, g] = objective.loss_and_gradient(w, b);
      res.loss_evals += 1;
      switch (cfg.kind) {
        case AlgoKind::fedavg:
        case AlgoKind::dp_fedavg:
          break;
        case AlgoKind::ri_fedavg:
          g = ri_regularized_gradient(g, w, w_t, cfg.ri->lambda, res.ri.value());
          break;
        case AlgoKind::fedprox:
          for (std::size_t i = 0; i < d; ++i) g[i] += cfg.prox->mu * (w[i] - w_t[i]);
          break;
        case AlgoKind::scaffold:
          for (std::size_t i = 0; i < d; ++i) g[i] += (*correction)[i];
          break;
        case AlgoKind::feddyn:
          for (std::size_t i = 0; i < d; ++i) g[i] += (*correction)[i] + cfg.dyn->alpha * (w[i] - w_t[i]);
          break;
      }
      for (std::size_t i = 0; i < d; ++i) w[i] -= eta * g[i];
      ++res.local_steps;
    }
    if (!w.all_finite()) throw DivergenceError(ctx.client_id, ctx.round);
  }

  switch (cfg.kind) {
    case AlgoKind::scaffold: {
      // Option II: c_k+ = c_k - c + (w_t - w) / (tau * eta)
      const double inv = 1.0 / (static_cast<double>(res.local_steps) * eta);
      ParamVector& ck = *persistent.scaffold_c_k;
      ParamVector delta(d);
      for (std::size_t i = 0; i < d; ++i) {
        const double updated = ck[i] - (*server.scaffold_c)[i] + (w_t[i] - w[i]) * inv;
        delta[i] = updated - ck[i];
        ck[i] = updated;
      }
      res.scaffold_delta = std::move(delta);
      break;
    }
    case AlgoKind::feddyn: {
      ParamVector& acc = *persistent.feddyn_grad_accum;
      for (std::size_t i = 0; i < d; ++i) acc[i] -= cfg.dyn->alpha * (w[i] - w_t[i]);
      break;
    }
    case AlgoKind::dp_fedavg: {
      Rng noise(derive_seed(ctx.seed, Stream::dp_noise));
      const ParamVector noisy = dp_privatize(w - w_t, cfg.dp->clip, cfg.dp->sigma, noise);
      w = w_t + noisy;
      if (!w.all_finite()) throw DivergenceError(ctx.client_id, ctx.round);
      break;
    }
    default:
      break;
  }

  res.drift_sq = squared_distance(w, w_t);
  res.client_params = std::move(w);
  return res;
}

/// sum_k (n_k / n_t) w_k over the results, summed in ascending client-id order.
inline ParamVector aggregate(const std::vector<LocalUpdateResult>& results) {
  require(!results.empty(), "aggregate: no client results");
  std::vector<const LocalUpdateResult*> order;
  order.reserve(results.size());
  for (const auto& r : results) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(),
                   [](const LocalUpdateResult* a, const LocalUpdateResult* b) { return a->client_id < b->client_id; });
  const std::size_t d = order.front()->client_params.dim();
  std::size_t n_t = 0;
  for (const auto* r : order) {
    require(r->client_params.dim() == d, "aggregate: dimension mismatch between clients");
    require(r->n_k >= 1, "aggregate: client with n_k = 0");
    n_t += r->n_k;
  }
  ParamVector out(d);
  for (const auto* r : order) {
    const double weight = static_cast<double>(r->n_k) / static_cast<double>(n_t);
    for (std::size_t i = 0; i < d; ++i) out[i] += weight * r->client_params[i];
  }
  return out;
}

/// Aggregates one round's results into the next server state. K is the total
/// client count (SCAFFOLD and FedDyn scale their server updates by 1/K).
inline ServerState server_update(const ServerState& state, const std::vector<LocalUpdateResult>& results,
                                 const AlgoConfig& cfg, std::size_t K) {
  ServerState next = state;
  next.global = aggregate(results);
  const std::size_t d = next.global.dim();
  const double inv_K = 1.0 / static_cast<double>(K);
  if (cfg.kind == AlgoKind::scaffold) {
    ParamVector& c = *next.scaffold_c;
    for (const auto& r : results)
      for (std::size_t i = 0; i < d; ++i) c[i] += inv_K * (*r.scaffold_delta)[i];
  } else if (cfg.kind == AlgoKind::feddyn) {
    ParamVector& h = *next.feddyn_h;
    for (const auto& r : results)
      for (std::size_t i = 0; i < d; ++i) h[i] -= cfg.dyn->alpha * inv_K * (r.client_params[i] - state.global[i]);
    for (std::size_t i = 0; i < d; ++i) next.global[i] -= h[i] / cfg.dyn->alpha;
  }
  next.round = state.round + 1;
  return next;
}

}  // namespace fedrough
