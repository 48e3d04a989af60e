#pragma once

// Outer round loop: sample clients, run local updates (optionally on several
// threads), aggregate in ascending client-id order, record metrics.
//
// Seed scheme. Every stream is derived from ExperimentConfig::master_seed with
// derive_seed (splitmix64 chaining):
//   training data   (master, train_data)        test data (master, test_data)
//   partition       (master, partition)         model init (master, init)
//   client sampling (master, client_sampling, round)
//   client work     (master, client, round, client_id) -> batches / roughness / dp_noise
// No RNG is shared between clients, so thread count never changes results.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fedrough/algorithms.hpp"
#include "fedrough/data.hpp"
#include "fedrough/errors.hpp"
#include "fedrough/model.hpp"
#include "fedrough/param_vector.hpp"
#include "fedrough/rng.hpp"

namespace fedrough {

struct DatasetSpec {
  enum class Kind { synthetic, mnist };
  Kind kind = Kind::synthetic;
  // synthetic
  std::size_t num_classes = 10;
  std::size_t dim = 20;
  std::size_t n_train = 5000;
  std::size_t n_test = 1000;
  double noise = 1.0;
  // mnist
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  std::optional<std::size_t> train_subset;
  std::optional<std::size_t> test_subset;
};

struct ModelSpec {
  ModelKind kind = ModelKind::mlp;
  std::vector<std::size_t> hidden{64};

  LossModel build(std::size_t input_dim, std::size_t num_classes) const {
    return kind == ModelKind::mlp ? LossModel::mlp(input_dim, hidden, num_classes)
                                  : LossModel::logistic_regression(input_dim, num_classes);
  }
};

struct ExperimentConfig {
  DatasetSpec dataset;
  double alpha = 0.1;  // Dirichlet concentration
  ModelSpec model;
  AlgoConfig algo = AlgoConfig::make(AlgoKind::ri_fedavg);
  std::size_t K = 100;
  double C = 0.1;
  std::size_t T = 100;
  std::size_t eval_every = 1;
  std::uint64_t master_seed = 0;
  std::size_t seeds = 3;
  bool record_wall_time = false;
  // Compute per-client RI at w_t every round even when the algorithm does not use it.
  bool probe_ri = false;
  // RI settings for probing non-RI algorithms.
  RiSettings probe;

  void validate() const {
    require(T >= 1, "config: rounds T must be >= 1");
    require(C > 0.0 && C <= 1.0, "config: fraction C must lie in (0, 1]");
    require(K >= 1, "config: clients K must be >= 1");
    require(eval_every >= 1, "config: eval_every must be >= 1");
    require(seeds >= 1, "config: seeds must be >= 1");
    require(alpha > 0.0, "config: Dirichlet alpha must be positive");
    if (dataset.kind == DatasetSpec::Kind::synthetic) {
      require(dataset.num_classes >= 2, "config: synthetic num_classes must be >= 2");
      require(dataset.dim >= dataset.num_classes, "config: synthetic dim must be >= num_classes");
      require(dataset.n_train >= K, "config: n_train must be >= K");
      require(dataset.n_test >= 1, "config: n_test must be >= 1");
    }
    if (model.kind == ModelKind::mlp) require(!model.hidden.empty(), "config: mlp needs hidden layer widths");
    algo.validate();
    if (probe_ri) probe.roughness.validate();
  }

  PartitionSpec partition_spec() const { return PartitionSpec{K, alpha, derive_seed(master_seed, Stream::partition)}; }
};

struct ClientRecord {
  std::size_t client_id = 0;
  std::size_t n_k = 0;
  double drift_sq = 0.0;
  std::optional<double> ri;
};

struct RoundMetrics {
  std::size_t round = 0;
  // Evaluation fields are empty on rounds skipped by eval_every.
  std::optional<double> test_accuracy;
  std::optional<double> test_loss;
  double mean_drift_sq = 0.0;
  std::optional<double> mean_ri;
  std::optional<double> grad_norm_sq;
  std::optional<double> wall_seconds;
  std::vector<ClientRecord> clients;
};

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

/// Argmax accuracy (ties toward the smaller class) and mean cross-entropy.
inline EvalResult evaluate(const ParamVector& params, const LossModel& model, const Dataset& test) {
  require(params.dim() == model.param_dim(), "evaluate: parameter dimension mismatch");
  require(test.size() >= 1 && test.dim() == model.input_dim(), "evaluate: test set shape mismatch");
  std::size_t correct = 0;
  double total = 0.0;
  for (std::size_t r = 0; r < test.size(); ++r) {
    const auto z = model.logits(params, test.features.row(r));
    if (LossModel::predict_from_logits(z) == test.labels[r]) ++correct;
    total += LossModel::sample_loss(z, test.labels[r]);
  }
  const double n = static_cast<double>(test.size());
  return {static_cast<double>(correct) / n, total / n};
}

/// Index (RoundMetrics::round) of the first evaluated round with accuracy >= threshold.
inline std::optional<std::size_t> rounds_to_threshold(const std::vector<RoundMetrics>& metrics, double threshold) {
  require(threshold > 0.0 && threshold < 1.0, "rounds_to_threshold: threshold must lie in (0, 1)");
  for (const auto& m : metrics)
    if (m.test_accuracy && *m.test_accuracy >= threshold) return m.round;
  return std::nullopt;
}

struct TrainTest {
  Dataset train;
  Dataset test;
};

inline TrainTest load_data(const DatasetSpec& spec, std::uint64_t master_seed) {
  TrainTest tt;
  if (spec.kind == DatasetSpec::Kind::synthetic) {
    tt.train = make_synthetic(spec.num_classes, spec.dim, spec.n_train, derive_seed(master_seed, Stream::train_data),
                              spec.noise);
    tt.test = make_synthetic(spec.num_classes, spec.dim, spec.n_test, derive_seed(master_seed, Stream::test_data),
                             spec.noise);
    return tt;
  }
  tt.train = load_idx_dataset(spec.train_images, spec.train_labels);
  tt.test = load_idx_dataset(spec.test_images, spec.test_labels);
  if (spec.train_subset) tt.train = subset(tt.train, *spec.train_subset, derive_seed(master_seed, Stream::subset, {0}));
  if (spec.test_subset) tt.test = subset(tt.test, *spec.test_subset, derive_seed(master_seed, Stream::subset, {1}));
  return tt;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the
/// exception of the lowest failing index.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) guarded(i);
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::size_t default_thread_count() {
  if (const char* env = std::getenv("FEDROUGH_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

class Simulation {
 public:
  Simulation(ExperimentConfig cfg, TrainTest data, std::size_t threads = 1)
      : cfg_(std::move(cfg)),
        data_(std::move(data)),
        model_(cfg_.model.build(data_.train.dim(), data_.train.num_classes)),
        threads_(threads) {
    cfg_.validate();
    require(data_.test.dim() == data_.train.dim(), "simulation: train/test feature widths differ");
    shards_ = dirichlet_partition(data_.train, cfg_.partition_spec());
    Rng init(derive_seed(cfg_.master_seed, Stream::init));
    server_ = ServerState::init(model_.init_params(init), cfg_.algo.kind);
    persistent_.resize(cfg_.K);
  }

  explicit Simulation(const ExperimentConfig& cfg, std::size_t threads = 1)
      : Simulation(cfg, load_data(cfg.dataset, cfg.master_seed), threads) {}

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const LossModel& model() const noexcept { return model_; }
  const ServerState& server() const noexcept { return server_; }
  const std::vector<ClientShard>& shards() const noexcept { return shards_; }
  const TrainTest& data() const noexcept { return data_; }

  /// One communication round. Evaluation (when due) is of the pre-round model w_t.
  RoundMetrics run_round() {
    const auto start = std::chrono::steady_clock::now();
    RoundMetrics m;
    m.round = server_.round;
    if (server_.round % cfg_.eval_every == 0) {
      const auto ev = evaluate(server_.global, model_, data_.test);
      m.test_accuracy = ev.accuracy;
      m.test_loss = ev.loss;
      m.grad_norm_sq = squared_norm(model_.gradient(server_.global, data_.test.as_batch()));
    }

    const auto selected = sample_clients(cfg_.K, cfg_.C, server_.round, cfg_.master_seed);
    std::vector<LocalUpdateResult> results(selected.size());
    std::vector<std::optional<double>> probed(selected.size());
    parallel_for(selected.size(), threads_, [&](std::size_t i) {
      const std::size_t k = selected[i];
      const ClientContext ctx{k, server_.round, derive_seed(cfg_.master_seed, Stream::client, {server_.round, k})};
      results[i] = local_update(model_, server_, data_.train, shards_[k], cfg_.algo, persistent_[k], ctx);
      if (cfg_.probe_ri && !results[i].ri)
        probed[i] = client_roughness(model_, server_.global, data_.train, shards_[k], cfg_.probe, ctx).ri_clipped;
    });

    double drift = 0.0;
    double ri_sum = 0.0;
    std::size_t ri_count = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& r = results[i];
      const auto ri = r.ri ? r.ri : probed[i];
      m.clients.push_back({r.client_id, r.n_k, r.drift_sq, ri});
      drift += r.drift_sq;
      if (ri) {
        ri_sum += *ri;
        ++ri_count;
      }
    }
    m.mean_drift_sq = drift / static_cast<double>(results.size());
    if (ri_count > 0) m.mean_ri = ri_sum / static_cast<double>(ri_count);

    server_ = server_update(server_, results, cfg_.algo, cfg_.K);
    if (cfg_.record_wall_time)
      m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return m;
  }

 private:
  ExperimentConfig cfg_;
  TrainTest data_;
  LossModel model_;
  std::size_t threads_;
  std::vector<ClientShard> shards_;
  ServerState server_;
  std::vector<ClientPersistentState> persistent_;
};

struct ExperimentResult {
  std::uint64_t seed = 0;
  std::vector<RoundMetrics> metrics;
  ParamVector final_params;
  EvalResult final_eval;  // of w_T, after the last round
};

/// T rounds for cfg.master_seed.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t threads = 1) {
  Simulation sim(cfg, threads);
  ExperimentResult res;
  res.seed = cfg.master_seed;
  for (std::size_t t = 0; t < cfg.T; ++t) res.metrics.push_back(sim.run_round());
  res.final_params = sim.server().global;
  res.final_eval = evaluate(res.final_params, sim.model(), sim.data().test);
  return res;
}

/// Replicate seed i runs with master_seed + i.
inline std::uint64_t replicate_seed(std::uint64_t master, std::size_t i) { return master + i; }

inline std::vector<ExperimentResult> run_replicated(const ExperimentConfig& cfg, std::size_t threads = 1) {
  std::vector<ExperimentResult> out;
  for (std::size_t i = 0; i < cfg.seeds; ++i) {
    ExperimentConfig c = cfg;
    c.master_seed = replicate_seed(cfg.master_seed, i);
    out.push_back(run_experiment(c, threads));
  }
  return out;
}

namespace detail {
inline std::optional<double> mean_of(const std::vector<std::optional<double>>& xs) {
  double s = 0.0;
  for (const auto& x : xs) {
    if (!x) return std::nullopt;
    s += *x;
  }
  return s / static_cast<double>(xs.size());
}
}  // namespace detail

/// Row-wise arithmetic mean across runs. An optional column is present only
/// when every run has it on that row.
inline std::vector<RoundMetrics> mean_table(const std::vector<std::vector<RoundMetrics>>& runs) {
  require(!runs.empty(), "mean_table: no runs");
  const std::size_t rows = runs.front().size();
  for (const auto& r : runs) require(r.size() == rows, "mean_table: runs differ in length");
  std::vector<RoundMetrics> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    auto col = [&](auto getter) {
      std::vector<std::optional<double>> xs;
      for (const auto& r : runs) xs.push_back(getter(r[i]));
      return detail::mean_of(xs);
    };
    out[i].round = runs.front()[i].round;
    out[i].test_accuracy = col([](const RoundMetrics& m) { return m.test_accuracy; });
    out[i].test_loss = col([](const RoundMetrics& m) { return m.test_loss; });
    out[i].mean_drift_sq = *col([](const RoundMetrics& m) { return std::optional<double>(m.mean_drift_sq); });
    out[i].mean_ri = col([](const RoundMetrics& m) { return m.mean_ri; });
    out[i].grad_norm_sq = col([](const RoundMetrics& m) { return m.grad_norm_sq; });
    out[i].wall_seconds = col([](const RoundMetrics& m) { return m.wall_seconds; });
  }
  return out;
}

}  // namespace fedrough
