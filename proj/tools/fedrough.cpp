// fedrough: run federated experiments, hyperparameter sweeps, roughness
// probes and partition statistics from a JSON configuration.
//
//   fedrough <run|sweep|ri-probe|partition> --config <path> --out <dir> [--seeds N]
//
// FEDROUGH_THREADS caps the number of clients trained concurrently.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedrough/fedrough.hpp"

namespace fs = std::filesystem;
using namespace fedrough;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::size_t> seeds;
};

std::string threshold_cell(const std::vector<RoundMetrics>& metrics, double threshold) {
  const auto r = rounds_to_threshold(metrics, threshold);
  return r ? std::to_string(*r) : "Never";
}

ParsedConfig load(const Options& opt) {
  ParsedConfig pc = parse_config(opt.config);
  if (opt.seeds) {
    if (*opt.seeds < 1) throw ConfigError("--seeds must be >= 1");
    pc.experiment.seeds = *opt.seeds;
  }
  fs::create_directories(opt.out);
  csv::write_file(fs::path(opt.out) / "resolved_config.json", to_json(pc).dump(2) + "\n");
  return pc;
}

void print_summary(const std::vector<ExperimentResult>& runs) {
  std::printf("%-20s %-16s %-14s %s\n", "seed", "final_accuracy", "final_loss", "rounds_to_50%");
  for (const auto& r : runs)
    std::printf("%-20llu %-16.4f %-14.4f %s\n", static_cast<unsigned long long>(r.seed), r.final_eval.accuracy,
                r.final_eval.loss, threshold_cell(r.metrics, 0.5).c_str());
}

int cmd_run(const Options& opt) {
  const ParsedConfig pc = load(opt);
  const fs::path out(opt.out);
  const auto runs = run_replicated(pc.experiment, default_thread_count());
  csv::write_file(out / "metrics.csv", csv::metrics_csv(runs.front().metrics));
  if (runs.size() > 1) {
    std::vector<std::vector<RoundMetrics>> all;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      csv::write_file(out / ("metrics_seed" + std::to_string(i) + ".csv"), csv::metrics_csv(runs[i].metrics));
      all.push_back(runs[i].metrics);
    }
    csv::write_file(out / "mean.csv", csv::metrics_csv(mean_table(all)));
  }
  print_summary(runs);
  return 0;
}

int cmd_sweep(const Options& opt) {
  const ParsedConfig pc = load(opt);
  if (!pc.sweep) throw ConfigError("config: sweep command needs a 'sweep' section");
  const fs::path out(opt.out);
  const auto points = expand_sweep(pc.experiment, *pc.sweep);
  std::string summary = "point,M,m,lambda,eta,final_accuracy,rounds_to_50\n";
  std::printf("%-6s %-5s %-5s %-10s %-10s %-16s %s\n", "point", "M", "m", "lambda", "eta", "final_accuracy",
              "rounds_to_50%");
  for (std::size_t p = 0; p < points.size(); ++p) {
    const auto& pt = points[p];
    const auto runs = run_replicated(pt.cfg, default_thread_count());
    std::vector<std::vector<RoundMetrics>> all;
    double acc = 0.0;
    for (const auto& r : runs) {
      all.push_back(r.metrics);
      acc += r.final_eval.accuracy;
    }
    acc /= static_cast<double>(runs.size());
    const auto table = runs.size() > 1 ? mean_table(all) : all.front();
    char name[32];
    std::snprintf(name, sizeof name, "sweep_point_%03zu.csv", p);
    csv::write_file(out / name, csv::metrics_csv(table));
    const std::string reach = threshold_cell(table, 0.5);
    summary += std::to_string(p) + ',' + std::to_string(pt.M) + ',' + std::to_string(pt.m) + ',' +
               csv::format_double(pt.lambda) + ',' + csv::format_double(pt.eta) + ',' + csv::format_double(acc) +
               ',' + reach + '\n';
    std::printf("%-6zu %-5zu %-5zu %-10g %-10g %-16.4f %s\n", p, pt.M, pt.m, pt.lambda, pt.eta, acc, reach.c_str());
  }
  csv::write_file(out / "sweep_summary.csv", summary);
  return 0;
}

// Single seed (the configured master seed); per-client I_k each round.
int cmd_ri_probe(const Options& opt) {
  ParsedConfig pc = load(opt);
  ExperimentConfig cfg = pc.experiment;
  cfg.probe_ri = true;
  const fs::path out(opt.out);
  const auto res = run_experiment(cfg, default_thread_count());
  csv::write_file(out / "ri_trace.csv", csv::ri_trace_csv(res.metrics));
  csv::write_file(out / "metrics.csv", csv::metrics_csv(res.metrics));
  std::printf("%-6s %s\n", "round", "mean_ri");
  for (const auto& m : res.metrics)
    std::printf("%-6zu %s\n", m.round, m.mean_ri ? csv::format_double(*m.mean_ri).c_str() : "");
  return 0;
}

int cmd_partition(const Options& opt) {
  const ParsedConfig pc = load(opt);
  const auto& cfg = pc.experiment;
  const TrainTest data = load_data(cfg.dataset, cfg.master_seed);
  const auto shards = dirichlet_partition(data.train, cfg.partition_spec());
  csv::write_file(fs::path(opt.out) / "partition_stats.csv", csv::partition_stats_csv(data.train, shards));

  // Mean total-variation distance between client and global label histograms.
  const auto global = data.train.class_counts();
  double mean_tv = 0.0;
  for (const auto& s : shards) {
    const auto h = class_histogram(data.train, s);
    double tv = 0.0;
    for (std::size_t c = 0; c < h.size(); ++c)
      tv += std::abs(static_cast<double>(h[c]) / static_cast<double>(s.n_k()) -
                     static_cast<double>(global[c]) / static_cast<double>(data.train.size()));
    mean_tv += 0.5 * tv;
  }
  mean_tv /= static_cast<double>(shards.size());
  std::printf("clients=%zu alpha=%g rows=%zu mean_label_tv_distance=%.4f\n", shards.size(), cfg.alpha,
              data.train.size(), mean_tv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with roughness-regularized local training"};
  app.require_subcommand(1);
  Options opt;
  auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "JSON configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory")->required();
    sub->add_option("--seeds", opt.seeds, "number of replicate seeds (overrides config)");
    return sub;
  };
  auto* run = add("run", "train and write metrics.csv (+ per-seed files and mean.csv)");
  auto* sweep = add("sweep", "grid over M, m, lambda, eta; writes sweep_summary.csv");
  auto* probe = add("ri-probe", "record per-client roughness each round; writes ri_trace.csv");
  auto* part = add("partition", "Dirichlet partition statistics; writes partition_stats.csv");
  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(opt);
    if (sweep->parsed()) return cmd_sweep(opt);
    if (probe->parsed()) return cmd_ri_probe(opt);
    if (part->parsed()) return cmd_partition(opt);
  } catch (const std::exception& e) {
    std::cerr << "fedrough: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
