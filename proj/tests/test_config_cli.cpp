#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedrough/config.hpp"
#include "fedrough/csv.hpp"

using namespace fedrough;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string line; std::getline(ss, line);) out.push_back(line);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string c; std::getline(ss, c, ',');) out.push_back(c);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("fedrough_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " '" + std::string(FEDROUGH_CLI) + "' " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

const char* kToyConfig = R"({
  "seed": 3,
  "seeds": 1,
  "dataset": {"kind": "synthetic", "num_classes": 3, "dim": 4, "n_train": 120, "n_test": 60},
  "partition": {"alpha": 0.5},
  "model": {"kind": "mlp", "hidden": [6]},
  "federation": {"clients": 2, "fraction": 1.0, "rounds": 4},
  "algorithm": {"kind": "ri_fedavg", "eta": 0.05, "epochs": 1, "batch_size": 16,
                "roughness": {"M": 3}}
})";

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST(Config, MinimalConfigResolvesDefaults) {
  const auto pc = parse_config_text(R"({"algorithm": {"kind": "ri_fedavg"}})");
  const auto& a = pc.experiment.algo;
  ASSERT_TRUE(a.ri.has_value());
  EXPECT_EQ(a.ri->lambda, 0.1);
  EXPECT_EQ(a.ri->roughness.M, 10u);
  EXPECT_EQ(a.ri->roughness.l, 0.01);
  EXPECT_EQ(a.ri->roughness.m, 19u);
  EXPECT_EQ(a.ri->roughness.I_max, 10.0);
  const auto j = to_json(pc);
  EXPECT_EQ(j["algorithm"]["lambda"], 0.1);
  EXPECT_EQ(j["algorithm"]["roughness"]["m"], 19);
  EXPECT_EQ(j["federation"]["clients"], 100);
}

TEST(Config, ResolvedConfigRoundTrips) {
  const auto pc = parse_config_text(kToyConfig);
  const auto again = parse_config_json(to_json(pc));
  EXPECT_EQ(to_json(again), to_json(pc));
}

TEST(Config, RejectsZeroFraction) {
  EXPECT_THROW(parse_config_text(R"({"federation": {"fraction": 0}})"), ConfigError);
}

TEST(Config, UnknownKeyIsNamed) {
  try {
    parse_config_text(R"({"algorithm": {"kind": "ri_fedavg", "lamda": 0.2}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("lamda"), std::string::npos);
  }
}

TEST(Config, RejectsSettingsForOtherAlgorithm) {
  EXPECT_THROW(parse_config_text(R"({"algorithm": {"kind": "fedavg", "mu": 0.1}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"algorithm": {"kind": "nope"}})"), ConfigError);
  EXPECT_THROW(parse_config_text("{not json"), ConfigError);
}

TEST(Config, SweepExpansionOrder) {
  const auto pc = parse_config_text(R"({"sweep": {"M": [5, 10], "lambda": [0.1, 0.5, 1.0]}})");
  const auto pts = expand_sweep(pc.experiment, *pc.sweep);
  ASSERT_EQ(pts.size(), 6u);
  EXPECT_EQ(pts[0].M, 5u);
  EXPECT_EQ(pts[0].lambda, 0.1);
  EXPECT_EQ(pts[1].lambda, 0.5);
  EXPECT_EQ(pts[3].M, 10u);
  EXPECT_EQ(pts[5].cfg.algo.ri->lambda, 1.0);
  EXPECT_EQ(pts[5].cfg.algo.ri->roughness.M, 10u);
  const auto fa = parse_config_text(R"({"algorithm": {"kind": "fedavg"}, "sweep": {"M": [5]}})");
  EXPECT_THROW(expand_sweep(fa.experiment, *fa.sweep), ConfigError);
}

TEST(Csv, FormatAndHeader) {
  EXPECT_EQ(csv::format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(csv::format_double(1.0), "1");
  EXPECT_EQ(std::string(csv::kMetricsHeader),
            "round,test_accuracy,test_loss,mean_drift_sq,mean_ri,grad_norm_sq,wall_seconds");
  RoundMetrics m;
  m.round = 2;
  m.mean_drift_sq = 0.5;
  const auto text = csv::metrics_csv({m});
  EXPECT_EQ(text, std::string(csv::kMetricsHeader) + "\n2,,,0.5,,,\n");
}

TEST(Cli, RunWritesOneRowPerRound) {
  const auto dir = fresh_dir("run");
  const auto cfg = write_config(dir, kToyConfig);
  ASSERT_EQ(run_cli("run --config " + cfg.string() + " --out " + (dir / "out").string()), 0);
  const auto lines = lines_of(read_file(dir / "out" / "metrics.csv"));
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], csv::kMetricsHeader);
  for (std::size_t i = 1; i < lines.size(); ++i) EXPECT_EQ(split(lines[i]).size(), 7u);
  EXPECT_TRUE(fs::exists(dir / "out" / "resolved_config.json"));
}

TEST(Cli, MultiSeedRunWritesMeanTable) {
  const auto dir = fresh_dir("seeds");
  const auto cfg = write_config(dir, kToyConfig);
  ASSERT_EQ(run_cli("run --config " + cfg.string() + " --out " + dir.string() + " --seeds 2"), 0);
  EXPECT_TRUE(fs::exists(dir / "metrics_seed0.csv"));
  EXPECT_TRUE(fs::exists(dir / "metrics_seed1.csv"));
  EXPECT_EQ(lines_of(read_file(dir / "mean.csv")).size(), 5u);
}

TEST(Cli, SweepWritesOneFilePerPoint) {
  const auto dir = fresh_dir("sweep");
  std::string text = kToyConfig;
  text.insert(text.rfind('}'), R"(, "sweep": {"M": [5, 10, 20], "lambda": [0.1, 0.5]})");
  const auto cfg = write_config(dir, text);
  ASSERT_EQ(run_cli("sweep --config " + cfg.string() + " --out " + dir.string()), 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename().string().rfind("sweep_point_", 0) == 0) ++files;
  EXPECT_EQ(files, 6u);
  const auto summary = lines_of(read_file(dir / "sweep_summary.csv"));
  ASSERT_EQ(summary.size(), 7u);
  EXPECT_EQ(summary[0], "point,M,m,lambda,eta,final_accuracy,rounds_to_50");
}

TEST(Cli, PartitionColumnsSumToGlobalCounts) {
  const auto dir = fresh_dir("partition");
  const auto cfg = write_config(dir, kToyConfig);
  ASSERT_EQ(run_cli("partition --config " + cfg.string() + " --out " + dir.string()), 0);
  const auto lines = lines_of(read_file(dir / "partition_stats.csv"));
  ASSERT_EQ(lines.size(), 3u);  // header + 2 clients
  const auto pc = parse_config(cfg);
  const auto data = load_data(pc.experiment.dataset, pc.experiment.master_seed);
  const auto global = data.train.class_counts();
  std::vector<std::size_t> sums(global.size(), 0);
  std::size_t total = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split(lines[i]);
    ASSERT_EQ(cells.size(), 2 + global.size());
    total += std::stoul(cells[1]);
    for (std::size_t c = 0; c < global.size(); ++c) sums[c] += std::stoul(cells[2 + c]);
  }
  EXPECT_EQ(sums, global);
  EXPECT_EQ(total, data.train.size());
}

TEST(Cli, RiProbeWritesTrace) {
  const auto dir = fresh_dir("probe");
  const auto cfg = write_config(dir, R"({
    "seed": 3, "seeds": 1,
    "dataset": {"kind": "synthetic", "num_classes": 3, "dim": 4, "n_train": 120, "n_test": 60},
    "model": {"kind": "mlp", "hidden": [6]},
    "federation": {"clients": 2, "fraction": 1.0, "rounds": 4},
    "algorithm": {"kind": "fedavg", "eta": 0.05, "epochs": 1, "batch_size": 16},
    "ri_probe": {"M": 3}
  })");
  ASSERT_EQ(run_cli("ri-probe --config " + cfg.string() + " --out " + dir.string()), 0);
  const auto lines = lines_of(read_file(dir / "ri_trace.csv"));
  EXPECT_EQ(lines[0], "round,client_id,n_k,ri,round_mean_ri,round_std_ri");
  EXPECT_EQ(lines.size(), 1u + 4u * 2u);
}

TEST(Cli, OutputIsByteIdenticalAcrossThreadCounts) {
  const auto dir = fresh_dir("threads");
  const auto cfg = write_config(dir, kToyConfig);
  ASSERT_EQ(run_cli("run --config " + cfg.string() + " --out " + (dir / "a").string(), "FEDROUGH_THREADS=1"), 0);
  ASSERT_EQ(run_cli("run --config " + cfg.string() + " --out " + (dir / "b").string(), "FEDROUGH_THREADS=8"), 0);
  EXPECT_EQ(read_file(dir / "a" / "metrics.csv"), read_file(dir / "b" / "metrics.csv"));
}

TEST(Cli, BadConfigExitsNonZero) {
  const auto dir = fresh_dir("bad");
  const auto cfg = write_config(dir, R"({"federation": {"fraction": 0}})");
  EXPECT_NE(run_cli("run --config " + cfg.string() + " --out " + dir.string()), 0);
  EXPECT_NE(run_cli("run --config " + (dir / "missing.json").string() + " --out " + dir.string()), 0);
}
