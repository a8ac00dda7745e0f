#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "sdr");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = sdr::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "sdr_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

// Small world so every command runs in well under a second.
fs::path small_config(const fs::path& dir, const std::string& extra = "") {
  const auto path = dir / "small.cfg";
  std::ofstream(path) << "world.num_users = 15\nworld.num_items = 15\nworld.propensity_offset = 3.5\n"
                         "max_cycles = 5\npatience = 0\npretrain_epochs = 5\n"
                         "propensity_pretrain_steps = 30\n"
                      << extra;
  return path;
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("train writes history, checkpoint, summary and manifest") {
  const auto dir = scratch("train");
  const auto cfg = small_config(dir);
  const auto r = run({"train", "--method", "stable-dr", "--config", cfg.string(), "--out", (dir / "o").string()});
  REQUIRE(r.code == 0);
  const auto summary = read_json(dir / "o" / "summary.json");
  const auto history = slurp(dir / "o" / "history.csv");
  CHECK(count_lines(history) == summary["cycles_run"].get<std::size_t>() + 1);
  CHECK(count_lines(history) == 6);
  CHECK(fs::exists(dir / "o" / "checkpoint.json"));
  const auto manifest = read_json(dir / "o" / "manifest.json");
  CHECK(manifest["config_hash"] == summary["config_hash"]);
  CHECK(manifest["seed"] == 1);
  CHECK(manifest["config_hash"].get<std::string>().size() == 16);
  CHECK(manifest["command"] == "train");
}

TEST_CASE("train is reproducible and --seed overrides the config") {
  const auto dir = scratch("repro");
  const auto cfg = small_config(dir, "seed = 4\n");
  REQUIRE(run({"train", "--method", "dr-jl", "--config", cfg.string(), "--out", (dir / "a").string()}).code == 0);
  REQUIRE(run({"train", "--method", "dr-jl", "--config", cfg.string(), "--out", (dir / "b").string()}).code == 0);
  CHECK(slurp(dir / "a" / "history.csv") == slurp(dir / "b" / "history.csv"));
  CHECK(slurp(dir / "a" / "checkpoint.json") == slurp(dir / "b" / "checkpoint.json"));
  CHECK(read_json(dir / "a" / "manifest.json")["seed"] == 4);

  REQUIRE(run({"train", "--method", "dr-jl", "--config", cfg.string(), "--seed", "9", "--out",
               (dir / "c").string()})
              .code == 0);
  const auto m = read_json(dir / "c" / "manifest.json");
  CHECK(m["seed"] == 9);
  CHECK(m["config_hash"] != read_json(dir / "a" / "manifest.json")["config_hash"]);
}

TEST_CASE("usage errors") {
  const auto dir = scratch("usage");
  const auto cfg = small_config(dir);
  auto r = run({"train", "--method", "sdr-magic", "--config", cfg.string(), "--out", dir.string()});
  CHECK(r.code == sdr::cli::kUsageError);
  CHECK(r.err.find("unknown method") != std::string::npos);
  CHECK(run({"train", "--config", cfg.string(), "--out", dir.string()}).code == sdr::cli::kUsageError);
  CHECK(run({"frobnicate"}).code == sdr::cli::kUsageError);
  CHECK(run({}).code == sdr::cli::kUsageError);

  const auto typo = small_config(dir, "lerning_rate = 3\n");
  r = run({"train", "--method", "naive", "--config", typo.string(), "--out", dir.string()});
  CHECK(r.code == sdr::cli::kUsageError);
  CHECK(r.err.find("lerning_rate") != std::string::npos);

  r = run({"train", "--method", "naive", "--dataset", "nowhere:x", "--out", dir.string()});
  CHECK(r.code == sdr::cli::kUsageError);
  CHECK(run({"evaluate", "--out", dir.string()}).code == sdr::cli::kUsageError);
}

TEST_CASE("evaluate reproduces the metrics train reported") {
  const auto dir = scratch("evaluate");
  const auto cfg = small_config(dir);
  REQUIRE(run({"train", "--method", "stable-mrdr", "--config", cfg.string(), "--out", (dir / "t").string()}).code == 0);
  const auto r = run({"evaluate", "--checkpoint", (dir / "t" / "checkpoint.json").string(), "--config",
                      cfg.string(), "--out", (dir / "e").string()});
  REQUIRE(r.code == 0);
  const auto a = read_json(dir / "t" / "summary.json")["test"];
  const auto b = read_json(dir / "e" / "metrics.json")["test"];
  CHECK(a == b);
  CHECK(fs::exists(dir / "e" / "manifest.json"));

  // A checkpoint for a different grid is refused.
  const auto other = small_config(dir, "world.num_items = 16\n");
  CHECK(run({"evaluate", "--checkpoint", (dir / "t" / "checkpoint.json").string(), "--config", other.string(),
             "--out", (dir / "x").string()})
            .code == sdr::cli::kRuntimeError);
}

TEST_CASE("sweep over a single zero matches train at eta 0") {
  const auto dir = scratch("sweep0");
  const auto cfg = small_config(dir, "eta = 0\n");
  REQUIRE(run({"sweep", "--grid", "0", "--config", cfg.string(), "--out", (dir / "s").string()}).code == 0);
  REQUIRE(run({"train", "--method", "stable-dr", "--config", cfg.string(), "--out", (dir / "t").string()}).code == 0);
  const auto csv = slurp(dir / "s" / "sweep.csv");
  REQUIRE(count_lines(csv) == 2);
  CHECK(csv.rfind("eta,mse,auc,ndcg@5,ndcg@10,final_residual,best_cycle,cycles\n", 0) == 0);
  std::istringstream rows(csv.substr(csv.find('\n') + 1));
  std::string cell;
  std::vector<double> v;
  while (std::getline(rows, cell, ',')) v.push_back(std::stod(cell));
  const auto summary = read_json(dir / "t" / "summary.json");
  CHECK(v[1] == summary["test"]["mse"].get<double>());
  CHECK(v[2] == summary["test"]["auc"].get<double>());
}

TEST_CASE("sweep: a large eta ends with a smaller residual than eta 0") {
  const auto dir = scratch("sweep2");
  const auto good = small_config(dir, "batch_all = 100000\nbatch_observed = 100000\n");
  REQUIRE(run({"sweep", "--grid", "0,1000", "--config", good.string(), "--out", (dir / "s").string()}).code == 0);
  std::istringstream in(slurp(dir / "s" / "sweep.csv"));
  std::string line;
  std::getline(in, line);
  std::vector<double> residual;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) f.push_back(c);
    residual.push_back(std::stod(f[5]));
  }
  REQUIRE(residual.size() == 2);
  CHECK(std::fabs(residual[1]) < std::fabs(residual[0]));
}

TEST_CASE("theory-verify default sweep") {
  const auto dir = scratch("theory");
  const auto r = run({"theory-verify", "--out", dir.string()});
  CHECK(r.code == 0);
  const auto checks = read_json(dir / "checks.json");
  for (const auto& c : checks) CHECK(c["passed"] == true);
  std::size_t reports = 0;
  for (const auto& e : fs::directory_iterator(dir / "reports")) reports += e.path().extension() == ".json";
  CHECK(reports == 9);

  std::istringstream in(slurp(dir / "theory_sweep.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "floor,estimator,bias_formula,bias_mc,var_formula,var_mc,tail_bound,exceedance");
  std::map<std::string, std::vector<double>> bias;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) f.push_back(c);
    bias[f[1]].push_back(std::stod(f[2]));
    CHECK(std::stod(f[7]) <= 0.1);
  }
  CHECK(bias["ips"].back() > 100 * bias["ips"].front());
  CHECK(bias["dr"].back() > 100 * bias["dr"].front());
  CHECK(bias["sdr"].back() < 1.0);
  CHECK(read_json(dir / "manifest.json")["command"] == "theory-verify");
}

TEST_CASE("theory-verify contract errors") {
  const auto dir = scratch("theory_err");
  std::ofstream(dir / "big.cfg") << "theory.size = 25\ntheory.mode = exact\n";
  auto r = run({"theory-verify", "--config", (dir / "big.cfg").string(), "--out", dir.string()});
  CHECK(r.code == sdr::cli::kUsageError);
  CHECK(r.err.find("20") != std::string::npos);
  r = run({"theory-verify", "--dataset", "coat:/tmp", "--out", dir.string()});
  CHECK(r.code == sdr::cli::kUsageError);
}

TEST_CASE("triples dataset source") {
  const auto dir = scratch("triples");
  std::ofstream(dir / "train.txt") << "1 1 5\n1 2 1\n2 1 4\n2 3 2\n3 2 5\n3 3 1\n";
  std::ofstream(dir / "test.txt") << "1 3 4\n2 2 1\n3 1 5\n";
  std::ofstream(dir / "t.cfg") << "max_cycles = 2\npretrain_epochs = 2\npropensity_pretrain_steps = 5\n"
                                  "validation_fraction = 0\n";
  const auto r = run({"train", "--method", "ips", "--config", (dir / "t.cfg").string(), "--dataset",
                      "triples:" + (dir / "train.txt").string() + "," + (dir / "test.txt").string(), "--out",
                      (dir / "o").string()});
  CHECK(r.code == 0);
  CHECK(read_json(dir / "o" / "summary.json")["test"]["num_test_points"] == 3);
}

}  // TEST_SUITE
