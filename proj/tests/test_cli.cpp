#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "mlsched/abort_model.hpp"

using namespace mlsched;
namespace fs = std::filesystem;

namespace {

struct Cli {
  int code = 0;
  std::string out;
  std::string err;
};

Cli cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mlsched");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Cli r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mlsched_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir) {
  const auto path = dir / "tiny.cfg";
  std::ofstream f(path);
  f << "workload.kind = tpcc\n"
       "workload.arrival_rate_tps = 20000\n"
       "experiment.policy = balanced_kmeans\n"
       "experiment.queues = 4\n"
       "experiment.warmup_s = 0.3\n"
       "experiment.measure_s = 0.2\n"
       "experiment.repeats = 1\n"
       "train.sample_size = 2000\n";
  return path;
}

std::size_t lines(const fs::path& p) {
  std::ifstream f(p);
  std::size_t n = 0;
  for (std::string s; std::getline(f, s);) ++n;
  return n;
}

}  // namespace

TEST_CASE("cli: run writes reports and exits 0") {
  const auto dir = scratch("run");
  const auto cfg = write_config(dir);
  const auto r = cli({"run", "--config", cfg.string(), "--policy", "balanced_kmeans", "--seed", "42",
                      "--output", dir.string(), "--trace"});
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "report.csv"));
  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "trace.csv.gz"));

  const auto a = cli({"audit", (dir / "trace.csv.gz").string()});
  CHECK(a.code == 0);
  CHECK(a.out.find("violations") != std::string::npos);
}

TEST_CASE("cli: configuration errors exit 1") {
  const auto dir = scratch("errors");
  const auto cfg = write_config(dir);
  auto r = cli({"run", "--config", cfg.string(), "--policy", "dfs", "--output", dir.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("unknown policy") != std::string::npos);
  CHECK(cli({"run", "--output", dir.string()}).code == 1);
  r = cli({"run", "--config", cfg.string(), "--set", "experiment.nope=3", "--output", dir.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("experiment.nope") != std::string::npos);
  CHECK(cli({"run", "--config", (dir / "missing.cfg").string()}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK_FALSE(fs::exists(dir / "report.csv"));
}

TEST_CASE("cli: sweep writes one row per rate") {
  const auto dir = scratch("sweep");
  const auto cfg = write_config(dir);
  const auto r = cli({"sweep", "--config", cfg.string(), "--policy", "random", "--rates",
                      "1000,2000,4000", "--output", dir.string()});
  CHECK(r.code == 0);
  CHECK(lines(dir / "sweep.csv") == 4);
}

TEST_CASE("cli: train then inspect the model") {
  const auto dir = scratch("train");
  const auto cfg = write_config(dir);
  auto r = cli({"train", "--config", cfg.string(), "--output", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "model.txt"));
  CHECK(fs::exists(dir / "log.csv"));
  r = cli({"inspect-model", (dir / "model.txt").string(), "--top", "5", "--features",
           (dir / "features.tsv").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("V3[") != std::string::npos);

  // Zero model: nothing to list.
  {
    std::ofstream f(dir / "zero.txt");
    save_model(f, AbortModel(16));
  }
  r = cli({"inspect-model", (dir / "zero.txt").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("V1[") == std::string::npos);

  // Truncated model: runtime error.
  std::string text;
  {
    std::ifstream f(dir / "model.txt");
    text.assign(std::istreambuf_iterator<char>(f), {});
  }
  {
    std::ofstream f(dir / "cut.txt");
    f << text.substr(0, text.size() / 2);
  }
  CHECK(cli({"inspect-model", (dir / "cut.txt").string()}).code == 2);
}

TEST_CASE("cli: distributions writes the matrix and decisions") {
  const auto dir = scratch("dist");
  const auto cfg = write_config(dir);
  const auto r = cli({"distributions", "--config", cfg.string(), "--output", dir.string()});
  CHECK(r.code == 0);
  CHECK(lines(dir / "distribution.csv") > 1);
  CHECK(lines(dir / "decisions.csv") > 100);
}

TEST_CASE("cli: audit of a broken trace exits 2") {
  const auto dir = scratch("audit");
  {
    std::ofstream f(dir / "bad.csv");
    f << "0,arrive,1,0,type=Payment\n0,start,1,0,attempt=1 seq=0\n";
  }
  CHECK(cli({"audit", (dir / "bad.csv").string()}).code == 2);
}
