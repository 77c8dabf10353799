#include <sstream>

#include "doctest.h"
#include "eanas/cli.hpp"
#include "eanas/util.hpp"
#include "helpers.hpp"

using namespace eanas;
using eanas::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

const std::vector<std::string> kSmallModel{"--hidden", "16", "--pretrain-epochs", "5", "--finetune-epochs", "10"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_text_file(p)); }

// Synthetic dataset shared by the tests below.
struct Workspace {
  TempDir dir;
  fs::path data;

  explicit Workspace(std::size_t n_archs = 60) : data(dir / "data") {
    const auto r = run({"--seed", "4", "--out-dir", data.string(), "synth", "--n-archs", std::to_string(n_archs)});
    REQUIRE(r.code == kExitOk);
  }
};

}  // namespace

TEST_CASE("synth writes 500 x 3 rows and reruns byte-identically") {
  TempDir dir;
  const auto a = dir / "a";
  REQUIRE(run({"--seed", "9", "--out-dir", a.string(), "synth", "--n-archs", "500"}).code == kExitOk);
  const auto csv = read_text_file(a / "energy.csv");
  CHECK(line_count(csv) == 1501);
  const auto first = sha256_file(a / "manifest.json");
  const auto energy = sha256_file(a / "energy.csv");
  REQUIRE(run({"--seed", "9", "--out-dir", a.string(), "synth", "--n-archs", "500"}).code == kExitOk);
  CHECK(sha256_file(a / "manifest.json") == first);
  CHECK(sha256_file(a / "energy.csv") == energy);
  const auto manifest = read_json(a / "manifest.json");
  CHECK(manifest.at("command") == "synth");
  CHECK(manifest.at("tool_version") == kToolVersion);
  CHECK(manifest.at("outputs").size() == 5);
  CHECK(manifest.dump().find("time") == std::string::npos);
  for (const char* f : {"archs.json", "registry.json", "accuracy.csv", "ground_truth.json"}) CHECK(fs::exists(a / f));
}

TEST_CASE("output directory is created unless disabled") {
  TempDir dir;
  const auto nested = dir / "x" / "y";
  CHECK(run({"--out-dir", nested.string(), "synth", "--n-archs", "5"}).code == kExitOk);
  CHECK(fs::exists(nested / "energy.csv"));
  const auto missing = dir / "missing";
  const auto r = run({"--out-dir", missing.string(), "--no-create-out-dir", "synth", "--n-archs", "5"});
  CHECK(r.code == kExitData);
  CHECK(r.err.find("does not exist") != std::string::npos);
  CHECK(!fs::exists(missing));
}

TEST_CASE("usage errors exit with 1") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"synth", "--n-archs", "many"}).code == kExitUsage);
  CHECK(run({"synth", "--offsets", "0,1"}).code == kExitUsage);
  CHECK(run({"fit"}).code == kExitUsage);
  CHECK(run({"--workers", "0", "synth"}).code == kExitUsage);
  CHECK(run({"--version"}).code == kExitOk);
  CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("fit produces a bundle and metrics") {
  Workspace ws;
  const auto out = ws.dir / "fit";
  const auto r = run(concat({"--out-dir", out.string(), "fit", "--data", ws.data.string(), "--target", "npu",
                             "--n-target", "10", "--compare-joint"},
                            kSmallModel));
  REQUIRE(r.code == kExitOk);
  const auto bundle = read_json(out / "estimator.json");
  CHECK(bundle.at("kind") == "two_stage");
  const auto metrics = read_json(out / "metrics.json");
  CHECK(metrics.at("n_train") == 10);
  CHECK(metrics.at("n_test") == 50);
  CHECK(metrics.contains("joint"));
  CHECK(read_json(out / "manifest.json").at("inputs").size() == 3);

  const auto jout = ws.dir / "fit_joint";
  REQUIRE(run(concat({"--out-dir", jout.string(), "fit", "--data", ws.data.string(), "--target", "npu", "--model",
                      "joint"},
                     kSmallModel))
              .code == kExitOk);
  CHECK(read_json(jout / "estimator.json").at("kind") == "joint");
}

TEST_CASE("fit failures write nothing and exit nonzero") {
  Workspace ws;
  const auto out = ws.dir / "bad";
  CHECK(run({"--out-dir", out.string(), "fit", "--data", ws.data.string(), "--target", "tpu"}).code == kExitData);
  CHECK(!fs::exists(out / "estimator.json"));
  CHECK(run({"--out-dir", out.string(), "fit", "--data", (ws.dir / "nope").string(), "--target", "npu"}).code ==
        kExitData);
  CHECK(run({"--out-dir", out.string(), "fit", "--data", ws.data.string(), "--target", "npu", "--n-target", "60"})
            .code != kExitOk);
  CHECK(run({"--out-dir", out.string(), "fit", "--data", ws.data.string(), "--target", "npu", "--model", "svm"})
            .code == kExitUsage);
  CHECK(!fs::exists(out / "estimator.json"));
}

TEST_CASE("search end to end") {
  Workspace ws;
  const auto fit = ws.dir / "fit";
  const auto proxy = ws.dir / "proxy";
  REQUIRE(run(concat({"--out-dir", fit.string(), "fit", "--data", ws.data.string(), "--target", "npu"}, kSmallModel))
              .code == kExitOk);
  REQUIRE(run(concat({"--out-dir", proxy.string(), "fit", "--data", ws.data.string(), "--model", "proxy"}, kSmallModel))
              .code == kExitOk);
  const std::vector<std::string> search{"search", "--proxy", (proxy / "proxy.json").string(), "--estimator",
                                        (fit / "estimator.json").string(), "--budget", "inf"};
  const auto a = ws.dir / "search_a";
  const auto b = ws.dir / "search_b";
  REQUIRE(run(concat({"--out-dir", a.string()}, search)).code == kExitOk);
  REQUIRE(run(concat({"--out-dir", b.string(), "--workers", "2"}, search)).code == kExitOk);
  CHECK(read_text_file(a / "architecture.json") == read_text_file(b / "architecture.json"));
  CHECK(read_text_file(a / "trace.jsonl") == read_text_file(b / "trace.jsonl"));

  const auto manifest = read_json(a / "manifest.json");
  CHECK(manifest.at("config").get<std::string>().find("search.iterations=4") != std::string::npos);
  CHECK(manifest.at("summary").at("iterations_run").get<int>() <= 4);
  CHECK(manifest.at("summary").at("feasible") == true);
  CHECK(manifest.at("summary").at("local_optimality_violations") == 0);
  std::istringstream trace(read_text_file(a / "trace.jsonl"));
  for (std::string line; std::getline(trace, line);) CHECK(nlohmann::json::parse(line).at("feasible") == true);

  // Budgets must be positive; a proxy with the wrong input width is a data error.
  CHECK(run(concat({"--out-dir", a.string()}, concat(search, {"--budget", "-2"}))).code == kExitUsage);
  write_text_file(ws.dir / "bad_proxy.json",
                  nlohmann::json({{"format_version", 1}, {"kind", "map_proxy"},
                                  {"network", network_to_json(Network({3, 1}))}})
                      .dump());
  CHECK(run({"--out-dir", a.string(), "search", "--proxy", (ws.dir / "bad_proxy.json").string(), "--estimator",
             (fit / "estimator.json").string()})
            .code == kExitData);
}

TEST_CASE("scale writes three variants with increasing costs") {
  TempDir dir;
  write_text_file(dir / "arch.json", architecture_to_json(default_initial_architecture()).dump());
  const auto out = dir / "scaled";
  REQUIRE(run({"--out-dir", out.string(), "scale", "--arch", (dir / "arch.json").string(), "--all"}).code == kExitOk);
  for (const char* f : {"scaled_nano.json", "scaled_small.json", "scaled_medium.json"}) CHECK(fs::exists(out / f));
  const auto costs = read_json(out / "manifest.json").at("summary").at("costs");
  CHECK(costs.at("nano").get<double>() < costs.at("small").get<double>());
  CHECK(costs.at("small").get<double>() < costs.at("medium").get<double>());
  const auto nano = read_json(out / "scaled_nano.json");
  CHECK(nano.at("derived_channels") == nlohmann::json(ReferenceTable{}.channels));
  CHECK(nano.at("derived_repeats") == nlohmann::json(ReferenceTable{}.repeats));
  CHECK(run({"--out-dir", out.string(), "scale", "--arch", (dir / "arch.json").string()}).code == kExitUsage);
  CHECK(run({"--out-dir", out.string(), "scale", "--arch", (dir / "arch.json").string(), "--label", "huge"}).code ==
        kExitUsage);
}

TEST_CASE("bench defaults give a 20-cell report") {
  Workspace ws(40);
  const auto out = ws.dir / "bench";
  REQUIRE(run(concat({"--out-dir", out.string(), "bench", "--data", ws.data.string(), "--target", "gpu"}, kSmallModel))
              .code == kExitOk);
  const auto csv = read_text_file(out / "fewshot_report.csv");
  CHECK(line_count(csv) == 21);
  CHECK(csv.find(",30\n") != std::string::npos);
  const auto first = sha256_file(out / "fewshot_report.csv");
  REQUIRE(run(concat({"--out-dir", out.string(), "bench", "--data", ws.data.string(), "--target", "gpu"}, kSmallModel))
              .code == kExitOk);
  CHECK(sha256_file(out / "fewshot_report.csv") == first);

  const auto five = ws.dir / "bench5";
  REQUIRE(run(concat({"--out-dir", five.string(), "bench", "--data", ws.data.string(), "--target", "gpu",
                      "--repetitions", "5", "--n-max", "4"},
                     kSmallModel))
              .code == kExitOk);
  const auto csv5 = read_text_file(five / "fewshot_report.csv");
  std::istringstream in(csv5);
  std::string line;
  std::getline(in, line);
  std::size_t rows = 0;
  for (; std::getline(in, line); ++rows) CHECK(line.substr(line.rfind(',') + 1) == "5");
  CHECK(rows == 4);
}

TEST_CASE("report subcommands") {
  TempDir dir;
  write_text_file(dir / "points.csv", "label,accuracy,energy\na,0.9,2\nb,0.8,3\nc,0.7,1\n");
  const auto out = dir / "r";
  REQUIRE(run({"--out-dir", out.string(), "report", "pareto", "--input", (dir / "points.csv").string()}).code ==
          kExitOk);
  CHECK(read_text_file(out / "pareto.csv") ==
        "label,accuracy,energy,dominated\nc,0.7,1,false\na,0.9,2,false\nb,0.8,3,true\n");
  REQUIRE(run({"--out-dir", out.string(), "report", "space", "--n-samples", "200"}).code == kExitOk);
  const auto space = read_json(out / "space_report.json");
  CHECK(space.at("n_samples") == 200);
  CHECK(space.at("energy").at("mean").get<double>() < space.at("baseline_energy").get<double>());
  CHECK(run({"--out-dir", out.string(), "report"}).code == kExitUsage);
}

TEST_CASE("config file supplies options and flags win") {
  TempDir dir;
  write_text_file(dir / "run.toml", "seed = 3\n[synth]\nn-archs = 7\nnoise-sd = 0.0\n");
  const auto a = dir / "a";
  REQUIRE(run({"--config", (dir / "run.toml").string(), "--out-dir", a.string(), "synth"}).code == kExitOk);
  CHECK(line_count(read_text_file(a / "energy.csv")) == 1 + 7 * 3);
  CHECK(read_json(a / "manifest.json").at("seeds").at("root") == 3);
  const auto b = dir / "b";
  REQUIRE(run({"--config", (dir / "run.toml").string(), "--out-dir", b.string(), "synth", "--n-archs", "4"}).code ==
          kExitOk);
  CHECK(line_count(read_text_file(b / "energy.csv")) == 1 + 4 * 3);
}
