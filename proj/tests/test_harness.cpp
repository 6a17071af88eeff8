#include "doctest.h"

#include "plr/harness.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace plr;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"({
  "name": "unit",
  "seed": 5,
  "output_dir": "out-a",
  "dgp": {"n": 80},
  "truth": {"first": {"type": "sine", "amplitude": 1.0, "frequency": 1.0},
            "m02": {"type": "linear", "amplitude": 1.0}, "beta0": [0.5]},
  "chain": {"n_iter": 700, "burn_in": 100},
  "diagnostics": {"min_draws": 500, "psrf_chains": 0, "ks_gate": 1.0, "median_gap_gate": 10.0}
})";

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("plr-bvm-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("syntax errors report line and column") {
  const std::string msg = error_of([] { parse_config_text("{\n  \"a\": 1,\n  \"b\": }\n", "cfg.json"); });
  CHECK(msg.find("cfg.json") != std::string::npos);
  CHECK(msg.find("line 3") != std::string::npos);
  CHECK(msg.find("column") != std::string::npos);
}

TEST_CASE("unknown and mistyped keys name their path") {
  json j = parse_config_text(kMinimal, "t");
  j["chain"]["n_iterations"] = 5;
  CHECK(error_of([&] { build_config(j); }).find("chain.n_iterations") != std::string::npos);
  j = parse_config_text(kMinimal, "t");
  j["dgp"]["n"] = "many";
  CHECK(error_of([&] { build_config(j); }).find("dgp.n") != std::string::npos);
  j = parse_config_text(kMinimal, "t");
  j["sampler"] = "beta-zeta";
  CHECK_FALSE(error_of([&] { build_config(j); }).empty());
}

TEST_CASE("overrides") {
  json j = parse_config_text(kMinimal, "t");
  apply_override(j, "dgp.n=120");
  apply_override(j, "sampler=beta-eta");
  apply_override(j, "truth.beta0.0=1.5");
  apply_override(j, "priors.m1.alpha=2");
  const auto cfg = build_config(j);
  CHECK(cfg.study.dgp.n == 120);
  CHECK(cfg.study.sampler == SamplerId::beta_eta);
  CHECK(cfg.study.truth.beta0(0) == 1.5);
  CHECK(std::get<MaternSpec>(cfg.study.setup.priors.m1).alpha == 2.0);
  CHECK_THROWS_AS(apply_override(j, "novalue"), ConfigError);
  CHECK_THROWS_AS(apply_override(j, "truth.beta0.4=1"), ConfigError);
}

TEST_CASE("config hash ignores output_dir and tracks content") {
  json a = parse_config_text(kMinimal, "t");
  json b = a;
  b["output_dir"] = "elsewhere";
  const auto ca = build_config(a), cb = build_config(b);
  CHECK(ca.hash == cb.hash);
  CHECK(ca.hash.size() == 16);
  apply_override(b, "seed=6");
  CHECK(build_config(b).hash != ca.hash);
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("thread resolution") {
  CHECK(resolve_threads(3u) == 3u);
  CHECK(resolve_threads(std::nullopt) >= 1u);
}

TEST_CASE("verify-bvm writes a deterministic report") {
  const fs::path dir = scratch_dir("verify");
  json j = parse_config_text(kMinimal, "t");
  j["output_dir"] = dir.string();
  const auto cfg = build_config(j);
  CommandOptions opt;
  opt.quiet = true;
  std::ostringstream log;
  CHECK(cmd_verify_bvm(cfg, opt, log) == 0);
  const fs::path report = dir / ("verify-bvm-" + cfg.hash + ".json");
  REQUIRE(fs::exists(report));
  std::ifstream in(report);
  json first = json::parse(in);
  CHECK(first["schema_version"] == kSchemaVersion);
  CHECK(first["config_hash"] == cfg.hash);

  opt.threads = 2;
  CHECK(cmd_verify_bvm(cfg, opt, log) == 0);
  std::ifstream in2(report);
  json second = json::parse(in2);
  first.erase("created_at");
  second.erase("created_at");
  CHECK(first == second);

  // failing gate exits with 2
  json strict = j;
  strict["diagnostics"]["ks_gate"] = 1e-6;
  CHECK(cmd_verify_bvm(build_config(strict), opt, log) == 2);
  fs::remove_all(dir);
}

TEST_CASE("simulate then validate") {
  const fs::path dir = scratch_dir("simulate");
  json j = parse_config_text(kMinimal, "t");
  j["output_dir"] = dir.string();
  const auto cfg = build_config(j);
  CommandOptions opt;
  opt.quiet = true;
  opt.output_path = (dir / "data.csv").string();
  std::ostringstream log;
  CHECK(cmd_simulate(cfg, opt, log) == 0);
  REQUIRE(fs::exists(opt.output_path));
  CommandOptions v;
  v.quiet = true;
  v.data_path = opt.output_path;
  v.output_path.clear();
  CHECK(cmd_validate(&cfg, v, log) == 0);
  CHECK(cmd_validate(nullptr, v, log) == 0);
  fs::remove_all(dir);
}
