#pragma once

// Experiment configuration, persistence and the CLI subcommands.
//
// Configs are JSON objects. Unknown keys are rejected with their dotted path
// so that typos do not silently fall back to defaults. The config hash is
// FNV-1a 64 over the canonical dump (sorted keys, no whitespace) of the
// effective config with `output_dir` removed.

#include "plr/diagnostics.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace plr {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gate thresholds and study sizes.
struct DiagnosticsConfig {
  double level = 0.9;
  long replications = 200;
  std::vector<Index> n_grid{100, 400, 1600};
  int contraction_reps = 1;
  Index min_draws = 500;
  double ks_gate = 0.08;
  double median_gap_gate = 0.2;
  // Defaults to the 3-sigma binomial band around `level` at `replications`.
  std::optional<std::pair<double, double>> coverage_band;
  double slope_lower = -0.55;
  double slope_upper = -0.18;
  int psrf_chains = 0;  // extra overdispersed chains in verify-bvm (0 = skip)
  bool empirical_process = true;

  std::pair<double, double> resolved_coverage_band() const;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 1;
  std::string output_dir = "plr-bvm-out";
  StudySpec study;
  DiagnosticsConfig diagnostics;
  std::vector<std::string> regimes;  // config paths for compare-parametrizations
  std::string base_dir = ".";        // directory regime paths are resolved against
  json effective;                    // config after overrides, as hashed
  std::string hash;                  // hash_hex(config_hash(effective))
};

/// Parses JSON text. ConfigError messages carry "line L, column C" for syntax
/// errors and the dotted key path for schema errors.
json parse_config_text(const std::string& text, const std::string& source);
/// Applies "a.b.c=value"; value is read as JSON when it parses, else as a string.
void apply_override(json& config, const std::string& assignment);
ExperimentConfig build_config(const json& config, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {},
                             std::optional<std::uint64_t> seed_override = std::nullopt);

std::uint64_t fnv1a64(const std::string& bytes);
std::uint64_t config_hash(const json& effective);
std::string hash_hex(std::uint64_t h);

/// --threads, else PLR_BVM_THREADS, else hardware concurrency (at least 1).
unsigned resolve_threads(std::optional<unsigned> requested);

// ---------------------------------------------------------------------------
// Persistence.

void write_draws_csv(std::ostream& os, const PosteriorDraws& draws);
json draws_metadata(const PosteriorDraws& draws, const std::string& config_hash);
json to_json(const BvmReport& r);
json to_json(const CoverageReport& r, bool with_outcomes = true);
json to_json(const ContractionReport& r);
json to_json(const EmpiricalProcessReport& r);
json to_json(const ComparisonReport& r);
json to_json(const AssumptionReport& r);
/// Envelope with schema_version, command, config_hash, created_at and config.
json report_envelope(const std::string& command, const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Commands. Each returns the process exit code: 0 success, 2 gate failure.
// Errors propagate as exceptions (exit code 1 in the CLI).

struct CommandOptions {
  unsigned threads = 1;
  std::string data_path;    // input CSV (fit, validate)
  std::string output_path;  // explicit output file (simulate)
  bool quiet = false;
};

int cmd_simulate(const ExperimentConfig& cfg, const CommandOptions& opt, std::ostream& log);
int cmd_fit(const ExperimentConfig& cfg, const CommandOptions& opt, std::ostream& log);
int cmd_verify_bvm(const ExperimentConfig& cfg, const CommandOptions& opt, std::ostream& log);
int cmd_coverage(const ExperimentConfig& cfg, const CommandOptions& opt, std::ostream& log);
int cmd_contraction(const ExperimentConfig& cfg, const CommandOptions& opt, std::ostream& log);
int cmd_compare(const ExperimentConfig& cfg, const CommandOptions& opt, std::ostream& log);
/// cfg may be null: the report hash is then taken over the CSV bytes.
int cmd_validate(const ExperimentConfig* cfg, const CommandOptions& opt, std::ostream& log);

/// Dataset and reference for the single-fit commands (replication stream 0).
Dataset simulate_for_fit(const ExperimentConfig& cfg);

}  // namespace plr
