// plr-bvm: simulation, fitting and verification studies for Bayesian
// inference in the partially linear model.

#include "plr/harness.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string data;
  std::string output;
  bool quiet = false;
};

void add_common(CLI::App* sub, CommonArgs& a, bool config_required) {
  auto* c = sub->add_option("--config", a.config, "experiment config (JSON)");
  if (config_required) c->required();
  sub->add_option("--set", a.overrides, "override a config key, e.g. --set chain.n_iter=500")->take_all();
  sub->add_option("--seed", a.seed, "master seed (overrides the config)");
  sub->add_option("--threads", a.threads, "worker threads (default: PLR_BVM_THREADS or hardware)");
  sub->add_flag("--quiet", a.quiet, "suppress the summary on stdout");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bernstein-von Mises checks for the partially linear model"};
  app.require_subcommand(1);
  CommonArgs args;

  auto* simulate = app.add_subcommand("simulate", "simulate a dataset and write it as CSV");
  add_common(simulate, args, true);
  simulate->add_option("--output", args.output, "output CSV (default: <output_dir>/data-<hash>.csv)");

  auto* fit = app.add_subcommand("fit", "run one chain and write the draws");
  add_common(fit, args, true);
  fit->add_option("--data", args.data, "dataset CSV (default: simulate from the config)");

  auto* verify = app.add_subcommand("verify-bvm", "fit, then compare the posterior of beta with its Gaussian limit");
  add_common(verify, args, true);

  auto* coverage = app.add_subcommand("coverage", "frequentist coverage of equitailed credible intervals");
  add_common(coverage, args, true);

  auto* contraction = app.add_subcommand("contraction", "nuisance posterior risk across sample sizes");
  add_common(contraction, args, true);

  auto* compare = app.add_subcommand("compare-parametrizations", "(beta, m) vs (beta, eta) coverage table");
  add_common(compare, args, true);

  auto* validate = app.add_subcommand("validate", "check data-side assumptions on a CSV dataset");
  add_common(validate, args, false);
  validate->add_option("--data", args.data, "dataset CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    plr::CommandOptions opt;
    opt.threads = plr::resolve_threads(args.threads);
    opt.data_path = args.data;
    opt.output_path = args.output;
    opt.quiet = args.quiet;

    std::optional<plr::ExperimentConfig> cfg;
    if (!args.config.empty()) cfg = plr::load_config(args.config, args.overrides, args.seed);
    else if (!args.overrides.empty() || args.seed)
      throw plr::ConfigError("--set and --seed need --config");

    if (*simulate) return plr::cmd_simulate(*cfg, opt, std::cout);
    if (*fit) return plr::cmd_fit(*cfg, opt, std::cout);
    if (*verify) return plr::cmd_verify_bvm(*cfg, opt, std::cout);
    if (*coverage) return plr::cmd_coverage(*cfg, opt, std::cout);
    if (*contraction) return plr::cmd_contraction(*cfg, opt, std::cout);
    if (*compare) return plr::cmd_compare(*cfg, opt, std::cout);
    if (*validate) return plr::cmd_validate(cfg ? &*cfg : nullptr, opt, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "plr-bvm: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
