#include "mplane/config.hpp"
#include "mplane/error.hpp"
#include "mplane/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kMissing = 3, kRuntime = 4 };

struct StageArgs {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

void add_stage_options(CLI::App* cmd, StageArgs& a) {
  cmd->add_option("-c,--config", a.config, "key = value experiment config");
  cmd->add_option("--set", a.sets, "override a config key (key=value), repeatable");
  cmd->add_option("--seed", a.seed, "run seed (overrides the config)");
  cmd->add_option("-o,--out", a.out, "output directory (overrides the config)");
  cmd->add_flag("-q,--quiet", a.quiet, "no per-epoch progress");
}

mplane::ExperimentConfig resolve(const StageArgs& a) {
  mplane::ExperimentConfig cfg;
  if (!a.config.empty()) cfg = mplane::ExperimentConfig::load(a.config);
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw mplane::InvalidConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.seed) cfg.seed = *a.seed;
  if (!a.out.empty()) cfg.out = a.out;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent plane localization with searched Q-networks"};
  app.require_subcommand(1);

  mplane::GenDataOptions gen;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic phantom dataset");
  gen_cmd->add_option("--seeds", gen.count, "number of cases")->required();
  gen_cmd->add_option("--out", gen_out, "dataset directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "phantom seed of the first case");
  gen_cmd->add_option("--shape", gen.phantom.shape, "volume edge length");
  gen_cmd->add_option("--angle-spread", gen.phantom.angle_spread, "gt dihedral angles lie in 90 +/- spread degrees");
  gen_cmd->add_option("--noise", gen.phantom.noise, "speckle standard deviation");
  gen_cmd->add_flag("--force", gen.force, "replace an existing dataset");

  StageArgs search_args, train_args, eval_args;
  auto* search_cmd = app.add_subcommand("search", "architecture search; writes the genotype");
  add_stage_options(search_cmd, search_args);
  auto* train_cmd = app.add_subcommand("train", "train the derived network");
  add_stage_options(train_cmd, train_args);
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained network on the test split");
  add_stage_options(eval_cmd, eval_args);

  std::vector<std::string> curve_specs;
  std::string plot_out;
  auto* plot_cmd = app.add_subcommand("plot", "render reward / SAD / loss curves as SVG");
  plot_cmd->add_option("curves", curve_specs, "curves CSV files, optionally LABEL=FILE")->required();
  plot_cmd->add_option("-o,--out", plot_out, "figure directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  std::ostream* log = &std::cerr;
  try {
    if (gen_cmd->parsed()) {
      gen.out = gen_out;
      mplane::gen_data(gen);
    } else if (search_cmd->parsed()) {
      const auto cfg = resolve(search_args);
      mplane::search_stage(cfg, search_args.quiet ? nullptr : log);
    } else if (train_cmd->parsed()) {
      const auto cfg = resolve(train_args);
      const auto v = mplane::train_stage(cfg, train_args.quiet ? nullptr : log);
      std::cout << "final validation: reward " << v.accumulated_reward << " SAD " << v.mean_sad << '\n';
    } else if (eval_cmd->parsed()) {
      const auto cfg = resolve(eval_args);
      const auto s = mplane::eval_stage(cfg, eval_args.quiet ? nullptr : log);
      std::cout << "test SAD " << s.test_policy.mean_sad << " vs random " << s.test_random.mean_sad << '\n';
    } else if (plot_cmd->parsed()) {
      std::vector<std::pair<std::string, std::filesystem::path>> curves;
      for (const auto& entry : curve_specs) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos) {
          const std::filesystem::path p(entry);
          curves.emplace_back(p.parent_path().filename().string(), p);
        } else {
          curves.emplace_back(entry.substr(0, eq), entry.substr(eq + 1));
        }
      }
      mplane::plot_stage(curves, plot_out);
    }
  } catch (const mplane::InvalidConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const mplane::MissingPrerequisiteError& e) {
    std::cerr << "missing prerequisite: " << e.what() << '\n';
    return kMissing;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
