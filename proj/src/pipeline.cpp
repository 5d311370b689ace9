#include "mplane/pipeline.hpp"

#include "mplane/error.hpp"
#include "mplane/hash.hpp"
#include "mplane/plot.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace mplane {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& file) {
  std::ofstream os(file);
  if (!os) throw IoError("cannot write " + file.string());
  os << std::setprecision(17);
  return os;
}

void require_file(const fs::path& file, const std::string& hint) {
  if (!fs::exists(file)) throw MissingPrerequisiteError("missing " + file.string() + ": " + hint);
}

std::string config_text(const ExperimentConfig& cfg) {
  std::ostringstream ss;
  cfg.write(ss);
  return ss.str();
}

/// Echoes the resolved config and the hashes identifying the stage inputs.
void write_identity(const ExperimentConfig& cfg, const std::vector<std::pair<std::string, std::string>>& inputs) {
  fs::create_directories(cfg.out);
  const std::string text = config_text(cfg);
  open_out(cfg.out / "config.txt") << text;
  auto os = open_out(cfg.out / "inputs.txt");
  os << "config " << git_blob_hash(text) << '\n';
  for (const auto& [k, v] : inputs) os << k << ' ' << v << '\n';
}

Progress epoch_logger(std::ostream* log, const char* stage) {
  if (log == nullptr) return {};
  return [log, stage](const EpochRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s epoch %d: reward %.2f SAD %.3f loss %.4f eps %.3f tau %.3f", stage, r.epoch,
                  r.accumulated_reward, r.mean_sad, r.loss, r.epsilon, r.tau);
    *log << buf << std::endl;
  };
}

void write_curves_file(const std::vector<EpochRecord>& curves, const fs::path& file) {
  auto os = open_out(file);
  write_curves(curves, os);
}

std::vector<EpochRecord> read_curves_file(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw MissingPrerequisiteError("missing curves " + file.string());
  return read_curves(is);
}

}  // namespace

void gen_data(const GenDataOptions& opt) {
  if (opt.count < 1) throw InvalidConfigError("--seeds must be positive");
  opt.phantom.validate();
  if (fs::exists(opt.out) && !fs::is_directory(opt.out))
    throw InvalidConfigError(opt.out.string() + " exists and is not a directory");
  if (fs::exists(opt.out) && !fs::is_empty(opt.out)) {
    if (!opt.force) throw InvalidConfigError(opt.out.string() + " is not empty; pass --force to replace the dataset");
    for (const auto& p : list_cases(opt.out)) fs::remove_all(p);
    fs::remove(opt.out / "dataset.txt");
  }
  fs::create_directories(opt.out);
  for (int i = 0; i < opt.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "case_%04d", i);
    PhantomCase c = generate_phantom(opt.seed + static_cast<std::uint64_t>(i), opt.phantom);
    c.name = name;
    write_case(c, opt.out / name);
  }
  auto os = open_out(opt.out / "dataset.txt");
  os << "cases " << opt.count << "\nfirst_seed " << opt.seed << '\n' << opt.phantom.describe();
}

DatasetSplit load_split(const ExperimentConfig& cfg, bool with_train, bool with_test) {
  if (cfg.data.empty()) throw MissingPrerequisiteError("no dataset configured: set data = <gen-data output>");
  const auto paths = list_cases(cfg.data);
  const std::size_t n_train = cfg.train_count, n_val = cfg.val_count;
  const std::size_t need = n_train + n_val + (with_test ? std::max(cfg.test_count, 1) : 0);
  if (paths.size() < need)
    throw MissingPrerequisiteError(cfg.data.string() + " holds " + std::to_string(paths.size()) + " cases, " +
                                   std::to_string(need) + " required");
  DatasetSplit s;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (i < n_train) {
      if (with_train) s.train.push_back(read_case(paths[i]));
    } else if (i < n_train + n_val) {
      s.val.push_back(read_case(paths[i]));
    } else if (with_test && (cfg.test_count == 0 || i < need)) {
      s.test.push_back(read_case(paths[i]));
    }
  }
  return s;
}

SearchResult search_stage(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  const Variant variant = cfg.variant();
  if (!variant.needs_search())
    throw InvalidConfigError(variant.name() + " has a fixed backbone and no searched calibrator; nothing to search");
  const DatasetSplit data = load_split(cfg, true, false);
  write_identity(cfg, {{"dataset", hash_tree(cfg.data)}, {"seed", std::to_string(cfg.seed)}});

  SearchResult res = run_search(data.train, data.val, cfg.trainer, variant, cfg.seed, epoch_logger(log, "search"));
  nas::save_genotype(res.genotype, cfg.out / "genotype.txt");
  nas::save_alpha(res.alpha, cfg.out / "alpha");
  write_curves_file(res.curves, cfg.out / "search_curves.csv");
  auto os = open_out(cfg.out / "selection.txt");
  os << "variant " << variant.name() << "\nselected_epoch " << res.epoch << '\n';
  if (log) *log << "search: selected epoch " << res.epoch << std::endl;
  return res;
}

Validation train_stage(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  const Variant variant = cfg.variant();
  std::vector<std::pair<std::string, std::string>> inputs;
  std::optional<nas::Genotype> searched;
  if (variant.needs_search()) {
    if (cfg.search_dir.empty())
      throw MissingPrerequisiteError(variant.name() + " trains a searched genotype: set search_dir to a search output");
    const fs::path file = cfg.search_dir / "genotype.txt";
    require_file(file, "run search first");
    searched = nas::load_genotype(file);
    inputs.emplace_back("genotype", hash_file(file));
  }
  const nas::Genotype genotype = effective_genotype(variant, searched ? &*searched : nullptr);
  const DatasetSplit data = load_split(cfg, true, false);
  inputs.emplace_back("dataset", hash_tree(cfg.data));
  inputs.emplace_back("seed", std::to_string(cfg.seed));
  write_identity(cfg, inputs);

  TrainResult res =
      run_train(data.train, data.val, cfg.trainer, variant, genotype, cfg.seed, epoch_logger(log, "train"));
  save_params(res.network->params(), cfg.out / "weights");
  nas::save_genotype(genotype, cfg.out / "genotype.txt");
  write_curves_file(res.curves, cfg.out / "curves.csv");
  write_validation(res.final_validation, cfg.out / "validation.txt");
  return res.final_validation;
}

EvalSummary eval_stage(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (cfg.train_dir.empty()) throw MissingPrerequisiteError("eval needs train_dir set to a train output");
  for (const char* f : {"config.txt", "genotype.txt", "weights.bin", "weights.manifest"})
    require_file(cfg.train_dir / f, "run train first");
  const ExperimentConfig trained = ExperimentConfig::load(cfg.train_dir / "config.txt");
  const Variant variant = trained.variant();
  const nas::Genotype genotype = nas::load_genotype(cfg.train_dir / "genotype.txt");

  const DatasetSplit data = load_split(cfg, false, true);
  write_identity(cfg, {{"dataset", hash_tree(cfg.data)},
                       {"weights", hash_file(cfg.train_dir / "weights.bin")},
                       {"genotype", hash_file(cfg.train_dir / "genotype.txt")},
                       {"seed", std::to_string(cfg.seed)}});

  std::mt19937_64 rng(0);
  QNetwork<float> net(trained.trainer.net, genotype, variant.rnn, rng);
  load_params(net.params(), cfg.train_dir / "weights");

  const TrainerConfig& tc = trained.trainer;
  const Environment env(tc.net.obs_size, tc.horizon_test, tc.step_sizes);
  EvalSummary out;
  out.validation = summarize(
      greedy_rollouts(net, nullptr, data.val, env, tc.init_range, tc.horizon_test, validation_seed(trained.seed)),
      data.val);

  const std::uint64_t test_seed = evaluation_seed(cfg.seed);
  const auto runs = greedy_rollouts(net, nullptr, data.test, env, tc.init_range, tc.horizon_test, test_seed);
  const auto base = random_rollouts(data.test, env, tc.init_range, tc.horizon_test, test_seed);
  out.test_policy = summarize(runs, data.test);
  out.test_random = summarize(base, data.test);
  out.policy = aggregate(case_records(runs, data.test, cfg.slice_size), variant.name());
  out.random = aggregate(case_records(base, data.test, cfg.slice_size), "Random");

  {
    auto os = open_out(cfg.out / "report.csv");
    write_report_csv({out.policy, out.random}, os);
  }
  {
    auto os = open_out(cfg.out / "report.txt");
    write_report_table({out.policy, out.random}, os);
  }
  {
    auto os = open_out(cfg.out / "cases.csv");
    write_case_records(out.policy, os);
  }
  {
    auto os = open_out(cfg.out / "cases_random.csv");
    write_case_records(out.random, os);
  }
  write_validation(out.validation, cfg.out / "validation.txt");
  auto os = open_out(cfg.out / "summary.txt");
  os << "variant " << variant.name() << "\ntest_cases " << data.test.size() << "\npolicy_reward "
     << out.test_policy.accumulated_reward << "\npolicy_sad " << out.test_policy.mean_sad << "\nrandom_reward "
     << out.test_random.accumulated_reward << "\nrandom_sad " << out.test_random.mean_sad << "\nsad_reduction "
     << out.test_random.mean_sad / out.test_policy.mean_sad << '\n';
  if (log)
    *log << "eval " << variant.name() << ": SAD " << out.test_policy.mean_sad << " (random "
         << out.test_random.mean_sad << ")" << std::endl;
  return out;
}

void plot_stage(const std::vector<std::pair<std::string, fs::path>>& curves, const fs::path& out) {
  if (curves.empty()) throw InvalidConfigError("plot needs at least one curves CSV");
  std::vector<CurveSeries> series;
  for (const auto& [label, file] : curves) series.push_back({label, read_curves_file(file)});
  fs::create_directories(out);
  const std::pair<CurveField, const char*> figures[] = {
      {CurveField::AccumulatedReward, "reward.svg"}, {CurveField::MeanSad, "sad.svg"}, {CurveField::Loss, "loss.svg"}};
  for (const auto& [field, name] : figures) {
    auto os = open_out(out / name);
    write_curve_svg(series, field, os);
  }
}

std::vector<std::string> stage_artifacts(const std::string& stage) {
  if (stage == "search")
    return {"config.txt", "inputs.txt", "genotype.txt", "alpha.bin", "alpha.manifest", "search_curves.csv",
            "selection.txt"};
  if (stage == "train")
    return {"config.txt", "inputs.txt", "weights.bin", "weights.manifest", "genotype.txt", "curves.csv",
            "validation.txt"};
  if (stage == "eval")
    return {"config.txt", "inputs.txt", "report.csv",    "report.txt",
            "cases.csv",  "cases_random.csv", "summary.txt", "validation.txt"};
  if (stage == "plot") return {"reward.svg", "sad.svg", "loss.svg"};
  throw InvalidConfigError("unknown stage " + stage);
}

void write_validation(const Validation& v, const fs::path& file) {
  auto os = open_out(file);
  os << "accumulated_reward " << v.accumulated_reward << "\nmean_sad " << v.mean_sad << '\n';
}

Validation read_validation(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw MissingPrerequisiteError("missing " + file.string());
  Validation v;
  std::string key;
  double value;
  while (is >> key >> value) {
    if (key == "accumulated_reward") v.accumulated_reward = value;
    else if (key == "mean_sad") v.mean_sad = value;
  }
  return v;
}

}  // namespace mplane
