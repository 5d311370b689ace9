#include "mplane/config.hpp"

#include "mplane/error.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace mplane {

namespace {

struct Entry {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw InvalidConfigError("bad value for " + key + ": '" + value + "'");
  return out;
}

template <typename T>
std::string format_number(T v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <typename T>
Entry number(T ExperimentConfig::*field) {
  return {[field](const ExperimentConfig& c) { return format_number(c.*field); },
          [field](ExperimentConfig& c, const std::string& v) { c.*field = parse_number<T>("value", v); }};
}

template <typename T>
Entry trainer_number(T TrainerConfig::*field) {
  return {[field](const ExperimentConfig& c) { return format_number(c.trainer.*field); },
          [field](ExperimentConfig& c, const std::string& v) { c.trainer.*field = parse_number<T>("value", v); }};
}

template <typename T>
Entry net_number(T nas::SupernetConfig::*field) {
  return {[field](const ExperimentConfig& c) { return format_number(c.trainer.net.*field); },
          [field](ExperimentConfig& c, const std::string& v) { c.trainer.net.*field = parse_number<T>("value", v); }};
}

Entry choice(std::string ExperimentConfig::*field, std::set<std::string> allowed) {
  return {[field](const ExperimentConfig& c) { return c.*field; },
          [field, allowed](ExperimentConfig& c, const std::string& v) {
            if (!allowed.count(v)) throw InvalidConfigError("unsupported value '" + v + "'");
            c.*field = v;
          }};
}

Entry path(std::filesystem::path ExperimentConfig::*field) {
  return {[field](const ExperimentConfig& c) { return (c.*field).string(); },
          [field](ExperimentConfig& c, const std::string& v) { c.*field = v; }};
}

const std::map<std::string, Entry>& registry() {
  using E = ExperimentConfig;
  using T = TrainerConfig;
  using N = nas::SupernetConfig;
  static const std::map<std::string, Entry> entries = {
      {"preset", {[](const E& c) { return c.preset; }, [](E& c, const std::string& v) { c.apply_preset(v); }}},
      {"data", path(&E::data)},
      {"out", path(&E::out)},
      {"search_dir", path(&E::search_dir)},
      {"train_dir", path(&E::train_dir)},
      {"train_count", number(&E::train_count)},
      {"val_count", number(&E::val_count)},
      {"test_count", number(&E::test_count)},
      {"rnn", choice(&E::rnn, {"none", "fixed", "searched"})},
      {"backbone", choice(&E::backbone, {"fixed", "searched"})},
      {"sampler", choice(&E::sampler, {"gdas", "darts"})},
      {"seed", number(&E::seed)},
      {"slice_size", number(&E::slice_size)},
      {"lr_weights", trainer_number(&T::lr_weights)},
      {"lr_arch", trainer_number(&T::lr_arch)},
      {"gamma", trainer_number(&T::gamma)},
      {"batch", trainer_number(&T::batch)},
      {"buffer_capacity", trainer_number(&T::buffer_capacity)},
      {"target_sync_every", trainer_number(&T::target_sync_every)},
      {"epsilon_start", trainer_number(&T::epsilon_start)},
      {"epsilon_end", trainer_number(&T::epsilon_end)},
      {"epsilon_fraction", trainer_number(&T::epsilon_fraction)},
      {"horizon_train", trainer_number(&T::horizon_train)},
      {"horizon_test", trainer_number(&T::horizon_test)},
      {"epochs", trainer_number(&T::epochs)},
      {"search_epochs", trainer_number(&T::search_epochs)},
      {"episodes_per_epoch", trainer_number(&T::episodes_per_epoch)},
      {"train_every", trainer_number(&T::train_every)},
      {"learn_start", trainer_number(&T::learn_start)},
      {"tau_start", trainer_number(&T::tau_start)},
      {"tau_end", trainer_number(&T::tau_end)},
      {"is_beta_start", trainer_number(&T::is_beta_start)},
      {"is_beta_end", trainer_number(&T::is_beta_end)},
      {"priority_exponent", trainer_number(&T::priority_exponent)},
      {"priority_offset", trainer_number(&T::priority_offset)},
      {"step_angle", {[](const E& c) { return format_number(c.trainer.step_sizes.angle); },
                      [](E& c, const std::string& v) { c.trainer.step_sizes.angle = parse_number<double>("step_angle", v); }}},
      {"step_distance",
       {[](const E& c) { return format_number(c.trainer.step_sizes.distance); },
        [](E& c, const std::string& v) { c.trainer.step_sizes.distance = parse_number<double>("step_distance", v); }}},
      {"init_angle", {[](const E& c) { return format_number(c.trainer.init_range.angle); },
                      [](E& c, const std::string& v) { c.trainer.init_range.angle = parse_number<double>("init_angle", v); }}},
      {"init_distance",
       {[](const E& c) { return format_number(c.trainer.init_range.distance); },
        [](E& c, const std::string& v) { c.trainer.init_range.distance = parse_number<double>("init_distance", v); }}},
      {"obs_size", net_number(&N::obs_size)},
      {"stem_pool", net_number(&N::stem_pool)},
      {"stem_channels", net_number(&N::stem_channels)},
      {"cell_channels", net_number(&N::cell_channels)},
      {"head_scale", net_number(&N::head_scale)},
      {"shared_layout", {[](const E& c) { return c.trainer.net.shared_layout; },
                         [](E& c, const std::string& v) { c.trainer.net.shared_layout = v; }}},
      {"unique_layout", {[](const E& c) { return c.trainer.net.unique_layout; },
                         [](E& c, const std::string& v) { c.trainer.net.unique_layout = v; }}},
  };
  return entries;
}

}  // namespace

void ExperimentConfig::apply_preset(const std::string& name) {
  if (name == "uterus") {
    trainer.horizon_train = 50;
    trainer.horizon_test = 30;
  } else if (name == "fetal_brain") {
    trainer.horizon_train = 80;
    trainer.horizon_test = 60;
  } else {
    throw InvalidConfigError("unknown preset '" + name + "' (expected uterus or fetal_brain)");
  }
  preset = name;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const auto& reg = registry();
  const auto it = reg.find(key);
  if (it == reg.end()) throw InvalidConfigError("unknown config key '" + key + "'");
  try {
    it->second.set(*this, value);
  } catch (const InvalidConfigError& e) {
    throw InvalidConfigError(key + ": " + e.what());
  }
}

ExperimentConfig ExperimentConfig::parse(std::istream& is) {
  std::vector<std::pair<std::string, std::string>> items;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw InvalidConfigError("duplicate config key '" + key + "'");
    items.emplace_back(std::move(key), std::move(value));
  }
  ExperimentConfig cfg;
  for (const auto& [k, v] : items)
    if (k == "preset") cfg.set(k, v);
  for (const auto& [k, v] : items)
    if (k != "preset") cfg.set(k, v);
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw InvalidConfigError("cannot read config " + file.string());
  return parse(is);
}

void ExperimentConfig::write(std::ostream& os) const {
  const auto& reg = registry();
  os << "preset = " << preset << "\n";
  for (const auto& [key, entry] : reg)
    if (key != "preset") os << key << " = " << entry.get(*this) << "\n";
}

std::vector<std::string> ExperimentConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& [key, entry] : registry()) out.push_back(key);
  return out;
}

Variant ExperimentConfig::variant() const {
  Variant v;
  v.searched_backbone = backbone == "searched";
  v.rnn = nas::parse_rnn_mode(rnn);
  v.sampler = sampler == "darts" ? nas::SamplerKind::Darts : nas::SamplerKind::Gdas;
  return v;
}

void ExperimentConfig::validate() const {
  trainer.validate();
  if (train_count < 1 || val_count < 1 || test_count < 0)
    throw InvalidConfigError("train_count and val_count must be positive, test_count non-negative");
  if (slice_size < 8) throw InvalidConfigError("slice_size must be at least 8");
  if (trainer.net.obs_size < 8) throw InvalidConfigError("obs_size must be at least 8");
}

}  // namespace mplane
