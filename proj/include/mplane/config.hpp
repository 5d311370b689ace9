#pragma once

#include "mplane/qlearn.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mplane {

/// Flat key = value experiment description. Unknown keys are rejected; keys
/// not given keep their defaults. A `preset` key is applied before all
/// other keys regardless of its position.
struct ExperimentConfig {
  TrainerConfig trainer;
  std::string preset = "uterus";
  std::filesystem::path data;         ///< dataset directory (gen-data output)
  std::filesystem::path out = "out";  ///< output directory
  std::filesystem::path search_dir;   ///< search output consumed by train
  std::filesystem::path train_dir;    ///< train output consumed by eval
  int train_count = 40;
  int val_count = 10;
  int test_count = 20;
  std::string rnn = "searched";       ///< none | fixed | searched
  std::string backbone = "searched";  ///< fixed | searched
  std::string sampler = "gdas";       ///< gdas | darts
  std::uint64_t seed = 0;
  int slice_size = 64;                ///< SSIM slice resolution in eval

  static ExperimentConfig parse(std::istream& is);
  static ExperimentConfig load(const std::filesystem::path& file);

  void set(const std::string& key, const std::string& value);
  void apply_preset(const std::string& name);
  /// key = value lines; parse(write(c)) reproduces c.
  void write(std::ostream& os) const;
  std::vector<std::string> keys() const;
  Variant variant() const;
  void validate() const;
};

}  // namespace mplane
