#pragma once

#include "mplane/env.hpp"

#include <cstddef>
#include <random>
#include <vector>

namespace mplane {

enum class SampleMode { Prioritized, Uniform };

struct ReplaySample {
  std::vector<const Transition*> transitions;
  std::vector<double> is_weights;
  std::vector<std::size_t> indices;
};

/// Proportional prioritized replay: P_i = (e_i^p + delta) / sum_k (e_k^p + delta).
/// Storage is a ring buffer; FIFO eviction at capacity.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 15000, double exponent = 0.6, double offset = 0.05);

  void push(Transition t);
  ReplaySample sample(std::size_t n, SampleMode mode, std::mt19937_64& rng) const;
  void update_priorities(const std::vector<std::size_t>& indices, const std::vector<double>& errors);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  double max_priority() const { return max_priority_; }
  double priority(std::size_t i) const { return entries_.at(i).priority; }
  const Transition& at(std::size_t i) const { return entries_.at(i); }

  /// Analytic sampling probability of entry i in the given mode.
  double probability(std::size_t i, SampleMode mode = SampleMode::Prioritized) const;
  std::vector<double> probabilities(SampleMode mode = SampleMode::Prioritized) const;

  double is_beta() const { return is_beta_; }
  void set_is_beta(double beta);

 private:
  double mass(double priority) const;

  std::size_t capacity_;
  double exponent_;
  double offset_;
  double is_beta_ = 0.4;
  double max_priority_ = 1.0;
  std::size_t next_ = 0;  // slot overwritten by the next push once full
  std::vector<Transition> entries_;
  std::vector<double> masses_;
};

}  // namespace mplane
