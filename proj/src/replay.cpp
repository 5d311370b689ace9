#include "mplane/replay.hpp"

#include "mplane/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mplane {

ReplayBuffer::ReplayBuffer(std::size_t capacity, double exponent, double offset)
    : capacity_(capacity), exponent_(exponent), offset_(offset) {
  if (capacity == 0) throw InvalidConfigError("replay capacity must be positive");
  if (!(offset > 0.0)) throw InvalidConfigError("replay offset must be positive");
  entries_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

double ReplayBuffer::mass(double priority) const { return std::pow(priority, exponent_) + offset_; }

void ReplayBuffer::set_is_beta(double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw InvalidConfigError("is_beta must be in [0, 1]");
  is_beta_ = beta;
}

void ReplayBuffer::push(Transition t) {
  t.priority = entries_.empty() ? 1.0 : max_priority_;
  if (entries_.empty()) max_priority_ = 1.0;
  if (entries_.size() < capacity_) {
    masses_.push_back(mass(t.priority));
    entries_.push_back(std::move(t));
    return;
  }
  // Ring order: entries_[next_] is the oldest.
  masses_[next_] = mass(t.priority);
  entries_[next_] = std::move(t);
  next_ = (next_ + 1) % capacity_;
}

double ReplayBuffer::probability(std::size_t i, SampleMode mode) const {
  if (i >= entries_.size()) throw InsufficientDataError("replay index out of range");
  if (mode == SampleMode::Uniform) return 1.0 / static_cast<double>(entries_.size());
  const double total = std::accumulate(masses_.begin(), masses_.end(), 0.0);
  return masses_[i] / total;
}

std::vector<double> ReplayBuffer::probabilities(SampleMode mode) const {
  std::vector<double> out(entries_.size());
  if (mode == SampleMode::Uniform) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(entries_.size()));
    return out;
  }
  const double total = std::accumulate(masses_.begin(), masses_.end(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = masses_[i] / total;
  return out;
}

ReplaySample ReplayBuffer::sample(std::size_t n, SampleMode mode, std::mt19937_64& rng) const {
  if (n == 0 || entries_.size() < n) throw InsufficientDataError("not enough transitions to sample");
  ReplaySample out;
  out.indices.reserve(n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (mode == SampleMode::Uniform) {
    std::uniform_int_distribution<std::size_t> pick(0, entries_.size() - 1);
    for (std::size_t i = 0; i < n; ++i) out.indices.push_back(pick(rng));
    out.is_weights.assign(n, 1.0);
  } else {
    std::vector<double> cumulative(masses_.size());
    std::partial_sum(masses_.begin(), masses_.end(), cumulative.begin());
    const double total = cumulative.back();
    const double count = static_cast<double>(entries_.size());
    for (std::size_t i = 0; i < n; ++i) {
      const double u = unit(rng) * total;
      auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
      if (it == cumulative.end()) --it;
      const auto idx = static_cast<std::size_t>(it - cumulative.begin());
      out.indices.push_back(idx);
      out.is_weights.push_back(std::pow(count * masses_[idx] / total, -is_beta_));
    }
    const double wmax = *std::max_element(out.is_weights.begin(), out.is_weights.end());
    for (double& w : out.is_weights) w /= wmax;
  }
  for (std::size_t idx : out.indices) out.transitions.push_back(&entries_[idx]);
  return out;
}

void ReplayBuffer::update_priorities(const std::vector<std::size_t>& indices,
                                     const std::vector<double>& errors) {
  if (indices.size() != errors.size()) throw InvalidConfigError("indices and errors differ in length");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= entries_.size()) throw InsufficientDataError("replay index out of range");
    const double e = std::abs(errors[i]);
    entries_[indices[i]].priority = e;
    masses_[indices[i]] = mass(e);
    max_priority_ = std::max(max_priority_, e);
  }
}

}  // namespace mplane
