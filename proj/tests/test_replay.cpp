#include "mplane/error.hpp"
#include "mplane/replay.hpp"
#include "mplane/stats.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace mplane;

namespace {

Transition tagged(int id) {
  Transition t;
  t.case_index = id;
  return t;
}

ReplayBuffer filled(const std::vector<double>& errors) {
  ReplayBuffer b(errors.size() + 10);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    b.push(tagged(static_cast<int>(i)));
    idx.push_back(i);
  }
  b.update_priorities(idx, errors);
  return b;
}

std::vector<double> oracle_probabilities(const std::vector<double>& errors, double p = 0.6, double delta = 0.05) {
  std::vector<double> m;
  for (double e : errors) m.push_back(std::pow(std::abs(e), p) + delta);
  const double total = std::accumulate(m.begin(), m.end(), 0.0);
  for (double& x : m) x /= total;
  return m;
}

std::vector<double> frequencies(const ReplayBuffer& b, SampleMode mode, int draws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> counts(b.size(), 0.0);
  for (int i = 0; i < draws; i += static_cast<int>(b.size()))
    for (std::size_t j : b.sample(b.size(), mode, rng).indices) counts[j] += 1.0;
  return counts;
}

}  // namespace

TEST_CASE("push and eviction") {
  ReplayBuffer b(3);
  b.push(tagged(0));
  CHECK(b.size() == 1);
  CHECK(b.priority(0) == 1.0);
  for (int i = 1; i < 4; ++i) b.push(tagged(i));
  CHECK(b.size() == 3);
  std::vector<int> ids;
  for (std::size_t i = 0; i < b.size(); ++i) ids.push_back(b.at(i).case_index);
  CHECK(std::find(ids.begin(), ids.end(), 0) == ids.end());

  ReplayBuffer c(10);
  c.push(tagged(0));
  c.push(tagged(1));
  c.update_priorities({0, 1}, {7.3, 0.2});
  c.push(tagged(2));
  CHECK(c.priority(2) == 7.3);
  CHECK(c.max_priority() == 7.3);
}

TEST_CASE("analytic two-entry case") {
  const ReplayBuffer b = filled({1.0, 0.0});
  CHECK(b.probability(0) == doctest::Approx(1.05 / 1.10).epsilon(1e-12));
  const auto counts = frequencies(b, SampleMode::Prioritized, 100000, 1);
  CHECK(std::abs(counts[0] / std::accumulate(counts.begin(), counts.end(), 0.0) - 1.05 / 1.10) < 0.01);
  CHECK(b.probability(1) > 0.0);
}

TEST_CASE("equal errors give uniform probabilities") {
  const ReplayBuffer b = filled({0.4, 0.4, 0.4, 0.4, 0.4});
  for (std::size_t i = 0; i < 5; ++i) CHECK(b.probability(i) == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("uniform mode") {
  const ReplayBuffer b = filled({5.0, 0.1, 2.0, 0.0});
  std::mt19937_64 rng(2);
  const ReplaySample s = b.sample(4, SampleMode::Uniform, rng);
  for (double w : s.is_weights) CHECK(w == 1.0);
  const auto counts = frequencies(b, SampleMode::Uniform, 100000, 3);
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  for (double c : counts) CHECK(std::abs(c / total - 0.25) < 0.01);
  for (std::size_t i = 0; i < 4; ++i) CHECK(b.probability(i, SampleMode::Uniform) == 0.25);
}

TEST_CASE("probabilities follow the formula and sum to one") {
  std::mt19937_64 rng(4);
  std::exponential_distribution<double> e(1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> errors(1 + trial * 3);
    for (double& x : errors) x = e(rng);
    const ReplayBuffer b = filled(errors);
    const auto oracle = oracle_probabilities(errors);
    const auto p = b.probabilities();
    for (std::size_t i = 0; i < errors.size(); ++i) CHECK(p[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-12);
    const auto u = b.probabilities(SampleMode::Uniform);
    CHECK(std::abs(std::accumulate(u.begin(), u.end(), 0.0) - 1.0) < 1e-12);
  }
}

TEST_CASE("raising one error is monotone") {
  std::vector<double> errors{0.3, 1.2, 0.0, 2.5};
  const auto before = filled(errors).probabilities();
  errors[1] = 4.0;
  const auto after = filled(errors).probabilities();
  CHECK(after[1] > before[1]);
  for (std::size_t i : {0u, 2u, 3u}) CHECK(after[i] <= before[i]);

  errors[1] = 1e6;
  const ReplayBuffer big = filled(errors);
  CHECK(big.probability(1) == doctest::Approx(oracle_probabilities(errors)[1]).epsilon(1e-12));
}

TEST_CASE("importance weights") {
  const std::vector<double> errors{0.1, 3.0, 0.7, 0.0, 1.5, 9.0};
  ReplayBuffer b = filled(errors);
  b.set_is_beta(0.7);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const ReplaySample s = b.sample(6, SampleMode::Prioritized, rng);
    double max_raw = 0.0;
    for (std::size_t j : s.indices) max_raw = std::max(max_raw, std::pow(6.0 * b.probability(j), -0.7));
    double max_w = 0.0;
    for (std::size_t j = 0; j < s.indices.size(); ++j) {
      const double w = s.is_weights[j];
      CHECK(w > 0.0);
      CHECK(w <= 1.0);
      CHECK(w == doctest::Approx(std::pow(6.0 * b.probability(s.indices[j]), -0.7) / max_raw).epsilon(1e-12));
      CHECK(s.transitions[j] == &b.at(s.indices[j]));
      max_w = std::max(max_w, w);
    }
    CHECK(max_w == 1.0);
  }
}

TEST_CASE("sampling is deterministic in the seed") {
  const ReplayBuffer b = filled({0.5, 1.5, 2.5, 0.0});
  std::mt19937_64 r1(6), r2(6);
  CHECK(b.sample(4, SampleMode::Prioritized, r1).indices == b.sample(4, SampleMode::Prioritized, r2).indices);
}

TEST_CASE("chi-square fit of the sampling distribution") {
  std::mt19937_64 rng(7);
  std::exponential_distribution<double> e(0.5);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> errors(8);
    for (double& x : errors) x = e(rng);
    const ReplayBuffer b = filled(errors);
    const auto counts = frequencies(b, SampleMode::Prioritized, 100000, 100 + trial);
    const auto p = b.probabilities();
    CHECK(stats::chi_square_test(counts, p).p_value > 0.01);
  }
}

TEST_CASE("errors") {
  ReplayBuffer b(5);
  b.push(tagged(0));
  std::mt19937_64 rng(8);
  CHECK_THROWS_AS(b.sample(2, SampleMode::Prioritized, rng), InsufficientDataError);
  CHECK_THROWS(b.update_priorities({3}, {1.0}));
}

TEST_CASE("frozen chi-square and t tail probabilities") {
  // scipy.stats.chi2.sf reference values
  CHECK(stats::chi_square_sf(3.0, 4) == doctest::Approx(0.557825400371075).epsilon(1e-12));
  CHECK(stats::chi_square_sf(15.0, 7) == doctest::Approx(0.0359994047634288).epsilon(1e-12));
  CHECK(stats::chi_square_sf(0.5, 1) == doctest::Approx(0.479500122186953).epsilon(1e-12));
  CHECK(stats::chi_square_sf(40.0, 20) == doctest::Approx(0.00499541230830758).epsilon(1e-12));
}
