#pragma once

#include "mplane/nas.hpp"
#include "mplane/qlearn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace mplane::testing {

using namespace mplane::nas;

// Softmax weight of the best non-none op of an edge, with that op.
inline std::pair<double, int> best_non_none(const Eigen::VectorXd& logits) {
  Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  e /= e.sum();
  int best = 1;
  for (int o = 2; o < e.size(); ++o)
    if (e[o] > e[best]) best = o;
  return {e[best], best};
}

// Exhaustive search: the pair of inbound edges with the largest summed score
// is the top-2 pair whenever scores are distinct.
inline Genotype brute_force_genotype(const ArchitectureParams& a) {
  Genotype out;
  for (int g = 0; g < kCnnGroups; ++g) {
    const auto cg = static_cast<CellGroup>(g);
    for (int j = 0; j < kCnnNodes; ++j) {
      double best = -1.0;
      for (int p1 = 0; p1 < j + 2; ++p1)
        for (int p2 = p1 + 1; p2 < j + 2; ++p2) {
          const auto e1 = best_non_none(a.logits(cg, cnn_edge(j, p1)));
          const auto e2 = best_non_none(a.logits(cg, cnn_edge(j, p2)));
          if (e1.first + e2.first > best) {
            best = e1.first + e2.first;
            out.cells[g].nodes[j] = {std::pair{p1, static_cast<CnnOp>(e1.second)},
                                     std::pair{p2, static_cast<CnnOp>(e2.second)}};
          }
        }
    }
  }
  for (int j = 1; j < kRnnNodes; ++j) {
    double best = -1.0;
    for (int p = 0; p < j; ++p) {
      const Eigen::VectorXd l = a.logits(CellGroup::Rnn, rnn_edge(j, p));
      Eigen::VectorXd e = (l.array() - l.maxCoeff()).exp();
      e /= e.sum();
      for (int o = 1; o < kRnnOps; ++o)
        if (e[o] > best) {
          best = e[o];
          out.rnn.nodes[j - 1] = {p, static_cast<RnnOp>(o)};
        }
    }
  }
  return out;
}

/// Small search network that still exercises a shared and a unique cell.
inline SupernetConfig miniature_net() {
  SupernetConfig c;
  c.obs_size = 16;
  c.stem_pool = 2;
  c.stem_channels = 4;
  c.cell_channels = 2;
  c.shared_layout = "N";
  c.unique_layout = "R";
  c.head_scale = 1.0;
  return c;
}

inline Eigen::VectorXd standard_gumbel(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd g(n);
  for (int i = 0; i < n; ++i) g[i] = -std::log(-std::log(std::max(u(rng), 1e-300)));
  return g;
}

struct GradientCheck {
  double weights_error = 0.0;  ///< max relative error over the probed weight entries
  double arch_error = 0.0;     ///< max relative error over every logit of the used groups
  int weight_entries = 0;
  int arch_entries = 0;
  int kinks = 0;               ///< entries where the one-sided differences disagree
  int bad_subgradients = 0;    ///< kinks whose backprop value lies outside the one-sided slopes
};

struct Probe {
  double analytic, forward, backward;
  double central() const { return 0.5 * (forward + backward); }
};

/// Compares backpropagated gradients of L = sum(Q' * R) with central
/// differences on the miniature network. For Gdas the architecture is frozen
/// at the sample of alpha0 and the edge weights follow
/// onehot + softmax((alpha + g) / tau) - softmax((alpha0 + g) / tau), so the
/// forward is the real one while the logits still move the loss. Entries whose
/// one-sided differences disagree sit on a ReLU kink (a node fed only by
/// `none`); there the backprop value must lie between the two slopes.
inline GradientCheck check_network_gradients(std::uint64_t seed, SamplerKind kind, double tau = 2.0) {
  std::mt19937_64 rng(seed);
  QNetwork<double> net(miniature_net(), RnnMode::Searched, rng);
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (auto* p : net.params())
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += jitter(rng);
  ArchitectureParams a0 = ArchitectureParams::random(rng, 1.0);
  a0.tau = tau;

  std::array<std::vector<Eigen::VectorXd>, kGroups> noise;
  for (int g = 0; g < kGroups; ++g)
    for (int e = 0; e < group_edges(static_cast<CellGroup>(g)); ++e)
      noise[g].push_back(standard_gumbel(rng, group_ops(static_cast<CellGroup>(g))));

  const auto make = [&](const ArchitectureParams& a) {
    ArchitectureSample s;
    s.kind = kind;
    s.tau = tau;
    for (int g = 0; g < kGroups; ++g) {
      const auto cg = static_cast<CellGroup>(g);
      for (int e = 0; e < group_edges(cg); ++e) {
        if (kind == SamplerKind::Darts) {
          s.edges[g].push_back(darts_mix(a.logits(cg, e)));
          continue;
        }
        EdgeChoice c = gdas_sample(a0.logits(cg, e), tau, noise[g][e]);
        c.weights += softmax((a.logits(cg, e) + noise[g][e]) / tau) - c.probs;
        s.edges[g].push_back(std::move(c));
      }
    }
    return s;
  };

  const int rows = 2 * kAgents;
  const auto cfg = miniature_net();
  nn::Tensor<double> obs(rows, cfg.in_channels, cfg.obs_size, cfg.obs_size);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < obs.data.size(); ++i) obs.data[i] = normal(rng);
  Eigen::MatrixXd r(rows, kActions);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = normal(rng);

  const auto loss = [&](const ArchitectureSample& s) { return (net.forward(obs, &s).array() * r.array()).sum(); };

  auto params = net.params();
  for (auto* p : params) p->zero_grad();
  ArchitectureSample s0 = make(a0);
  net.forward(obs, &s0);
  net.backward(r, &s0);
  a0.zero_grad();
  accumulate_arch_gradient(s0, a0);

  const auto rel = [](double an, double fd, double scale) {
    return std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), scale});
  };

  GradientCheck out;
  const double h = 1e-6;
  const ArchitectureSample frozen = make(a0);
  const double l0 = loss(frozen);
  std::vector<Probe> wpairs;
  for (auto* p : params) {
    for (int probe = 0; probe < 3; ++probe) {
      const auto i = std::uniform_int_distribution<Eigen::Index>(0, p->value.size() - 1)(rng);
      const double v = p->value.data()[i];
      p->value.data()[i] = v + h;
      const double lp = loss(frozen);
      p->value.data()[i] = v - h;
      const double lm = loss(frozen);
      p->value.data()[i] = v;
      wpairs.push_back({p->grad.data()[i], (lp - l0) / h, (l0 - lm) / h});
    }
  }
  const auto score = [&](const std::vector<Probe>& probes, double& error, int& entries) {
    double scale = 0.0;
    for (const auto& pr : probes) scale = std::max(scale, std::abs(pr.central()));
    for (const auto& pr : probes) {
      if (pr.analytic == 0.0 && pr.central() == 0.0) continue;
      ++entries;
      if (std::abs(pr.forward - pr.backward) > 1e-3 * std::max({std::abs(pr.forward), std::abs(pr.backward), 1e-4 * scale})) {
        ++out.kinks;
        const double lo = std::min(pr.forward, pr.backward), hi = std::max(pr.forward, pr.backward);
        const double slack = 1e-4 * std::max(scale, hi - lo);
        if (pr.analytic < lo - slack || pr.analytic > hi + slack) ++out.bad_subgradients;
        continue;
      }
      error = std::max(error, rel(pr.analytic, pr.central(), 1e-4 * scale));
    }
  };
  score(wpairs, out.weights_error, out.weight_entries);

  std::vector<CellGroup> used = {shared_group(cfg.shared_layout[0] == 'R'), CellGroup::Rnn};
  for (int k = 0; k < kAgents; ++k) used.push_back(unique_group(k, cfg.unique_layout[0] == 'R'));
  std::vector<Probe> apairs;
  for (CellGroup cg : used) {
    auto& alpha = a0.alpha[static_cast<int>(cg)];
    for (Eigen::Index i = 0; i < alpha.value.size(); ++i) {
      ArchitectureParams ap = a0, am = a0;
      ap.alpha[static_cast<int>(cg)].value.data()[i] += h;
      am.alpha[static_cast<int>(cg)].value.data()[i] -= h;
      apairs.push_back({alpha.grad.data()[i], (loss(make(ap)) - l0) / h, (l0 - loss(make(am))) / h});
    }
  }
  score(apairs, out.arch_error, out.arch_entries);
  return out;
}

}  // namespace mplane::testing
