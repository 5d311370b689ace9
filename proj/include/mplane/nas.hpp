#pragma once

#include "mplane/nn/layers.hpp"

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace mplane::nas {

enum class CnnOp : int {
  None,
  Conv3,
  Conv5,
  SepConv3,
  SepConv5,
  DilConv3,
  DilConv5,
  MaxPool3,
  AvgPool3,
  Skip,
};
inline constexpr int kCnnOps = 10;

enum class RnnOp : int { None, Identity, Tanh, Relu, Sigmoid };
inline constexpr int kRnnOps = 5;

const char* op_name(CnnOp op);
const char* op_name(RnnOp op);
CnnOp parse_cnn_op(const std::string& name);
RnnOp parse_rnn_op(const std::string& name);

// CNN cell nodes: 0 = c_{k-2}, 1 = c_{k-1}, 2..5 = n0..n3. Intermediate node j
// (0-based) has inbound edges from nodes 0..j+1.
inline constexpr int kCnnNodes = 4;
inline constexpr int kCnnEdges = 14;
constexpr int cnn_edge(int node, int pred) { return node * (node + 3) / 2 + pred; }

// RNN cell nodes n0..n3; n0 reads (x_t, h_{t-1}), node j in 1..3 has inbound
// edges from n0..n_{j-1}.
inline constexpr int kRnnNodes = 4;
inline constexpr int kRnnEdges = 6;
constexpr int rnn_edge(int node, int pred) { return (node - 1) * node / 2 + pred; }

/// Groups of architecture logits. Shared cells share one set per kind; unique
/// cells have one set per agent and kind.
enum class CellGroup : int {
  SharedNormal,
  SharedReduce,
  Unique0Normal,
  Unique0Reduce,
  Unique1Normal,
  Unique1Reduce,
  Unique2Normal,
  Unique2Reduce,
  Rnn,
};
inline constexpr int kGroups = 9;
inline constexpr int kCnnGroups = 8;

constexpr CellGroup shared_group(bool reduce) { return reduce ? CellGroup::SharedReduce : CellGroup::SharedNormal; }
constexpr CellGroup unique_group(int agent, bool reduce) {
  return static_cast<CellGroup>(2 + 2 * agent + (reduce ? 1 : 0));
}
const char* group_name(CellGroup g);
CellGroup parse_group(const std::string& name);
int group_edges(CellGroup g);
int group_ops(CellGroup g);

struct ArchitectureParams {
  /// alpha[g].value is edges x ops.
  std::array<nn::Parameter<double>, kGroups> alpha;
  double tau = 10.0;

  ArchitectureParams();
  static ArchitectureParams random(std::mt19937_64& rng, double scale = 1e-3);

  Eigen::VectorXd logits(CellGroup g, int edge) const {
    return alpha[static_cast<int>(g)].value.row(edge).transpose();
  }
  nn::ParamList<double> params();
  void zero_grad();
};

enum class SamplerKind {
  Gdas,    ///< hard one-hot forward at argmax(alpha + g), Gumbel-softmax backward
  Darts,   ///< softmax mixture of every op
  Argmax,  ///< noise-free one-hot at argmax(alpha); no architecture gradient
};

/// Resolution of one edge.
struct EdgeChoice {
  /// Selected op, or -1 when no op is to be evaluated.
  int index = -1;
  /// Forward weights per op.
  Eigen::VectorXd weights;
  /// Surrogate softmax((alpha + g) / tau) for Gdas, softmax(alpha) for Darts.
  Eigen::VectorXd probs;
  /// Accumulated dL/dweights.
  Eigen::VectorXd weight_grad;
  /// True when every op must be evaluated.
  bool dense = false;
};

Eigen::VectorXd softmax(const Eigen::VectorXd& x);

/// Gumbel-Max sample; draws one standard Gumbel per op from rng.
EdgeChoice gdas_sample(const Eigen::VectorXd& alpha, double tau, std::mt19937_64& rng);
/// Same with explicit noise (zero noise gives the argmax of alpha).
EdgeChoice gdas_sample(const Eigen::VectorXd& alpha, double tau, const Eigen::VectorXd& gumbel);
EdgeChoice darts_mix(const Eigen::VectorXd& alpha);
EdgeChoice argmax_choice(const Eigen::VectorXd& alpha);

/// dL/dalpha for one edge given the accumulated weight gradient.
Eigen::VectorXd arch_gradient(const EdgeChoice& c, SamplerKind kind, double tau);

/// One sampled architecture, shared by every sample of a batch.
struct ArchitectureSample {
  SamplerKind kind = SamplerKind::Gdas;
  double tau = 1.0;
  std::array<std::vector<EdgeChoice>, kGroups> edges;

  std::vector<EdgeChoice>& group(CellGroup g) { return edges[static_cast<int>(g)]; }
  const std::vector<EdgeChoice>& group(CellGroup g) const { return edges[static_cast<int>(g)]; }
  void zero_grad();
};

ArchitectureSample sample_architecture(const ArchitectureParams& a, SamplerKind kind, std::mt19937_64& rng);

/// Adds the surrogate gradients of `s` into `a`'s alpha gradients.
void accumulate_arch_gradient(const ArchitectureSample& s, ArchitectureParams& a);

struct CnnGene {
  /// Per intermediate node: two (predecessor node, op) pairs, predecessors ascending.
  std::array<std::array<std::pair<int, CnnOp>, 2>, kCnnNodes> nodes;
  friend bool operator==(const CnnGene&, const CnnGene&) = default;
};

struct RnnGene {
  /// Entries for n1..n3: (predecessor in n0..n_{j-1}, op).
  std::array<std::pair<int, RnnOp>, kRnnNodes - 1> nodes;
  friend bool operator==(const RnnGene&, const RnnGene&) = default;
};

struct Genotype {
  std::array<CnnGene, kCnnGroups> cells;
  RnnGene rnn;

  const CnnGene& cell(CellGroup g) const { return cells[static_cast<int>(g)]; }
  friend bool operator==(const Genotype&, const Genotype&) = default;
};

Genotype derive_genotype(const ArchitectureParams& a);

/// Hand-written residual-style backbone used by the fixed-backbone variants.
Genotype fixed_backbone_genotype();

void write_genotype(const Genotype& g, std::ostream& os);
Genotype read_genotype(std::istream& is);
void save_genotype(const Genotype& g, const std::filesystem::path& file);
Genotype load_genotype(const std::filesystem::path& file);

struct Selection {
  ArchitectureParams alpha;
  int epoch = 0;  ///< 1-based
};

/// Snapshot at the epoch of maximal validation reward; ties go to the earliest.
Selection select_architecture(const std::vector<double>& rewards, const std::vector<ArchitectureParams>& snapshots);

/// Binary logits at `stem`.bin with a text manifest at `stem`.manifest.
void save_alpha(const ArchitectureParams& a, const std::filesystem::path& stem);
ArchitectureParams load_alpha(const std::filesystem::path& stem);

}  // namespace mplane::nas
