#pragma once

#include "mplane/nas.hpp"
#include "mplane/nn/layers.hpp"

#include <array>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace mplane::nas {

/// Executions per candidate CNN op since the last reset.
struct OpCounters {
  std::array<long, kCnnOps> executed{};
  long total() const;
  void reset() { executed.fill(0); }
};

struct SupernetConfig {
  int obs_size = 64;
  int in_channels = 3;
  int stem_pool = 4;       ///< block average pooling ahead of the stem convolution
  int stem_channels = 8;
  int cell_channels = 2;   ///< node width of the first cell; doubles at every reduction
  std::string shared_layout = "NNRNRNNR";
  std::string unique_layout = "NNRN";
  double head_scale = 0.1;

  void validate() const;
  int reductions() const;
};

template <typename Scalar>
class Cell {
 public:
  using Tensor = nn::Tensor<Scalar>;

  /// Search cell holding every candidate op on every edge.
  Cell(int c_pp, int c_p, int c, bool reduce, bool reduce_prev, std::mt19937_64& rng, const std::string& name);
  /// Discrete cell holding only the ops of `gene`.
  Cell(int c_pp, int c_p, int c, bool reduce, bool reduce_prev, const CnnGene& gene, std::mt19937_64& rng,
       const std::string& name);

  /// `choices` holds one entry per edge in search mode and is ignored otherwise.
  Tensor forward(const Tensor& s0, const Tensor& s1, const std::vector<EdgeChoice>* choices, OpCounters* counters);
  /// Returns (dL/ds0, dL/ds1); adds edge-weight gradients into `choices`.
  std::pair<Tensor, Tensor> backward(const Tensor& gout, std::vector<EdgeChoice>* choices);

  void collect(nn::ParamList<Scalar>& out);
  int out_channels() const { return kCnnNodes * channels_; }
  bool reduce() const { return reduce_; }
  bool search() const { return search_; }

 private:
  struct Edge {
    int node = 0;
    int pred = 0;
    std::vector<int> op_ids;
    std::vector<std::unique_ptr<nn::Op<Scalar>>> ops;
    std::vector<Tensor> outputs;
    std::vector<char> computed;
  };

  void add_edge(int node, int pred, const std::vector<int>& op_ids, std::mt19937_64& rng, const std::string& name);

  int channels_;
  bool reduce_;
  bool search_;
  std::unique_ptr<nn::PreprocessOp<Scalar>> pre0_, pre1_;
  std::vector<Edge> edges_;
  Tensor s0_, s1_;
  std::array<Tensor, kCnnNodes + 2> nodes_;
};

/// Agent network: stem, shared cells over all agents, per-agent unique cells,
/// global average pooling and a per-agent linear head. Observation batches
/// hold kAgents consecutive samples per state (row b * kAgents + k).
template <typename Scalar>
class Supernet {
 public:
  using Tensor = nn::Tensor<Scalar>;
  using Mat = nn::Mat<Scalar>;

  Supernet(const SupernetConfig& cfg, std::mt19937_64& rng);
  Supernet(const SupernetConfig& cfg, const Genotype& genotype, std::mt19937_64& rng);

  bool search() const { return search_; }
  const SupernetConfig& config() const { return cfg_; }

  /// Raw Q-values, one row of kActions per (state, agent).
  Mat forward(const Tensor& obs, const ArchitectureSample* sample);
  void backward(const Mat& gq, ArchitectureSample* sample);

  nn::ParamList<Scalar> params();
  OpCounters& counters() { return counters_; }

 private:
  void build(std::mt19937_64& rng, const Genotype* genotype);
  const std::vector<EdgeChoice>* choices(const ArchitectureSample* s, CellGroup g) const;
  std::vector<EdgeChoice>* choices(ArchitectureSample* s, CellGroup g) const;

  SupernetConfig cfg_;
  bool search_;
  std::unique_ptr<nn::StemOp<Scalar>> stem_;
  std::vector<std::unique_ptr<Cell<Scalar>>> shared_;
  std::array<std::vector<std::unique_ptr<Cell<Scalar>>>, 3> unique_;
  std::array<nn::Linear<Scalar>, 3> heads_;
  OpCounters counters_;

  Tensor obs_;
  std::vector<Tensor> shared_out_;  // [0] = stem output, [i + 1] = shared cell i
  std::array<std::vector<Tensor>, 3> unique_out_;
  std::array<Mat, 3> pooled_;
  int states_ = 0;
};

}  // namespace mplane::nas
