#include "mplane/supernet.hpp"

#include "mplane/env.hpp"
#include "mplane/error.hpp"

#include <algorithm>
#include <numeric>

namespace mplane::nas {

long OpCounters::total() const { return std::accumulate(executed.begin(), executed.end(), 0L); }

void SupernetConfig::validate() const {
  if (obs_size < 8 || in_channels < 1 || stem_pool < 1 || stem_channels < 1 || cell_channels < 1)
    throw InvalidConfigError("supernet sizes must be positive (obs_size >= 8)");
  if (shared_layout.empty() || unique_layout.empty())
    throw InvalidConfigError("supernet layouts must contain at least one cell each");
  for (char c : shared_layout + unique_layout)
    if (c != 'N' && c != 'R') throw InvalidConfigError("cell layouts use only 'N' and 'R'");
  if (obs_size % stem_pool != 0) throw InvalidConfigError("obs_size must be divisible by stem_pool");
  const int base = obs_size / stem_pool;
  if (base % (1 << reductions()) != 0)
    throw InvalidConfigError("pooled observation size must be divisible by 2^reductions");
}

int SupernetConfig::reductions() const {
  const std::string all = shared_layout + unique_layout;
  return static_cast<int>(std::count(all.begin(), all.end(), 'R'));
}

namespace {

template <typename Scalar>
std::unique_ptr<nn::Op<Scalar>> make_op(CnnOp op, int c, int stride, std::mt19937_64& rng, const std::string& name) {
  using nn::ConvGeometry;
  switch (op) {
    case CnnOp::None: return std::make_unique<nn::ZeroOp<Scalar>>(stride);
    case CnnOp::Conv3: return std::make_unique<nn::ReluConvOp<Scalar>>(c, c, ConvGeometry{3, stride, 1}, rng, name);
    case CnnOp::Conv5: return std::make_unique<nn::ReluConvOp<Scalar>>(c, c, ConvGeometry{5, stride, 1}, rng, name);
    case CnnOp::SepConv3: return std::make_unique<nn::SepConvOp<Scalar>>(c, ConvGeometry{3, stride, 1}, rng, name);
    case CnnOp::SepConv5: return std::make_unique<nn::SepConvOp<Scalar>>(c, ConvGeometry{5, stride, 1}, rng, name);
    case CnnOp::DilConv3: return std::make_unique<nn::SepConvOp<Scalar>>(c, ConvGeometry{3, stride, 2}, rng, name);
    case CnnOp::DilConv5: return std::make_unique<nn::SepConvOp<Scalar>>(c, ConvGeometry{5, stride, 2}, rng, name);
    case CnnOp::MaxPool3: return std::make_unique<nn::PoolOp<Scalar>>(true, stride);
    case CnnOp::AvgPool3: return std::make_unique<nn::PoolOp<Scalar>>(false, stride);
    case CnnOp::Skip:
      if (stride == 1) return std::make_unique<nn::IdentityOp<Scalar>>();
      return std::make_unique<nn::ReduceSkipOp<Scalar>>();
  }
  throw InvalidConfigError("unknown cnn op");
}

}  // namespace

template <typename Scalar>
Cell<Scalar>::Cell(int c_pp, int c_p, int c, bool reduce, bool reduce_prev, std::mt19937_64& rng,
                   const std::string& name)
    : channels_(c), reduce_(reduce), search_(true) {
  pre0_ = std::make_unique<nn::PreprocessOp<Scalar>>(c_pp, c, reduce_prev, rng, name + ".pre0");
  pre1_ = std::make_unique<nn::PreprocessOp<Scalar>>(c_p, c, false, rng, name + ".pre1");
  std::vector<int> all(kCnnOps);
  std::iota(all.begin(), all.end(), 0);
  for (int j = 0; j < kCnnNodes; ++j)
    for (int pred = 0; pred < j + 2; ++pred) add_edge(j, pred, all, rng, name);
}

template <typename Scalar>
Cell<Scalar>::Cell(int c_pp, int c_p, int c, bool reduce, bool reduce_prev, const CnnGene& gene,
                   std::mt19937_64& rng, const std::string& name)
    : channels_(c), reduce_(reduce), search_(false) {
  pre0_ = std::make_unique<nn::PreprocessOp<Scalar>>(c_pp, c, reduce_prev, rng, name + ".pre0");
  pre1_ = std::make_unique<nn::PreprocessOp<Scalar>>(c_p, c, false, rng, name + ".pre1");
  for (int j = 0; j < kCnnNodes; ++j)
    for (const auto& [pred, op] : gene.nodes[j]) {
      if (pred < 0 || pred >= j + 2 || op == CnnOp::None) throw InvalidConfigError("invalid genotype entry");
      add_edge(j, pred, {static_cast<int>(op)}, rng, name);
    }
}

template <typename Scalar>
void Cell<Scalar>::add_edge(int node, int pred, const std::vector<int>& op_ids, std::mt19937_64& rng,
                            const std::string& name) {
  Edge e;
  e.node = node;
  e.pred = pred;
  e.op_ids = op_ids;
  const int stride = reduce_ && pred < 2 ? 2 : 1;
  const std::string prefix = name + ".e" + std::to_string(cnn_edge(node, pred)) + ".";
  for (int id : op_ids) {
    const auto op = static_cast<CnnOp>(id);
    e.ops.push_back(make_op<Scalar>(op, channels_, stride, rng, prefix + op_name(op)));
  }
  e.outputs.resize(op_ids.size());
  e.computed.assign(op_ids.size(), 0);
  edges_.push_back(std::move(e));
}

template <typename Scalar>
typename Cell<Scalar>::Tensor Cell<Scalar>::forward(const Tensor& s0, const Tensor& s1,
                                                    const std::vector<EdgeChoice>* choices,
                                                    OpCounters* counters) {
  if (search_ && (choices == nullptr || choices->size() != static_cast<std::size_t>(kCnnEdges)))
    throw ShapeMismatchError("search cell needs one choice per edge");
  s0_ = s0;
  s1_ = s1;
  nodes_[0] = pre0_->forward(s0);
  nodes_[1] = pre1_->forward(s1);
  if (!nodes_[0].same_shape(nodes_[1])) throw ShapeMismatchError("cell inputs disagree after preprocessing");
  const int h = reduce_ ? s1.h / 2 : s1.h, w = reduce_ ? s1.w / 2 : s1.w;
  for (int j = 0; j < kCnnNodes; ++j) nodes_[j + 2] = Tensor(s1.n, channels_, h, w);

  for (auto& e : edges_) {
    const Tensor& x = nodes_[e.pred];
    Tensor& node = nodes_[e.node + 2];
    std::fill(e.computed.begin(), e.computed.end(), 0);
    const EdgeChoice* ch = search_ ? &(*choices)[cnn_edge(e.node, e.pred)] : nullptr;
    for (std::size_t o = 0; o < e.ops.size(); ++o) {
      const double w_o = ch ? ch->weights[static_cast<Eigen::Index>(o)] : 1.0;
      const bool run = !ch || ch->dense || static_cast<int>(o) == ch->index;
      if (!run) {
        if (w_o != 0.0) node.data.array() += static_cast<Scalar>(w_o);
        continue;
      }
      e.outputs[o] = e.ops[o]->forward(x);
      e.computed[o] = 1;
      if (counters) ++counters->executed[static_cast<std::size_t>(e.op_ids[o])];
      if (!e.outputs[o].same_shape(node)) throw ShapeMismatchError("edge output shape mismatch");
      if (w_o != 0.0) node.data += static_cast<Scalar>(w_o) * e.outputs[o].data;
    }
  }
  std::vector<const Tensor*> parts;
  for (int j = 0; j < kCnnNodes; ++j) parts.push_back(&nodes_[j + 2]);
  return nn::concat_channels(parts);
}

template <typename Scalar>
std::pair<typename Cell<Scalar>::Tensor, typename Cell<Scalar>::Tensor> Cell<Scalar>::backward(
    const Tensor& gout, std::vector<EdgeChoice>* choices) {
  std::array<Tensor, kCnnNodes + 2> g;
  g[0] = Tensor::like(nodes_[0]);
  g[1] = Tensor::like(nodes_[1]);
  for (int j = 0; j < kCnnNodes; ++j) g[j + 2] = nn::slice_channels(gout, j * channels_, channels_);

  for (auto it = edges_.rbegin(); it != edges_.rend(); ++it) {
    auto& e = *it;
    const Tensor& gy = g[e.node + 2];
    EdgeChoice* ch = search_ ? &(*choices)[cnn_edge(e.node, e.pred)] : nullptr;
    for (std::size_t o = 0; o < e.ops.size(); ++o) {
      const auto oi = static_cast<Eigen::Index>(o);
      const double w_o = ch ? ch->weights[oi] : 1.0;
      if (!e.computed[o]) {
        if (ch) ch->weight_grad[oi] += static_cast<double>(gy.data.sum());
        continue;
      }
      if (ch) ch->weight_grad[oi] += static_cast<double>(gy.data.dot(e.outputs[o].data));
      if (w_o == 0.0 || e.op_ids[o] == static_cast<int>(CnnOp::None)) continue;
      if (w_o == 1.0) {
        g[e.pred].data += e.ops[o]->backward(nodes_[e.pred], gy).data;
      } else {
        Tensor scaled = gy;
        scaled.data *= static_cast<Scalar>(w_o);
        g[e.pred].data += e.ops[o]->backward(nodes_[e.pred], scaled).data;
      }
    }
  }
  return {pre0_->backward(s0_, g[0]), pre1_->backward(s1_, g[1])};
}

template <typename Scalar>
void Cell<Scalar>::collect(nn::ParamList<Scalar>& out) {
  pre0_->collect(out);
  pre1_->collect(out);
  for (auto& e : edges_)
    for (auto& op : e.ops) op->collect(out);
}

template <typename Scalar>
Supernet<Scalar>::Supernet(const SupernetConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), search_(true) {
  build(rng, nullptr);
}

template <typename Scalar>
Supernet<Scalar>::Supernet(const SupernetConfig& cfg, const Genotype& genotype, std::mt19937_64& rng)
    : cfg_(cfg), search_(false) {
  build(rng, &genotype);
}

template <typename Scalar>
void Supernet<Scalar>::build(std::mt19937_64& rng, const Genotype* genotype) {
  cfg_.validate();
  stem_ = std::make_unique<nn::StemOp<Scalar>>(cfg_.in_channels, cfg_.stem_channels, cfg_.stem_pool, rng);
  int c = cfg_.cell_channels;
  int c_pp = cfg_.stem_channels, c_p = cfg_.stem_channels;
  bool reduce_prev = false;
  const auto make = [&](bool reduce, CellGroup group, const std::string& name) {
    if (reduce) c *= 2;
    auto cell = genotype ? std::make_unique<Cell<Scalar>>(c_pp, c_p, c, reduce, reduce_prev,
                                                          genotype->cell(group), rng, name)
                         : std::make_unique<Cell<Scalar>>(c_pp, c_p, c, reduce, reduce_prev, rng, name);
    c_pp = c_p;
    c_p = cell->out_channels();
    reduce_prev = reduce;
    return cell;
  };
  for (std::size_t i = 0; i < cfg_.shared_layout.size(); ++i) {
    const bool reduce = cfg_.shared_layout[i] == 'R';
    shared_.push_back(make(reduce, shared_group(reduce), "shared" + std::to_string(i)));
  }
  const int c0 = c, cpp0 = c_pp, cp0 = c_p;
  const bool rp0 = reduce_prev;
  for (int k = 0; k < kAgents; ++k) {
    c = c0;
    c_pp = cpp0;
    c_p = cp0;
    reduce_prev = rp0;
    for (std::size_t i = 0; i < cfg_.unique_layout.size(); ++i) {
      const bool reduce = cfg_.unique_layout[i] == 'R';
      unique_[k].push_back(
          make(reduce, unique_group(k, reduce), "unique" + std::to_string(k) + "." + std::to_string(i)));
    }
    heads_[k] = nn::Linear<Scalar>(c_p, kActions, rng, "head" + std::to_string(k), cfg_.head_scale);
  }
}

template <typename Scalar>
const std::vector<EdgeChoice>* Supernet<Scalar>::choices(const ArchitectureSample* s, CellGroup g) const {
  if (!search_) return nullptr;
  if (s == nullptr) throw MissingPrerequisiteError("search network needs an architecture sample");
  return &s->group(g);
}

template <typename Scalar>
std::vector<EdgeChoice>* Supernet<Scalar>::choices(ArchitectureSample* s, CellGroup g) const {
  if (!search_) return nullptr;
  if (s == nullptr) throw MissingPrerequisiteError("search network needs an architecture sample");
  return &s->group(g);
}

template <typename Scalar>
typename Supernet<Scalar>::Mat Supernet<Scalar>::forward(const Tensor& obs, const ArchitectureSample* sample) {
  if (obs.n % kAgents != 0 || obs.c != cfg_.in_channels || obs.h != cfg_.obs_size || obs.w != cfg_.obs_size)
    throw ShapeMismatchError("observation batch has the wrong shape");
  states_ = obs.n / kAgents;
  obs_ = obs;
  shared_out_.assign(1, stem_->forward(obs));
  for (std::size_t i = 0; i < shared_.size(); ++i) {
    const Tensor& pp = shared_out_[i == 0 ? 0 : i - 1];
    const Tensor& p = shared_out_[i];
    const bool reduce = shared_[i]->reduce();
    Tensor out = shared_[i]->forward(pp, p, choices(sample, shared_group(reduce)), &counters_);
    shared_out_.push_back(std::move(out));
  }
  Mat q(obs.n, kActions);
  const std::size_t last = shared_out_.size() - 1;
  for (int k = 0; k < kAgents; ++k) {
    std::vector<int> rows(static_cast<std::size_t>(states_));
    for (int b = 0; b < states_; ++b) rows[static_cast<std::size_t>(b)] = b * kAgents + k;
    auto& outs = unique_out_[k];
    outs.clear();
    outs.push_back(nn::gather(shared_out_[last - 1], rows));
    outs.push_back(nn::gather(shared_out_[last], rows));
    for (std::size_t i = 0; i < unique_[k].size(); ++i) {
      const bool reduce = unique_[k][i]->reduce();
      Tensor out = unique_[k][i]->forward(outs[i], outs[i + 1], choices(sample, unique_group(k, reduce)), &counters_);
      outs.push_back(std::move(out));
    }
    pooled_[k] = nn::global_avg_pool(outs.back());
    const Mat qk = heads_[k].forward(pooled_[k]);
    for (int b = 0; b < states_; ++b) q.row(b * kAgents + k) = qk.row(b);
  }
  return q;
}

template <typename Scalar>
void Supernet<Scalar>::backward(const Mat& gq, ArchitectureSample* sample) {
  if (gq.rows() != static_cast<Eigen::Index>(states_) * kAgents || gq.cols() != kActions)
    throw ShapeMismatchError("Q gradient has the wrong shape");
  std::vector<Tensor> g(shared_out_.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = Tensor::like(shared_out_[i]);
  const std::size_t last = shared_out_.size() - 1;
  for (int k = 0; k < kAgents; ++k) {
    std::vector<int> rows(static_cast<std::size_t>(states_));
    Mat gk(states_, kActions);
    for (int b = 0; b < states_; ++b) {
      rows[static_cast<std::size_t>(b)] = b * kAgents + k;
      gk.row(b) = gq.row(b * kAgents + k);
    }
    auto& outs = unique_out_[k];
    std::vector<Tensor> gu(outs.size());
    for (std::size_t i = 0; i + 1 < outs.size(); ++i) gu[i] = Tensor::like(outs[i]);
    gu.back() = nn::global_avg_pool_backward(outs.back(), heads_[k].backward(pooled_[k], gk));
    for (std::size_t i = unique_[k].size(); i-- > 0;) {
      const bool reduce = unique_[k][i]->reduce();
      auto [g0, g1] = unique_[k][i]->backward(gu[i + 2], choices(sample, unique_group(k, reduce)));
      gu[i].data += g0.data;
      gu[i + 1].data += g1.data;
    }
    nn::scatter_add(g[last - 1], gu[0], rows);
    nn::scatter_add(g[last], gu[1], rows);
  }
  for (std::size_t i = shared_.size(); i-- > 0;) {
    const bool reduce = shared_[i]->reduce();
    auto [g0, g1] = shared_[i]->backward(g[i + 1], choices(sample, shared_group(reduce)));
    g[i == 0 ? 0 : i - 1].data += g0.data;
    g[i].data += g1.data;
  }
  stem_->backward(obs_, g[0]);
}

template <typename Scalar>
nn::ParamList<Scalar> Supernet<Scalar>::params() {
  nn::ParamList<Scalar> out;
  stem_->collect(out);
  for (auto& c : shared_) c->collect(out);
  for (int k = 0; k < kAgents; ++k) {
    for (auto& c : unique_[k]) c->collect(out);
    heads_[k].collect(out);
  }
  return out;
}

template class Cell<float>;
template class Cell<double>;
template class Supernet<float>;
template class Supernet<double>;

}  // namespace mplane::nas
