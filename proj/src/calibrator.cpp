#include "mplane/calibrator.hpp"

#include "mplane/env.hpp"
#include "mplane/error.hpp"

#include <array>
#include <cmath>

namespace mplane::nas {

const char* rnn_mode_name(RnnMode m) {
  switch (m) {
    case RnnMode::None: return "none";
    case RnnMode::Lstm: return "fixed";
    case RnnMode::Searched: return "searched";
  }
  return "?";
}

RnnMode parse_rnn_mode(const std::string& s) {
  if (s == "none") return RnnMode::None;
  if (s == "fixed") return RnnMode::Lstm;
  if (s == "searched") return RnnMode::Searched;
  throw InvalidConfigError("rnn must be none, fixed or searched: " + s);
}

namespace {

template <typename Scalar>
using Mat = nn::Mat<Scalar>;

template <typename Scalar>
Mat<Scalar> affine(const Mat<Scalar>& x, const nn::Parameter<Scalar>& w, const nn::Parameter<Scalar>& b) {
  Mat<Scalar> z = x * w.value;
  z.rowwise() += b.value.row(0);
  return z;
}

template <typename Scalar>
Mat<Scalar> sigmoid(const Mat<Scalar>& z) {
  return (Scalar(1) / (Scalar(1) + (-z.array()).exp())).matrix();
}

template <typename Scalar>
Mat<Scalar> activate(RnnOp op, const Mat<Scalar>& z) {
  switch (op) {
    case RnnOp::None: return Mat<Scalar>::Zero(z.rows(), z.cols());
    case RnnOp::Identity: return z;
    case RnnOp::Tanh: return z.array().tanh().matrix();
    case RnnOp::Relu: return z.cwiseMax(Scalar(0));
    case RnnOp::Sigmoid: return sigmoid(z);
  }
  return z;
}

// dL/dz given dL/dy, the pre-activation z and the output y.
template <typename Scalar>
Mat<Scalar> activate_backward(RnnOp op, const Mat<Scalar>& z, const Mat<Scalar>& y, const Mat<Scalar>& gy) {
  switch (op) {
    case RnnOp::None: return Mat<Scalar>::Zero(z.rows(), z.cols());
    case RnnOp::Identity: return gy;
    case RnnOp::Tanh: return (gy.array() * (Scalar(1) - y.array().square())).matrix();
    case RnnOp::Relu: return (z.array() > Scalar(0)).select(gy, Scalar(0));
    case RnnOp::Sigmoid: return (gy.array() * y.array() * (Scalar(1) - y.array())).matrix();
  }
  return gy;
}

template <typename Scalar>
void init(nn::Parameter<Scalar>& p, std::mt19937_64& rng, int fan_in) {
  p.init_uniform(rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

}  // namespace

template <typename Scalar>
struct Calibrator<Scalar>::Direction {
  virtual ~Direction() = default;
  /// xs in processing order; returns the hidden state per step.
  virtual std::vector<Mat> forward(const std::vector<Mat>& xs, const ArchitectureSample* sample) = 0;
  virtual std::vector<Mat> backward(const std::vector<Mat>& ghs, ArchitectureSample* sample) = 0;
  virtual void collect(nn::ParamList<Scalar>& out) = 0;
};

namespace {

constexpr int kH = 8;

template <typename Scalar>
struct LstmDirection final : Calibrator<Scalar>::Direction {
  using Mat = nn::Mat<Scalar>;
  nn::Parameter<Scalar> wx, wh, b;
  struct Step {
    Mat x, h_prev, c_prev, i, f, g, o, c;
  };
  std::vector<Step> steps;

  LstmDirection(std::mt19937_64& rng, const std::string& name)
      : wx(name + ".wx", kH, 4 * kH), wh(name + ".wh", kH, 4 * kH), b(name + ".b", 1, 4 * kH) {
    init(wx, rng, kH);
    init(wh, rng, kH);
  }

  std::vector<Mat> forward(const std::vector<Mat>& xs, const ArchitectureSample*) override {
    const Eigen::Index n = xs.front().rows();
    Mat h = Mat::Zero(n, kH), c = Mat::Zero(n, kH);
    steps.clear();
    std::vector<Mat> hs;
    for (const Mat& x : xs) {
      Step s;
      s.x = x;
      s.h_prev = h;
      s.c_prev = c;
      Mat z = x * wx.value + h * wh.value;
      z.rowwise() += b.value.row(0);
      s.i = sigmoid<Scalar>(z.middleCols(0, kH));
      s.f = sigmoid<Scalar>(z.middleCols(kH, kH));
      s.g = z.middleCols(2 * kH, kH).array().tanh().matrix();
      s.o = sigmoid<Scalar>(z.middleCols(3 * kH, kH));
      s.c = (s.f.array() * c.array() + s.i.array() * s.g.array()).matrix();
      c = s.c;
      h = (s.o.array() * c.array().tanh()).matrix();
      hs.push_back(h);
      steps.push_back(std::move(s));
    }
    return hs;
  }

  std::vector<Mat> backward(const std::vector<Mat>& ghs, ArchitectureSample*) override {
    const Eigen::Index n = ghs.front().rows();
    Mat carry_h = Mat::Zero(n, kH), carry_c = Mat::Zero(n, kH);
    std::vector<Mat> gxs(steps.size());
    for (std::size_t t = steps.size(); t-- > 0;) {
      const Step& s = steps[t];
      const Mat gh = ghs[t] + carry_h;
      const auto tc = s.c.array().tanh();
      const Mat go = (gh.array() * tc).matrix();
      const Mat gc = (gh.array() * s.o.array() * (Scalar(1) - tc.square()) + carry_c.array()).matrix();
      Mat dz(n, 4 * kH);
      dz.middleCols(0, kH) = (gc.array() * s.g.array() * s.i.array() * (Scalar(1) - s.i.array())).matrix();
      dz.middleCols(kH, kH) = (gc.array() * s.c_prev.array() * s.f.array() * (Scalar(1) - s.f.array())).matrix();
      dz.middleCols(2 * kH, kH) = (gc.array() * s.i.array() * (Scalar(1) - s.g.array().square())).matrix();
      dz.middleCols(3 * kH, kH) = (go.array() * s.o.array() * (Scalar(1) - s.o.array())).matrix();
      carry_c = (gc.array() * s.f.array()).matrix();
      wx.grad.noalias() += s.x.transpose() * dz;
      wh.grad.noalias() += s.h_prev.transpose() * dz;
      b.grad.row(0) += dz.colwise().sum();
      gxs[t] = dz * wx.value.transpose();
      carry_h = dz * wh.value.transpose();
    }
    return gxs;
  }

  void collect(nn::ParamList<Scalar>& out) override {
    out.push_back(&wx);
    out.push_back(&wh);
    out.push_back(&b);
  }
};

/// Recurrent cell: n0 = tanh(x Wx + h Wh + b0); node j in 1..3 sums its
/// inbound edges op(n_pred We + be); h = mean(n1..n3).
template <typename Scalar>
struct CellDirection final : Calibrator<Scalar>::Direction {
  using Mat = nn::Mat<Scalar>;
  struct Edge {
    int node = 0, pred = 0;
    std::vector<RnnOp> ops;
    std::unique_ptr<nn::Parameter<Scalar>> w, b;
  };
  struct EdgeCache {
    Mat z;
    std::vector<Mat> y;
    std::vector<char> computed;
  };
  struct Step {
    Mat x, h_prev;
    std::array<Mat, kRnnNodes> n;
    std::vector<EdgeCache> edges;
  };

  bool search;
  nn::Parameter<Scalar> wx, wh, b0;
  std::vector<Edge> edges;
  std::vector<Step> steps;

  CellDirection(const RnnGene* gene, std::mt19937_64& rng, const std::string& name)
      : search(gene == nullptr), wx(name + ".wx", kH, kH), wh(name + ".wh", kH, kH), b0(name + ".b0", 1, kH) {
    init(wx, rng, kH);
    init(wh, rng, kH);
    const auto add = [&](int node, int pred, std::vector<RnnOp> ops) {
      Edge e;
      e.node = node;
      e.pred = pred;
      e.ops = std::move(ops);
      const std::string en = name + ".e" + std::to_string(rnn_edge(node, pred));
      e.w = std::make_unique<nn::Parameter<Scalar>>(en + ".w", kH, kH);
      e.b = std::make_unique<nn::Parameter<Scalar>>(en + ".b", 1, kH);
      init(*e.w, rng, kH);
      edges.push_back(std::move(e));
    };
    if (search) {
      const std::vector<RnnOp> all = {RnnOp::None, RnnOp::Identity, RnnOp::Tanh, RnnOp::Relu, RnnOp::Sigmoid};
      for (int j = 1; j < kRnnNodes; ++j)
        for (int pred = 0; pred < j; ++pred) add(j, pred, all);
    } else {
      for (int j = 1; j < kRnnNodes; ++j) {
        const auto& [pred, op] = gene->nodes[j - 1];
        if (pred < 0 || pred >= j || op == RnnOp::None) throw InvalidConfigError("invalid rnn genotype entry");
        add(j, pred, {op});
      }
    }
  }

  const EdgeChoice* choice(const ArchitectureSample* sample, const Edge& e) const {
    if (!search) return nullptr;
    if (sample == nullptr) throw MissingPrerequisiteError("searchable rnn cell needs an architecture sample");
    return &sample->group(CellGroup::Rnn)[rnn_edge(e.node, e.pred)];
  }

  std::vector<Mat> forward(const std::vector<Mat>& xs, const ArchitectureSample* sample) override {
    const Eigen::Index n = xs.front().rows();
    Mat h = Mat::Zero(n, kH);
    steps.clear();
    std::vector<Mat> hs;
    for (const Mat& x : xs) {
      Step s;
      s.x = x;
      s.h_prev = h;
      Mat z0 = x * wx.value + h * wh.value;
      z0.rowwise() += b0.value.row(0);
      s.n[0] = z0.array().tanh().matrix();
      for (int j = 1; j < kRnnNodes; ++j) s.n[j] = Mat::Zero(n, kH);
      for (const auto& e : edges) {
        const EdgeChoice* ch = choice(sample, e);
        EdgeCache c;
        c.z = affine(s.n[e.pred], *e.w, *e.b);
        c.y.resize(e.ops.size());
        c.computed.assign(e.ops.size(), 0);
        for (std::size_t o = 0; o < e.ops.size(); ++o) {
          const double w = ch ? ch->weights[static_cast<Eigen::Index>(o)] : 1.0;
          if (ch && !ch->dense && static_cast<int>(o) != ch->index) {
            if (w != 0.0) s.n[e.node].array() += static_cast<Scalar>(w);
            continue;
          }
          c.y[o] = activate(e.ops[o], c.z);
          c.computed[o] = 1;
          if (w != 0.0) s.n[e.node] += static_cast<Scalar>(w) * c.y[o];
        }
        s.edges.push_back(std::move(c));
      }
      h = (s.n[1] + s.n[2] + s.n[3]) / Scalar(3);
      hs.push_back(h);
      steps.push_back(std::move(s));
    }
    return hs;
  }

  std::vector<Mat> backward(const std::vector<Mat>& ghs, ArchitectureSample* sample) override {
    const Eigen::Index n = ghs.front().rows();
    Mat carry = Mat::Zero(n, kH);
    std::vector<Mat> gxs(steps.size());
    for (std::size_t t = steps.size(); t-- > 0;) {
      const Step& s = steps[t];
      const Mat gh = ghs[t] + carry;
      std::array<Mat, kRnnNodes> gn;
      gn[0] = Mat::Zero(n, kH);
      for (int j = 1; j < kRnnNodes; ++j) gn[j] = gh / Scalar(3);
      for (std::size_t ei = edges.size(); ei-- > 0;) {
        const Edge& e = edges[ei];
        const EdgeCache& c = s.edges[ei];
        EdgeChoice* ch = search ? &sample->group(CellGroup::Rnn)[rnn_edge(e.node, e.pred)] : nullptr;
        const Mat& g = gn[e.node];
        Mat gz = Mat::Zero(n, kH);
        for (std::size_t o = 0; o < e.ops.size(); ++o) {
          const auto oi = static_cast<Eigen::Index>(o);
          const double w = ch ? ch->weights[oi] : 1.0;
          if (!c.computed[o]) {
            if (ch) ch->weight_grad[oi] += static_cast<double>(g.sum());
            continue;
          }
          if (ch) ch->weight_grad[oi] += static_cast<double>(g.cwiseProduct(c.y[o]).sum());
          if (w != 0.0) gz += static_cast<Scalar>(w) * activate_backward(e.ops[o], c.z, c.y[o], g);
        }
        e.w->grad.noalias() += s.n[e.pred].transpose() * gz;
        e.b->grad.row(0) += gz.colwise().sum();
        gn[e.pred].noalias() += gz * e.w->value.transpose();
      }
      const Mat gz0 = (gn[0].array() * (Scalar(1) - s.n[0].array().square())).matrix();
      wx.grad.noalias() += s.x.transpose() * gz0;
      wh.grad.noalias() += s.h_prev.transpose() * gz0;
      b0.grad.row(0) += gz0.colwise().sum();
      gxs[t] = gz0 * wx.value.transpose();
      carry = gz0 * wh.value.transpose();
    }
    return gxs;
  }

  void collect(nn::ParamList<Scalar>& out) override {
    out.push_back(&wx);
    out.push_back(&wh);
    out.push_back(&b0);
    for (auto& e : edges) {
      out.push_back(e.w.get());
      out.push_back(e.b.get());
    }
  }
};

}  // namespace

template <typename Scalar>
Calibrator<Scalar>::Calibrator(RnnMode mode, std::mt19937_64& rng) : mode_(mode) {
  if (mode == RnnMode::None) return;
  if (mode == RnnMode::Lstm) {
    fwd_ = std::make_unique<LstmDirection<Scalar>>(rng, "rnn.fwd");
    bwd_ = std::make_unique<LstmDirection<Scalar>>(rng, "rnn.bwd");
  } else {
    search_ = true;
    fwd_ = std::make_unique<CellDirection<Scalar>>(nullptr, rng, "rnn.fwd");
    bwd_ = std::make_unique<CellDirection<Scalar>>(nullptr, rng, "rnn.bwd");
  }
  out_ = nn::Linear<Scalar>(kHidden, kActions, rng, "rnn.out");
}

template <typename Scalar>
Calibrator<Scalar>::Calibrator(const RnnGene& gene, std::mt19937_64& rng) : mode_(RnnMode::Searched) {
  fwd_ = std::make_unique<CellDirection<Scalar>>(&gene, rng, "rnn.fwd");
  bwd_ = std::make_unique<CellDirection<Scalar>>(&gene, rng, "rnn.bwd");
  out_ = nn::Linear<Scalar>(kHidden, kActions, rng, "rnn.out");
}

template <typename Scalar>
Calibrator<Scalar>::~Calibrator() = default;
template <typename Scalar>
Calibrator<Scalar>::Calibrator(Calibrator&&) noexcept = default;
template <typename Scalar>
Calibrator<Scalar>& Calibrator<Scalar>::operator=(Calibrator&&) noexcept = default;

template <typename Scalar>
typename Calibrator<Scalar>::Mat Calibrator<Scalar>::forward(const Mat& q, const ArchitectureSample* sample) {
  if (q.rows() % kAgents != 0 || q.cols() != kActions) throw ShapeMismatchError("Q set must have 8 columns per agent row");
  if (mode_ == RnnMode::None) return q;
  states_ = static_cast<int>(q.rows() / kAgents);
  std::vector<Mat> xs(kAgents);
  for (int t = 0; t < kAgents; ++t) {
    xs[t].resize(states_, kActions);
    for (int b = 0; b < states_; ++b) xs[t].row(b) = q.row(b * kAgents + t);
  }
  const std::vector<Mat> hf = fwd_->forward(xs, sample);
  const std::vector<Mat> hb = bwd_->forward(std::vector<Mat>(xs.rbegin(), xs.rend()), sample);
  summed_.resize(q.rows(), kHidden);
  for (int t = 0; t < kAgents; ++t)
    for (int b = 0; b < states_; ++b) summed_.row(b * kAgents + t) = hf[t].row(b) + hb[kAgents - 1 - t].row(b);
  return out_.forward(summed_);
}

template <typename Scalar>
typename Calibrator<Scalar>::Mat Calibrator<Scalar>::backward(const Mat& gq, ArchitectureSample* sample) {
  if (mode_ == RnnMode::None) return gq;
  const Mat gs = out_.backward(summed_, gq);
  std::vector<Mat> ghf(kAgents), ghb(kAgents);
  for (int t = 0; t < kAgents; ++t) {
    ghf[t].resize(states_, kHidden);
    for (int b = 0; b < states_; ++b) ghf[t].row(b) = gs.row(b * kAgents + t);
    ghb[kAgents - 1 - t] = ghf[t];
  }
  const std::vector<Mat> gxf = fwd_->backward(ghf, sample);
  const std::vector<Mat> gxb = bwd_->backward(ghb, sample);
  Mat gx(gq.rows(), kActions);
  for (int t = 0; t < kAgents; ++t)
    for (int b = 0; b < states_; ++b) gx.row(b * kAgents + t) = gxf[t].row(b) + gxb[kAgents - 1 - t].row(b);
  return gx;
}

template <typename Scalar>
nn::ParamList<Scalar> Calibrator<Scalar>::params() {
  nn::ParamList<Scalar> out;
  if (mode_ == RnnMode::None) return out;
  fwd_->collect(out);
  bwd_->collect(out);
  out_.collect(out);
  return out;
}

template class Calibrator<float>;
template class Calibrator<double>;

}  // namespace mplane::nas
