#pragma once

#include "mplane/nn/tensor.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace mplane::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Trainable tensor with its gradient accumulator.
template <typename Scalar>
struct Parameter {
  std::string name;
  Mat<Scalar> value;
  Mat<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Mat<Scalar>::Zero(rows, cols)), grad(Mat<Scalar>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
  /// Uniform(-bound, bound) initialization.
  void init_uniform(std::mt19937_64& rng, double bound);
};

template <typename Scalar>
using ParamList = std::vector<Parameter<Scalar>*>;

struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int dilation = 1;
  int pad() const { return dilation * (kernel - 1) / 2; }
  int out_size(int in) const { return (in + 2 * pad() - dilation * (kernel - 1) - 1) / stride + 1; }
};

// Kernels. `pre_relu` applies max(0, x) to the input on the fly.

/// Dense convolution; weight is (Cin*k*k) x Cout.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Mat<Scalar>& weight, const ConvGeometry& g,
                      bool pre_relu);
template <typename Scalar>
Tensor<Scalar> conv2d_backward(const Tensor<Scalar>& x, const Mat<Scalar>& weight, const ConvGeometry& g,
                               bool pre_relu, const Tensor<Scalar>& gy, Mat<Scalar>& weight_grad);

/// Depthwise convolution; weight is C x (k*k).
template <typename Scalar>
Tensor<Scalar> depthwise_conv2d(const Tensor<Scalar>& x, const Mat<Scalar>& weight, const ConvGeometry& g,
                                bool pre_relu);
template <typename Scalar>
Tensor<Scalar> depthwise_conv2d_backward(const Tensor<Scalar>& x, const Mat<Scalar>& weight,
                                         const ConvGeometry& g, bool pre_relu, const Tensor<Scalar>& gy,
                                         Mat<Scalar>& weight_grad);

/// 3x3 max pooling with padding 1; `argmax` receives flat input offsets.
template <typename Scalar>
Tensor<Scalar> max_pool3(const Tensor<Scalar>& x, int stride, std::vector<Eigen::Index>& argmax);
template <typename Scalar>
Tensor<Scalar> max_pool3_backward(const Tensor<Scalar>& x, const std::vector<Eigen::Index>& argmax,
                                  const Tensor<Scalar>& gy);

/// 3x3 average pooling with padding 1, padding excluded from the count.
template <typename Scalar>
Tensor<Scalar> avg_pool3(const Tensor<Scalar>& x, int stride);
template <typename Scalar>
Tensor<Scalar> avg_pool3_backward(const Tensor<Scalar>& x, int stride, const Tensor<Scalar>& gy);

/// Non-overlapping `factor` x `factor` average pooling (floor).
template <typename Scalar>
Tensor<Scalar> avg_pool_block(const Tensor<Scalar>& x, int factor);
template <typename Scalar>
Tensor<Scalar> avg_pool_block_backward(const Tensor<Scalar>& x, int factor, const Tensor<Scalar>& gy);

/// Per-sample normalization over C*H*W to zero mean and unit variance.
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> layer_norm_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gy);

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gy);

/// Global average pool to an N x C matrix.
template <typename Scalar>
Mat<Scalar> global_avg_pool(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> global_avg_pool_backward(const Tensor<Scalar>& x, const Mat<Scalar>& gy);

/// A differentiable unit. Backward receives the same input as forward;
/// ops may cache intermediates because each instance runs at most once per
/// network forward.
template <typename Scalar>
class Op {
 public:
  virtual ~Op() = default;
  virtual Tensor<Scalar> forward(const Tensor<Scalar>& x) = 0;
  virtual Tensor<Scalar> backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gy) = 0;
  virtual void collect(ParamList<Scalar>&) {}
};

template <typename Scalar>
class ZeroOp final : public Op<Scalar> {
 public:
  explicit ZeroOp(int stride) : stride_(stride) {}
  Tensor<Scalar> forward(const Tensor<Scalar>& x) override;
  Tensor<Scalar> backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gy) override;

 private:
  int stride_;
};

template <typename Scalar>
class IdentityOp final : public Op<Scalar> {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x) override { return x; }
  Tensor<Scalar> backward(const Tensor<Scalar>&, const Tensor<Scalar>& gy) override { return gy; }
};

/// Skip connection across a reduction: 2x2 average pooling.
template <typename Scalar>
class ReduceSkipOp final : public Op<Scalar> {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x) override { return avg_pool_block(x, 2); }
  Tensor<Scalar> backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gy) override {
    return avg_pool_block_backward(x, 2, gy);
  }
};

/// ReLU -> k x k convolution (no bias).
template <typename Scalar>
class ReluConvOp final : public Op<Scalar> {
 public:
  ReluConvOp(int channels_in, int channels_out, ConvGeometry g, std::mt19937_64& rng, std::string name);
  Tensor<Scalar> forward(const Tensor<Scalar>& x) override;
  Tensor<Scalar> backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gy) override;
  void collect(ParamList<Scalar>& out) override { out.push_back(&weight_); }

 private:
  ConvGeometry geom_;
  Parameter<Scalar> weight_;
};

/// ReLU -> depthwise k x k (optionally dilated) -> pointwise 1x1.
template <typename Scalar>
class SepConvOp final : public Op<Scalar> {
 public:
  SepConvOp(int channels, ConvGeometry g, std::mt19937_64& rng, std::string name);
  Tensor<Scalar> forward(const Tensor<Scalar>& x) override;
  Tensor<Scalar> backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gy) override;
  void collect(ParamList<Scalar>& out) override {
    out.push_back(&depthwise_);
    out.push_back(&pointwise_);
  }

 private:
  ConvGeometry geom_;
  Parameter<Scalar> depthwise_;
  Parameter<Scalar> pointwise_;
  Tensor<Scalar> mid_;
};

template <typename Scalar>
class PoolOp final : public Op<Scalar> {
 public:
  PoolOp(bool max, int stride) : max_(max), stride_(stride) {}
  Tensor<Scalar> forward(const Tensor<Scalar>& x) override;
  Tensor<Scalar> backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gy) override;

 private:
  bool max_;
  int stride_;
  std::vector<Eigen::Index> argmax_;
};

/// ReLU -> [2x2 avg pool] -> 1x1 conv -> layer norm. Maps a cell input to
/// the cell's node width.
template <typename Scalar>
class PreprocessOp final : public Op<Scalar> {
 public:
  PreprocessOp(int channels_in, int channels_out, bool reduce, std::mt19937_64& rng, std::string name);
  Tensor<Scalar> forward(const Tensor<Scalar>& x) override;
  Tensor<Scalar> backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gy) override;
  void collect(ParamList<Scalar>& out) override { out.push_back(&weight_); }

 private:
  bool reduce_;
  Parameter<Scalar> weight_;
  Tensor<Scalar> pooled_, conv_;
};

/// Block average pooling -> 3x3 conv with bias.
template <typename Scalar>
class StemOp final : public Op<Scalar> {
 public:
  StemOp(int channels_in, int channels_out, int pool, std::mt19937_64& rng);
  Tensor<Scalar> forward(const Tensor<Scalar>& x) override;
  Tensor<Scalar> backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gy) override;
  void collect(ParamList<Scalar>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  int pool_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  Tensor<Scalar> pooled_;
};

/// y = x W + b, with x of shape N x in.
template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, std::mt19937_64& rng, std::string name, double scale = 1.0);
  Mat<Scalar> forward(const Mat<Scalar>& x) const;
  /// Accumulates parameter gradients, returns dL/dx.
  Mat<Scalar> backward(const Mat<Scalar>& x, const Mat<Scalar>& gy);
  void collect(ParamList<Scalar>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }

 private:
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
};

/// Adam over a parameter list. Parameters whose gradient is exactly zero
/// (ops not evaluated in the step) are left untouched, moments included.
template <typename Scalar>
class Adam {
 public:
  Adam(ParamList<Scalar> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step();
  void zero_grad();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  ParamList<Scalar> params_;
  std::vector<Mat<Scalar>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

/// Copies values (not gradients) between structurally identical lists.
template <typename Scalar>
void copy_values(const ParamList<Scalar>& from, const ParamList<Scalar>& to);

template <typename Scalar>
std::size_t count_parameters(const ParamList<Scalar>& params);

}  // namespace mplane::nn
