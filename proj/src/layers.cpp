#include "mplane/nn/layers.hpp"

#include "mplane/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mplane::nn {

template <typename Scalar>
void Parameter<Scalar>::init_uniform(std::mt19937_64& rng, double bound) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < value.size(); ++i) value.data()[i] = static_cast<Scalar>(u(rng));
  grad.setZero(value.rows(), value.cols());
}

namespace {

template <typename Scalar>
inline Scalar relu_if(Scalar v, bool on) {
  return on && v < Scalar(0) ? Scalar(0) : v;
}

// Output positions o in [lo, hi) with 0 <= o * stride + offset < in.
struct Range {
  int lo, hi;
};
inline Range valid_range(int offset, int stride, int in, int out) {
  int lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  int hi = in - 1 - offset < 0 ? 0 : (in - 1 - offset) / stride + 1;
  lo = std::min(lo, out);
  hi = std::clamp(hi, lo, out);
  return {lo, hi};
}

template <typename Scalar>
Mat<Scalar> im2col(const Tensor<Scalar>& x, const ConvGeometry& g, bool pre_relu, int ho, int wo) {
  const int k = g.kernel, pad = g.pad();
  const Eigen::Index rows = static_cast<Eigen::Index>(x.n) * ho * wo;
  Mat<Scalar> col(rows, static_cast<Eigen::Index>(x.c) * k * k);
  for (int ch = 0; ch < x.c; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        Scalar* dst = col.col((ch * k + ky) * k + kx).data();
        for (int i = 0; i < x.n; ++i) {
          const Scalar* src = x.channel(i, ch);
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * g.stride - pad + ky * g.dilation;
            if (iy < 0 || iy >= x.h) {
              std::fill(dst, dst + wo, Scalar(0));
              dst += wo;
              continue;
            }
            const Scalar* row = src + iy * x.w;
            const int off = kx * g.dilation - pad;
            const Range r = valid_range(off, g.stride, x.w, wo);
            std::fill(dst, dst + r.lo, Scalar(0));
            for (int ox = r.lo; ox < r.hi; ++ox) dst[ox] = relu_if(row[ox * g.stride + off], pre_relu);
            std::fill(dst + r.hi, dst + wo, Scalar(0));
            dst += wo;
          }
        }
      }
  return col;
}

template <typename Scalar>
void col2im(const Mat<Scalar>& dcol, const ConvGeometry& g, int ho, int wo, Tensor<Scalar>& gx) {
  const int k = g.kernel, pad = g.pad();
  for (int ch = 0; ch < gx.c; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* src = dcol.col((ch * k + ky) * k + kx).data();
        for (int i = 0; i < gx.n; ++i) {
          Scalar* dst = gx.channel(i, ch);
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * g.stride - pad + ky * g.dilation;
            if (iy < 0 || iy >= gx.h) {
              src += wo;
              continue;
            }
            Scalar* row = dst + iy * gx.w;
            const int off = kx * g.dilation - pad;
            const Range r = valid_range(off, g.stride, gx.w, wo);
            for (int ox = r.lo; ox < r.hi; ++ox) row[ox * g.stride + off] += src[ox];
            src += wo;
          }
        }
      }
}

template <typename Scalar>
void apply_relu_mask(const Tensor<Scalar>& x, Tensor<Scalar>& g) {
  g.data = (x.data.array() > Scalar(0)).select(g.data, Scalar(0));
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Mat<Scalar>& weight, const ConvGeometry& g, bool pre_relu) {
  const int ho = g.out_size(x.h), wo = g.out_size(x.w);
  const int cout = static_cast<int>(weight.cols());
  if (weight.rows() != static_cast<Eigen::Index>(x.c) * g.kernel * g.kernel)
    throw ShapeMismatchError("conv2d: weight rows do not match input channels");
  const Mat<Scalar> col = im2col(x, g, pre_relu, ho, wo);
  const Mat<Scalar> out = col * weight;
  Tensor<Scalar> y(x.n, cout, ho, wo);
  const Eigen::Index hw = static_cast<Eigen::Index>(ho) * wo;
  for (int i = 0; i < x.n; ++i)
    for (int co = 0; co < cout; ++co)
      std::copy_n(out.col(co).data() + i * hw, hw, y.channel(i, co));
  return y;
}

template <typename Scalar>
Tensor<Scalar> conv2d_backward(const Tensor<Scalar>& x, const Mat<Scalar>& weight, const ConvGeometry& g,
                               bool pre_relu, const Tensor<Scalar>& gy, Mat<Scalar>& weight_grad) {
  const int ho = gy.h, wo = gy.w, cout = gy.c;
  const Eigen::Index hw = static_cast<Eigen::Index>(ho) * wo;
  Mat<Scalar> gall(static_cast<Eigen::Index>(x.n) * hw, cout);
  for (int i = 0; i < x.n; ++i)
    for (int co = 0; co < cout; ++co) std::copy_n(gy.channel(i, co), hw, gall.col(co).data() + i * hw);
  const Mat<Scalar> col = im2col(x, g, pre_relu, ho, wo);
  weight_grad.noalias() += col.transpose() * gall;
  const Mat<Scalar> dcol = gall * weight.transpose();
  Tensor<Scalar> gx = Tensor<Scalar>::like(x);
  col2im(dcol, g, ho, wo, gx);
  if (pre_relu) apply_relu_mask(x, gx);
  return gx;
}

template <typename Scalar>
Tensor<Scalar> depthwise_conv2d(const Tensor<Scalar>& x, const Mat<Scalar>& weight, const ConvGeometry& g,
                                bool pre_relu) {
  const int k = g.kernel, pad = g.pad();
  const int ho = g.out_size(x.h), wo = g.out_size(x.w);
  Tensor<Scalar> y(x.n, x.c, ho, wo);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch) {
      const Scalar* src = x.channel(i, ch);
      Scalar* dst = y.channel(i, ch);
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const Scalar wgt = weight(ch, ky * k + kx);
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * g.stride - pad + ky * g.dilation;
            if (iy < 0 || iy >= x.h) continue;
            const Scalar* row = src + iy * x.w;
            Scalar* out = dst + oy * wo;
            const int off = kx * g.dilation - pad;
            const Range r = valid_range(off, g.stride, x.w, wo);
            for (int ox = r.lo; ox < r.hi; ++ox) out[ox] += wgt * relu_if(row[ox * g.stride + off], pre_relu);
          }
        }
    }
  return y;
}

template <typename Scalar>
Tensor<Scalar> depthwise_conv2d_backward(const Tensor<Scalar>& x, const Mat<Scalar>& weight,
                                         const ConvGeometry& g, bool pre_relu, const Tensor<Scalar>& gy,
                                         Mat<Scalar>& weight_grad) {
  const int k = g.kernel, pad = g.pad();
  const int ho = gy.h, wo = gy.w;
  Tensor<Scalar> gx = Tensor<Scalar>::like(x);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch) {
      const Scalar* src = x.channel(i, ch);
      const Scalar* gsrc = gy.channel(i, ch);
      Scalar* gdst = gx.channel(i, ch);
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const Scalar wgt = weight(ch, ky * k + kx);
          Scalar acc(0);
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * g.stride - pad + ky * g.dilation;
            if (iy < 0 || iy >= x.h) continue;
            const int off = kx * g.dilation - pad;
            const Range r = valid_range(off, g.stride, x.w, wo);
            const Scalar* row = src + iy * x.w;
            Scalar* grow = gdst + iy * x.w;
            const Scalar* go = gsrc + oy * wo;
            for (int ox = r.lo; ox < r.hi; ++ox) {
              const int ix = ox * g.stride + off;
              acc += go[ox] * relu_if(row[ix], pre_relu);
              grow[ix] += go[ox] * wgt;
            }
          }
          weight_grad(ch, ky * k + kx) += acc;
        }
    }
  if (pre_relu) apply_relu_mask(x, gx);
  return gx;
}

template <typename Scalar>
Tensor<Scalar> max_pool3(const Tensor<Scalar>& x, int stride, std::vector<Eigen::Index>& argmax) {
  const int ho = (x.h - 1) / stride + 1, wo = (x.w - 1) / stride + 1;
  Tensor<Scalar> y(x.n, x.c, ho, wo);
  argmax.assign(static_cast<std::size_t>(y.size()), 0);
  std::size_t o = 0;
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch) {
      const Eigen::Index base = x.channel(i, ch) - x.data.data();
      const Scalar* src = x.channel(i, ch);
      Scalar* dst = y.channel(i, ch);
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox, ++o) {
          Scalar best = -std::numeric_limits<Scalar>::infinity();
          Eigen::Index arg = 0;
          for (int dy = -1; dy <= 1; ++dy) {
            const int iy = oy * stride + dy;
            if (iy < 0 || iy >= x.h) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              const int ix = ox * stride + dx;
              if (ix < 0 || ix >= x.w) continue;
              const Scalar v = src[iy * x.w + ix];
              if (v > best) {
                best = v;
                arg = base + iy * x.w + ix;
              }
            }
          }
          dst[oy * wo + ox] = best;
          argmax[o] = arg;
        }
    }
  return y;
}

template <typename Scalar>
Tensor<Scalar> max_pool3_backward(const Tensor<Scalar>& x, const std::vector<Eigen::Index>& argmax,
                                  const Tensor<Scalar>& gy) {
  Tensor<Scalar> gx = Tensor<Scalar>::like(x);
  for (Eigen::Index o = 0; o < gy.size(); ++o) gx.data[argmax[static_cast<std::size_t>(o)]] += gy.data[o];
  return gx;
}

template <typename Scalar>
Tensor<Scalar> avg_pool3(const Tensor<Scalar>& x, int stride) {
  const int ho = (x.h - 1) / stride + 1, wo = (x.w - 1) / stride + 1;
  Tensor<Scalar> y(x.n, x.c, ho, wo);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch) {
      const Scalar* src = x.channel(i, ch);
      Scalar* dst = y.channel(i, ch);
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          Scalar sum(0);
          int count = 0;
          for (int iy = std::max(0, oy * stride - 1); iy <= std::min(x.h - 1, oy * stride + 1); ++iy)
            for (int ix = std::max(0, ox * stride - 1); ix <= std::min(x.w - 1, ox * stride + 1); ++ix) {
              sum += src[iy * x.w + ix];
              ++count;
            }
          dst[oy * wo + ox] = sum / Scalar(count);
        }
    }
  return y;
}

template <typename Scalar>
Tensor<Scalar> avg_pool3_backward(const Tensor<Scalar>& x, int stride, const Tensor<Scalar>& gy) {
  Tensor<Scalar> gx = Tensor<Scalar>::like(x);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch) {
      const Scalar* g = gy.channel(i, ch);
      Scalar* dst = gx.channel(i, ch);
      for (int oy = 0; oy < gy.h; ++oy)
        for (int ox = 0; ox < gy.w; ++ox) {
          const int y0 = std::max(0, oy * stride - 1), y1 = std::min(x.h - 1, oy * stride + 1);
          const int x0 = std::max(0, ox * stride - 1), x1 = std::min(x.w - 1, ox * stride + 1);
          const Scalar share = g[oy * gy.w + ox] / Scalar((y1 - y0 + 1) * (x1 - x0 + 1));
          for (int iy = y0; iy <= y1; ++iy)
            for (int ix = x0; ix <= x1; ++ix) dst[iy * x.w + ix] += share;
        }
    }
  return gx;
}

template <typename Scalar>
Tensor<Scalar> avg_pool_block(const Tensor<Scalar>& x, int factor) {
  const int ho = x.h / factor, wo = x.w / factor;
  if (ho < 1 || wo < 1) throw ShapeMismatchError("block pooling would produce an empty map");
  Tensor<Scalar> y(x.n, x.c, ho, wo);
  const Scalar scale = Scalar(1) / Scalar(factor * factor);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch) {
      const Scalar* src = x.channel(i, ch);
      Scalar* dst = y.channel(i, ch);
      for (int oy = 0; oy < ho; ++oy)
        for (int dy = 0; dy < factor; ++dy) {
          const Scalar* row = src + (oy * factor + dy) * x.w;
          for (int ox = 0; ox < wo; ++ox) {
            Scalar s(0);
            for (int dx = 0; dx < factor; ++dx) s += row[ox * factor + dx];
            dst[oy * wo + ox] += s * scale;
          }
        }
    }
  return y;
}

template <typename Scalar>
Tensor<Scalar> avg_pool_block_backward(const Tensor<Scalar>& x, int factor, const Tensor<Scalar>& gy) {
  Tensor<Scalar> gx = Tensor<Scalar>::like(x);
  const Scalar scale = Scalar(1) / Scalar(factor * factor);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch) {
      const Scalar* g = gy.channel(i, ch);
      Scalar* dst = gx.channel(i, ch);
      for (int oy = 0; oy < gy.h; ++oy)
        for (int dy = 0; dy < factor; ++dy) {
          Scalar* row = dst + (oy * factor + dy) * x.w;
          for (int ox = 0; ox < gy.w; ++ox)
            for (int dx = 0; dx < factor; ++dx) row[ox * factor + dx] = g[oy * gy.w + ox] * scale;
        }
    }
  return gx;
}

namespace {
constexpr double kNormEps = 1e-5;
}

template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x) {
  Tensor<Scalar> y = Tensor<Scalar>::like(x);
  const Eigen::Index m = x.sample_size();
  for (int i = 0; i < x.n; ++i) {
    const auto xs = x.data.segment(i * m, m).array();
    const Scalar mu = xs.mean();
    const Scalar var = (xs - mu).square().mean();
    const Scalar inv = Scalar(1) / std::sqrt(var + Scalar(kNormEps));
    y.data.segment(i * m, m).array() = (xs - mu) * inv;
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> layer_norm_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gy) {
  Tensor<Scalar> gx = Tensor<Scalar>::like(x);
  const Eigen::Index m = x.sample_size();
  for (int i = 0; i < x.n; ++i) {
    const auto xs = x.data.segment(i * m, m).array();
    const auto g = gy.data.segment(i * m, m).array();
    const Scalar mu = xs.mean();
    const Scalar var = (xs - mu).square().mean();
    const Scalar inv = Scalar(1) / std::sqrt(var + Scalar(kNormEps));
    const auto xhat = (xs - mu) * inv;
    const Scalar gmean = g.mean();
    const Scalar gxhat = (g * xhat).mean();
    gx.data.segment(i * m, m).array() = inv * (g - gmean - xhat * gxhat);
  }
  return gx;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  Tensor<Scalar> y = Tensor<Scalar>::like(x);
  y.data = x.data.cwiseMax(Scalar(0));
  return y;
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gy) {
  Tensor<Scalar> gx = gy;
  apply_relu_mask(x, gx);
  return gx;
}

template <typename Scalar>
Mat<Scalar> global_avg_pool(const Tensor<Scalar>& x) {
  Mat<Scalar> out(x.n, x.c);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch)
      out(i, ch) = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(x.channel(i, ch), x.plane()).mean();
  return out;
}

template <typename Scalar>
Tensor<Scalar> global_avg_pool_backward(const Tensor<Scalar>& x, const Mat<Scalar>& gy) {
  Tensor<Scalar> gx = Tensor<Scalar>::like(x);
  const Scalar inv = Scalar(1) / Scalar(x.plane());
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch) std::fill_n(gx.channel(i, ch), x.plane(), gy(i, ch) * inv);
  return gx;
}

// ---- ops

template <typename Scalar>
Tensor<Scalar> ZeroOp<Scalar>::forward(const Tensor<Scalar>& x) {
  if (stride_ == 1) return Tensor<Scalar>::like(x);
  return Tensor<Scalar>(x.n, x.c, x.h / stride_, x.w / stride_);
}

template <typename Scalar>
Tensor<Scalar> ZeroOp<Scalar>::backward(const Tensor<Scalar>& x, const Tensor<Scalar>&) {
  return Tensor<Scalar>::like(x);
}

template <typename Scalar>
ReluConvOp<Scalar>::ReluConvOp(int channels_in, int channels_out, ConvGeometry g, std::mt19937_64& rng,
                               std::string name)
    : geom_(g), weight_(std::move(name), static_cast<Eigen::Index>(channels_in) * g.kernel * g.kernel, channels_out) {
  weight_.init_uniform(rng, std::sqrt(6.0 / static_cast<double>(weight_.value.rows())));
}

template <typename Scalar>
Tensor<Scalar> ReluConvOp<Scalar>::forward(const Tensor<Scalar>& x) {
  return conv2d(x, weight_.value, geom_, true);
}

template <typename Scalar>
Tensor<Scalar> ReluConvOp<Scalar>::backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gy) {
  return conv2d_backward(x, weight_.value, geom_, true, gy, weight_.grad);
}

template <typename Scalar>
SepConvOp<Scalar>::SepConvOp(int channels, ConvGeometry g, std::mt19937_64& rng, std::string name)
    : geom_(g),
      depthwise_(name + ".dw", channels, g.kernel * g.kernel),
      pointwise_(name + ".pw", channels, channels) {
  depthwise_.init_uniform(rng, std::sqrt(6.0 / (g.kernel * g.kernel)));
  pointwise_.init_uniform(rng, std::sqrt(3.0 / channels));
}

template <typename Scalar>
Tensor<Scalar> SepConvOp<Scalar>::forward(const Tensor<Scalar>& x) {
  mid_ = depthwise_conv2d(x, depthwise_.value, geom_, true);
  return conv2d(mid_, pointwise_.value, ConvGeometry{1, 1, 1}, false);
}

template <typename Scalar>
Tensor<Scalar> SepConvOp<Scalar>::backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gy) {
  const Tensor<Scalar> gmid = conv2d_backward(mid_, pointwise_.value, ConvGeometry{1, 1, 1}, false, gy, pointwise_.grad);
  return depthwise_conv2d_backward(x, depthwise_.value, geom_, true, gmid, depthwise_.grad);
}

template <typename Scalar>
Tensor<Scalar> PoolOp<Scalar>::forward(const Tensor<Scalar>& x) {
  return max_ ? max_pool3(x, stride_, argmax_) : avg_pool3(x, stride_);
}

template <typename Scalar>
Tensor<Scalar> PoolOp<Scalar>::backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gy) {
  return max_ ? max_pool3_backward(x, argmax_, gy) : avg_pool3_backward(x, stride_, gy);
}

template <typename Scalar>
PreprocessOp<Scalar>::PreprocessOp(int channels_in, int channels_out, bool reduce, std::mt19937_64& rng,
                                   std::string name)
    : reduce_(reduce), weight_(std::move(name), channels_in, channels_out) {
  weight_.init_uniform(rng, std::sqrt(6.0 / channels_in));
}

template <typename Scalar>
Tensor<Scalar> PreprocessOp<Scalar>::forward(const Tensor<Scalar>& x) {
  pooled_ = relu(x);
  if (reduce_) pooled_ = avg_pool_block(pooled_, 2);
  conv_ = conv2d(pooled_, weight_.value, ConvGeometry{1, 1, 1}, false);
  return layer_norm(conv_);
}

template <typename Scalar>
Tensor<Scalar> PreprocessOp<Scalar>::backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gy) {
  Tensor<Scalar> g = layer_norm_backward(conv_, gy);
  g = conv2d_backward(pooled_, weight_.value, ConvGeometry{1, 1, 1}, false, g, weight_.grad);
  if (reduce_) g = avg_pool_block_backward(x, 2, g);
  return relu_backward(x, g);
}

template <typename Scalar>
StemOp<Scalar>::StemOp(int channels_in, int channels_out, int pool, std::mt19937_64& rng)
    : pool_(pool), weight_("stem.w", static_cast<Eigen::Index>(channels_in) * 9, channels_out),
      bias_("stem.b", 1, channels_out) {
  weight_.init_uniform(rng, std::sqrt(6.0 / static_cast<double>(weight_.value.rows())));
}

template <typename Scalar>
Tensor<Scalar> StemOp<Scalar>::forward(const Tensor<Scalar>& x) {
  pooled_ = pool_ > 1 ? avg_pool_block(x, pool_) : x;
  Tensor<Scalar> y = conv2d(pooled_, weight_.value, ConvGeometry{3, 1, 1}, false);
  for (int i = 0; i < y.n; ++i)
    for (int ch = 0; ch < y.c; ++ch) {
      Scalar* p = y.channel(i, ch);
      for (Eigen::Index j = 0; j < y.plane(); ++j) p[j] += bias_.value(0, ch);
    }
  return y;
}

template <typename Scalar>
Tensor<Scalar> StemOp<Scalar>::backward(const Tensor<Scalar>& x, const Tensor<Scalar>& gy) {
  for (int i = 0; i < gy.n; ++i)
    for (int ch = 0; ch < gy.c; ++ch) {
      const Scalar* g = gy.channel(i, ch);
      Scalar s(0);
      for (Eigen::Index j = 0; j < gy.plane(); ++j) s += g[j];
      bias_.grad(0, ch) += s;
    }
  Tensor<Scalar> g = conv2d_backward(pooled_, weight_.value, ConvGeometry{3, 1, 1}, false, gy, weight_.grad);
  return pool_ > 1 ? avg_pool_block_backward(x, pool_, g) : g;
}

template <typename Scalar>
Linear<Scalar>::Linear(int in, int out, std::mt19937_64& rng, std::string name, double scale)
    : weight_(name + ".w", in, out), bias_(name + ".b", 1, out) {
  weight_.init_uniform(rng, scale * std::sqrt(3.0 / in));
}

template <typename Scalar>
Mat<Scalar> Linear<Scalar>::forward(const Mat<Scalar>& x) const {
  Mat<Scalar> y = x * weight_.value;
  y.rowwise() += bias_.value.row(0);
  return y;
}

template <typename Scalar>
Mat<Scalar> Linear<Scalar>::backward(const Mat<Scalar>& x, const Mat<Scalar>& gy) {
  weight_.grad.noalias() += x.transpose() * gy;
  bias_.grad.row(0) += gy.colwise().sum();
  return gy * weight_.value.transpose();
}

template <typename Scalar>
Adam<Scalar>::Adam(ParamList<Scalar> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto* p : params_) {
    m_.push_back(Mat<Scalar>::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat<Scalar>::Zero(p->value.rows(), p->value.cols()));
  }
}

template <typename Scalar>
void Adam<Scalar>::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const Scalar step = static_cast<Scalar>(lr_ * std::sqrt(c2) / c1);
  const Scalar b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
  const Scalar eps = static_cast<Scalar>(eps_ * std::sqrt(c2));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    if (p.grad.isZero(0)) continue;
    m_[i] = b1 * m_[i] + (Scalar(1) - b1) * p.grad;
    v_[i] = b2 * v_[i] + (Scalar(1) - b2) * p.grad.cwiseAbs2();
    p.value.array() -= step * m_[i].array() / (v_[i].array().sqrt() + eps);
  }
}

template <typename Scalar>
void Adam<Scalar>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template <typename Scalar>
void copy_values(const ParamList<Scalar>& from, const ParamList<Scalar>& to) {
  if (from.size() != to.size()) throw ShapeMismatchError("parameter lists differ in length");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i]->value.rows() != to[i]->value.rows() || from[i]->value.cols() != to[i]->value.cols())
      throw ShapeMismatchError("parameter shapes differ: " + from[i]->name);
    to[i]->value = from[i]->value;
  }
}

template <typename Scalar>
std::size_t count_parameters(const ParamList<Scalar>& params) {
  std::size_t n = 0;
  for (auto* p : params) n += static_cast<std::size_t>(p->value.size());
  return n;
}

#define MPLANE_INSTANTIATE(S)                                                                            \
  template struct Parameter<S>;                                                                          \
  template Tensor<S> conv2d(const Tensor<S>&, const Mat<S>&, const ConvGeometry&, bool);                 \
  template Tensor<S> conv2d_backward(const Tensor<S>&, const Mat<S>&, const ConvGeometry&, bool,         \
                                     const Tensor<S>&, Mat<S>&);                                         \
  template Tensor<S> depthwise_conv2d(const Tensor<S>&, const Mat<S>&, const ConvGeometry&, bool);       \
  template Tensor<S> depthwise_conv2d_backward(const Tensor<S>&, const Mat<S>&, const ConvGeometry&,     \
                                               bool, const Tensor<S>&, Mat<S>&);                         \
  template Tensor<S> max_pool3(const Tensor<S>&, int, std::vector<Eigen::Index>&);                       \
  template Tensor<S> max_pool3_backward(const Tensor<S>&, const std::vector<Eigen::Index>&,              \
                                        const Tensor<S>&);                                               \
  template Tensor<S> avg_pool3(const Tensor<S>&, int);                                                   \
  template Tensor<S> avg_pool3_backward(const Tensor<S>&, int, const Tensor<S>&);                        \
  template Tensor<S> avg_pool_block(const Tensor<S>&, int);                                              \
  template Tensor<S> avg_pool_block_backward(const Tensor<S>&, int, const Tensor<S>&);                   \
  template Tensor<S> layer_norm(const Tensor<S>&);                                                       \
  template Tensor<S> layer_norm_backward(const Tensor<S>&, const Tensor<S>&);                            \
  template Tensor<S> relu(const Tensor<S>&);                                                             \
  template Tensor<S> relu_backward(const Tensor<S>&, const Tensor<S>&);                                  \
  template Mat<S> global_avg_pool(const Tensor<S>&);                                                     \
  template Tensor<S> global_avg_pool_backward(const Tensor<S>&, const Mat<S>&);                          \
  template class ZeroOp<S>;                                                                              \
  template class ReluConvOp<S>;                                                                          \
  template class SepConvOp<S>;                                                                           \
  template class PoolOp<S>;                                                                              \
  template class PreprocessOp<S>;                                                                        \
  template class StemOp<S>;                                                                              \
  template class Linear<S>;                                                                              \
  template class Adam<S>;                                                                                \
  template void copy_values(const ParamList<S>&, const ParamList<S>&);                                   \
  template std::size_t count_parameters(const ParamList<S>&);

MPLANE_INSTANTIATE(float)
MPLANE_INSTANTIATE(double)

#undef MPLANE_INSTANTIATE

}  // namespace mplane::nn
