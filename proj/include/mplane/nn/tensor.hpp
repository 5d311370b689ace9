#pragma once

#include <Eigen/Core>

#include <cassert>
#include <vector>

namespace mplane::nn {

/// Dense NCHW tensor.
template <typename Scalar>
struct Tensor {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  int n = 0, c = 0, h = 0, w = 0;
  Vector data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_), data(Vector::Zero(size())) {}

  static Tensor like(const Tensor& t) { return Tensor(t.n, t.c, t.h, t.w); }

  Eigen::Index size() const { return static_cast<Eigen::Index>(n) * c * h * w; }
  Eigen::Index plane() const { return static_cast<Eigen::Index>(h) * w; }
  Eigen::Index sample_size() const { return static_cast<Eigen::Index>(c) * h * w; }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

  Scalar* sample(int i) { return data.data() + i * sample_size(); }
  const Scalar* sample(int i) const { return data.data() + i * sample_size(); }
  Scalar* channel(int i, int ch) { return sample(i) + ch * plane(); }
  const Scalar* channel(int i, int ch) const { return sample(i) + ch * plane(); }
};

/// Gathers samples `rows` of `t` into a new tensor.
template <typename Scalar>
Tensor<Scalar> gather(const Tensor<Scalar>& t, const std::vector<int>& rows) {
  Tensor<Scalar> out(static_cast<int>(rows.size()), t.c, t.h, t.w);
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.data.segment(static_cast<Eigen::Index>(i) * t.sample_size(), t.sample_size()) =
        t.data.segment(rows[i] * t.sample_size(), t.sample_size());
  return out;
}

/// Adds the samples of `src` into `dst` at `rows`.
template <typename Scalar>
void scatter_add(Tensor<Scalar>& dst, const Tensor<Scalar>& src, const std::vector<int>& rows) {
  for (std::size_t i = 0; i < rows.size(); ++i)
    dst.data.segment(rows[i] * dst.sample_size(), dst.sample_size()) +=
        src.data.segment(static_cast<Eigen::Index>(i) * src.sample_size(), src.sample_size());
}

/// Channel concatenation.
template <typename Scalar>
Tensor<Scalar> concat_channels(const std::vector<const Tensor<Scalar>*>& parts) {
  assert(!parts.empty());
  int channels = 0;
  for (auto* p : parts) channels += p->c;
  const auto& f = *parts.front();
  Tensor<Scalar> out(f.n, channels, f.h, f.w);
  for (int i = 0; i < f.n; ++i) {
    Scalar* dst = out.sample(i);
    for (auto* p : parts) {
      std::copy(p->sample(i), p->sample(i) + p->sample_size(), dst);
      dst += p->sample_size();
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> slice_channels(const Tensor<Scalar>& t, int first, int count) {
  Tensor<Scalar> out(t.n, count, t.h, t.w);
  for (int i = 0; i < t.n; ++i)
    std::copy(t.channel(i, first), t.channel(i, first) + count * t.plane(), out.sample(i));
  return out;
}

}  // namespace mplane::nn
