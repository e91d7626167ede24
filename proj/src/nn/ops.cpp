#include "gis/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace gis::nn {

template <class T>
void leaky_relu(const Tensor<T>& x, T slope, Tensor<T>& y) {
  if (!(y.shape() == x.shape())) y.resize(x.shape());
  const T* src = x.data();
  T* dst = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = src[i] > T(0) ? src[i] : slope * src[i];
}

template <class T>
void leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& dy, T slope, Tensor<T>& dx) {
  require_shape(dy.shape(), x.shape(), "leaky_relu backward");
  if (!(dx.shape() == x.shape())) dx.resize(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : slope * dy[i];
}

template <class T>
void leaky_relu_gate(const Tensor<T>& x, T slope, Tensor<T>& dy) {
  require_shape(dy.shape(), x.shape(), "leaky_relu gate");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > T(0))) dy[i] *= slope;
  }
}

template <class T>
ChannelLayerNorm<T>::ChannelLayerNorm(const std::string& name, int channels, T eps)
    : gain(name + ".gain", {1, channels, 1, 1}),
      bias(name + ".bias", {1, channels, 1, 1}),
      eps_(eps) {
  gain.value.fill(T(1));
}

template <class T>
void ChannelLayerNorm<T>::forward(const Tensor<T>& x, Tensor<T>& y, Cache& cache) const {
  const int channels = x.c();
  if (channels != gain.value.c()) throw ShapeError("layer norm: channel mismatch");
  const std::size_t plane = x.plane_size();
  if (!(y.shape() == x.shape())) y.resize(x.shape());
  if (!(cache.normalized.shape() == x.shape())) cache.normalized.resize(x.shape());
  const Shape4 ss{x.n(), 1, x.h(), x.w()};
  if (!(cache.inv_std.shape() == ss)) cache.inv_std.resize(ss);
  std::vector<T> mean(plane), var(plane);
  const T inv_c = T(1) / static_cast<T>(channels);
  for (int n = 0; n < x.n(); ++n) {
    std::fill(mean.begin(), mean.end(), T(0));
    std::fill(var.begin(), var.end(), T(0));
    for (int c = 0; c < channels; ++c) {
      const T* p = x.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) mean[i] += p[i];
    }
    for (std::size_t i = 0; i < plane; ++i) mean[i] *= inv_c;
    for (int c = 0; c < channels; ++c) {
      const T* p = x.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        const T d = p[i] - mean[i];
        var[i] += d * d;
      }
    }
    T* inv = cache.inv_std.plane(n, 0);
    for (std::size_t i = 0; i < plane; ++i) inv[i] = T(1) / std::sqrt(var[i] * inv_c + eps_);
    for (int c = 0; c < channels; ++c) {
      const T* p = x.plane(n, c);
      T* xh = cache.normalized.plane(n, c);
      T* out = y.plane(n, c);
      const T g = gain.value[c];
      const T b = bias.value[c];
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (p[i] - mean[i]) * inv[i];
        out[i] = g * xh[i] + b;
      }
    }
  }
}

template <class T>
void ChannelLayerNorm<T>::backward(const Tensor<T>& dy, const Cache& cache, Tensor<T>& dx) {
  const Tensor<T>& xh = cache.normalized;
  require_shape(dy.shape(), xh.shape(), "layer norm backward");
  if (!(dx.shape() == dy.shape())) dx.resize(dy.shape());
  const int channels = dy.c();
  const std::size_t plane = dy.plane_size();
  const T inv_c = T(1) / static_cast<T>(channels);
  std::vector<T> mean_g(plane), mean_gx(plane);
  for (int n = 0; n < dy.n(); ++n) {
    std::fill(mean_g.begin(), mean_g.end(), T(0));
    std::fill(mean_gx.begin(), mean_gx.end(), T(0));
    for (int c = 0; c < channels; ++c) {
      const T* g = dy.plane(n, c);
      const T* h = xh.plane(n, c);
      const T gc = gain.value[c];
      T dg = T(0), db = T(0);
      for (std::size_t i = 0; i < plane; ++i) {
        const T ghat = g[i] * gc;
        mean_g[i] += ghat;
        mean_gx[i] += ghat * h[i];
        dg += g[i] * h[i];
        db += g[i];
      }
      gain.grad[c] += dg;
      bias.grad[c] += db;
    }
    const T* inv = cache.inv_std.plane(n, 0);
    for (int c = 0; c < channels; ++c) {
      const T* g = dy.plane(n, c);
      const T* h = xh.plane(n, c);
      T* out = dx.plane(n, c);
      const T gc = gain.value[c];
      for (std::size_t i = 0; i < plane; ++i) {
        out[i] = inv[i] * (g[i] * gc - inv_c * mean_g[i] - h[i] * inv_c * mean_gx[i]);
      }
    }
  }
}

template <class T>
void upsample2x(const Tensor<T>& x, Tensor<T>& y) {
  const int h = x.h(), w = x.w();
  const Shape4 os{x.n(), x.c(), 2 * h, 2 * w};
  if (!(y.shape() == os)) y.resize(os);
  std::vector<T> row(static_cast<std::size_t>(2 * w));
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      T* dst = y.plane(n, c);
      // Horizontal pass into each output row pair, vertical blend inline.
      for (int oy = 0; oy < 2 * h; ++oy) {
        const int iy = oy / 2;
        const int ny = (oy % 2 == 0) ? std::max(iy - 1, 0) : std::min(iy + 1, h - 1);
        const T* r0 = src + static_cast<long>(iy) * w;
        const T* r1 = src + static_cast<long>(ny) * w;
        for (int ix = 0; ix < w; ++ix) {
          const T a = T(0.75) * r0[ix] + T(0.25) * r1[ix];
          const int lx = std::max(ix - 1, 0);
          const int rx = std::min(ix + 1, w - 1);
          const T al = T(0.75) * r0[lx] + T(0.25) * r1[lx];
          const T ar = T(0.75) * r0[rx] + T(0.25) * r1[rx];
          row[2 * ix] = T(0.75) * a + T(0.25) * al;
          row[2 * ix + 1] = T(0.75) * a + T(0.25) * ar;
        }
        std::copy(row.begin(), row.end(), dst + static_cast<long>(oy) * 2 * w);
      }
    }
  }
}

template <class T>
void upsample2x_backward(const Tensor<T>& dy, Tensor<T>& dx) {
  const int h = dy.h() / 2, w = dy.w() / 2;
  const Shape4 is{dy.n(), dy.c(), h, w};
  if (!(dx.shape() == is)) dx.resize(is);
  dx.zero();
  std::vector<T> col(static_cast<std::size_t>(w));
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      const T* g = dy.plane(n, c);
      T* out = dx.plane(n, c);
      for (int oy = 0; oy < 2 * h; ++oy) {
        const int iy = oy / 2;
        const int ny = (oy % 2 == 0) ? std::max(iy - 1, 0) : std::min(iy + 1, h - 1);
        const T* grow = g + static_cast<long>(oy) * 2 * w;
        // Transpose of the horizontal pass.
        std::fill(col.begin(), col.end(), T(0));
        for (int ix = 0; ix < w; ++ix) {
          const int lx = std::max(ix - 1, 0);
          const int rx = std::min(ix + 1, w - 1);
          const T ge = grow[2 * ix];
          const T go = grow[2 * ix + 1];
          col[ix] += T(0.75) * (ge + go);
          col[lx] += T(0.25) * ge;
          col[rx] += T(0.25) * go;
        }
        T* r0 = out + static_cast<long>(iy) * w;
        T* r1 = out + static_cast<long>(ny) * w;
        for (int ix = 0; ix < w; ++ix) {
          r0[ix] += T(0.75) * col[ix];
          r1[ix] += T(0.25) * col[ix];
        }
      }
    }
  }
}

template <class T>
void avg_pool2x(const Tensor<T>& x, Tensor<T>& y) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0) throw ShapeError("avg_pool2x: odd resolution");
  const int oh = x.h() / 2, ow = x.w() / 2;
  const Shape4 os{x.n(), x.c(), oh, ow};
  if (!(y.shape() == os)) y.resize(os);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      T* dst = y.plane(n, c);
      for (int oy = 0; oy < oh; ++oy) {
        const T* r0 = src + static_cast<long>(2 * oy) * x.w();
        const T* r1 = r0 + x.w();
        for (int ox = 0; ox < ow; ++ox) {
          dst[oy * ow + ox] =
              T(0.25) * (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]);
        }
      }
    }
  }
}

template <class T>
void concat_channels(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw ShapeError("concat: " + a.shape().str() + " vs " + b.shape().str());
  }
  const Shape4 os{a.n(), a.c() + b.c(), a.h(), a.w()};
  if (!(out.shape() == os)) out.resize(os);
  for (int n = 0; n < a.n(); ++n) {
    std::copy_n(a.sample(n), a.c() * a.plane_size(), out.plane(n, 0));
    std::copy_n(b.sample(n), b.c() * b.plane_size(), out.plane(n, a.c()));
  }
}

template <class T>
void tanh_unit(const Tensor<T>& x, Tensor<T>& y) {
  if (!(y.shape() == x.shape())) y.resize(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (std::tanh(x[i]) + T(1)) * T(0.5);
}

template <class T>
void tanh_unit_backward(const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>& dx) {
  require_shape(dy.shape(), y.shape(), "tanh_unit backward");
  if (!(dx.shape() == y.shape())) dx.resize(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const T t = T(2) * y[i] - T(1);
    dx[i] = dy[i] * (T(1) - t * t) * T(0.5);
  }
}

template <class T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

#define GIS_INSTANTIATE_OPS(T)                                                        \
  template void leaky_relu<T>(const Tensor<T>&, T, Tensor<T>&);                        \
  template void leaky_relu_backward<T>(const Tensor<T>&, const Tensor<T>&, T, Tensor<T>&); \
  template void leaky_relu_gate<T>(const Tensor<T>&, T, Tensor<T>&);                   \
  template class ChannelLayerNorm<T>;                                                  \
  template void upsample2x<T>(const Tensor<T>&, Tensor<T>&);                           \
  template void upsample2x_backward<T>(const Tensor<T>&, Tensor<T>&);                  \
  template void avg_pool2x<T>(const Tensor<T>&, Tensor<T>&);                           \
  template void concat_channels<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);    \
  template void tanh_unit<T>(const Tensor<T>&, Tensor<T>&);                            \
  template void tanh_unit_backward<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&); \
  template T sigmoid<T>(T);

GIS_INSTANTIATE_OPS(float)
GIS_INSTANTIATE_OPS(double)
#undef GIS_INSTANTIATE_OPS

}  // namespace gis::nn
