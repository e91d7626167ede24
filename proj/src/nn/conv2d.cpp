#include "gis/nn/conv2d.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "gis/simd/gemm.hpp"

namespace gis::nn {
namespace {

using simd::Trans;

inline int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

// Output columns [lo, hi) whose input index stays inside [0, n).
inline void valid_range(int out, int stride, int offset, int n, int& lo, int& hi) {
  // ix = o * stride + offset
  lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  hi = (n - 1 - offset) >= 0 ? (n - 1 - offset) / stride + 1 : 0;
  lo = std::min(lo, out);
  hi = std::clamp(hi, lo, out);
}

bool is_pointwise(const ConvSpec& s) {
  return s.kernel == 1 && s.stride == 1 && s.pad.top == 0 && s.pad.left == 0 &&
         s.pad.bottom == 0 && s.pad.right == 0;
}

template <class T>
void im2col(const ConvSpec& s, const T* x, int h, int w, int oh, int ow, T* cols, long ld) {
  const int k = s.kernel;
  for (int c = 0; c < s.in_channels; ++c) {
    const T* xc = x + static_cast<long>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + ((static_cast<long>(c) * k + ky) * k + kx) * ld;
        const int xoff = kx - s.pad.left;
        int lo = 0, hi = ow;
        if (s.mode == PadMode::zero) valid_range(ow, s.stride, xoff, w, lo, hi);
        for (int oy = 0; oy < oh; ++oy) {
          T* dst = row + static_cast<long>(oy) * ow;
          int iy = oy * s.stride + ky - s.pad.top;
          if (s.mode == PadMode::zero) {
            if (iy < 0 || iy >= h) {
              std::fill(dst, dst + ow, T(0));
              continue;
            }
            const T* src = xc + static_cast<long>(iy) * w;
            std::fill(dst, dst + lo, T(0));
            if (s.stride == 1) {
              std::copy(src + lo + xoff, src + hi + xoff, dst + lo);
            } else {
              for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * s.stride + xoff];
            }
            std::fill(dst + hi, dst + ow, T(0));
          } else {
            iy = wrap(iy, h);
            const T* src = xc + static_cast<long>(iy) * w;
            for (int ox = 0; ox < ow; ++ox) dst[ox] = src[wrap(ox * s.stride + xoff, w)];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const ConvSpec& s, const T* cols, long ld, int h, int w, int oh, int ow, T* x) {
  const int k = s.kernel;
  for (int c = 0; c < s.in_channels; ++c) {
    T* xc = x + static_cast<long>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + ((static_cast<long>(c) * k + ky) * k + kx) * ld;
        const int xoff = kx - s.pad.left;
        int lo = 0, hi = ow;
        if (s.mode == PadMode::zero) valid_range(ow, s.stride, xoff, w, lo, hi);
        for (int oy = 0; oy < oh; ++oy) {
          const T* src = row + static_cast<long>(oy) * ow;
          int iy = oy * s.stride + ky - s.pad.top;
          if (s.mode == PadMode::zero) {
            if (iy < 0 || iy >= h) continue;
            T* dst = xc + static_cast<long>(iy) * w;
            for (int ox = lo; ox < hi; ++ox) dst[ox * s.stride + xoff] += src[ox];
          } else {
            iy = wrap(iy, h);
            T* dst = xc + static_cast<long>(iy) * w;
            for (int ox = 0; ox < ow; ++ox) dst[wrap(ox * s.stride + xoff, w)] += src[ox];
          }
        }
      }
    }
  }
}

template <class T, int Slot = 0>
std::vector<T>& scratch() {
  thread_local std::vector<T> buf;
  return buf;
}

// Samples per GEMM: small feature maps are batched so the GEMM sees at
// least a few thousand columns; the column buffer stays bounded.
int chunk_size(int batch, int patch, int ohw) {
  constexpr long kTargetCols = 4096;
  constexpr long kMaxElems = 16L << 20;
  long c = std::max(1L, kTargetCols / ohw);
  c = std::min(c, std::max(1L, kMaxElems / (static_cast<long>(patch) * ohw)));
  return static_cast<int>(std::min<long>(c, batch));
}

// Copies per-sample (C, ohw) blocks into one (C, cn*ohw) matrix and back.
template <class T>
void pack_samples(const T* src, int cn, int channels, int ohw, T* dst) {
  const long ld = static_cast<long>(cn) * ohw;
  for (int j = 0; j < cn; ++j) {
    for (int c = 0; c < channels; ++c) {
      std::copy_n(src + (static_cast<long>(j) * channels + c) * ohw, ohw, dst + c * ld + static_cast<long>(j) * ohw);
    }
  }
}

template <class T>
void unpack_samples(const T* src, int cn, int channels, int ohw, T* dst) {
  const long ld = static_cast<long>(cn) * ohw;
  for (int j = 0; j < cn; ++j) {
    for (int c = 0; c < channels; ++c) {
      std::copy_n(src + c * ld + static_cast<long>(j) * ohw, ohw, dst + (static_cast<long>(j) * channels + c) * ohw);
    }
  }
}

}  // namespace

template <class T>
Conv2d<T>::Conv2d(const std::string& name, ConvSpec spec) : spec_(spec) {
  if (spec.in_channels <= 0 || spec.out_channels <= 0 || spec.kernel <= 0 ||
      spec.stride <= 0) {
    throw ConfigError("conv " + name + ": channels, kernel and stride must be positive");
  }
  weight = Param<T>(name + ".weight",
                    {spec.out_channels, spec.in_channels, spec.kernel, spec.kernel});
  if (spec.bias) bias = Param<T>(name + ".bias", {1, spec.out_channels, 1, 1});
}

template <class T>
Shape4 Conv2d<T>::output_shape(const Shape4& in) const {
  if (in.c != spec_.in_channels) {
    throw ShapeError("conv " + weight.name + ": expected " +
                     std::to_string(spec_.in_channels) + " input channels, got " +
                     std::to_string(in.c));
  }
  const int oh = spec_.out_h(in.h);
  const int ow = spec_.out_w(in.w);
  if (oh <= 0 || ow <= 0) throw ShapeError("conv " + weight.name + ": input too small");
  return {in.n, spec_.out_channels, oh, ow};
}

template <class T>
void Conv2d<T>::init_normal(Rng& rng, double gain) {
  const double stddev = gain / std::sqrt(static_cast<double>(spec_.patch()));
  for (auto& v : weight.value.span()) v = static_cast<T>(stddev * rng.normal());
  if (spec_.bias) bias.value.zero();
}

template <class T>
void Conv2d<T>::forward_linear(const Tensor<T>& x, Tensor<T>& y) const {
  const Shape4 os = output_shape(x.shape());
  if (!(y.shape() == os)) y.resize(os);
  const int ohw = os.h * os.w;
  const int patch = spec_.patch();
  const int cout = spec_.out_channels;
  if (is_pointwise(spec_)) {
    for (int n = 0; n < x.n(); ++n) {
      simd::gemm<T>(Trans::no, Trans::no, cout, ohw, patch, T(1), weight.value.data(), patch,
                    x.sample(n), ohw, T(0), y.sample(n), ohw);
    }
    return;
  }
  const int chunk = chunk_size(x.n(), patch, ohw);
  auto& cols = scratch<T, 0>();
  auto& out = scratch<T, 1>();
  cols.resize(static_cast<std::size_t>(patch) * chunk * ohw);
  if (chunk > 1) out.resize(static_cast<std::size_t>(cout) * chunk * ohw);
  for (int n0 = 0; n0 < x.n(); n0 += chunk) {
    const int cn = std::min(chunk, x.n() - n0);
    const long ld = static_cast<long>(cn) * ohw;
    for (int j = 0; j < cn; ++j) {
      im2col(spec_, x.sample(n0 + j), x.h(), x.w(), os.h, os.w, cols.data() + static_cast<long>(j) * ohw, ld);
    }
    T* dst = cn > 1 ? out.data() : y.sample(n0);
    simd::gemm<T>(Trans::no, Trans::no, cout, static_cast<int>(ld), patch, T(1), weight.value.data(), patch,
                  cols.data(), static_cast<int>(ld), T(0), dst, static_cast<int>(ld));
    if (cn > 1) unpack_samples(out.data(), cn, cout, ohw, y.sample(n0));
  }
}

template <class T>
void Conv2d<T>::forward(const Tensor<T>& x, Tensor<T>& y) const {
  forward_linear(x, y);
  if (!spec_.bias) return;
  const std::size_t plane = y.plane_size();
  for (int n = 0; n < y.n(); ++n) {
    for (int c = 0; c < y.c(); ++c) {
      const T b = bias.value[c];
      T* p = y.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) p[i] += b;
    }
  }
}

template <class T>
void Conv2d<T>::backward_data(const Tensor<T>& dy, const Shape4& in_shape,
                              Tensor<T>& dx) const {
  const Shape4 os = output_shape(in_shape);
  require_shape(dy.shape(), os, "conv backward dy");
  if (!(dx.shape() == in_shape)) dx.resize(in_shape);
  const int ohw = os.h * os.w;
  const int patch = spec_.patch();
  const int cout = spec_.out_channels;
  if (is_pointwise(spec_)) {
    for (int n = 0; n < dy.n(); ++n) {
      simd::gemm<T>(Trans::yes, Trans::no, patch, ohw, cout, T(1), weight.value.data(), patch,
                    dy.sample(n), ohw, T(0), dx.sample(n), ohw);
    }
    return;
  }
  dx.zero();
  const int chunk = chunk_size(dy.n(), patch, ohw);
  auto& cols = scratch<T, 0>();
  auto& grad = scratch<T, 1>();
  cols.resize(static_cast<std::size_t>(patch) * chunk * ohw);
  if (chunk > 1) grad.resize(static_cast<std::size_t>(cout) * chunk * ohw);
  for (int n0 = 0; n0 < dy.n(); n0 += chunk) {
    const int cn = std::min(chunk, dy.n() - n0);
    const long ld = static_cast<long>(cn) * ohw;
    const T* g = dy.sample(n0);
    if (cn > 1) {
      pack_samples(g, cn, cout, ohw, grad.data());
      g = grad.data();
    }
    simd::gemm<T>(Trans::yes, Trans::no, patch, static_cast<int>(ld), cout, T(1), weight.value.data(), patch, g,
                  static_cast<int>(ld), T(0), cols.data(), static_cast<int>(ld));
    for (int j = 0; j < cn; ++j) {
      col2im_add(spec_, cols.data() + static_cast<long>(j) * ohw, ld, in_shape.h, in_shape.w, os.h, os.w,
                 dx.sample(n0 + j));
    }
  }
}

template <class T>
void Conv2d<T>::accumulate_param_grads(const Tensor<T>& x, const Tensor<T>& dy,
                                       Tensor<T>& dw, Tensor<T>* db) const {
  const Shape4 os = output_shape(x.shape());
  require_shape(dy.shape(), os, "conv weight-grad dy");
  const int ohw = os.h * os.w;
  const int patch = spec_.patch();
  const int cout = spec_.out_channels;
  if (db) {
    for (int n = 0; n < x.n(); ++n) {
      for (int c = 0; c < cout; ++c) {
        const T* g = dy.plane(n, c);
        T acc = T(0);
        for (int i = 0; i < ohw; ++i) acc += g[i];
        (*db)[c] += acc;
      }
    }
  }
  if (is_pointwise(spec_)) {
    for (int n = 0; n < x.n(); ++n) {
      simd::gemm<T>(Trans::no, Trans::yes, cout, patch, ohw, T(1), dy.sample(n), ohw, x.sample(n), ohw, T(1),
                    dw.data(), patch);
    }
    return;
  }
  const int chunk = chunk_size(x.n(), patch, ohw);
  auto& cols = scratch<T, 0>();
  auto& grad = scratch<T, 1>();
  cols.resize(static_cast<std::size_t>(patch) * chunk * ohw);
  if (chunk > 1) grad.resize(static_cast<std::size_t>(cout) * chunk * ohw);
  for (int n0 = 0; n0 < x.n(); n0 += chunk) {
    const int cn = std::min(chunk, x.n() - n0);
    const long ld = static_cast<long>(cn) * ohw;
    for (int j = 0; j < cn; ++j) {
      im2col(spec_, x.sample(n0 + j), x.h(), x.w(), os.h, os.w, cols.data() + static_cast<long>(j) * ohw, ld);
    }
    const T* g = dy.sample(n0);
    if (cn > 1) {
      pack_samples(g, cn, cout, ohw, grad.data());
      g = grad.data();
    }
    simd::gemm<T>(Trans::no, Trans::yes, cout, patch, static_cast<int>(ld), T(1), g, static_cast<int>(ld),
                  cols.data(), static_cast<int>(ld), T(1), dw.data(), patch);
  }
}

template <class T>
ParamRefs<T> Conv2d<T>::params() {
  ParamRefs<T> out{&weight};
  if (spec_.bias) out.push_back(&bias);
  return out;
}

template <class T>
ConstParamRefs<T> Conv2d<T>::params() const {
  ConstParamRefs<T> out{&weight};
  if (spec_.bias) out.push_back(&bias);
  return out;
}

template class Conv2d<float>;
template class Conv2d<double>;

}  // namespace gis::nn
