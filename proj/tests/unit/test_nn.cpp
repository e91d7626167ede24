#include <doctest.h>

#include <cmath>

#include "gis/nn/adam.hpp"
#include "gis/nn/conv2d.hpp"
#include "gis/nn/ops.hpp"
#include "gis/simd/dispatch.hpp"
#include "support.hpp"

using namespace gis;
using namespace gis::nn;
using gis::test::numeric_gradient;
using gis::test::random_tensor;
using gis::test::relative_error;

namespace {

// Direct loop cross-correlation; the oracle for the im2col path.
template <class T>
Tensor<double> direct_conv(const Conv2d<T>& conv, const Tensor<T>& x) {
  const auto& s = conv.spec();
  const Shape4 os = conv.output_shape(x.shape());
  Tensor<double> y(os);
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < s.out_channels; ++o)
      for (int oy = 0; oy < os.h; ++oy)
        for (int ox = 0; ox < os.w; ++ox) {
          double acc = s.bias ? static_cast<double>(conv.bias.value[o]) : 0.0;
          for (int c = 0; c < s.in_channels; ++c)
            for (int ky = 0; ky < s.kernel; ++ky)
              for (int kx = 0; kx < s.kernel; ++kx) {
                int iy = oy * s.stride + ky - s.pad.top;
                int ix = ox * s.stride + kx - s.pad.left;
                if (s.mode == PadMode::periodic) {
                  iy = ((iy % x.h()) + x.h()) % x.h();
                  ix = ((ix % x.w()) + x.w()) % x.w();
                } else if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) {
                  continue;
                }
                acc += static_cast<double>(conv.weight.value(o, c, ky, kx)) * x(n, c, iy, ix);
              }
          y(n, o, oy, ox) = acc;
        }
  return y;
}

template <class T>
Conv2d<T> make_conv(ConvSpec spec, std::uint64_t seed) {
  Conv2d<T> conv("c", spec);
  Rng rng(seed);
  conv.init_normal(rng, 1.0);
  if (spec.bias)
    for (std::size_t i = 0; i < conv.bias.value.size(); ++i)
      conv.bias.value[i] = static_cast<T>(rng.uniform(-0.5, 0.5));
  return conv;
}

double sum_product(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct ConvCase {
  int cin, cout, k, stride;
  Padding pad;
  PadMode mode;
  int n, h, w;
};

const ConvCase kCases[] = {
    {3, 5, 3, 1, Padding::same(3), PadMode::zero, 2, 9, 7},
    {4, 6, 4, 2, Padding::uniform(1), PadMode::zero, 3, 16, 12},
    {4, 1, 4, 1, Padding::same(4), PadMode::zero, 2, 5, 6},
    {2, 3, 4, 2, Padding::uniform(1), PadMode::periodic, 2, 8, 16},
    {3, 2, 4, 1, Padding::same(4), PadMode::periodic, 1, 6, 6},
    {5, 7, 1, 1, Padding{}, PadMode::zero, 3, 4, 5},
    {2, 4, 3, 2, Padding{0, 0, 0, 0}, PadMode::zero, 2, 9, 9},
    // Enough samples and pixels to split the batch into several GEMM chunks.
    {3, 4, 3, 1, Padding::same(3), PadMode::zero, 9, 40, 40},
};

}  // namespace

TEST_CASE("conv forward matches the direct oracle on every tier") {
  for (const auto& c : kCases) {
    const ConvSpec spec{c.cin, c.cout, c.k, c.stride, c.pad, c.mode, true};
    auto conv = make_conv<float>(spec, 11);
    Rng rng(3);
    const auto x = random_tensor<float>({c.n, c.cin, c.h, c.w}, rng);
    const auto want = direct_conv(conv, x);
    for (auto isa : {simd::Isa::scalar, simd::Isa::avx2, simd::Isa::avx512}) {
      if (!simd::isa_available(isa)) continue;
      simd::ScopedIsa scope(isa);
      Tensor<float> y;
      conv.forward(x, y);
      REQUIRE(y.shape() == want.shape());
      CHECK(gis::test::max_abs_diff(tensor_cast<double>(y), want) < 1e-4);
    }
  }
}

TEST_CASE("conv backward is the adjoint of forward and matches finite differences") {
  for (const auto& c : kCases) {
    CAPTURE(c.k);
    CAPTURE(c.stride);
    const ConvSpec spec{c.cin, c.cout, c.k, c.stride, c.pad, c.mode, true};
    auto conv = make_conv<double>(spec, 5);
    Rng rng(9);
    const auto x = random_tensor<double>({c.n, c.cin, c.h, c.w}, rng);
    const auto dy = random_tensor<double>(conv.output_shape(x.shape()), rng);

    // <dy, A x> = <A^T dy, x>
    Tensor<double> ax, atdy;
    conv.forward_linear(x, ax);
    conv.backward_data(dy, x.shape(), atdy);
    CHECK(sum_product(dy, ax) == doctest::Approx(sum_product(atdy, x)).epsilon(1e-12));

    if (c.n * c.h * c.w > 500) continue;
    auto loss_x = [&](const Tensor<double>& xi) {
      Tensor<double> y;
      conv.forward(xi, y);
      return sum_product(y, dy);
    };
    CHECK(relative_error(atdy, numeric_gradient(loss_x, x)) < 1e-7);

    zero_grads(conv.params());
    conv.accumulate_param_grads(x, dy);
    auto wcopy = conv.weight.value;
    auto loss_w = [&](const Tensor<double>& wv) {
      auto probe = conv;
      probe.weight.value = wv;
      Tensor<double> y;
      probe.forward(x, y);
      return sum_product(y, dy);
    };
    CHECK(relative_error(conv.weight.grad, numeric_gradient(loss_w, wcopy)) < 1e-7);
    auto loss_b = [&](const Tensor<double>& bv) {
      auto probe = conv;
      probe.bias.value = bv;
      Tensor<double> y;
      probe.forward(x, y);
      return sum_product(y, dy);
    };
    CHECK(relative_error(conv.bias.grad, numeric_gradient(loss_b, conv.bias.value)) < 1e-7);
  }
}

TEST_CASE("float and double convolutions agree") {
  const ConvSpec spec{6, 8, 3, 1, Padding::same(3), PadMode::zero, true};
  auto cf = make_conv<float>(spec, 2);
  Conv2d<double> cd("c", spec);
  cd.weight.value = tensor_cast<double>(cf.weight.value);
  cd.bias.value = tensor_cast<double>(cf.bias.value);
  Rng rng(4);
  const auto x = random_tensor<float>({2, 6, 12, 10}, rng);
  Tensor<float> yf;
  Tensor<double> yd;
  cf.forward(x, yf);
  cd.forward(tensor_cast<double>(x), yd);
  CHECK(gis::test::max_abs_diff(tensor_cast<double>(yf), yd) < 1e-5);
}

TEST_CASE("channel layer norm gradient") {
  ChannelLayerNorm<double> ln("ln", 4);
  Rng rng(1);
  for (std::size_t i = 0; i < 4; ++i) {
    ln.gain.value[i] = rng.uniform(0.5, 1.5);
    ln.bias.value[i] = rng.uniform(-0.5, 0.5);
  }
  const auto x = random_tensor<double>({2, 4, 3, 3}, rng);
  const auto dy = random_tensor<double>({2, 4, 3, 3}, rng);
  auto loss = [&](const Tensor<double>& xi, const ChannelLayerNorm<double>& l) {
    Tensor<double> y;
    ChannelLayerNorm<double>::Cache cache;
    l.forward(xi, y, cache);
    return sum_product(y, dy);
  };

  Tensor<double> y, dx;
  ChannelLayerNorm<double>::Cache cache;
  ln.forward(x, y, cache);
  // Normalized over channels: zero mean at each pixel.
  for (int yy = 0; yy < 3; ++yy) {
    double m = 0;
    for (int c = 0; c < 4; ++c) m += cache.normalized(1, c, yy, 2);
    CHECK(std::abs(m) < 1e-12);
  }
  zero_grads(ln.params());
  ln.backward(dy, cache, dx);
  CHECK(relative_error(dx, numeric_gradient([&](const Tensor<double>& xi) { return loss(xi, ln); }, x)) <
        1e-7);
  auto g_num = numeric_gradient(
      [&](const Tensor<double>& g) {
        auto probe = ln;
        probe.gain.value = g;
        return loss(x, probe);
      },
      ln.gain.value);
  CHECK(relative_error(ln.gain.grad, g_num) < 1e-7);
}

TEST_CASE("upsample, pooling and activations") {
  Rng rng(2);
  const auto x = random_tensor<double>({2, 3, 4, 5}, rng);
  const auto dy = random_tensor<double>({2, 3, 8, 10}, rng);
  Tensor<double> up, back;
  upsample2x(x, up);
  CHECK(up.shape() == Shape4{2, 3, 8, 10});
  upsample2x_backward(dy, back);
  CHECK(sum_product(dy, up) == doctest::Approx(sum_product(back, x)).epsilon(1e-12));

  // A constant field stays constant.
  Tensor<double> ones(Shape4{1, 1, 3, 3}), ones_up;
  ones.fill(0.7);
  upsample2x(ones, ones_up);
  for (std::size_t i = 0; i < ones_up.size(); ++i) CHECK(ones_up[i] == doctest::Approx(0.7));

  Tensor<double> pooled;
  avg_pool2x(up, pooled);
  CHECK(pooled.shape() == x.shape());

  const auto z = random_tensor<double>({1, 2, 3, 3}, rng, -3, 3);
  const auto dz = random_tensor<double>({1, 2, 3, 3}, rng);
  Tensor<double> t, dt;
  tanh_unit(z, t);
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(t[i] >= 0.0);
    CHECK(t[i] <= 1.0);
  }
  tanh_unit_backward(t, dz, dt);
  auto tl = [&](const Tensor<double>& zi) {
    Tensor<double> o;
    tanh_unit(zi, o);
    return sum_product(o, dz);
  };
  CHECK(relative_error(dt, numeric_gradient(tl, z)) < 1e-7);

  Tensor<double> lr, dlr;
  leaky_relu(z, 0.2, lr);
  leaky_relu_backward(z, dz, 0.2, dlr);
  auto ll = [&](const Tensor<double>& zi) {
    Tensor<double> o;
    leaky_relu(zi, 0.2, o);
    return sum_product(o, dz);
  };
  CHECK(relative_error(dlr, numeric_gradient(ll, z)) < 1e-7);
  CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("adam matches the textbook update") {
  Param<double> p("p", Shape4{1, 1, 1, 2});
  p.value[0] = 1.0;
  p.value[1] = -2.0;
  Adam<double> adam(AdamConfig{0.1, 0.9, 0.999, 1e-8}, {&p});
  double m[2] = {0, 0}, v[2] = {0, 0}, ref[2] = {1.0, -2.0};
  for (int t = 1; t <= 3; ++t) {
    const double g[2] = {0.5 * t, -1.5};
    p.grad[0] = g[0];
    p.grad[1] = g[1];
    adam.step();
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(p.value[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }
  CHECK(adam.steps_taken() == 3);
}

TEST_CASE("moved-from tensors are empty") {
  Tensor<float> a(Shape4{1, 2, 3, 4});
  Tensor<float> b(std::move(a));
  CHECK(b.size() == 24);
  CHECK(a.size() == 0);  // NOLINT(bugprone-use-after-move)
  CHECK(a.shape() == Shape4{});
}
