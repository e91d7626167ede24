#include <doctest.h>

#include <cmath>

#include "gis/core/error.hpp"
#include "gis/model/discriminator.hpp"
#include "support.hpp"

using namespace gis;
using gis::test::numeric_gradient;
using gis::test::random_tensor;
using gis::test::relative_error;

namespace {

DiscriminatorConfig tiny(double slope = 0.2, nn::PadMode mode = nn::PadMode::zero) {
  DiscriminatorConfig c;
  c.widths = {3, 4, 4, 3, 1};
  c.leaky_slope = slope;
  c.pad_mode = mode;
  return c;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Total penalty gradient: second-order part plus the first-order logit seed.
template <class T>
void penalty_grads(Discriminator<T>& d, const Tensor<T>& real, const Tensor<T>& fake, T gamma) {
  nn::zero_grads(d.params());
  for (auto [images, side] : {std::pair{&real, PenaltySide::real}, std::pair{&fake, PenaltySide::fake}}) {
    typename Discriminator<T>::Trace tr;
    d.forward(*images, &tr);
    const T scale = gamma / (T(2) * static_cast<T>(tr.logits.plane_size()) * static_cast<T>(images->n()));
    Tensor<T> dz(tr.logits.shape());
    d.penalty(tr, side, scale, &dz);
    d.backward(tr, dz);
  }
}

}  // namespace

TEST_CASE("logit map sizes and batching") {
  Discriminator<float> d(DiscriminatorConfig{});
  Rng rng(1);
  CHECK(d.forward(random_tensor<float>({1, 3, 64, 64}, rng, 0, 1)).shape() == Shape4{1, 1, 4, 4});
  CHECK(d.forward(random_tensor<float>({1, 3, 128, 256}, rng, 0, 1)).shape() == Shape4{1, 1, 8, 16});
  CHECK_THROWS_AS(d.forward(Tensor<float>(1, 3, 40, 64)), ShapeError);
  CHECK_THROWS_AS(d.forward(Tensor<float>(1, 4, 64, 64)), ShapeError);

  const auto batch = random_tensor<float>({3, 3, 32, 48}, rng, 0, 1);
  const auto maps = d.forward(batch);
  CHECK(maps.shape() == Shape4{3, 1, 2, 3});
  for (int n = 0; n < 3; ++n) {
    const auto single = d.forward(slice_sample(batch, n));
    CHECK(gis::test::max_abs_diff(single, slice_sample(maps, n)) < 1e-6);
  }
  CHECK(d.forward(batch) == maps);
}

TEST_CASE("periodic padding makes the map translation covariant") {
  auto cfg = DiscriminatorConfig{};
  cfg.pad_mode = nn::PadMode::periodic;
  Discriminator<double> d(cfg);
  Rng rng(2);
  const auto x = random_tensor<double>({1, 3, 64, 80}, rng, 0, 1);
  Tensor<double> shifted(x.shape());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 64; ++y)
      for (int xx = 0; xx < 80; ++xx) shifted(0, c, (y + 16) % 64, (xx + 32) % 80) = x(0, c, y, xx);
  const auto a = d.forward(x);
  const auto b = d.forward(shifted);
  for (int y = 0; y < 4; ++y)
    for (int xx = 0; xx < 5; ++xx) CHECK(std::abs(b(0, 0, (y + 1) % 4, (xx + 2) % 5) - a(0, 0, y, xx)) < 1e-5);
}

TEST_CASE("regularizer trivial cases") {
  Rng rng(3);
  const auto real = random_tensor<double>({2, 3, 32, 32}, rng, 0, 1);
  const auto fake = random_tensor<double>({2, 3, 32, 32}, rng, 0, 1);
  Discriminator<double> d(tiny());
  CHECK(d_regularizer(d, real, fake, 0.0) == 0.0);
  CHECK(d_regularizer(d, real, fake, 2.0) > 0.0);
  for (auto* p : d.params()) p->value.zero();
  d.layer(d.layer_count() - 1).bias.value.fill(0.7);
  CHECK(d_regularizer(d, real, fake, 2.0) == 0.0);
  CHECK_THROWS_AS(d_regularizer(d, Tensor<double>(0, 3, 32, 32), fake, 2.0), ShapeError);
}

TEST_CASE("linear discriminator closed form") {
  // Slope 1 makes D affine: z_c = <a_c, x> + b_c. Rows a_c come from probing
  // the network with basis images, independently of the backward pass.
  Discriminator<double> d(tiny(1.0));
  const Shape4 in{1, 3, 32, 32};
  const auto zero = d.forward(Tensor<double>(in));
  const int cells = zero.plane_size();
  REQUIRE(cells == 4);
  std::vector<double> row_norm2(cells, 0.0);
  Tensor<double> probe(in);
  for (std::size_t i = 0; i < probe.size(); ++i) {
    probe[i] = 1.0;
    const auto z = d.forward(probe);
    probe[i] = 0.0;
    for (int c = 0; c < cells; ++c) {
      const double a = z[c] - zero[c];
      row_norm2[c] += a * a;
    }
  }
  Rng rng(4);
  const auto real = random_tensor<double>({2, 3, 32, 32}, rng, 0, 1);
  const auto fake = random_tensor<double>({3, 3, 32, 32}, rng, 0, 1);
  const auto zr = d.forward(real);
  const auto zf = d.forward(fake);
  double er = 0, ef = 0;
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < cells; ++c) er += std::pow(1 - sigmoid(zr[n * cells + c]), 2) * row_norm2[c];
  for (int n = 0; n < 3; ++n)
    for (int c = 0; c < cells; ++c) ef += std::pow(sigmoid(zf[n * cells + c]), 2) * row_norm2[c];
  const double gamma = 2.0;
  const double want = gamma / 2 * (er / (2 * cells) + ef / (3 * cells));
  CHECK(d_regularizer(d, real, fake, gamma) == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("regularizer weighting symmetry and logit shifts") {
  Discriminator<double> d(tiny());
  Rng rng(5);
  const auto x = random_tensor<double>({1, 3, 16, 16}, rng, 0, 1);  // a single logit cell
  typename Discriminator<double>::Trace tr;
  const double z = d.forward(x, &tr)[0];
  const double real = d.penalty(tr, PenaltySide::real, 1.0);
  const double grad2 = real / std::pow(1 - sigmoid(z), 2);

  // Negating D swaps the roles: fake penalty of -D equals real penalty of D.
  auto neg = d;
  auto& last = neg.layer(neg.layer_count() - 1);
  for (std::size_t i = 0; i < last.weight.value.size(); ++i) last.weight.value[i] *= -1;
  last.bias.value[0] *= -1;
  neg.forward(x, &tr);
  CHECK(neg.penalty(tr, PenaltySide::fake, 1.0) == doctest::Approx(real).epsilon(1e-12));

  // A constant logit shift leaves the input gradient alone; only the weight moves.
  for (double shift : {-2.0, 0.5, 3.0}) {
    auto moved = d;
    moved.layer(moved.layer_count() - 1).bias.value[0] += shift;
    moved.forward(x, &tr);
    CHECK(moved.penalty(tr, PenaltySide::real, 1.0) ==
          doctest::Approx(std::pow(1 - sigmoid(z + shift), 2) * grad2).epsilon(1e-10));
    CHECK(moved.penalty(tr, PenaltySide::fake, 1.0) ==
          doctest::Approx(std::pow(sigmoid(z + shift), 2) * grad2).epsilon(1e-10));
  }
}

TEST_CASE("regularizer parameter gradient matches finite differences") {
  for (auto mode : {nn::PadMode::zero, nn::PadMode::periodic}) {
    Discriminator<double> d(tiny(0.2, mode));
    Rng rng(6);
    const auto real = random_tensor<double>({2, 3, 32, 32}, rng, 0, 1);
    const auto fake = random_tensor<double>({2, 3, 32, 32}, rng, 0, 1);
    penalty_grads(d, real, fake, 2.0);
    for (auto* p : d.params()) {
      CAPTURE(p->name);
      const auto analytic = p->grad;
      const auto numeric = numeric_gradient(
          [&](const Tensor<double>& v) {
            const auto keep = p->value;
            p->value = v;
            const double r = d_regularizer(d, real, fake, 2.0);
            p->value = keep;
            return r;
          },
          p->value);
      CHECK(relative_error(analytic, numeric) < 1e-4);
    }
  }
}

TEST_CASE("discriminator backward matches finite differences") {
  Discriminator<double> d(tiny());
  Rng rng(7);
  const auto x = random_tensor<double>({2, 3, 32, 16}, rng, 0, 1);
  typename Discriminator<double>::Trace tr;
  const auto z = d.forward(x, &tr);
  const auto r = random_tensor<double>(z.shape(), rng);
  auto dot = [&](const Tensor<double>& out) {
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
    return s;
  };
  nn::zero_grads(d.params());
  Tensor<double> dx;
  d.backward(tr, r, &dx);
  CHECK(relative_error(dx, numeric_gradient([&](const Tensor<double>& xi) { return dot(d.forward(xi)); }, x)) <
        1e-6);
  auto* w = d.params()[2];
  const auto numeric = numeric_gradient(
      [&](const Tensor<double>& v) {
        const auto keep = w->value;
        w->value = v;
        const double s = dot(d.forward(x));
        w->value = keep;
        return s;
      },
      w->value);
  CHECK(relative_error(w->grad, numeric) < 1e-6);

  // Input gradient only: parameter sinks stay untouched.
  nn::zero_grads(d.params());
  Tensor<double> dx2;
  d.input_gradient(tr, r, dx2);
  CHECK(dx2 == dx);
  for (const auto* p : d.params())
    for (std::size_t i = 0; i < p->grad.size(); ++i) REQUIRE(p->grad[i] == 0.0);
}
