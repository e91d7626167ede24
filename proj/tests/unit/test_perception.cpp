#include <doctest.h>

#include "gis/core/error.hpp"
#include "gis/loss/perception.hpp"
#include "support.hpp"

using namespace gis;
using gis::test::numeric_gradient;
using gis::test::random_tensor;
using gis::test::relative_error;

namespace {

ExtractorSpec shallow(std::vector<int> layers = {0, 1, 2}) {
  ExtractorSpec s;
  s.use_layers = std::move(layers);
  return s;
}

Tensor<double> random_mask(Shape4 s, Rng& rng, double p = 0.5) {
  Tensor<double> m(s);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform() < p ? 1.0 : 0.0;
  return m;
}

}  // namespace

TEST_CASE("extractor contracts") {
  Rng rng(1);
  const auto img = random_tensor<float>({1, 3, 64, 64}, rng, 0, 1);

  FeatureExtractor<float> id(ExtractorSpec::parse("identity"));
  const auto a = id.extract(img);
  REQUIRE(a.size() == 1);
  CHECK(a[0] == img);

  FeatureExtractor<float> fx;
  const auto shapes = fx.layer_shapes(img.shape());
  const auto feats = fx.extract(img);
  REQUIRE(feats.size() == 5);
  const int ch[] = {16, 32, 64, 64, 64};
  for (int l = 0; l < 5; ++l) {
    CHECK(feats[l].shape() == shapes[l]);
    CHECK(shapes[l] == Shape4{1, ch[l], 32 >> l, 32 >> l});
    if (l > 0) CHECK(shapes[l].h <= shapes[l - 1].h);
  }
  // Same image, same activations; deterministic construction from the seed.
  FeatureExtractor<float> again;
  const auto feats2 = again.extract(img);
  for (int l = 0; l < 5; ++l) CHECK(feats2[l] == feats[l]);

  const auto w = fx.layer_weights(img.shape());
  CHECK(w[0] == doctest::Approx(1.0 / (16 * 32 * 32)));
  CHECK(w[4] == doctest::Approx(1.0 / (64 * 2 * 2)));

  CHECK_THROWS_AS(fx.extract(Tensor<float>(1, 3, 16, 16)), ShapeError);
  CHECK_THROWS_AS(fx.extract(Tensor<float>(1, 3, 48, 64)), ShapeError);
  CHECK_NOTHROW(FeatureExtractor<float>(shallow()).extract(Tensor<float>(1, 3, 8, 8)));
  CHECK_THROWS_AS(ExtractorSpec::parse("vgg"), ConfigError);
  CHECK_THROWS_AS(FeatureExtractor<float>(shallow({0, 7})), ConfigError);
}

TEST_CASE("weights file round trip") {
  gis::test::TempDir dir("fx");
  ExtractorSpec s;
  s.seed = 99;
  FeatureExtractor<float> src(s);
  save_extractor(src, dir / "w.gis");
  FeatureExtractor<float> loaded(ExtractorSpec::parse("file:" + (dir / "w.gis").string()));
  Rng rng(2);
  const auto img = random_tensor<float>({1, 3, 32, 32}, rng, 0, 1);
  const auto a = src.extract(img);
  const auto b = loaded.extract(img);
  for (std::size_t l = 0; l < a.size(); ++l) CHECK(a[l] == b[l]);
  // Different from the default seed.
  CHECK_FALSE(FeatureExtractor<float>().extract(img)[0] == a[0]);
}

TEST_CASE("perceptual loss examples") {
  Rng rng(3);
  const Shape4 s{2, 3, 32, 32};
  const auto it = random_tensor<double>(s, rng, 0, 1);
  const auto is = random_tensor<double>(s, rng, 0, 1);
  const auto mask = random_mask({2, 1, 32, 32}, rng);
  Tensor<double> ones(Shape4{2, 1, 32, 32});
  ones.fill(1.0);
  FeatureExtractor<double> fx;

  for (double v : perceptual_loss(fx, it, it, mask)) CHECK(v == 0.0);
  for (double v : perceptual_loss(fx, it, is, Tensor<double>(Shape4{2, 1, 32, 32}))) CHECK(v == 0.0);

  SUBCASE("identity extractor reduces to the masked L1 over the frame") {
    FeatureExtractor<double> id(ExtractorSpec::parse("identity"));
    const auto lp = perceptual_loss(id, it, is, mask);
    const auto plain = perceptual_loss(id, it, is, ones);
    for (int n = 0; n < 2; ++n) {
      double masked = 0, all = 0;
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 32; ++y)
          for (int x = 0; x < 32; ++x) {
            const double d = std::abs(it(n, c, y, x) - is(n, c, y, x));
            masked += mask(n, 0, y, x) * d;
            all += d;
          }
      CHECK(lp[n] == doctest::Approx(masked / (3 * 32 * 32)).epsilon(1e-12));
      CHECK(plain[n] == doctest::Approx(all / (3 * 32 * 32)).epsilon(1e-12));
    }
  }
  SUBCASE("symmetry") {
    const auto ab = perceptual_loss(fx, it, is, mask);
    const auto ba = perceptual_loss(fx, is, it, mask);
    for (int n = 0; n < 2; ++n) CHECK(ab[n] == doctest::Approx(ba[n]).epsilon(1e-12));
  }
  SUBCASE("monotone in the mask") {
    auto grow = mask;
    double prev = perceptual_loss(fx, it, is, grow)[0];
    for (int step = 0; step < 6; ++step) {
      for (std::size_t i = 0; i < grow.size(); ++i)
        if (rng.uniform() < 0.3) grow[i] = 1.0;
      const double cur = perceptual_loss(fx, it, is, grow)[0];
      CHECK(cur >= prev);
      prev = cur;
    }
  }
  SUBCASE("precomputed target features give the same value") {
    const auto a = perceptual_loss(fx, it, is, mask);
    const auto b = perceptual_loss(fx, fx.extract(it), is, mask);
    CHECK(a == b);
  }
}

TEST_CASE("perceptual loss gradient on 8x8 images") {
  Rng rng(4);
  const Shape4 s{2, 3, 8, 8};
  const auto it = random_tensor<double>(s, rng, 0, 1);
  const auto is = random_tensor<double>(s, rng, 0, 1);
  const auto mask = random_mask({2, 1, 8, 8}, rng, 0.6);
  const std::vector<double> weights{0.7, 1.3};
  for (const auto& spec : {shallow(), shallow({1}), ExtractorSpec::parse("identity")}) {
    FeatureExtractor<double> fx(spec);
    Tensor<double> grad;
    perceptual_loss(fx, it, is, mask, &weights, &grad);
    auto f = [&](const Tensor<double>& x) {
      const auto v = perceptual_loss(fx, it, x, mask);
      return weights[0] * v[0] + weights[1] * v[1];
    };
    CHECK(relative_error(grad, numeric_gradient(f, is)) < 1e-4);
  }
}
