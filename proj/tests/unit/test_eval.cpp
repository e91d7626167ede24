#include <doctest.h>

#include <fstream>

#include "gis/core/error.hpp"
#include "gis/eval/eval.hpp"
#include "gis/scene/scene.hpp"
#include "gis/train/trainer.hpp"
#include "support.hpp"

using namespace gis;

namespace {

std::vector<GBufferSample> samples(int n) {
  scene::SceneConfig c;
  c.height = 32;
  c.width = 32;
  return scene::make_samples(n, 9, c);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("metric examples") {
  const auto s = samples(4);
  const auto& a = s[0];
  REQUIRE(a.foreground_pixels() > 0);

  SUBCASE("perfect outputs") {
    const auto e = evaluate_sample({*a.target, *a.target}, a);
    CHECK(*e.masked_l1 == 0.0);
    CHECK(*e.masked_psnr == kPsnrCap);
    CHECK(*e.spread == 0.0);
    CHECK(e.background_l1 == 0.0);
  }
  SUBCASE("mid gray gives the mean foreground deviation from 0.5") {
    Tensor<float> gray(a.target->shape());
    gray.fill(0.5f);
    double acc = 0, area = 0;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        const double m = a.mask(0, 0, y, x);
        area += m;
        for (int c = 0; c < 3; ++c) acc += m * std::abs((*a.target)(0, c, y, x) - 0.5);
      }
    const auto e = evaluate_sample({gray}, a);
    CHECK(*e.masked_l1 == doctest::Approx(acc / (3 * area)).epsilon(1e-9));
    CHECK(*e.spread == 0.0);  // K = 1
  }
  SUBCASE("best of K and spread") {
    Tensor<float> gray(a.target->shape()), white(a.target->shape());
    gray.fill(0.5f);
    white.fill(1.0f);
    const auto e = evaluate_sample({white, *a.target, gray}, a);
    CHECK(e.best_k == 1);
    CHECK(e.per_k_l1.size() == 3);
    // Pairwise L1 between the two constant images is 0.5 on every pixel.
    const double pair_wg = 0.5;
    const double pair_wt = *masked_l1(white, *a.target, a.mask);
    const double pair_tg = *masked_l1(*a.target, gray, a.mask);
    CHECK(*e.spread == doctest::Approx((pair_wg + pair_wt + pair_tg) / 3).epsilon(1e-9));
  }
  SUBCASE("no foreground") {
    Tensor<float> empty(a.mask.shape());
    CHECK_FALSE(masked_l1(*a.target, *a.target, empty).has_value());
    CHECK_FALSE(masked_psnr(*a.target, *a.target, empty).has_value());
  }
}

TEST_CASE("dataset aggregates are means over samples") {
  const auto s = samples(5);
  auto gray = [](const GBufferSample& g) {
    Tensor<float> t(g.target->shape());
    t.fill(0.5f);
    return std::vector<Tensor<float>>{t, *g.target};
  };
  const auto r = evaluate(gray, s);
  REQUIRE(r.samples.size() == 5);
  double l1 = 0, spread = 0, bg = 0;
  int fg = 0;
  for (const auto& e : r.samples) {
    bg += e.background_l1 / 5;
    if (!e.has_foreground) continue;
    ++fg;
    l1 += *e.masked_l1;
    spread += *e.spread;
  }
  CHECK(r.foreground_samples == fg);
  CHECK(r.masked_l1 == doctest::Approx(l1 / fg).epsilon(1e-12));
  CHECK(r.spread == doctest::Approx(spread / fg).epsilon(1e-12));
  CHECK(r.background_l1 == doctest::Approx(bg).epsilon(1e-12));
  CHECK(r.to_json().at("samples").size() == 5);
  CHECK_FALSE(r.table().empty());

  CHECK_THROWS_AS(evaluate(gray, std::span<const GBufferSample>{}), ValidationError);
  auto no_target = s;
  no_target[1].target.reset();
  CHECK_THROWS_AS(evaluate(gray, no_target), ValidationError);
}

TEST_CASE("gallery layout and determinism") {
  const auto s = samples(2);
  std::vector<Tensor<float>> outs(3, *s[0].target);
  io::TextChunks text;
  const auto grid = gallery_grid(s[0], outs, &text);
  CHECK(grid.height == 32);
  CHECK(grid.width == 9 * 32 + 8 * 2);
  bool layout = false;
  for (const auto& [k, v] : text) layout |= k == "layout-version";
  CHECK(layout);

  auto blank = s[0];
  blank.mask.zero();
  blank.normals.zero();
  blank.depth.zero();
  blank.materials.zero();
  gallery_grid(blank, outs, &text);
  bool annotated = false;
  for (const auto& [k, v] : text) annotated |= (k == "annotation" && v == "no foreground");
  CHECK(annotated);

  // Emitted files are byte-identical across runs.
  gis::test::TempDir dir("gallery");
  scene::SceneConfig sc;
  sc.height = sc.width = 32;
  scene::generate_dataset(3, 4, dir / "data", sc, 3);
  TrainConfig cfg;
  cfg.dataset = (dir / "data").string();
  cfg.out = (dir / "run").string();
  cfg.steps = 0;
  cfg.generator.levels = 3;
  cfg.generator.widths = {4, 4, 4};
  cfg.generator.k = 3;
  cfg.resolve(32, 32);
  const auto r = fit(cfg);
  const auto ds = load_dataset(dir / "data");
  const auto a = emit_gallery(r.final_checkpoint, ds.samples, dir / "g1");
  const auto b = emit_gallery(r.final_checkpoint, ds.samples, dir / "g2", 2);
  REQUIRE(a.size() == 3);
  REQUIRE(b.size() == 2);
  for (int i = 0; i < 2; ++i) CHECK(slurp(a[i]) == slurp(b[i]));
  const auto img = io::read_png(a[0]);
  CHECK(img.width == 9 * 32 + 8 * 2);
}
