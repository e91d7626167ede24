#include <doctest.h>

#include <fstream>
#include <iterator>

#include "gis/core/error.hpp"
#include "gis/core/rng.hpp"
#include "gis/io/archive.hpp"
#include "gis/io/png.hpp"
#include "support.hpp"

using namespace gis;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("rng streams are reproducible and serializable") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  const std::string state = a.to_string();
  const double x = a.uniform(), y = a.normal();
  Rng c;
  c.from_string(state);
  CHECK(c.uniform() == x);
  CHECK(c.normal() == y);
  for (int i = 0; i < 1000; ++i) {
    const int v = a.uniform_int(-3, 4);
    CHECK(v >= -3);
    CHECK(v <= 4);
  }
  CHECK(derive_seed(1, 1) != derive_seed(1, 2));
  CHECK(derive_seed(1, 1) != derive_seed(2, 1));
}

TEST_CASE("png round trip, text chunks and deterministic bytes") {
  gis::test::TempDir dir("png");
  io::Raster8 r{5, 3, 3, {}};
  for (int i = 0; i < 45; ++i) r.pixels.push_back(static_cast<std::uint8_t>(i * 5));
  const io::TextChunks text{{"layout-version", "1"}, {"annotation", "hello"}};
  io::write_png(dir / "a.png", r, text);
  io::write_png(dir / "b.png", r, text);
  CHECK(slurp(dir / "a.png") == slurp(dir / "b.png"));
  const auto back = io::read_png(dir / "a.png");
  CHECK(back.width == 5);
  CHECK(back.height == 3);
  CHECK(back.channels == 3);
  CHECK(back.pixels == r.pixels);
  CHECK(io::read_png_text(dir / "a.png") == text);
  CHECK_THROWS_AS(io::read_png(dir / "none.png"), IoError);

  Tensor<float> img(1, 3, 2, 2);
  img[0] = 0.0f;
  img[1] = 1.0f;
  img[2] = 0.5f;
  img[3] = 2.0f;  // clamps
  const auto q = io::from_raster(io::to_raster(img));
  CHECK(q[0] == 0.0f);
  CHECK(q[1] == 1.0f);
  CHECK(std::abs(q[2] - 0.5f) <= 0.5f / 255.0f + 1e-6f);
  CHECK(q[3] == 1.0f);
  CHECK(io::quantize_unit(-1.0f) == 0);
}

TEST_CASE("archive round trip and dtype conversion") {
  gis::test::TempDir dir("arch");
  Rng rng(1);
  const auto t32 = gis::test::random_tensor<float>({2, 3, 4, 5}, rng);
  const auto t64 = gis::test::random_tensor<double>({1, 1, 3, 7}, rng);
  io::Archive a;
  a.meta["hello"] = "world";
  a.put("f", t32, io::DType::f32);
  a.put("d", t64, io::DType::f64);
  a.put("d_as_f32", t64, io::DType::f32);
  a.save(dir / "x.gis");
  CHECK_FALSE(std::filesystem::exists(dir / "x.gis.tmp"));

  const auto b = io::Archive::load(dir / "x.gis");
  CHECK(b.meta["hello"] == "world");
  CHECK(b.version == io::kArchiveVersion);
  CHECK(b.get<float>("f") == t32);
  CHECK(b.get<double>("d") == t64);
  CHECK(b.get<double>("f") == tensor_cast<double>(t32));
  CHECK(b.get<float>("d_as_f32") == tensor_cast<float>(t64));
  CHECK(b.entry("d").dtype == io::DType::f64);
  CHECK(b.names() == std::vector<std::string>{"d", "d_as_f32", "f"});
  CHECK_THROWS_AS(b.get<float>("missing"), IoError);

  // Saving the loaded archive reproduces the same bytes.
  b.save(dir / "y.gis");
  CHECK(slurp(dir / "x.gis") == slurp(dir / "y.gis"));

  std::ofstream(dir / "bad.gis") << "NOTACKPT";
  CHECK_THROWS_AS(io::Archive::load(dir / "bad.gis"), IoError);
}
