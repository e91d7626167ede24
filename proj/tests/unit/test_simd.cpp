#include <doctest.h>

#include <vector>

#include "gis/core/error.hpp"
#include "gis/simd/gemm.hpp"
#include "support.hpp"

using namespace gis;
using simd::Isa;
using simd::Trans;

namespace {

std::vector<Isa> tiers() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::avx512})
    if (simd::isa_available(isa)) out.push_back(isa);
  return out;
}

template <class T>
std::vector<T> random_vec(std::size_t n, Rng& rng) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1, 1));
  return v;
}

template <class T>
void check_case(Trans ta, Trans tb, int m, int n, int k, T alpha, T beta, double tol) {
  Rng rng(static_cast<std::uint64_t>(m * 7919 + n * 31 + k));
  const int lda = (ta == Trans::no ? k : m) + 3;
  const int ldb = (tb == Trans::no ? n : k) + 1;
  const int ldc = n + 2;
  const auto a = random_vec<T>(static_cast<std::size_t>(lda) * (ta == Trans::no ? m : k), rng);
  const auto b = random_vec<T>(static_cast<std::size_t>(ldb) * (tb == Trans::no ? k : n), rng);
  const auto c0 = random_vec<T>(static_cast<std::size_t>(ldc) * m, rng);

  auto want = c0;
  simd::gemm_reference(ta, tb, m, n, k, alpha, a.data(), lda, b.data(), ldb, beta, want.data(), ldc);
  for (Isa isa : tiers()) {
    CAPTURE(simd::isa_name(isa));
    auto got = c0;
    simd::gemm_on(isa, ta, tb, m, n, k, alpha, a.data(), lda, b.data(), ldb, beta, got.data(), ldc);
    double err = 0;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < ldc; ++j) {
        const std::size_t idx = static_cast<std::size_t>(i) * ldc + j;
        if (j >= n) {
          REQUIRE(got[idx] == c0[idx]);  // padding columns untouched
          continue;
        }
        err = std::max(err, std::abs(static_cast<double>(got[idx]) - want[idx]));
      }
    }
    CHECK(err <= tol * (1 + k));
  }
}

}  // namespace

TEST_CASE("gemm tiers agree with the reference across shapes and transposes") {
  const int shapes[][3] = {{1, 1, 1},   {3, 5, 7},     {16, 16, 16}, {17, 33, 9},
                           {64, 70, 300}, {130, 1030, 20}, {5, 2049, 3}, {200, 8, 513}};
  for (auto ta : {Trans::no, Trans::yes}) {
    for (auto tb : {Trans::no, Trans::yes}) {
      for (const auto& s : shapes) {
        CAPTURE(s[0]);
        CAPTURE(s[1]);
        CAPTURE(s[2]);
        check_case<float>(ta, tb, s[0], s[1], s[2], 1.0f, 0.0f, 1e-6);
        check_case<float>(ta, tb, s[0], s[1], s[2], -0.5f, 1.0f, 1e-6);
        check_case<double>(ta, tb, s[0], s[1], s[2], 2.0, 0.25, 1e-14);
      }
    }
  }
}

TEST_CASE("beta zero does not read C") {
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::vector<float> a(4, 1.0f), b(4, 1.0f), c(4, nan);
  for (Isa isa : tiers()) {
    std::fill(c.begin(), c.end(), nan);
    simd::gemm_on(isa, Trans::no, Trans::no, 2, 2, 2, 1.0f, a.data(), 2, b.data(), 2, 0.0f, c.data(), 2);
    for (float v : c) CHECK(v == 2.0f);
  }
}

TEST_CASE("k = 0 scales C by beta") {
  std::vector<double> c{1, 2, 3, 4}, a(2, 0.0), b(2, 0.0);
  simd::gemm(Trans::no, Trans::no, 2, 2, 0, 1.0, a.data(), 1, b.data(), 2, 3.0, c.data(), 2);
  CHECK(c == std::vector<double>{3, 6, 9, 12});
}

TEST_CASE("tier selection") {
  CHECK(simd::isa_available(Isa::scalar));
  CHECK(simd::isa_available(simd::best_available_isa()));
  CHECK(simd::parse_isa("avx2") == Isa::avx2);
  CHECK_FALSE(simd::parse_isa("sse9").has_value());
  {
    simd::ScopedIsa scope(Isa::scalar);
    CHECK(simd::active_isa() == Isa::scalar);
  }
  CHECK(simd::isa_available(simd::active_isa()));
  for (Isa isa : {Isa::avx2, Isa::avx512}) {
    if (!simd::isa_available(isa)) CHECK_THROWS_AS(simd::set_active_isa(isa), ConfigError);
  }
}
