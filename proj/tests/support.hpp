#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>

#include "gis/core/rng.hpp"
#include "gis/core/tensor.hpp"
#include "gis/gbuffer/sample.hpp"

namespace gis::test {

template <class T>
Tensor<T> random_tensor(Shape4 s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

// ||a - b|| / max(||a||, ||b||), with a floor so two zero vectors compare equal.
inline double relative_error(const Tensor<double>& a, const Tensor<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

// Central differences of f at x, one coordinate at a time.
inline Tensor<double> numeric_gradient(const std::function<double(const Tensor<double>&)>& f,
                                       Tensor<double> x, double h = 1e-6) {
  Tensor<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("gis_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

// Valid sample with a centered disc of foreground, facing normals and a
// single material.
inline GBufferSample disc_sample(int h, int w, int palette_size, double radius_frac = 0.3,
                                 int material = 0) {
  GBufferSample s = GBufferSample::blank(h, w, palette_size, 1.0f);
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const double r = radius_frac * std::min(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      s.background(0, 0, y, x) = 0.2f + 0.6f * static_cast<float>(y) / h;
      s.background(0, 1, y, x) = 0.5f;
      s.background(0, 2, y, x) = 0.3f + 0.4f * static_cast<float>(x) / w;
      if ((y - cy) * (y - cy) + (x - cx) * (x - cx) > r * r) continue;
      s.mask(0, 0, y, x) = 1.0f;
      s.normals(0, 2, y, x) = 1.0f;
      s.depth(0, 0, y, x) = 2.0f;
      s.materials(0, material, y, x) = 1.0f;
    }
  }
  s.target = s.background;
  return s;
}

}  // namespace gis::test
