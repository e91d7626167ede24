#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gis/core/tensor.hpp"

namespace gis::io {

// Single-file array archive:
//   "GISCKPT1" | u32 version | u64 header bytes | JSON header | raw arrays
// The header holds caller metadata under "meta" and an "arrays" index of
// {name, dtype, shape, offset}. Offsets are relative to the end of the header;
// all numbers are little-endian.
inline constexpr std::uint32_t kArchiveVersion = 1;

enum class DType { f32, f64 };

struct ArchiveEntry {
  DType dtype = DType::f32;
  Shape4 shape{};
  std::vector<unsigned char> bytes;
};

class Archive {
 public:
  nlohmann::json meta = nlohmann::json::object();
  std::uint32_t version = kArchiveVersion;

  template <class T>
  void put(const std::string& name, const Tensor<T>& t, DType dtype);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const ArchiveEntry& entry(const std::string& name) const;
  // Converts from the stored dtype. Throws IoError on a missing name.
  template <class T>
  Tensor<T> get(const std::string& name) const;
  std::vector<std::string> names() const;

  // Writes to a sibling temporary file and renames it over the target.
  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

 private:
  std::map<std::string, ArchiveEntry> entries_;
};

}  // namespace gis::io
