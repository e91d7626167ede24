#include "gis/io/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "gis/core/error.hpp"

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace gis::io {

namespace {

constexpr char kMagic[8] = {'G', 'I', 'S', 'C', 'K', 'P', 'T', '1'};

const char* dtype_name(DType d) { return d == DType::f32 ? "f32" : "f64"; }

DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  throw IoError("archive: unknown dtype '" + s + "'");
}

std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

template <class Dst, class Src>
void convert_into(const unsigned char* src, std::size_t count, Dst* dst) {
  for (std::size_t i = 0; i < count; ++i) {
    Src v;
    std::memcpy(&v, src + i * sizeof(Src), sizeof(Src));
    dst[i] = static_cast<Dst>(v);
  }
}

}  // namespace

template <class T>
void Archive::put(const std::string& name, const Tensor<T>& t, DType dtype) {
  ArchiveEntry e;
  e.dtype = dtype;
  e.shape = t.shape();
  e.bytes.resize(t.size() * dtype_size(dtype));
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (dtype == DType::f32) {
      const float v = static_cast<float>(t.data()[i]);
      std::memcpy(e.bytes.data() + i * 4, &v, 4);
    } else {
      const double v = static_cast<double>(t.data()[i]);
      std::memcpy(e.bytes.data() + i * 8, &v, 8);
    }
  }
  entries_[name] = std::move(e);
}

const ArchiveEntry& Archive::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw IoError("archive: missing array '" + name + "'");
  return it->second;
}

template <class T>
Tensor<T> Archive::get(const std::string& name) const {
  const ArchiveEntry& e = entry(name);
  Tensor<T> t(e.shape);
  if (e.dtype == DType::f32) {
    convert_into<T, float>(e.bytes.data(), t.size(), t.data());
  } else {
    convert_into<T, double>(e.bytes.data(), t.size(), t.data());
  }
  return t;
}

std::vector<std::string> Archive::names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

void Archive::save(const std::filesystem::path& path) const {
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, e] : entries_) {
    index.push_back({{"name", name},
                     {"dtype", dtype_name(e.dtype)},
                     {"shape", {e.shape.n, e.shape.c, e.shape.h, e.shape.w}},
                     {"offset", offset},
                     {"bytes", e.bytes.size()}});
    offset += e.bytes.size();
  }
  const std::string header = nlohmann::json{{"meta", meta}, {"arrays", index}}.dump();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("archive: cannot open " + tmp.string() + " for writing");
    const std::uint32_t ver = version;
    const std::uint64_t len = header.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, e] : entries_) {
      out.write(reinterpret_cast<const char*>(e.bytes.data()),
                static_cast<std::streamsize>(e.bytes.size()));
    }
    out.flush();
    if (!out) throw IoError("archive: write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("archive: rename to " + path.string() + " failed: " + ec.message());
}

Archive Archive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("archive: cannot open " + path.string());
  char magic[8];
  std::uint32_t ver = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("archive: " + path.string() + " is not an archive");
  }
  if (ver != kArchiveVersion) {
    throw IoError("archive: unsupported version " + std::to_string(ver));
  }
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("archive: truncated header in " + path.string());

  Archive a;
  a.version = ver;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("archive: bad header: ") + e.what());
  }
  a.meta = j.at("meta");
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  for (const auto& item : j.at("arrays")) {
    ArchiveEntry e;
    e.dtype = parse_dtype(item.at("dtype").get<std::string>());
    const auto s = item.at("shape").get<std::vector<int>>();
    if (s.size() != 4) throw IoError("archive: bad shape rank");
    e.shape = {s[0], s[1], s[2], s[3]};
    const auto off = item.at("offset").get<std::uint64_t>();
    const auto bytes = item.at("bytes").get<std::uint64_t>();
    if (bytes != e.shape.size() * dtype_size(e.dtype) || off + bytes > blob.size()) {
      throw IoError("archive: array '" + item.at("name").get<std::string>() + "' out of bounds");
    }
    e.bytes.assign(blob.begin() + static_cast<std::ptrdiff_t>(off),
                   blob.begin() + static_cast<std::ptrdiff_t>(off + bytes));
    a.entries_[item.at("name").get<std::string>()] = std::move(e);
  }
  return a;
}

template void Archive::put(const std::string&, const Tensor<float>&, DType);
template void Archive::put(const std::string&, const Tensor<double>&, DType);
template Tensor<float> Archive::get(const std::string&) const;
template Tensor<double> Archive::get(const std::string&) const;

}  // namespace gis::io
