#include "pamo/io.hpp"

#include "pamo/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace pamo::io {

namespace {

class Writer {
 public:
  explicit Writer(const fs::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error(ErrorKind::Io, fmt::format("cannot open '{}' for writing", path.string()));
  }
  template <typename T>
  void put(const T& v) { out_.write(reinterpret_cast<const char*>(&v), sizeof(T)); }
  template <typename T>
  void put_array(const T* p, std::size_t n) { out_.write(reinterpret_cast<const char*>(p), sizeof(T) * n); }
  void finish() {
    out_.flush();
    if (!out_) throw Error(ErrorKind::Io, fmt::format("write to '{}' failed", path_.string()));
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const fs::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw Error(ErrorKind::Io, fmt::format("cannot open '{}'", path.string()));
  }
  template <typename T>
  T get() {
    T v{};
    get_array(&v, 1);
    return v;
  }
  template <typename T>
  void get_array(T* p, std::size_t n) {
    in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(sizeof(T) * n));
    if (!in_) throw Error(ErrorKind::Io, fmt::format("'{}' is truncated", path_.string()));
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::ifstream in_;
};

void put_header(Writer& w, std::uint64_t count) {
  w.put_array(kMagic, 4);
  w.put(kVersion);
  w.put(count);
}

std::uint64_t get_header(Reader& r) {
  char magic[4];
  r.get_array(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorKind::Io, fmt::format("'{}' is not a PAMO file", r.path().string()));
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw Error(ErrorKind::Io, fmt::format("'{}' has unsupported version {}", r.path().string(), version));
  }
  return r.get<std::uint64_t>();
}

template <typename T>
void write_image_impl(const fs::path& path, const Image<T>& image, std::uint32_t dtype) {
  Writer w(path);
  put_header(w, image.data.size());
  w.put(static_cast<std::uint32_t>(image.width));
  w.put(static_cast<std::uint32_t>(image.height));
  w.put(static_cast<std::uint32_t>(image.channels));
  w.put(dtype);
  w.put_array(image.data.data(), image.data.size());
  w.finish();
}

template <typename T>
Image<T> read_image_impl(const fs::path& path, std::uint32_t dtype) {
  Reader r(path);
  const auto count = get_header(r);
  const auto w = r.get<std::uint32_t>();
  const auto h = r.get<std::uint32_t>();
  const auto c = r.get<std::uint32_t>();
  const auto t = r.get<std::uint32_t>();
  if (t != dtype) throw Error(ErrorKind::Io, fmt::format("'{}' has element type {}", path.string(), t));
  if (static_cast<std::uint64_t>(w) * h * c != count) {
    throw Error(ErrorKind::Io, fmt::format("'{}' header is inconsistent", path.string()));
  }
  Image<T> image(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
  r.get_array(image.data.data(), image.data.size());
  return image;
}

}  // namespace

void write_field(const fs::path& path, const PartField& field) {
  const std::size_t n = field.size();
  std::vector<float> centers(3 * n), colors(3 * n), radius(n), opacity(n);
  std::vector<std::int32_t> ids(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& g = field.gaussians[j];
    for (int a = 0; a < 3; ++a) {
      centers[3 * j + a] = static_cast<float>(g.center[a]);
      colors[3 * j + a] = static_cast<float>(g.color[a]);
    }
    radius[j] = static_cast<float>(g.radius);
    opacity[j] = static_cast<float>(g.opacity);
    ids[j] = g.part_id;
  }
  Writer w(path);
  put_header(w, n);
  w.put_array(centers.data(), centers.size());
  w.put_array(colors.data(), colors.size());
  w.put_array(radius.data(), n);
  w.put_array(opacity.data(), n);
  w.put_array(ids.data(), n);
  w.finish();
}

PartField read_field(const fs::path& path) {
  Reader r(path);
  const auto n = get_header(r);
  std::vector<float> centers(3 * n), colors(3 * n), radius(n), opacity(n);
  std::vector<std::int32_t> ids(n);
  r.get_array(centers.data(), centers.size());
  r.get_array(colors.data(), colors.size());
  r.get_array(radius.data(), n);
  r.get_array(opacity.data(), n);
  r.get_array(ids.data(), n);
  PartField field;
  field.gaussians.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    auto& g = field.gaussians[j];
    g.center = Vec3(centers[3 * j], centers[3 * j + 1], centers[3 * j + 2]);
    g.color = Vec3(colors[3 * j], colors[3 * j + 1], colors[3 * j + 2]);
    g.radius = radius[j];
    g.opacity = opacity[j];
    g.part_id = ids[j];
  }
  field.rebuild_parts();
  return field;
}

void write_image(const fs::path& path, const ImageF& image) { write_image_impl(path, image, 0); }
void write_image(const fs::path& path, const ImageI& image) { write_image_impl(path, image, 1); }
ImageF read_image_f(const fs::path& path) { return read_image_impl<float>(path, 0); }
ImageI read_image_i(const fs::path& path) { return read_image_impl<std::int32_t>(path, 1); }

void write_flo(const fs::path& path, const ImageF& flow) {
  if (flow.channels != 2) throw Error(ErrorKind::DimensionMismatch, "flow must have 2 channels");
  Writer w(path);
  w.put(kFloMagic);
  w.put(static_cast<std::int32_t>(flow.width));
  w.put(static_cast<std::int32_t>(flow.height));
  w.put_array(flow.data.data(), flow.data.size());
  w.finish();
}

ImageF read_flo(const fs::path& path) {
  Reader r(path);
  if (r.get<float>() != kFloMagic) throw Error(ErrorKind::Io, fmt::format("'{}' is not a .flo file", path.string()));
  const auto w = r.get<std::int32_t>();
  const auto h = r.get<std::int32_t>();
  if (w <= 0 || h <= 0) throw Error(ErrorKind::Io, fmt::format("'{}' has invalid size", path.string()));
  ImageF flow(w, h, 2);
  r.get_array(flow.data.data(), flow.data.size());
  return flow;
}

void write_pnm(const fs::path& path, const ImageF& image, float lo, float hi) {
  if (image.channels != 1 && image.channels != 3) {
    throw Error(ErrorKind::DimensionMismatch, "PNM export needs 1 or 3 channels");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot open '{}' for writing", path.string()));
  out << (image.channels == 1 ? "P5" : "P6") << "\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> bytes(image.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const float v = image.data[i];
    const float t = std::isfinite(v) ? std::clamp((v - lo) / (hi - lo), 0.0f, 1.0f) : 0.0f;
    bytes[i] = static_cast<unsigned char>(std::lround(t * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot open '{}' for writing", path.string()));
  out << text;
  if (!out) throw Error(ErrorKind::Io, fmt::format("write to '{}' failed", path.string()));
}

}  // namespace pamo::io
