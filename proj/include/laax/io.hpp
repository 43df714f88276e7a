#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "laax/synthesis.hpp"

namespace laax {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Named float64 arrays plus a JSON metadata block.
///
/// Layout (little-endian):
///   8 bytes  magic "LAAXNDA1"
///   u32      metadata length, then that many bytes of UTF-8 JSON
///   u32      array count
///   per array: u16 name length, name bytes, u8 dtype (1 = f64), u8 rank,
///              rank x u64 dims, numel x f64 values
struct ArrayBundle {
  json meta = json::object();
  std::map<std::string, Tensor> arrays;

  const Tensor& at(const std::string& name) const {
    auto it = arrays.find(name);
    require(it != arrays.end(), Errc::io, "array '" + name + "' missing from bundle");
    return it->second;
  }
  bool has(const std::string& name) const { return arrays.count(name) > 0; }
};

inline constexpr char kBundleMagic[8] = {'L', 'A', 'A', 'X', 'N', 'D', 'A', '1'};

namespace detail {

static_assert(std::endian::native == std::endian::little, "bundle I/O assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(is), Errc::io, "truncated bundle: " + path);
  return v;
}

}  // namespace detail

inline void save_bundle(const ArrayBundle& b, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), Errc::io, "cannot open '" + path.string() + "' for writing");
  os.write(kBundleMagic, sizeof kBundleMagic);
  const std::string meta = b.meta.dump();
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(meta.size()));
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(b.arrays.size()));
  for (const auto& [name, t] : b.arrays) {
    require(name.size() < 65536, Errc::io, "array name too long");
    detail::put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put<std::uint8_t>(os, 1);
    detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(t.dim()));
    for (auto d : t.shape()) detail::put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  require(static_cast<bool>(os), Errc::io, "write failed: " + path.string());
}

inline ArrayBundle load_bundle(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), Errc::io, "cannot open '" + path.string() + "'");
  const std::string p = path.string();
  char magic[8];
  is.read(magic, 8);
  require(static_cast<bool>(is) && std::memcmp(magic, kBundleMagic, 8) == 0, Errc::io, "not a LAAX bundle: " + p);
  ArrayBundle b;
  std::string meta(detail::get<std::uint32_t>(is, p), '\0');
  is.read(meta.data(), static_cast<std::streamsize>(meta.size()));
  require(static_cast<bool>(is), Errc::io, "truncated bundle metadata: " + p);
  try {
    b.meta = json::parse(meta);
  } catch (const json::exception& e) {
    throw Error(Errc::io, "bad bundle metadata in " + p + ": " + e.what());
  }
  const auto count = detail::get<std::uint32_t>(is, p);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(detail::get<std::uint16_t>(is, p), '\0');
    is.read(name.data(), static_cast<std::streamsize>(name.size()));
    require(detail::get<std::uint8_t>(is, p) == 1, Errc::io, "unsupported dtype for '" + name + "'");
    Shape shape(detail::get<std::uint8_t>(is, p));
    for (auto& d : shape) d = detail::get<std::uint64_t>(is, p);
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
    require(static_cast<bool>(is), Errc::io, "truncated data for '" + name + "' in " + p);
    b.arrays.emplace(std::move(name), std::move(t));
  }
  return b;
}

/// Binary PPM (P6) for 3-channel images, PGM (P5) for 1-channel; values in
/// [0,1] are quantized to 8 bits.
inline void write_pnm(const Tensor& image, const fs::path& path) {
  require(image.dim() == 3 && (image.size(0) == 1 || image.size(0) == 3), Errc::shape_mismatch,
          "write_pnm expects [1|3, H, W]");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), Errc::io, "cannot open '" + path.string() + "' for writing");
  const std::size_t c = image.size(0), h = image.size(1), w = image.size(2);
  os << (c == 3 ? "P6" : "P5") << "\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> buf(c * h * w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t col = 0; col < w; ++col)
      for (std::size_t ch = 0; ch < c; ++ch)
        buf[(r * w + col) * c + ch] =
            static_cast<unsigned char>(std::lround(std::clamp(image(ch, r, col), 0.0, 1.0) * 255.0));
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  require(static_cast<bool>(os), Errc::io, "write failed: " + path.string());
}

inline Tensor read_pnm(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), Errc::io, "cannot open '" + path.string() + "'");
  auto token = [&]() {
    std::string t;
    while (is >> std::ws && is.peek() == '#') std::getline(is, t);
    is >> t;
    return t;
  };
  const std::string magic = token();
  require(magic == "P6" || magic == "P5", Errc::io, "unsupported image format in " + path.string());
  std::size_t w = 0, h = 0, maxv = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxv = std::stoul(token());
  } catch (const std::exception&) {
    throw Error(Errc::io, "malformed header in " + path.string());
  }
  require(maxv > 0 && maxv < 256, Errc::io, "only 8-bit images are supported: " + path.string());
  is.get();
  const std::size_t c = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> buf(c * h * w);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  require(static_cast<bool>(is), Errc::io, "truncated image data: " + path.string());
  Tensor out({c, h, w});
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t col = 0; col < w; ++col)
      for (std::size_t ch = 0; ch < c; ++ch)
        out(ch, r, col) = static_cast<double>(buf[(r * w + col) * c + ch]) / static_cast<double>(maxv);
  return out;
}

/// Loads real faces from a directory of `name.ppm` images, each with a
/// `name.txt` of whitespace-separated "row col" landmark pairs.
inline std::vector<FaceSample> load_face_directory(const fs::path& dir, std::size_t expected_size = 0) {
  require(fs::is_directory(dir), Errc::io, "dataset directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> images;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".ppm" || e.path().extension() == ".pgm") images.push_back(e.path());
  std::sort(images.begin(), images.end());
  require(!images.empty(), Errc::io, "no .ppm/.pgm images in '" + dir.string() + "'");
  std::vector<FaceSample> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    FaceSample s;
    s.image = read_pnm(images[i]);
    require(s.image.size(1) == s.image.size(2), Errc::io, "non-square image " + images[i].string());
    if (expected_size)
      require(s.image.size(1) == expected_size, Errc::io,
              images[i].string() + " has side " + std::to_string(s.image.size(1)) + ", expected " +
                  std::to_string(expected_size));
    fs::path lm = images[i];
    lm.replace_extension(".txt");
    std::ifstream ls(lm);
    require(static_cast<bool>(ls), Errc::io, "missing landmark file " + lm.string());
    Landmark p;
    while (ls >> p.row >> p.col) s.landmarks.push_back(p);
    require(s.landmarks.size() >= 3, Errc::io, "fewer than 3 landmarks in " + lm.string());
    s.identity_seed = i;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace laax
