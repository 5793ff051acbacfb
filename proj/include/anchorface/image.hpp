#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "anchorface/error.hpp"

namespace anchorface {

/// Row-major HWC float image; values nominally in [0, 1]. Pixel (x, y) is
/// centred at (x + 0.5, y + 0.5) in continuous coordinates.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c = 1) : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, 0.0f) {}

  float& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int x, int y, int c = 0) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](float v) { return std::isfinite(v); });
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Bilinear sample at continuous coordinate (u, v); zero outside the image.
inline float sample_bilinear(const Image& img, double u, double v, int c = 0) {
  const double fx = u - 0.5;
  const double fy = v - 0.5;
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const double ax = fx - x0;
  const double ay = fy - y0;
  auto px = [&](int x, int y) -> double {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return 0.0;
    return img.at(x, y, c);
  };
  const double top = (1.0 - ax) * px(x0, y0) + ax * px(x0 + 1, y0);
  const double bot = (1.0 - ax) * px(x0, y0 + 1) + ax * px(x0 + 1, y0 + 1);
  return static_cast<float>((1.0 - ay) * top + ay * bot);
}

// ---- file formats ---------------------------------------------------------
// .fgrid: 8-byte magic "AFGRID01", u32 width, u32 height, u32 channels (all
// little-endian), then width*height*channels little-endian float32 values.
// .pgm: binary (P5) or ASCII (P2) 8-bit greyscale, read-only.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "short write to '" + path + "'");
}

}  // namespace detail

inline std::string encode_fgrid(const Image& img) {
  std::string out = "AFGRID01";
  detail::put_u32(out, static_cast<std::uint32_t>(img.width));
  detail::put_u32(out, static_cast<std::uint32_t>(img.height));
  detail::put_u32(out, static_cast<std::uint32_t>(img.channels));
  for (float v : img.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline Image decode_fgrid(const std::string& bytes) {
  if (bytes.size() < 20 || bytes.compare(0, 8, "AFGRID01") != 0) detail::fail(ErrorKind::Parse, "not an fgrid image");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  Image img(static_cast<int>(detail::get_u32(p + 8)), static_cast<int>(detail::get_u32(p + 12)),
            static_cast<int>(detail::get_u32(p + 16)));
  if (bytes.size() != 20 + 4 * img.data.size()) detail::fail(ErrorKind::Parse, "fgrid payload size mismatch");
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = std::bit_cast<float>(detail::get_u32(p + 20 + 4 * i));
  return img;
}

inline Image decode_pgm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") detail::fail(ErrorKind::Parse, "not a PGM image");
  auto next_int = [&]() {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string line;
      std::getline(in, line);
      in >> std::ws;
    }
    int v = 0;
    if (!(in >> v)) detail::fail(ErrorKind::Parse, "truncated PGM header");
    return v;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) detail::fail(ErrorKind::Parse, "unsupported PGM header");
  Image img(w, h, 1);
  if (magic == "P5") {
    in.get();
    std::vector<char> raw(static_cast<std::size_t>(w) * h);
    if (!in.read(raw.data(), static_cast<std::streamsize>(raw.size()))) detail::fail(ErrorKind::Parse, "truncated PGM data");
    for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = static_cast<unsigned char>(raw[i]) / static_cast<float>(maxval);
  } else {
    for (auto& v : img.data) v = static_cast<float>(next_int()) / static_cast<float>(maxval);
  }
  return img;
}

inline Image decode_image(const std::string& bytes) {
  if (bytes.rfind("AFGRID01", 0) == 0) return decode_fgrid(bytes);
  if (bytes.rfind("P5", 0) == 0 || bytes.rfind("P2", 0) == 0) return decode_pgm(bytes);
  detail::fail(ErrorKind::Parse, "unrecognised image format");
}

inline Image read_image(const std::string& path) { return decode_image(detail::read_file(path)); }
inline void write_fgrid(const std::string& path, const Image& img) { detail::write_file(path, encode_fgrid(img)); }

}  // namespace anchorface
