#pragma once

// Interleaved float images and binary PPM/PGM I/O.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "densereg/common.hpp"

namespace densereg {

struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;  // row-major, channels interleaved, values in [0,1]

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int row, int col, int c) { return data[(static_cast<std::size_t>(row) * width + col) * channels + c]; }
  float at(int row, int col, int c) const {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + c];
  }
  friend bool operator==(const Image&, const Image&) = default;
};

inline std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

/// P6 for 3 channels, P5 for 1.
inline void write_pnm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw InvalidInput("PNM output needs 1 or 3 channels");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << (img.channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
  std::string bytes(img.data.size(), '\0');
  for (std::size_t i = 0; i < img.data.size(); ++i) bytes[i] = static_cast<char>(to_byte(img.data[i]));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

/// Writes raw 8-bit values (label images) as P5.
inline void write_pgm_labels(const std::filesystem::path& path, int width, int height,
                             const std::vector<std::uint8_t>& labels) {
  if (labels.size() != static_cast<std::size_t>(width) * height) throw InvalidInput("label image size mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

inline Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if ((magic != "P6" && magic != "P5") || w <= 0 || h <= 0 || maxval != 255)
    throw FormatError("unsupported PNM header in " + path.string());
  in.get();
  Image img(w, h, magic == "P6" ? 3 : 1);
  std::string bytes(img.data.size(), '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw FormatError("truncated PNM " + path.string());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    img.data[i] = static_cast<float>(static_cast<unsigned char>(bytes[i])) / 255.0f;
  return img;
}

}  // namespace densereg
