#pragma once

// DRF1 container: "DRF1", u32 width, u32 height, u32 channel count, one
// descriptor byte per channel, then each channel as row-major LE float32.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "densereg/codec.hpp"
#include "densereg/common.hpp"
#include "densereg/raster.hpp"

namespace densereg {

enum class Channel : std::uint8_t {
  kUh = 0,
  kUv = 1,
  kDepth = 2,
  kMask = 3,
  kParts = 4,
  kQh = 5,
  kQv = 6,
  kRh = 7,
  kRv = 8,
};

struct DrfImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<Channel> descriptors;
  std::vector<std::vector<float>> channels;

  const std::vector<float>* find(Channel c) const {
    for (std::size_t i = 0; i < descriptors.size(); ++i)
      if (descriptors[i] == c) return &channels[i];
    return nullptr;
  }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace detail

inline std::string encode_drf(const DrfImage& img) {
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  if (img.descriptors.size() != img.channels.size()) throw InvalidInput("DRF1: descriptor/channel mismatch");
  std::string out = "DRF1";
  detail::put_u32(out, img.width);
  detail::put_u32(out, img.height);
  detail::put_u32(out, static_cast<std::uint32_t>(img.channels.size()));
  for (auto d : img.descriptors) out.push_back(static_cast<char>(d));
  out.reserve(out.size() + 4 * n * img.channels.size());
  for (const auto& ch : img.channels) {
    if (ch.size() != n) throw InvalidInput("DRF1: channel length does not match dimensions");
    for (float f : ch) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline DrfImage decode_drf(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "DRF1") throw FormatError("not a DRF1 file");
  if (bytes.size() < 16) throw FormatError("DRF1: truncated header");
  DrfImage img;
  img.width = detail::get_u32(bytes, 4);
  img.height = detail::get_u32(bytes, 8);
  const std::uint32_t count = detail::get_u32(bytes, 12);
  if (bytes.size() < 16 + static_cast<std::size_t>(count)) throw FormatError("DRF1: truncated descriptors");
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  const std::size_t payload = bytes.size() - 16 - count;
  if (payload != 4 * n * count)
    throw FormatError("DRF1: payload length " + std::to_string(payload) + " does not match header (" +
                      std::to_string(4 * n * count) + " bytes expected)");
  for (std::uint32_t c = 0; c < count; ++c) {
    const auto d = static_cast<std::uint8_t>(bytes[16 + c]);
    if (d > static_cast<std::uint8_t>(Channel::kRv)) throw FormatError("DRF1: unknown channel descriptor");
    img.descriptors.push_back(static_cast<Channel>(d));
  }
  std::size_t at = 16 + count;
  for (std::uint32_t c = 0; c < count; ++c) {
    std::vector<float> ch(n);
    for (auto& f : ch) {
      f = std::bit_cast<float>(detail::get_u32(bytes, at));
      at += 4;
    }
    img.channels.push_back(std::move(ch));
  }
  return img;
}

inline constexpr Channel kFieldChannels[] = {Channel::kUh, Channel::kUv, Channel::kDepth, Channel::kMask,
                                             Channel::kParts};

inline DrfImage field_to_drf(const CorrespondenceField& f, std::span<const Channel> which = kFieldChannels) {
  DrfImage img;
  img.width = static_cast<std::uint32_t>(f.width);
  img.height = static_cast<std::uint32_t>(f.height);
  for (Channel c : which) {
    std::vector<float> ch;
    switch (c) {
      case Channel::kUh: ch = f.uh; break;
      case Channel::kUv: ch = f.uv; break;
      case Channel::kDepth: ch = f.depth; break;
      case Channel::kMask: ch.assign(f.mask.begin(), f.mask.end()); break;
      case Channel::kParts: ch.assign(f.parts.begin(), f.parts.end()); break;
      default: throw InvalidInput("field_to_drf: not a correspondence channel");
    }
    img.descriptors.push_back(c);
    img.channels.push_back(std::move(ch));
  }
  return img;
}

namespace detail {

inline int small_label(float v, int max_value, const char* what) {
  if (!(v >= 0.0f) || v > static_cast<float>(max_value) || v != std::floor(v))
    throw FormatError(std::string("DRF1: invalid ") + what + " value");
  return static_cast<int>(v);
}

}  // namespace detail

/// Requires u^h, u^v, Z and mask; a missing parts channel reads as background.
inline CorrespondenceField drf_to_field(const DrfImage& img) {
  const auto* uh = img.find(Channel::kUh);
  const auto* uv = img.find(Channel::kUv);
  const auto* z = img.find(Channel::kDepth);
  const auto* m = img.find(Channel::kMask);
  if (!uh || !uv || !z || !m) throw FormatError("DRF1: correspondence field needs u^h, u^v, Z and mask channels");
  CorrespondenceField f(static_cast<int>(img.width), static_cast<int>(img.height));
  f.uh = *uh;
  f.uv = *uv;
  f.depth = *z;
  for (std::size_t i = 0; i < f.size(); ++i) f.mask[i] = static_cast<std::uint8_t>(detail::small_label((*m)[i], 1, "mask"));
  if (const auto* p = img.find(Channel::kParts))
    for (std::size_t i = 0; i < f.size(); ++i) f.parts[i] = static_cast<std::uint8_t>(detail::small_label((*p)[i], kBackgroundLabel, "parts"));
  return f;
}

inline void write_field(const std::filesystem::path& path, const CorrespondenceField& f,
                        std::span<const Channel> which = kFieldChannels) {
  detail::write_file(path, encode_drf(field_to_drf(f, which)));
}

inline CorrespondenceField read_field(const std::filesystem::path& path) {
  return drf_to_field(decode_drf(detail::read_file(path)));
}

inline DrfImage target_to_drf(const QuantizedTarget& t) {
  DrfImage img;
  img.width = static_cast<std::uint32_t>(t.width);
  img.height = static_cast<std::uint32_t>(t.height);
  img.descriptors = {Channel::kMask, Channel::kQh, Channel::kQv, Channel::kRh, Channel::kRv};
  img.channels.emplace_back(t.mask.begin(), t.mask.end());
  img.channels.emplace_back(t.qh.begin(), t.qh.end());
  img.channels.emplace_back(t.qv.begin(), t.qv.end());
  img.channels.push_back(t.rh);
  img.channels.push_back(t.rv);
  return img;
}

/// Labels are stored as floats with the dummy class written as K.
inline QuantizedTarget drf_to_target(const DrfImage& img, const Tessellation& tess) {
  const auto* m = img.find(Channel::kMask);
  const auto* qh = img.find(Channel::kQh);
  const auto* qv = img.find(Channel::kQv);
  const auto* rh = img.find(Channel::kRh);
  const auto* rv = img.find(Channel::kRv);
  if (!m || !qh || !qv || !rh || !rv) throw FormatError("DRF1: quantized target needs mask, qh, qv, rh, rv");
  QuantizedTarget t;
  t.width = static_cast<int>(img.width);
  t.height = static_cast<int>(img.height);
  t.bins = tess.bins();
  const std::size_t n = m->size();
  for (std::size_t i = 0; i < n; ++i) {
    t.mask.push_back(static_cast<std::uint8_t>(detail::small_label((*m)[i], 1, "mask")));
    t.qh.push_back(detail::small_label((*qh)[i], tess.dummy(), "qh"));
    t.qv.push_back(detail::small_label((*qv)[i], tess.dummy(), "qv"));
  }
  t.rh = *rh;
  t.rv = *rv;
  return t;
}

inline void write_target(const std::filesystem::path& path, const QuantizedTarget& t) {
  detail::write_file(path, encode_drf(target_to_drf(t)));
}

inline QuantizedTarget read_target(const std::filesystem::path& path, const Tessellation& tess) {
  return drf_to_target(decode_drf(detail::read_file(path)), tess);
}

}  // namespace densereg
