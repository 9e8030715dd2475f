#pragma once

// DRN1 checkpoints: "DRN1", u32 K, u32 input channels, u32 layer count,
// u32 widths..., u32 tensor count, then per tensor u32 name length, name,
// u32 rank, u32 dims..., LE float32 payload.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "densereg/drf.hpp"
#include "densereg/network.hpp"

namespace densereg {

inline std::string encode_checkpoint(const Network<float>& net) {
  const auto& cfg = net.config();
  std::string out = "DRN1";
  detail::put_u32(out, static_cast<std::uint32_t>(cfg.bins));
  detail::put_u32(out, static_cast<std::uint32_t>(cfg.input_channels));
  detail::put_u32(out, static_cast<std::uint32_t>(cfg.widths.size()));
  for (int w : cfg.widths) detail::put_u32(out, static_cast<std::uint32_t>(w));
  detail::put_u32(out, static_cast<std::uint32_t>(net.params().size()));
  for (const auto& p : net.params()) {
    detail::put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    detail::put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (float f : p.value.values()) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline Network<float> decode_checkpoint(std::string_view bytes) {
  std::size_t at = 0;
  auto need = [&](std::size_t n) {
    if (at + n > bytes.size()) throw FormatError("DRN1: truncated checkpoint");
  };
  auto u32 = [&] {
    need(4);
    const auto v = detail::get_u32(bytes, at);
    at += 4;
    return v;
  };
  need(4);
  if (bytes.substr(0, 4) != "DRN1") throw FormatError("not a DRN1 checkpoint");
  at = 4;
  NetConfig cfg;
  cfg.bins = static_cast<int>(u32());
  cfg.input_channels = static_cast<int>(u32());
  if (u32() != kTrunkDepth) throw FormatError("DRN1: unsupported trunk depth");
  for (auto& w : cfg.widths) w = static_cast<int>(u32());
  Network<float> net(cfg);
  if (u32() != net.params().size()) throw FormatError("DRN1: tensor count mismatch");
  for (auto& p : net.params()) {
    const auto len = u32();
    need(len);
    const std::string_view name = bytes.substr(at, len);
    at += len;
    if (name != p.name) throw FormatError("DRN1: expected tensor '" + p.name + "', found '" + std::string(name) + "'");
    const auto rank = u32();
    if (rank != p.value.rank()) throw FormatError("DRN1: rank mismatch for " + p.name);
    for (std::size_t d = 0; d < rank; ++d)
      if (u32() != p.value.dim(d)) throw FormatError("DRN1: shape mismatch for " + p.name);
    need(4 * p.value.size());
    for (auto& f : p.value.values()) f = std::bit_cast<float>(u32());
  }
  if (at != bytes.size()) throw FormatError("DRN1: trailing bytes");
  return net;
}

inline void save_checkpoint(const std::filesystem::path& path, const Network<float>& net) {
  detail::write_file(path, encode_checkpoint(net));
}

inline Network<float> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path));
}

}  // namespace densereg
