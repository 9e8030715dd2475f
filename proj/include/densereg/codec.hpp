#pragma once

// Quantized-regression codec: each UV axis is split into K uniform bins;
// a value is carried as (bin label, offset from the bin floor).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "densereg/common.hpp"
#include "densereg/raster.hpp"

namespace densereg {

class Tessellation {
 public:
  explicit Tessellation(int bins) : bins_(bins) {
    if (bins < 1) throw InvalidInput("tessellation needs K >= 1");
    step_ = 1.0f / static_cast<float>(bins);
  }

  int bins() const { return bins_; }
  /// Quantization step, always derived as 1/K.
  float step() const { return step_; }
  /// Label index of the non-object class.
  int dummy() const { return bins_; }

  /// Lower edge of bin q, the exact float used by both encode and decode.
  float bin_floor(int q) const { return static_cast<float>(q) * step_; }

 private:
  int bins_;
  float step_;
};

struct BinResidual {
  int bin = 0;
  float residual = 0.0f;
};

/// q = floor(u / d), r = u - q d, with u >= 1 clamped into the top bin.
/// The bin is chosen against the same float bin_floor() decode uses, so
/// the sum bin_floor(q) + r reproduces u exactly.
inline BinResidual encode_value(float u, const Tessellation& tess) {
  const int K = tess.bins();
  int q = static_cast<int>(std::floor(static_cast<double>(u) * K));
  if (q < 0) q = 0;
  if (q > K - 1) q = K - 1;
  while (q > 0 && tess.bin_floor(q) > u) --q;
  while (q + 1 < K && tess.bin_floor(q + 1) <= u) ++q;
  return {q, u - tess.bin_floor(q)};
}

inline float decode_value(int q, float r, const Tessellation& tess) { return tess.bin_floor(q) + r; }

inline float decode_bin_center(int q, const Tessellation& tess) {
  return tess.bin_floor(q) + 0.5f * tess.step();
}

struct QuantizedTarget {
  int width = 0;
  int height = 0;
  int bins = 1;
  std::vector<int> qh;
  std::vector<int> qv;
  std::vector<float> rh;
  std::vector<float> rv;
  std::vector<std::uint8_t> mask;

  std::size_t size() const { return qh.size(); }
  friend bool operator==(const QuantizedTarget&, const QuantizedTarget&) = default;
};

inline QuantizedTarget encode(const CorrespondenceField& field, const Tessellation& tess) {
  const std::size_t n = field.size();
  if (field.uv.size() != n || field.mask.size() != n)
    throw InvalidInput("encode: field channels disagree in length");
  QuantizedTarget t;
  t.width = field.width;
  t.height = field.height;
  t.bins = tess.bins();
  t.qh.assign(n, tess.dummy());
  t.qv.assign(n, tess.dummy());
  t.rh.assign(n, 0.0f);
  t.rv.assign(n, 0.0f);
  t.mask = field.mask;
  for (std::size_t i = 0; i < n; ++i) {
    if (!field.mask[i]) continue;
    const auto h = encode_value(field.uh[i], tess);
    const auto v = encode_value(field.uv[i], tess);
    t.qh[i] = h.bin;
    t.rh[i] = h.residual;
    t.qv[i] = v.bin;
    t.rv[i] = v.residual;
  }
  return t;
}

/// One decoded axis: values are meaningful only where valid is set.
struct DecodedAxis {
  std::vector<float> values;
  std::vector<std::uint8_t> valid;
};

inline DecodedAxis decode(std::span<const int> q, std::span<const float> r_selected, const Tessellation& tess) {
  if (q.size() != r_selected.size()) throw InvalidInput("decode: label and residual maps differ in size");
  DecodedAxis out{std::vector<float>(q.size(), 0.0f), std::vector<std::uint8_t>(q.size(), 0)};
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] == tess.dummy()) continue;
    if (q[i] < 0 || q[i] > tess.dummy()) throw InvalidInput("decode: label out of range");
    out.values[i] = decode_value(q[i], r_selected[i], tess);
    out.valid[i] = 1;
  }
  return out;
}

/// Bin-center decode, ignoring residuals.
inline DecodedAxis decode_classification_only(std::span<const int> q, const Tessellation& tess) {
  DecodedAxis out{std::vector<float>(q.size(), 0.0f), std::vector<std::uint8_t>(q.size(), 0)};
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] == tess.dummy()) continue;
    if (q[i] < 0 || q[i] > tess.dummy()) throw InvalidInput("decode: label out of range");
    out.values[i] = decode_bin_center(q[i], tess);
    out.valid[i] = 1;
  }
  return out;
}

/// Gathers bank[q[p]][p]; bank is channel-major with exactly K channels.
template <class T>
std::vector<T> select_residual(std::span<const T> bank, std::span<const int> q, const Tessellation& tess) {
  const std::size_t n = q.size();
  if (n == 0 || bank.size() % n != 0 || bank.size() / n != static_cast<std::size_t>(tess.bins()))
    throw InvalidInput("select_residual: bank must hold exactly K residual maps");
  std::vector<T> out(n, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    if (q[i] == tess.dummy()) continue;
    if (q[i] < 0 || q[i] > tess.dummy()) throw InvalidInput("select_residual: label out of range");
    out[i] = bank[static_cast<std::size_t>(q[i]) * n + i];
  }
  return out;
}

inline int region_index(int qh, int qv, const Tessellation& tess) { return qh * tess.bins() + qv; }

/// Region ids over a target; -1 where either axis is dummy.
inline std::vector<int> region_map(std::span<const int> qh, std::span<const int> qv, const Tessellation& tess) {
  if (qh.size() != qv.size()) throw InvalidInput("region_map: label maps differ in size");
  std::vector<int> out(qh.size(), -1);
  for (std::size_t i = 0; i < qh.size(); ++i)
    if (qh[i] != tess.dummy() && qv[i] != tess.dummy()) out[i] = region_index(qh[i], qv[i], tess);
  return out;
}

}  // namespace densereg
