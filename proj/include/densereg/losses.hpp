#pragma once

// Per-pixel softmax cross-entropy and the gated, count-normalized smooth L1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>

#include "densereg/common.hpp"
#include "densereg/tensor.hpp"

namespace densereg {

template <class T>
struct LossResult {
  T loss = T(0);
  Tensor<T> grad;
  std::size_t contributing = 0;
};

/// Mean over non-ignored pixels of -log softmax(logits)[label]. An empty
/// ignore span means no pixel is ignored. All pixels ignored gives 0.
template <class T>
LossResult<T> softmax_xent(const Tensor<T>& logits, std::span<const int> labels,
                           std::span<const std::uint8_t> ignore = {}) {
  if (logits.rank() != 3) throw InvalidInput("softmax_xent: logits must be (classes,H,W)");
  const std::size_t C = logits.dim(0);
  const std::size_t n = logits.dim(1) * logits.dim(2);
  if (labels.size() != n) throw InvalidInput("softmax_xent: label map size mismatch");
  if (!ignore.empty() && ignore.size() != n) throw InvalidInput("softmax_xent: ignore mask size mismatch");

  LossResult<T> r{T(0), Tensor<T>(logits.shape()), 0};
  for (std::size_t p = 0; p < n; ++p)
    if (ignore.empty() || !ignore[p]) ++r.contributing;
  if (r.contributing == 0) return r;
  const T inv = T(1) / static_cast<T>(r.contributing);
  for (std::size_t p = 0; p < n; ++p) {
    if (!ignore.empty() && ignore[p]) continue;
    const int label = labels[p];
    if (label < 0 || static_cast<std::size_t>(label) >= C) throw InvalidInput("softmax_xent: label out of range");
    T mx = logits[p];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, logits[c * n + p]);
    T sum = T(0);
    for (std::size_t c = 0; c < C; ++c) sum += std::exp(logits[c * n + p] - mx);
    const T log_z = mx + std::log(sum);
    r.loss += (log_z - logits[static_cast<std::size_t>(label) * n + p]) * inv;
    for (std::size_t c = 0; c < C; ++c) {
      const T prob = std::exp(logits[c * n + p] - log_z);
      r.grad[c * n + p] = (prob - (static_cast<std::size_t>(label) == c ? T(1) : T(0))) * inv;
    }
  }
  return r;
}

template <class T>
T smooth_l1(T e) {
  const T a = std::abs(e);
  return a < T(1) ? T(0.5) * e * e : a - T(0.5);
}

template <class T>
T smooth_l1_grad(T e) {
  return std::abs(e) < T(1) ? e : (e > T(0) ? T(1) : T(-1));
}

/// Smooth L1 on the responsible channel only: at each masked pixel the
/// error is bank[gt_q[p]][p] - target[p]; every other channel gets zero
/// gradient. Normalized by the number of contributing pixels. An empty
/// gt_q span selects channel 0 everywhere (single-map regression).
template <class T>
LossResult<T> masked_smooth_l1(const Tensor<T>& bank, std::span<const float> target, std::span<const int> gt_q,
                               std::span<const std::uint8_t> mask) {
  if (bank.rank() != 3) throw InvalidInput("masked_smooth_l1: bank must be (K,H,W)");
  const std::size_t K = bank.dim(0);
  const std::size_t n = bank.dim(1) * bank.dim(2);
  if (target.size() != n || mask.size() != n || (!gt_q.empty() && gt_q.size() != n))
    throw InvalidInput("masked_smooth_l1: map size mismatch");

  LossResult<T> r{T(0), Tensor<T>(bank.shape()), 0};
  for (std::size_t p = 0; p < n; ++p)
    if (mask[p]) ++r.contributing;
  if (r.contributing == 0) return r;
  const T inv = T(1) / static_cast<T>(r.contributing);
  for (std::size_t p = 0; p < n; ++p) {
    if (!mask[p]) continue;
    const int q = gt_q.empty() ? 0 : gt_q[p];
    if (q < 0 || static_cast<std::size_t>(q) >= K) throw InvalidInput("masked_smooth_l1: responsible bin out of range");
    const std::size_t idx = static_cast<std::size_t>(q) * n + p;
    const T e = bank[idx] - static_cast<T>(target[p]);
    r.loss += smooth_l1(e) * inv;
    r.grad[idx] = smooth_l1_grad(e) * inv;
  }
  return r;
}

}  // namespace densereg
