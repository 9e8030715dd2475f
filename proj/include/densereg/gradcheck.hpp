#pragma once

// Central finite-difference verification of every backward pass, in double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "densereg/codec.hpp"
#include "densereg/layers.hpp"
#include "densereg/losses.hpp"
#include "densereg/network.hpp"
#include "densereg/raster.hpp"

namespace densereg {

struct GradcheckOptions {
  std::uint64_t seed = 1234;
  double step = 1e-3;
  double tolerance = 1e-4;
  int coords_per_tensor = 100;
  /// End-to-end network check.
  int network_weights = 50;
  double network_step = 1e-5;
  double network_tolerance = 1e-3;
  /// Flips the sign of the analytic gradient of the named op (test fixture).
  std::string inject_fault;
};

struct GradcheckEntry {
  std::string op;
  std::string tensor;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  int coords = 0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  bool passed() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
  }
};

/// |a - n| / max(|a|, |n|, 1e-6)
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

namespace detail {

using Rng = std::mt19937_64;

inline Tensor<double> random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline std::vector<std::size_t> sample_coords(std::size_t n, int count, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (static_cast<std::size_t>(count) >= n) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(count));
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Compares analytic gradient `grad` of f w.r.t. `x` at sampled coordinates.
inline GradcheckEntry check_tensor(const std::string& op, const std::string& name, Tensor<double>& x,
                                   const Tensor<double>& grad, const std::function<double()>& f,
                                   const GradcheckOptions& opt, Rng& rng, double step, double tol, int count) {
  GradcheckEntry e{op, name, 0.0, tol, 0, true};
  const double sign = opt.inject_fault == op ? -1.0 : 1.0;
  for (std::size_t i : sample_coords(x.size(), count, rng)) {
    const double saved = x[i];
    x[i] = saved + step;
    const double fp = f();
    x[i] = saved - step;
    const double fm = f();
    x[i] = saved;
    const double numeric = (fp - fm) / (2.0 * step);
    e.max_rel_error = std::max(e.max_rel_error, relative_error(sign * grad[i], numeric));
    ++e.coords;
  }
  e.passed = e.max_rel_error <= tol;
  return e;
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Random correspondence field with some background, for loss fixtures.
inline CorrespondenceField random_field(int w, int h, Rng& rng) {
  CorrespondenceField f(w, h);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (u(rng) < 0.25) continue;
    f.mask[i] = 1;
    f.uh[i] = static_cast<float>(u(rng));
    f.uv[i] = static_cast<float>(u(rng));
    f.depth[i] = static_cast<float>(u(rng));
    f.parts[i] = 0;
  }
  return f;
}

}  // namespace detail

inline void gradcheck_conv(GradcheckReport& rep, const GradcheckOptions& opt, detail::Rng& rng) {
  const ConvSpec specs[] = {{1, 1}, {2, 1}, {1, 2}};
  const char* labels[] = {"", "[stride2]", "[dilation2]"};
  for (int s = 0; s < 3; ++s) {
    auto x = detail::random_tensor({4, 6, 6}, rng);
    auto w = detail::random_tensor({5, 4, 3, 3}, rng);
    auto b = detail::random_tensor({5}, rng);
    const auto y0 = conv2d_forward(x, w, b, specs[s]);
    const auto g = detail::random_tensor(y0.shape(), rng);
    auto f = [&] { return detail::dot(conv2d_forward(x, w, b, specs[s]), g); };
    const auto grads = conv2d_backward(x, w, g, specs[s]);
    const std::string suffix = labels[s];
    rep.entries.push_back(detail::check_tensor("conv2d", "input" + suffix, x, grads.dx, f, opt, rng, opt.step,
                                               opt.tolerance, opt.coords_per_tensor));
    rep.entries.push_back(detail::check_tensor("conv2d", "weight" + suffix, w, grads.dw, f, opt, rng, opt.step,
                                               opt.tolerance, opt.coords_per_tensor));
    rep.entries.push_back(detail::check_tensor("conv2d", "bias" + suffix, b, grads.db, f, opt, rng, opt.step,
                                               opt.tolerance, opt.coords_per_tensor));
  }
}

inline void gradcheck_relu(GradcheckReport& rep, const GradcheckOptions& opt, detail::Rng& rng) {
  auto x = detail::random_tensor({3, 8, 8}, rng);
  // Keep every input clear of the kink so the difference quotient is exact.
  for (auto& v : x.values())
    if (std::abs(v) < 10.0 * opt.step) v += v < 0 ? -20.0 * opt.step : 20.0 * opt.step;
  const auto g = detail::random_tensor(x.shape(), rng);
  auto f = [&] { return detail::dot(relu_forward(x), g); };
  const auto dx = relu_backward(relu_forward(x), g);
  rep.entries.push_back(
      detail::check_tensor("relu", "input", x, dx, f, opt, rng, opt.step, opt.tolerance, opt.coords_per_tensor));
}

inline void gradcheck_upsample(GradcheckReport& rep, const GradcheckOptions& opt, detail::Rng& rng) {
  auto x = detail::random_tensor({3, 5, 4}, rng);
  const auto g = detail::random_tensor({3, 20, 16}, rng);
  auto f = [&] { return detail::dot(bilinear_upsample(x, 4), g); };
  const auto dx = bilinear_upsample_backward(g, x.shape(), 4);
  rep.entries.push_back(detail::check_tensor("bilinear_upsample", "input", x, dx, f, opt, rng, opt.step,
                                             opt.tolerance, opt.coords_per_tensor));
}

inline void gradcheck_softmax_xent(GradcheckReport& rep, const GradcheckOptions& opt, detail::Rng& rng) {
  auto logits = detail::random_tensor({11, 6, 6}, rng, -3.0, 3.0);
  std::vector<int> labels(36);
  std::vector<std::uint8_t> ignore(36, 0);
  std::uniform_int_distribution<int> cls(0, 10);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = cls(rng);
    ignore[i] = i % 7 == 3;
  }
  auto f = [&] { return softmax_xent(logits, std::span<const int>(labels), std::span<const std::uint8_t>(ignore)).loss; };
  const auto r = softmax_xent(logits, std::span<const int>(labels), std::span<const std::uint8_t>(ignore));
  rep.entries.push_back(detail::check_tensor("softmax_xent", "logits", logits, r.grad, f, opt, rng, opt.step,
                                             opt.tolerance, opt.coords_per_tensor));
}

inline void gradcheck_smooth_l1(GradcheckReport& rep, const GradcheckOptions& opt, detail::Rng& rng) {
  const int K = 5;
  auto bank = detail::random_tensor({K, 6, 6}, rng, -2.5, 2.5);
  std::vector<float> target(36);
  std::vector<int> q(36);
  std::vector<std::uint8_t> mask(36);
  std::uniform_real_distribution<double> u(0.0, 0.2);
  std::uniform_int_distribution<int> bin(0, K - 1);
  for (std::size_t i = 0; i < 36; ++i) {
    target[i] = static_cast<float>(u(rng));
    q[i] = bin(rng);
    mask[i] = i % 5 != 0;
  }
  // Both branches of smooth L1 are exercised; errors near |e| = 1 are moved off the kink.
  for (std::size_t i = 0; i < 36; ++i)
    for (int k = 0; k < K; ++k) {
      double& v = bank[static_cast<std::size_t>(k) * 36 + i];
      const double e = v - target[i];
      if (std::abs(std::abs(e) - 1.0) < 0.05) v += e > 0 ? 0.1 : -0.1;
    }
  auto f = [&] {
    return masked_smooth_l1(bank, std::span<const float>(target), std::span<const int>(q),
                            std::span<const std::uint8_t>(mask))
        .loss;
  };
  const auto r = masked_smooth_l1(bank, std::span<const float>(target), std::span<const int>(q),
                                  std::span<const std::uint8_t>(mask));
  rep.entries.push_back(detail::check_tensor("masked_smooth_l1", "bank", bank, r.grad, f, opt, rng, opt.step,
                                             opt.tolerance, opt.coords_per_tensor));
}

inline void gradcheck_total_loss(GradcheckReport& rep, const GradcheckOptions& opt, detail::Rng& rng) {
  const int K = 4;
  const Tessellation tess(K);
  const auto field = detail::random_field(8, 8, rng);
  const auto target = encode(field, tess);
  NetworkOutput<double> out;
  out.logits_h = detail::random_tensor({K + 1, 8, 8}, rng, -2.0, 2.0);
  out.logits_v = detail::random_tensor({K + 1, 8, 8}, rng, -2.0, 2.0);
  out.res_h = detail::random_tensor({K, 8, 8}, rng, -0.3, 0.5);
  out.res_v = detail::random_tensor({K, 8, 8}, rng, -0.3, 0.5);
  out.depth = detail::random_tensor({1, 8, 8}, rng, -0.5, 1.5);
  const LossWeights w{1.0, 40.0, 10.0};
  auto f = [&] { return total_loss(out, target, std::span<const float>(field.depth), w).total; };
  const auto r = total_loss(out, target, std::span<const float>(field.depth), w);
  auto heads = out.heads();
  auto grads = r.grad.heads();
  for (std::size_t h = 0; h < heads.size(); ++h)
    rep.entries.push_back(detail::check_tensor("total_loss", kHeadNames[h], *heads[h], *grads[h], f, opt, rng,
                                               opt.step, opt.tolerance, opt.coords_per_tensor));
}

/// Loss gradient w.r.t. randomly chosen network weights on a 16x16 image.
inline void gradcheck_network(GradcheckReport& rep, const GradcheckOptions& opt, detail::Rng& rng) {
  const int K = 4;
  const Tessellation tess(K);
  Network<double> net({K, 3, {4, 6, 6, 8, 8}});
  net.init_gaussian(opt.seed, 0.3);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& p : net.params())
    if (p.value.rank() == 1)
      for (auto& v : p.value.values()) v = u(rng);
  const auto image = detail::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
  const auto field = detail::random_field(16, 16, rng);
  const auto target = encode(field, tess);
  const LossWeights w{1.0, 40.0, 10.0};
  auto loss = [&] { return total_loss(net.forward(image), target, std::span<const float>(field.depth), w).total; };
  typename Network<double>::Cache cache;
  net.zero_grad();
  const auto out = net.forward(image, &cache);
  net.backward(cache, total_loss(out, target, std::span<const float>(field.depth), w).grad);

  std::size_t total = 0;
  for (const auto& p : net.params()) total += p.value.size();
  GradcheckEntry e{"network", "weights", 0.0, opt.network_tolerance, 0, true};
  const double sign = opt.inject_fault == "network" ? -1.0 : 1.0;
  for (std::size_t flat : detail::sample_coords(total, opt.network_weights, rng)) {
    std::size_t k = 0;
    while (flat >= net.params()[k].value.size()) flat -= net.params()[k++].value.size();
    auto& p = net.params()[k];
    const double saved = p.value[flat];
    p.value[flat] = saved + opt.network_step;
    const double fp = loss();
    p.value[flat] = saved - opt.network_step;
    const double fm = loss();
    p.value[flat] = saved;
    const double numeric = (fp - fm) / (2.0 * opt.network_step);
    e.max_rel_error = std::max(e.max_rel_error, relative_error(sign * p.grad[flat], numeric));
    ++e.coords;
  }
  e.passed = e.max_rel_error <= e.tolerance;
  rep.entries.push_back(e);
}

inline GradcheckReport run_all_gradchecks(const GradcheckOptions& opt = {}) {
  detail::Rng rng(opt.seed);
  GradcheckReport rep;
  gradcheck_conv(rep, opt, rng);
  gradcheck_relu(rep, opt, rng);
  gradcheck_upsample(rep, opt, rng);
  gradcheck_softmax_xent(rep, opt, rng);
  gradcheck_smooth_l1(rep, opt, rng);
  gradcheck_total_loss(rep, opt, rng);
  gradcheck_network(rep, opt, rng);
  return rep;
}

}  // namespace densereg
