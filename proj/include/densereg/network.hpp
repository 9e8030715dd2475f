#pragma once

// Small fully convolutional network with quantized-regression heads.
//
// Trunk: five 3x3 convolutions with ReLU (strides 1,2,2,1,1; the fourth is
// dilated by 2), so features sit at stride 4. Heads are 1x1 convolutions
// producing (K+1)-way logits per axis, K residuals per axis and one depth
// map; every head is bilinearly upsampled x4 to the input resolution.

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "densereg/codec.hpp"
#include "densereg/common.hpp"
#include "densereg/image.hpp"
#include "densereg/layers.hpp"
#include "densereg/losses.hpp"
#include "densereg/tensor.hpp"

namespace densereg {

inline constexpr int kNetStride = 4;
inline constexpr int kTrunkDepth = 5;

struct NetConfig {
  int bins = 10;
  int input_channels = 3;
  std::array<int, kTrunkDepth> widths{16, 32, 32, 64, 64};

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

template <class T>
struct NetworkOutput {
  Tensor<T> logits_h;  // (K+1, H, W)
  Tensor<T> logits_v;  // (K+1, H, W)
  Tensor<T> res_h;     // (K, H, W)
  Tensor<T> res_v;     // (K, H, W)
  Tensor<T> depth;     // (1, H, W)

  int bins() const { return static_cast<int>(res_h.dim(0)); }
  int height() const { return static_cast<int>(depth.dim(1)); }
  int width() const { return static_cast<int>(depth.dim(2)); }

  std::array<Tensor<T>*, 5> heads() { return {&logits_h, &logits_v, &res_h, &res_v, &depth}; }
  std::array<const Tensor<T>*, 5> heads() const { return {&logits_h, &logits_v, &res_h, &res_v, &depth}; }
};

inline constexpr std::array<const char*, 5> kHeadNames{"logits_h", "logits_v", "res_h", "res_v", "depth"};

/// (C,H,W) tensor of an interleaved image.
template <class T>
Tensor<T> image_tensor(const Image& img) {
  Tensor<T> t({static_cast<std::size_t>(img.channels), static_cast<std::size_t>(img.height),
               static_cast<std::size_t>(img.width)});
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) t.at(c, y, x) = static_cast<T>(img.at(y, x, c));
  return t;
}

template <class T>
class Network {
 public:
  struct Cache {
    std::array<Tensor<T>, kTrunkDepth> inputs;  // input of each trunk conv
    Tensor<T> features;                         // trunk output
  };

  explicit Network(NetConfig cfg = {}) : cfg_(cfg) {
    if (cfg.bins < 1) throw InvalidInput("network: K must be >= 1");
    if (cfg.input_channels < 1) throw InvalidInput("network: need at least one input channel");
    for (int w : cfg.widths)
      if (w < 1) throw InvalidInput("network: layer widths must be positive");
    std::size_t in = static_cast<std::size_t>(cfg.input_channels);
    for (int l = 0; l < kTrunkDepth; ++l) {
      const auto out = static_cast<std::size_t>(cfg.widths[l]);
      add_param("trunk." + std::to_string(l) + ".weight", {out, in, 3, 3});
      add_param("trunk." + std::to_string(l) + ".bias", {out});
      in = out;
    }
    const auto K = static_cast<std::size_t>(cfg.bins);
    const std::array<std::size_t, 5> head_out{K + 1, K + 1, K, K, 1};
    for (std::size_t h = 0; h < head_out.size(); ++h) {
      add_param(std::string("head.") + kHeadNames[h] + ".weight", {head_out[h], in, 1, 1});
      add_param(std::string("head.") + kHeadNames[h] + ".bias", {head_out[h]});
    }
  }

  const NetConfig& config() const { return cfg_; }
  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }

  Parameter<T>& param(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return p;
    throw InvalidInput("network has no parameter '" + name + "'");
  }

  /// Weights ~ N(0, stddev^2), biases zero.
  void init_gaussian(std::uint64_t seed, double stddev = 0.05) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, stddev);
    for (auto& p : params_) {
      const bool is_bias = p.value.rank() == 1;
      for (auto& v : p.value.values()) v = is_bias ? T(0) : static_cast<T>(normal(rng));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T(0));
  }

  static ConvSpec trunk_spec(int layer) {
    switch (layer) {
      case 1:
      case 2: return {2, 1};
      case 3: return {1, 2};
      default: return {1, 1};
    }
  }

  /// Input is a (C,H,W) image in [0,1] with H, W multiples of the stride.
  NetworkOutput<T> forward(const Tensor<T>& image, Cache* cache = nullptr) const {
    if (image.rank() != 3 || image.dim(0) != static_cast<std::size_t>(cfg_.input_channels))
      throw InvalidInput("network: expected a (" + std::to_string(cfg_.input_channels) + ",H,W) image, got " +
                         shape_string(image.shape()));
    if (image.dim(1) == 0 || image.dim(2) == 0 || image.dim(1) % kNetStride || image.dim(2) % kNetStride)
      throw InvalidInput("network: image height and width must be positive multiples of " +
                         std::to_string(kNetStride));
    Tensor<T> x(image.shape());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = image[i] - T(0.5);
    for (int l = 0; l < kTrunkDepth; ++l) {
      Tensor<T> y = relu_forward(conv2d_forward(x, params_[2 * l].value, params_[2 * l + 1].value, trunk_spec(l)));
      if (cache) cache->inputs[l] = std::move(x);
      x = std::move(y);
    }
    NetworkOutput<T> out;
    auto heads = out.heads();
    for (std::size_t h = 0; h < heads.size(); ++h) {
      const auto& w = params_[2 * kTrunkDepth + 2 * h];
      const auto& b = params_[2 * kTrunkDepth + 2 * h + 1];
      *heads[h] = bilinear_upsample(conv2d_forward(x, w.value, b.value), kNetStride);
    }
    if (cache) cache->features = std::move(x);
    return out;
  }

  /// Accumulates parameter gradients given gradients w.r.t. every head.
  void backward(const Cache& cache, const NetworkOutput<T>& grad) {
    const auto& feat = cache.features;
    Tensor<T> dfeat(feat.shape());
    auto heads = grad.heads();
    for (std::size_t h = 0; h < heads.size(); ++h) {
      auto& w = params_[2 * kTrunkDepth + 2 * h];
      auto& b = params_[2 * kTrunkDepth + 2 * h + 1];
      const Tensor<T> dlow =
          bilinear_upsample_backward(*heads[h], {w.value.dim(0), feat.dim(1), feat.dim(2)}, kNetStride);
      auto g = conv2d_backward(feat, w.value, dlow);
      accumulate(w.grad, g.dw);
      accumulate(b.grad, g.db);
      accumulate(dfeat, g.dx);
    }
    Tensor<T> dy = std::move(dfeat);
    Tensor<T> y = feat;
    for (int l = kTrunkDepth - 1; l >= 0; --l) {
      const Tensor<T> dpre = relu_backward(y, dy);
      auto& w = params_[2 * l];
      auto& b = params_[2 * l + 1];
      auto g = conv2d_backward(cache.inputs[l], w.value, dpre, trunk_spec(l), l > 0);
      accumulate(w.grad, g.dw);
      accumulate(b.grad, g.db);
      if (l > 0) {
        dy = std::move(g.dx);
        y = cache.inputs[l];
      }
    }
  }

  template <class U>
  Network<U> cast() const {
    Network<U> out(cfg_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i].value = params_[i].value.template cast<U>();
    return out;
  }

 private:
  void add_param(std::string name, std::vector<std::size_t> shape) {
    params_.push_back({std::move(name), Tensor<T>(shape), Tensor<T>(shape)});
  }

  static void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  NetConfig cfg_;
  std::vector<Parameter<T>> params_;
};

struct LossWeights {
  double cls = 1.0;
  double reg = 40.0;
  double depth = 10.0;
};

/// Regression weight for a tessellation: 40 for quantized, 70 for plain.
inline double default_reg_weight(int bins) { return bins >= 2 ? 40.0 : 70.0; }

template <class T>
struct TotalLoss {
  T total = T(0);
  T cls = T(0);    // xent_h + xent_v
  T reg = T(0);    // sl1_h + sl1_v
  T depth = T(0);  // depth smooth L1
  NetworkOutput<T> grad;
};

/// w_cls (xent_h + xent_v) + w_reg (sl1_h + sl1_v) + w_depth sl1_depth.
/// Background pixels carry the dummy label in both classifiers; regression
/// and depth terms only see foreground pixels.
template <class T>
TotalLoss<T> total_loss(const NetworkOutput<T>& out, const QuantizedTarget& target, std::span<const float> depth_gt,
                        const LossWeights& w) {
  if (out.bins() != target.bins)
    throw InvalidInput("total_loss: network has K=" + std::to_string(out.bins()) + " but target has K=" +
                       std::to_string(target.bins));
  if (static_cast<std::size_t>(out.width()) * out.height() != target.size() || depth_gt.size() != target.size())
    throw InvalidInput("total_loss: output and target sizes differ");
  TotalLoss<T> r;
  auto xh = softmax_xent(out.logits_h, std::span<const int>(target.qh));
  auto xv = softmax_xent(out.logits_v, std::span<const int>(target.qv));
  std::span<const std::uint8_t> mask(target.mask);
  auto rh = masked_smooth_l1(out.res_h, std::span<const float>(target.rh), std::span<const int>(target.qh), mask);
  auto rv = masked_smooth_l1(out.res_v, std::span<const float>(target.rv), std::span<const int>(target.qv), mask);
  auto dz = masked_smooth_l1(out.depth, depth_gt, {}, mask);
  const T wc = static_cast<T>(w.cls), wr = static_cast<T>(w.reg), wd = static_cast<T>(w.depth);
  r.cls = xh.loss + xv.loss;
  r.reg = rh.loss + rv.loss;
  r.depth = dz.loss;
  r.total = wc * r.cls + wr * r.reg + wd * r.depth;
  auto scaled = [](Tensor<T> g, T s) {
    for (auto& v : g.values()) v *= s;
    return g;
  };
  r.grad.logits_h = scaled(std::move(xh.grad), wc);
  r.grad.logits_v = scaled(std::move(xv.grad), wc);
  r.grad.res_h = scaled(std::move(rh.grad), wr);
  r.grad.res_v = scaled(std::move(rv.grad), wr);
  r.grad.depth = scaled(std::move(dz.grad), wd);
  return r;
}

}  // namespace densereg
