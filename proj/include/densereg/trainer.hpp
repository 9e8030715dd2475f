#pragma once

// SGD with momentum, warm start and polynomial learning-rate decay.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "densereg/codec.hpp"
#include "densereg/common.hpp"
#include "densereg/network.hpp"

namespace densereg {

struct TrainConfig {
  int bins = 10;
  std::array<int, kTrunkDepth> widths{16, 32, 32, 64, 64};
  double base_lr = 0.001;
  double poly_power = 0.9;
  int iterations = 20000;
  int warmup_iters = 200;
  std::optional<double> warmup_lr;  // defaults to base_lr / 10
  int batch_size = 10;
  double momentum = 0.9;
  double w_cls = 1.0;
  std::optional<double> w_reg;  // defaults to default_reg_weight(bins)
  double w_depth = 10.0;
  double init_std = 0.05;
  std::uint64_t seed = 1;
  int crop_size = 0;  // 0 trains on full images

  double reg_weight() const { return w_reg.value_or(default_reg_weight(bins)); }
  double warm_lr() const { return warmup_lr.value_or(base_lr / 10.0); }
  LossWeights loss_weights() const { return {w_cls, reg_weight(), w_depth}; }
  NetConfig net_config(int input_channels) const { return {bins, input_channels, widths}; }

  void validate() const {
    if (bins < 1) throw InvalidInput("train: K must be >= 1");
    if (iterations < 1) throw InvalidInput("train: iterations must be positive");
    if (batch_size < 1) throw InvalidInput("train: batch size must be positive");
    if (!(base_lr > 0.0) || !(poly_power > 0.0) || !(warm_lr() > 0.0))
      throw InvalidInput("train: learning rates and decay power must be positive");
    if (warmup_iters < 0) throw InvalidInput("train: warmup iterations must be nonnegative");
    if (momentum < 0.0 || momentum >= 1.0) throw InvalidInput("train: momentum must lie in [0,1)");
    if (!(w_cls > 0.0) || !(reg_weight() > 0.0) || !(w_depth > 0.0) || !(init_std > 0.0))
      throw InvalidInput("train: loss weights and init std must be positive");
    if (crop_size < 0 || crop_size % kNetStride) throw InvalidInput("train: crop size must be a multiple of 4");
  }
};

/// warmup_lr while t < warmup_iters, then base_lr (1 - t/T)^power.
inline double learning_rate(const TrainConfig& cfg, int t) {
  if (t < cfg.warmup_iters) return cfg.warm_lr();
  const double frac = 1.0 - static_cast<double>(t) / static_cast<double>(cfg.iterations);
  return cfg.base_lr * std::pow(std::max(frac, 0.0), cfg.poly_power);
}

struct TrainingExample {
  Tensor<float> image;  // (C,H,W)
  QuantizedTarget target;
  std::vector<float> depth;
};

struct IterationLog {
  int iter = 0;
  double lr = 0.0;
  double loss = 0.0;
  double loss_cls = 0.0;
  double loss_reg = 0.0;
  double loss_depth = 0.0;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline TrainingExample crop_example(const TrainingExample& ex, std::size_t y0, std::size_t x0, std::size_t size) {
  const std::size_t C = ex.image.dim(0), W = ex.image.dim(2);
  TrainingExample out;
  out.image = Tensor<float>({C, size, size});
  out.target.width = out.target.height = static_cast<int>(size);
  out.target.bins = ex.target.bins;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) out.image.at(c, y, x) = ex.image.at(c, y0 + y, x0 + x);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const std::size_t i = (y0 + y) * W + x0 + x;
      out.target.qh.push_back(ex.target.qh[i]);
      out.target.qv.push_back(ex.target.qv[i]);
      out.target.rh.push_back(ex.target.rh[i]);
      out.target.rv.push_back(ex.target.rv[i]);
      out.target.mask.push_back(ex.target.mask[i]);
      out.depth.push_back(ex.depth[i]);
    }
  return out;
}

}  // namespace detail

/// Deterministic given (data, cfg). Throws TrainingDiverged on a non-finite loss.
inline Network<float> train(const std::vector<TrainingExample>& data, const TrainConfig& cfg,
                            const std::function<void(const IterationLog&)>& on_iteration = {}) {
  cfg.validate();
  if (data.empty()) throw InvalidInput("train: dataset is empty");
  for (const auto& ex : data)
    if (ex.target.bins != cfg.bins) throw InvalidInput("train: target K does not match config");

  Network<float> net(cfg.net_config(static_cast<int>(data.front().image.dim(0))));
  net.init_gaussian(cfg.seed, cfg.init_std);
  std::vector<Tensor<float>> velocity;
  for (const auto& p : net.params()) velocity.emplace_back(p.value.shape());

  std::mt19937_64 rng(mix64(cfg.seed));
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  const LossWeights weights = cfg.loss_weights();
  typename Network<float>::Cache cache;

  for (int t = 0; t < cfg.iterations; ++t) {
    net.zero_grad();
    IterationLog log;
    log.iter = t;
    log.lr = learning_rate(cfg, t);
    const float inv_batch = 1.0f / static_cast<float>(cfg.batch_size);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const TrainingExample* ex = &data[pick(rng)];
      TrainingExample cropped;
      const std::size_t H = ex->image.dim(1), W = ex->image.dim(2);
      const auto crop = static_cast<std::size_t>(cfg.crop_size);
      if (crop > H || crop > W) throw InvalidInput("train: crop larger than image");
      if (crop > 0 && (crop < H || crop < W)) {
        std::uniform_int_distribution<std::size_t> oy(0, H - crop), ox(0, W - crop);
        const std::size_t y0 = oy(rng), x0 = ox(rng);
        cropped = detail::crop_example(*ex, y0, x0, crop);
        ex = &cropped;
      }
      const auto out = net.forward(ex->image, &cache);
      auto loss = total_loss(out, ex->target, std::span<const float>(ex->depth), weights);
      for (auto* g : loss.grad.heads())
        for (auto& v : g->values()) v *= inv_batch;
      net.backward(cache, loss.grad);
      log.loss += loss.total / cfg.batch_size;
      log.loss_cls += loss.cls / cfg.batch_size;
      log.loss_reg += loss.reg / cfg.batch_size;
      log.loss_depth += loss.depth / cfg.batch_size;
    }
    if (!std::isfinite(log.loss))
      throw TrainingDiverged("training diverged at iteration " + std::to_string(t) + " (loss is not finite)");
    const auto lr = static_cast<float>(log.lr);
    const auto mu = static_cast<float>(cfg.momentum);
    for (std::size_t k = 0; k < net.params().size(); ++k) {
      auto& p = net.params()[k];
      auto& v = velocity[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        v[i] = mu * v[i] + lr * p.grad[i];
        p.value[i] -= v[i];
      }
    }
    if (on_iteration) on_iteration(log);
  }
  return net;
}

}  // namespace densereg
