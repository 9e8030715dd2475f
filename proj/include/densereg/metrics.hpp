#pragma once

// Landmark error statistics (normalized RMS, CED, AUC, failure rate) and
// per-class intersection-over-union.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "densereg/common.hpp"

namespace densereg {

/// sqrt(mean squared point distance) / normalizer.
inline double rms_point_error(std::span<const Vec2> pred, std::span<const Vec2> gt, double normalizer) {
  if (pred.size() != gt.size()) throw InvalidInput("rms_point_error: landmark counts differ");
  if (pred.empty()) throw InvalidInput("rms_point_error: no landmarks");
  if (!(normalizer > 0.0)) throw InvalidInput("rms_point_error: normalizer must be positive");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dx = pred[i].x - gt[i].x, dy = pred[i].y - gt[i].y;
    sum += dx * dx + dy * dy;
  }
  return std::sqrt(sum / static_cast<double>(pred.size())) / normalizer;
}

inline double interocular_distance(const Vec2& left_outer, const Vec2& right_outer) {
  const double d = std::hypot(left_outer.x - right_outer.x, left_outer.y - right_outer.y);
  if (!(d > 0.0)) throw InvalidInput("interocular_distance: eye corners coincide");
  return d;
}

/// Mean of the tight bounding box's width and height.
inline double bbox_edge_normalizer(std::span<const Vec2> points) {
  if (points.size() < 2) throw InvalidInput("bbox_edge_normalizer: need at least 2 landmarks");
  double x0 = points[0].x, x1 = x0, y0 = points[0].y, y1 = y0;
  for (const auto& p : points) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const double n = 0.5 * ((x1 - x0) + (y1 - y0));
  if (!(n > 0.0)) throw InvalidInput("bbox_edge_normalizer: degenerate bounding box");
  return n;
}

struct CedCurve {
  std::vector<double> thresholds;
  std::vector<double> fractions;
};

/// `steps` + 1 uniform thresholds over [0, cap].
inline std::vector<double> uniform_thresholds(double cap = 0.1, int steps = 1000) {
  if (!(cap > 0.0) || steps < 1) throw InvalidInput("uniform_thresholds: need cap > 0 and steps >= 1");
  std::vector<double> t(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) t[static_cast<std::size_t>(i)] = cap * i / steps;
  return t;
}

/// Fraction of errors <= t for each ascending threshold t.
inline CedCurve ced(std::span<const double> errors, std::span<const double> thresholds) {
  if (errors.empty()) throw InvalidInput("ced: empty error list");
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) throw InvalidInput("ced: thresholds must ascend");
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  CedCurve c;
  c.thresholds.assign(thresholds.begin(), thresholds.end());
  for (double t : thresholds) {
    const auto count = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    c.fractions.push_back(static_cast<double>(count) / static_cast<double>(sorted.size()));
  }
  return c;
}

/// Trapezoidal integral of the curve over [0, cap], divided by cap.
inline double auc(const CedCurve& curve, double cap = 0.1) {
  if (!(cap > 0.0)) throw InvalidInput("auc: cap must be positive");
  if (curve.thresholds.size() < 2) throw InvalidInput("auc: curve needs at least two points");
  double area = 0.0;
  for (std::size_t i = 1; i < curve.thresholds.size(); ++i) {
    const double a = std::clamp(curve.thresholds[i - 1], 0.0, cap);
    const double b = std::clamp(curve.thresholds[i], 0.0, cap);
    area += 0.5 * (b - a) * (curve.fractions[i - 1] + curve.fractions[i]);
  }
  return area / cap;
}

/// Percentage of errors strictly above the cap.
inline double failure_rate(std::span<const double> errors, double cap = 0.1) {
  if (errors.empty()) throw InvalidInput("failure_rate: empty error list");
  const auto fails = std::count_if(errors.begin(), errors.end(), [cap](double e) { return !(e <= cap); });
  return 100.0 * static_cast<double>(fails) / static_cast<double>(errors.size());
}

struct AucSummary {
  double auc = 0.0;
  double failure_rate = 0.0;
  CedCurve curve;
};

inline AucSummary summarize_errors(std::span<const double> errors, double cap = 0.1, int steps = 1000) {
  const auto t = uniform_thresholds(cap, steps);
  AucSummary s;
  s.curve = ced(errors, t);
  s.auc = auc(s.curve, cap);
  s.failure_rate = failure_rate(errors, cap);
  return s;
}

/// Intersection and union counts of one class; accumulate across images.
struct IouCounts {
  std::size_t intersection = 0;
  std::size_t uni = 0;

  std::optional<double> value() const {
    if (uni == 0) return std::nullopt;
    return static_cast<double>(intersection) / static_cast<double>(uni);
  }
};

inline IouCounts iou_counts(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, int cls) {
  if (pred.size() != gt.size()) throw InvalidInput("iou: label images differ in shape");
  IouCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] == cls, b = gt[i] == cls;
    c.intersection += a && b;
    c.uni += a || b;
  }
  return c;
}

/// |pred ∩ gt| / |pred ∪ gt| for one class; nullopt when absent from both.
inline std::optional<double> iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, int cls) {
  return iou_counts(pred, gt, cls).value();
}

/// Mean over the listed classes present in either image.
inline double mean_iou(std::span<const std::optional<double>> per_class) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : per_class)
    if (v) {
      sum += *v;
      ++n;
    }
  return n ? sum / n : 0.0;
}

inline std::array<std::optional<double>, kNumPartClasses> per_class_iou(std::span<const std::uint8_t> pred,
                                                                       std::span<const std::uint8_t> gt) {
  std::array<std::optional<double>, kNumPartClasses> out;
  for (int c = 0; c < kNumPartClasses; ++c) out[static_cast<std::size_t>(c)] = iou(pred, gt, c);
  return out;
}

}  // namespace densereg
