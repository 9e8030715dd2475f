#pragma once

// End-to-end pipelines behind the command-line tool: dataset synthesis,
// training, inference, evaluation and the tessellation ablation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "densereg/checkpoint.hpp"
#include "densereg/dataset.hpp"
#include "densereg/drf.hpp"
#include "densereg/image.hpp"
#include "densereg/metrics.hpp"
#include "densereg/network.hpp"
#include "densereg/parallel.hpp"
#include "densereg/tasks.hpp"
#include "densereg/trainer.hpp"

namespace densereg {

// ---------------------------------------------------------------- train

struct TrainSummary {
  fs::path checkpoint;
  fs::path log;
  double final_loss = 0.0;
};

inline std::string train_config_text(const TrainConfig& c) {
  std::ostringstream o;
  o << "k=" << c.bins << "\nwidths=";
  for (std::size_t i = 0; i < c.widths.size(); ++i) o << (i ? "," : "") << c.widths[i];
  o << "\niterations=" << c.iterations << "\nbatch_size=" << c.batch_size
    << "\nbase_lr=" << format_double(c.base_lr) << "\npoly_power=" << format_double(c.poly_power)
    << "\nwarmup_iters=" << c.warmup_iters << "\nwarmup_lr=" << format_double(c.warm_lr())
    << "\nmomentum=" << format_double(c.momentum) << "\nw_cls=" << format_double(c.w_cls)
    << "\nw_reg=" << format_double(c.reg_weight()) << "\nw_depth=" << format_double(c.w_depth)
    << "\ninit_std=" << format_double(c.init_std) << "\ncrop_size=" << c.crop_size << "\nseed=" << c.seed << '\n';
  return o.str();
}

/// Trains on the dataset's train split; writes model.drn, train.log and train.cfg into `out`.
inline TrainSummary run_train(const fs::path& data, const fs::path& out, const TrainConfig& cfg, int threads,
                              std::ostream* echo = nullptr,
                              const std::function<void(const IterationLog&)>& progress = {}) {
  cfg.validate();
  const auto examples = load_examples(data, "train", cfg.bins, threads);
  fs::create_directories(out);
  const std::string cfg_text = train_config_text(cfg);
  if (echo) *echo << cfg_text << std::flush;
  {
    std::ofstream c(out / "train.cfg", std::ios::trunc);
    c << cfg_text;
  }
  TrainSummary s{out / "model.drn", out / "train.log", 0.0};
  std::ofstream log(s.log, std::ios::trunc);
  if (!log) throw Error("cannot write " + s.log.string());
  const Network<float> net = train(examples, cfg, [&](const IterationLog& it) {
    log << it.iter << ' ' << format_double(it.lr) << ' ' << format_double(it.loss) << ' ' << format_double(it.loss_cls)
        << ' ' << format_double(it.loss_reg) << ' ' << format_double(it.loss_depth) << '\n';
    s.final_loss = it.loss;
    if (progress) progress(it);
  });
  save_checkpoint(s.checkpoint, net);
  return s;
}

// ---------------------------------------------------------------- infer

inline constexpr Channel kPredictionChannels[] = {Channel::kUh, Channel::kUv, Channel::kDepth, Channel::kMask};
inline constexpr const char* kPredictionHeader = "index\tfield\tpreview_uh\tpreview_uv";

struct PredictionRecord {
  std::size_t index = 0;
  std::string field;
  std::string preview_uh;
  std::string preview_uv;
};

inline void write_prediction_manifest(const fs::path& path, const std::vector<PredictionRecord>& recs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << kPredictionHeader << '\n';
  for (const auto& r : recs) out << r.index << '\t' << r.field << '\t' << r.preview_uh << '\t' << r.preview_uv << '\n';
}

inline std::vector<PredictionRecord> read_prediction_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("prediction manifest missing: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kPredictionHeader) throw FormatError("bad prediction manifest header");
  std::vector<PredictionRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    PredictionRecord r;
    if (!(ss >> r.index >> r.field >> r.preview_uh >> r.preview_uv)) throw FormatError("malformed prediction row");
    out.push_back(std::move(r));
  }
  return out;
}

/// Single-channel intensity image of one field channel (background black).
inline Image field_preview(const CorrespondenceField& f, Channel c) {
  Image img(f.width, f.height, 1);
  const auto& src = c == Channel::kUh ? f.uh : c == Channel::kUv ? f.uv : f.depth;
  for (std::size_t i = 0; i < f.size(); ++i) img.data[i] = f.mask[i] ? src[i] : 0.0f;
  return img;
}

inline std::vector<PredictionRecord> write_predictions(
    const fs::path& out, const std::string& split, const std::vector<ManifestRecord>& records, int threads,
    const std::function<CorrespondenceField(const ManifestRecord&)>& predict,
    std::span<const Channel> channels = kPredictionChannels) {
  fs::create_directories(out / split);
  std::vector<PredictionRecord> preds(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    const auto& rec = records[i];
    const CorrespondenceField f = predict(rec);
    const std::string stem = sample_stem(split, rec.index);
    preds[i] = {rec.index, stem + ".drf", stem + "_uh.pgm", stem + "_uv.pgm"};
    write_field(out / preds[i].field, f, channels);
    write_pnm(out / preds[i].preview_uh, field_preview(f, Channel::kUh));
    write_pnm(out / preds[i].preview_uv, field_preview(f, Channel::kUv));
  });
  write_prediction_manifest(out / "predictions.tsv", preds);
  return preds;
}

struct InferJob {
  fs::path data;
  fs::path checkpoint;
  fs::path out;
  std::string split = "test";
  DecodeMode mode = DecodeMode::kFull;
  std::optional<int> expected_bins;
  int threads = 1;
};

inline std::vector<PredictionRecord> run_infer(const InferJob& job) {
  const Network<float> net = load_checkpoint(job.checkpoint);
  if (job.expected_bins && *job.expected_bins != net.config().bins)
    throw InvalidInput("checkpoint has K=" + std::to_string(net.config().bins) + " but K=" +
                       std::to_string(*job.expected_bins) + " was requested");
  const Tessellation tess(net.config().bins);
  const auto records = split_records(read_manifest(job.data / "manifest.tsv"), job.split);
  if (records.empty()) throw InvalidInput("dataset has no '" + job.split + "' samples");
  return write_predictions(job.out, job.split, records, job.threads, [&](const ManifestRecord& r) {
    const Image img = read_pnm(job.data / r.image);
    return predict_field(net.forward(image_tensor<float>(img)), tess, job.mode);
  });
}

/// Writes the ground-truth fields of a split in prediction layout, parts channel included.
inline std::vector<PredictionRecord> write_ground_truth_predictions(const fs::path& data, const fs::path& out,
                                                                    const std::string& split, int threads) {
  const auto records = split_records(read_manifest(data / "manifest.tsv"), split);
  return write_predictions(out, split, records, threads,
                           [&](const ManifestRecord& r) { return read_field(data / r.field); }, kFieldChannels);
}

// ---------------------------------------------------------------- eval

enum class Normalizer { kInterocular, kBoundingBox };
enum class UndetectedPolicy { kFail, kSkip };
// Where predicted part labels come from: UV transfer through the template
// LUT, or a parts channel stored in the prediction file.
enum class SegmentationSource { kTransfer, kPartsChannel };

struct EvalJob {
  fs::path data;
  fs::path pred;
  fs::path out;
  std::string split = "test";
  Normalizer normalizer = Normalizer::kInterocular;
  UndetectedPolicy undetected = UndetectedPolicy::kFail;
  double tau = 0.05;
  double cap = 0.1;
  int ced_steps = 1000;
  int lut_resolution = 2048;
  bool landmarks = true;
  bool segmentation = true;
  SegmentationSource segmentation_source = SegmentationSource::kTransfer;
  int threads = 1;
};

struct EvalReport {
  std::size_t n_images = 0;
  double cap = 0.1;
  double auc = 0.0;
  double failure_rate = 0.0;
  double mean_error = 0.0;
  std::vector<double> errors;
  CedCurve curve;
  std::array<std::optional<double>, kNumPartClasses> per_class_iou{};
  double mean_iou = 0.0;
};

inline constexpr std::array<const char*, kNumPartClasses> kPartNames{
    "other", "left_brow", "right_brow", "left_eye", "right_eye", "nose", "upper_lip", "lower_lip"};

namespace detail {

struct ImageEval {
  std::optional<double> error;  // nullopt: no visible landmark
  std::vector<LandmarkResult> landmarks;
  std::array<IouCounts, kNumPartClasses> iou{};
};

inline double image_normalizer(const std::vector<LandmarkObservation>& gt, Normalizer n) {
  if (n == Normalizer::kInterocular) {
    const LandmarkObservation *l = nullptr, *r = nullptr;
    for (const auto& m : gt) {
      if (m.name == "left_eye_outer") l = &m;
      if (m.name == "right_eye_outer") r = &m;
    }
    if (!l || !r) throw InvalidInput("interocular normalizer needs left_eye_outer and right_eye_outer landmarks");
    return interocular_distance(l->position, r->position);
  }
  std::vector<Vec2> pts;
  for (const auto& m : gt) pts.push_back(m.position);
  return bbox_edge_normalizer(pts);
}

}  // namespace detail

inline std::string report_json(const EvalReport& r, const EvalJob& job) {
  nlohmann::ordered_json j;
  j["n_images"] = r.n_images;
  j["cap"] = r.cap;
  if (job.landmarks) {
    j["auc"] = r.auc;
    j["failure_rate"] = r.failure_rate;
    j["mean_error"] = r.mean_error;
    j["normalizer"] = job.normalizer == Normalizer::kInterocular ? "interocular" : "bbox";
  }
  if (job.segmentation) {
    nlohmann::ordered_json per = nlohmann::ordered_json::object();
    for (int c = 0; c < kNumPartClasses; ++c) {
      const auto& v = r.per_class_iou[static_cast<std::size_t>(c)];
      per[kPartNames[static_cast<std::size_t>(c)]] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
    }
    j["segmentation_source"] = job.segmentation_source == SegmentationSource::kTransfer ? "lut" : "parts";
    j["per_class_iou"] = per;
    j["mean_iou"] = r.mean_iou;
  }
  return j.dump(2);
}

inline EvalReport run_eval(const EvalJob& job) {
  if (!(job.cap > 0.0) || !(job.tau > 0.0)) throw InvalidInput("eval: cap and tau must be positive");
  const auto records = split_records(read_manifest(job.data / "manifest.tsv"), job.split);
  const auto preds = read_prediction_manifest(job.pred / "predictions.tsv");
  if (records.size() != preds.size()) throw InvalidInput("mismatched dataset/prediction manifests (sample counts differ)");
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].index != preds[i].index)
      throw InvalidInput("mismatched dataset/prediction manifests (index " + std::to_string(records[i].index) + ")");
  if (records.empty()) throw InvalidInput("eval: no samples in split '" + job.split + "'");

  const TemplateMesh mesh = dataset_template(job.data);
  const UvAtlas atlas = cylindrical_unwrap(mesh);
  const auto marks = template_landmark_uvs(mesh, atlas);
  std::optional<TemplateLabelLut> lut;
  if (job.segmentation && job.segmentation_source == SegmentationSource::kTransfer)
    lut = build_label_lut(mesh, atlas, job.lut_resolution);

  std::vector<detail::ImageEval> evals(records.size());
  parallel_for(records.size(), job.threads, [&](std::size_t i) {
    const DrfImage pred_file = decode_drf(detail::read_file(job.pred / preds[i].field));
    const CorrespondenceField pred = drf_to_field(pred_file);
    auto& e = evals[i];
    if (job.landmarks) {
      const auto gt = read_landmarks(job.data / records[i].landmarks);
      std::vector<NamedUv> wanted;
      for (const auto& m : gt)
        if (m.visible) {
          const Landmark* lm = mesh.find_landmark(m.name);
          if (!lm) throw InvalidInput("landmark '" + m.name + "' not in template");
          wanted.push_back({m.name, atlas.uv[lm->vertex]});
        }
      e.landmarks = localize_landmarks(pred, wanted, job.tau);
      if (!wanted.empty()) {
        const double norm = detail::image_normalizer(gt, job.normalizer);
        std::vector<Vec2> p, g;
        bool missed = false;
        for (const auto& r : e.landmarks) {
          if (!r.detected) {
            missed = true;
            continue;
          }
          p.push_back(r.pixel_center());
          for (const auto& m : gt)
            if (m.name == r.name) g.push_back(m.position);
        }
        // An image with a missed landmark scores the cap, nudged one ulp up so it counts as a failure.
        if ((missed && job.undetected == UndetectedPolicy::kFail) || p.empty())
          e.error = std::nextafter(job.cap, std::numeric_limits<double>::infinity());
        else
          e.error = rms_point_error(p, g, norm);
      }
    }
    if (job.segmentation) {
      const CorrespondenceField gt = read_field(job.data / records[i].field);
      if (!lut && !pred_file.find(Channel::kParts))
        throw InvalidInput("prediction " + preds[i].field + " has no parts channel");
      const auto labels = lut ? transfer_segmentation(pred, *lut) : pred.parts;
      for (int c = 0; c < kNumPartClasses; ++c) e.iou[static_cast<std::size_t>(c)] = iou_counts(labels, gt.parts, c);
    }
  });

  EvalReport rep;
  rep.cap = job.cap;
  rep.n_images = records.size();
  if (job.landmarks) {
    double sum = 0.0;
    std::size_t counted = 0;
    for (const auto& e : evals)
      if (e.error) {
        rep.errors.push_back(*e.error);
        sum += *e.error;
        ++counted;
      }
    if (rep.errors.empty()) throw InvalidInput("eval: no image has a visible landmark");
    const auto s = summarize_errors(rep.errors, job.cap, job.ced_steps);
    rep.auc = s.auc;
    rep.failure_rate = s.failure_rate;
    rep.curve = s.curve;
    rep.mean_error = sum / static_cast<double>(counted);
  }
  if (job.segmentation) {
    for (int c = 0; c < kNumPartClasses; ++c) {
      IouCounts total;
      for (const auto& e : evals) {
        total.intersection += e.iou[static_cast<std::size_t>(c)].intersection;
        total.uni += e.iou[static_cast<std::size_t>(c)].uni;
      }
      rep.per_class_iou[static_cast<std::size_t>(c)] = total.value();
    }
    rep.mean_iou = mean_iou(rep.per_class_iou);
  }

  if (!job.out.empty()) {
    fs::create_directories(job.out / "landmarks");
    std::ofstream(job.out / "report.json", std::ios::trunc) << report_json(rep, job) << '\n';
    if (job.landmarks) {
      std::ofstream ced_file(job.out / "ced.txt", std::ios::trunc);
      for (std::size_t i = 0; i < rep.curve.thresholds.size(); ++i)
        ced_file << format_double(rep.curve.thresholds[i]) << ' ' << format_double(rep.curve.fractions[i]) << '\n';
      for (std::size_t i = 0; i < records.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%06zu.txt", records[i].index);
        std::ofstream lf(job.out / "landmarks" / name, std::ios::trunc);
        lf << "# name row col detected uv_distance\n";
        for (const auto& r : evals[i].landmarks)
          lf << r.name << ' ' << r.row << ' ' << r.col << ' ' << (r.detected ? 1 : 0) << ' '
             << (r.detected ? format_double(r.uv_distance) : std::string("inf")) << '\n';
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------- ablate

struct AblationRow {
  int bins = 1;
  DecodeMode mode = DecodeMode::kFull;
  double auc = 0.0;
  double failure_rate = 0.0;
  fs::path checkpoint;
  fs::path log;
};

inline const char* decode_mode_name(DecodeMode m) {
  return m == DecodeMode::kFull ? "full" : "classification-only";
}

/// Trains one model per K and evaluates it under both decode modes.
inline std::vector<AblationRow> run_ablate(const fs::path& data, const fs::path& out, const std::vector<int>& ks,
                                           const TrainConfig& base, const EvalJob& eval_base, int threads,
                                           std::ostream* progress = nullptr) {
  if (ks.empty()) throw InvalidInput("ablate: empty K list");
  for (int k : ks)
    if (k < 1) throw InvalidInput("ablate: every K must be >= 1");
  base.validate();
  std::vector<AblationRow> rows;
  for (int k : ks) {
    TrainConfig cfg = base;
    cfg.bins = k;
    const fs::path dir = out / ("k" + std::to_string(k));
    const auto summary = run_train(data, dir, cfg, threads);
    for (DecodeMode mode : {DecodeMode::kFull, DecodeMode::kClassificationOnly}) {
      const fs::path pred = dir / (mode == DecodeMode::kFull ? "pred_full" : "pred_cls");
      run_infer({data, summary.checkpoint, pred, eval_base.split, mode, k, threads});
      EvalJob ej = eval_base;
      ej.data = data;
      ej.pred = pred;
      ej.out = pred / "eval";
      ej.segmentation = false;
      ej.threads = threads;
      const auto rep = run_eval(ej);
      rows.push_back({k, mode, rep.auc, rep.failure_rate, summary.checkpoint, summary.log});
      if (progress)
        *progress << "K=" << k << " " << decode_mode_name(mode) << " auc=" << rep.auc
                  << " failure=" << rep.failure_rate << "%\n"
                  << std::flush;
    }
  }
  std::ofstream table(out / "ablation.tsv", std::ios::trunc);
  table << "k\tmode\tauc\tfailure_rate\tcheckpoint\tlog\n";
  for (const auto& r : rows)
    table << r.bins << '\t' << decode_mode_name(r.mode) << '\t' << format_double(r.auc) << '\t'
          << format_double(r.failure_rate) << '\t' << fs::relative(r.checkpoint, out).string() << '\t'
          << fs::relative(r.log, out).string() << '\n';
  return rows;
}

/// "DenseReg 0.3605 / 10.83%" style summary line.
inline std::string format_auc_line(const std::string& method, double auc_value, double failure_percent) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s %.4f / %.2f%%", method.c_str(), auc_value, failure_percent);
  return buf;
}

}  // namespace densereg
