#pragma once

// On-disk synthetic datasets: manifest.tsv, template.json, dataset.cfg and
// per-sample image (PPM), field (DRF1) and landmark (.lmk) files.

#include <charconv>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "densereg/codec.hpp"
#include "densereg/common.hpp"
#include "densereg/drf.hpp"
#include "densereg/image.hpp"
#include "densereg/network.hpp"
#include "densereg/parallel.hpp"
#include "densereg/synth.hpp"
#include "densereg/template_mesh.hpp"
#include "densereg/trainer.hpp"

namespace densereg {

namespace fs = std::filesystem;

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw FormatError("invalid number for " + what + ": '" + s + "'");
  return v;
}

struct ManifestRecord {
  std::string split;  // "train" or "test"
  std::size_t index = 0;
  std::uint64_t seed = 0;
  double scale_ratio = 1.0;
  double tps_magnitude = 0.0;
  std::string image;
  std::string field;
  std::string landmarks;
};

inline constexpr const char* kManifestHeader = "split\tindex\tseed\tscale\ttps\timage\tfield\tlandmarks";

inline void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << kManifestHeader << '\n';
  for (const auto& r : records)
    out << r.split << '\t' << r.index << '\t' << r.seed << '\t' << format_double(r.scale_ratio) << '\t'
        << format_double(r.tps_magnitude) << '\t' << r.image << '\t' << r.field << '\t' << r.landmarks << '\n';
}

inline std::vector<ManifestRecord> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("manifest missing: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) throw FormatError("bad manifest header in " + path.string());
  std::vector<ManifestRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestRecord r;
    std::string scale, tps;
    if (!(ss >> r.split >> r.index >> r.seed >> scale >> tps >> r.image >> r.field >> r.landmarks))
      throw FormatError("malformed manifest row: " + line);
    r.scale_ratio = parse_double(scale, "scale");
    r.tps_magnitude = parse_double(tps, "tps");
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<ManifestRecord> split_records(const std::vector<ManifestRecord>& all, const std::string& split) {
  std::vector<ManifestRecord> out;
  for (const auto& r : all)
    if (r.split == split) out.push_back(r);
  return out;
}

inline void write_landmarks(const fs::path& path, const std::vector<LandmarkObservation>& marks) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "# name x y visible\n";
  for (const auto& m : marks)
    out << m.name << ' ' << format_double(m.position.x) << ' ' << format_double(m.position.y) << ' '
        << (m.visible ? 1 : 0) << '\n';
}

inline std::vector<LandmarkObservation> read_landmarks(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<LandmarkObservation> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    LandmarkObservation m;
    std::string x, y;
    int vis = 0;
    if (!(ss >> m.name >> x >> y >> vis)) throw FormatError("malformed landmark line: " + line);
    m.position = {parse_double(x, "x"), parse_double(y, "y")};
    m.visible = vis != 0;
    out.push_back(std::move(m));
  }
  return out;
}

struct DatasetSpec {
  SynthConfig synth;
  std::size_t n_train = 200;
  std::size_t n_test = 50;
  std::uint64_t seed = 7;

  void validate() const {
    synth.validate();
    if (n_train == 0) throw InvalidInput("synth: n-train must be positive");
  }
};

/// Per-sample seeds: train i and test i draw from separate streams.
inline std::uint64_t sample_seed(std::uint64_t master, const std::string& split, std::size_t index) {
  return stream_seed(split == "train" ? master : mix64(master ^ 0x7465737400000000ULL), index);
}

inline std::string sample_stem(const std::string& split, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return split + "/" + buf;
}

inline std::string dataset_config_text(const DatasetSpec& spec) {
  std::ostringstream o;
  const auto& s = spec.synth;
  o << "seed=" << spec.seed << "\nn_train=" << spec.n_train << "\nn_test=" << spec.n_test << "\nwidth=" << s.width
    << "\nheight=" << s.height << "\nscale_ratios=";
  for (std::size_t i = 0; i < s.scale_ratios.size(); ++i) o << (i ? "," : "") << format_double(s.scale_ratios[i]);
  o << "\nbase_scale_px=" << format_double(s.base_scale_px) << "\nyaw_range_deg=" << format_double(s.yaw_range_deg)
    << "\nroll_range_deg=" << format_double(s.roll_range_deg) << "\ntranslate_px=" << format_double(s.translate_px)
    << "\ntps_grid=" << s.tps_grid << "\ntps_jitter_px=" << format_double(s.tps_jitter_px)
    << "\ntps_lambda=" << format_double(s.tps_lambda) << "\nnoise=" << format_double(s.noise) << '\n';
  return o.str();
}

/// Generates and writes every sample; output bytes do not depend on `threads`.
inline std::vector<ManifestRecord> write_dataset(const fs::path& dir, const TemplateMesh& mesh,
                                                 const DatasetSpec& spec, int threads) {
  spec.validate();
  const UvAtlas atlas = cylindrical_unwrap(mesh);
  fs::create_directories(dir / "train");
  if (spec.n_test > 0) fs::create_directories(dir / "test");
  {
    std::ofstream t(dir / "template.json", std::ios::trunc);
    if (!t) throw Error("cannot write " + (dir / "template.json").string());
    t << serialize_mesh(mesh) << '\n';
    std::ofstream c(dir / "dataset.cfg", std::ios::trunc);
    c << dataset_config_text(spec);
  }
  std::vector<ManifestRecord> records;
  for (const char* split : {"train", "test"}) {
    const std::size_t n = std::string(split) == "train" ? spec.n_train : spec.n_test;
    for (std::size_t i = 0; i < n; ++i) {
      ManifestRecord r;
      r.split = split;
      r.index = i;
      r.seed = sample_seed(spec.seed, split, i);
      const std::string stem = sample_stem(split, i);
      r.image = stem + ".ppm";
      r.field = stem + ".drf";
      r.landmarks = stem + ".lmk";
      records.push_back(std::move(r));
    }
  }
  parallel_for(records.size(), threads, [&](std::size_t k) {
    auto& r = records[k];
    const SceneSample s = synthesize_sample(mesh, atlas, spec.synth, r.seed);
    r.scale_ratio = s.meta.scale_ratio;
    r.tps_magnitude = s.meta.tps_magnitude;
    write_pnm(dir / r.image, s.image);
    write_field(dir / r.field, s.gt);
    write_landmarks(dir / r.landmarks, s.gt_landmarks);
  });
  write_manifest(dir / "manifest.tsv", records);
  return records;
}

inline TemplateMesh dataset_template(const fs::path& dir) { return load_mesh(dir / "template.json"); }

/// Loads one split and encodes its fields for a K-bin tessellation.
inline std::vector<TrainingExample> load_examples(const fs::path& dir, const std::string& split, int bins,
                                                  int threads) {
  const auto records = split_records(read_manifest(dir / "manifest.tsv"), split);
  if (records.empty()) throw InvalidInput("dataset has no '" + split + "' samples");
  const Tessellation tess(bins);
  std::vector<TrainingExample> out(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    const Image img = read_pnm(dir / records[i].image);
    const CorrespondenceField f = read_field(dir / records[i].field);
    if (f.width != img.width || f.height != img.height)
      throw FormatError("field and image sizes differ for " + records[i].image);
    out[i].image = image_tensor<float>(img);
    out[i].target = encode(f, tess);
    out[i].depth = f.depth;
  });
  return out;
}

}  // namespace densereg
