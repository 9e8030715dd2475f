// densereg: synth / train / infer / eval / gradcheck / ablate.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "densereg/app.hpp"
#include "densereg/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace densereg;

namespace {

enum Exit { kOk = 0, kUsage = 1, kRuntime = 2, kVerification = 3 };

struct UsageError : Error {
  using Error::Error;
};

#ifndef DENSEREG_ASSET_DIR
#define DENSEREG_ASSET_DIR "assets"
#endif

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  int threads = 0;
};

struct SynthOpts {
  DatasetSpec spec;
  std::string mesh = std::string(DENSEREG_ASSET_DIR) + "/face_lowpoly.json";
};

struct TrainOpts {
  TrainConfig cfg;
  std::string data;
  std::vector<int> widths{16, 32, 32, 64, 64};
  double warmup_lr = 0.0;
  double w_reg = 0.0;
  int log_every = 100;
};

struct EvalOpts {
  EvalJob job;
  std::string normalizer = "interocular";
  std::string undetected = "fail";
  std::string task = "both";
  std::string segmentation_source = "lut";
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// key=value lines; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(n) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

/// Applies file values to options not given on the command line.
void apply_config(CLI::App& root, CLI::App& sub, const std::string& path) {
  for (const auto& [key, value] : read_config_file(path)) {
    if (key == "config") throw UsageError("config files cannot include other config files");
    CLI::Option* opt = nullptr;
    for (CLI::App* app : {&sub, &root}) {
      try {
        opt = app->get_option("--" + key);
        break;
      } catch (const CLI::OptionNotFound&) {
      }
    }
    if (!opt) throw UsageError("unknown config key '" + key + "' for " + sub.get_name());
    if (opt->count() > 0) continue;
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw UsageError("config key '" + key + "': " + e.what());
    }
  }
}

void add_train_options(CLI::App* c, TrainOpts& t) {
  c->add_option("--k", t.cfg.bins, "tessellation bins per axis")->capture_default_str();
  c->add_option("--iterations", t.cfg.iterations)->capture_default_str();
  c->add_option("--batch-size", t.cfg.batch_size)->capture_default_str();
  c->add_option("--base-lr", t.cfg.base_lr)->capture_default_str();
  c->add_option("--poly-power", t.cfg.poly_power)->capture_default_str();
  c->add_option("--warmup-iters", t.cfg.warmup_iters)->capture_default_str();
  c->add_option("--warmup-lr", t.warmup_lr, "default: base-lr / 10");
  c->add_option("--momentum", t.cfg.momentum)->capture_default_str();
  c->add_option("--w-cls", t.cfg.w_cls)->capture_default_str();
  c->add_option("--w-reg", t.w_reg, "default: 40 for K > 1, 70 for K = 1");
  c->add_option("--w-depth", t.cfg.w_depth)->capture_default_str();
  c->add_option("--init-std", t.cfg.init_std)->capture_default_str();
  c->add_option("--crop-size", t.cfg.crop_size, "0 = full images")->capture_default_str();
  c->add_option("--widths", t.widths, "five trunk widths")->delimiter(',')->expected(kTrunkDepth);
  c->add_option("--log-every", t.log_every, "progress line period (0 = silent)")->capture_default_str();
}

void add_eval_options(CLI::App* c, EvalOpts& e) {
  c->add_option("--split", e.job.split)->capture_default_str();
  c->add_option("--normalizer", e.normalizer)
      ->check(CLI::IsMember({"interocular", "bbox"}))
      ->capture_default_str();
  c->add_option("--undetected", e.undetected, "undetected landmark: fail the image or skip the landmark")
      ->check(CLI::IsMember({"fail", "skip"}))
      ->capture_default_str();
  c->add_option("--tau", e.job.tau, "UV distance threshold")->capture_default_str();
  c->add_option("--cap", e.job.cap, "CED cap")->capture_default_str();
  c->add_option("--ced-steps", e.job.ced_steps)->capture_default_str();
  c->add_option("--lut-resolution", e.job.lut_resolution)->capture_default_str();
  c->add_option("--segmentation-source", e.segmentation_source, "part labels from UV transfer or the parts channel")
      ->check(CLI::IsMember({"lut", "parts"}))
      ->capture_default_str();
}

void finish_train(TrainOpts& t, CLI::App* c, std::uint64_t seed, bool seed_given) {
  for (std::size_t i = 0; i < t.widths.size(); ++i) {
    if (t.widths[i] < 1) throw UsageError("widths must be positive");
    t.cfg.widths[i] = t.widths[i];
  }
  if (c->count("--warmup-lr")) t.cfg.warmup_lr = t.warmup_lr;
  if (c->count("--w-reg")) t.cfg.w_reg = t.w_reg;
  if (seed_given) t.cfg.seed = seed;
  try {
    t.cfg.validate();
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
}

void finish_eval(EvalOpts& e) {
  e.job.normalizer = e.normalizer == "bbox" ? Normalizer::kBoundingBox : Normalizer::kInterocular;
  e.job.undetected = e.undetected == "skip" ? UndetectedPolicy::kSkip : UndetectedPolicy::kFail;
  e.job.segmentation_source =
      e.segmentation_source == "parts" ? SegmentationSource::kPartsChannel : SegmentationSource::kTransfer;
  e.job.landmarks = e.task != "segmentation";
  e.job.segmentation = e.task != "landmarks";
  if (!(e.job.tau > 0.0) || !(e.job.cap > 0.0) || e.job.ced_steps < 1 || e.job.lut_resolution < 64)
    throw UsageError("eval: tau, cap, ced-steps must be positive and lut-resolution >= 64");
}

void require_dataset(const std::string& dir) {
  if (dir.empty()) throw UsageError("--data is required");
  if (!fs::is_regular_file(fs::path(dir) / "manifest.tsv")) throw Error("manifest missing: " + dir + "/manifest.tsv");
}

std::function<void(const IterationLog&)> progress_printer(int every, int total) {
  return [every, total](const IterationLog& it) {
    if (every > 0 && ((it.iter + 1) % every == 0 || it.iter + 1 == total))
      std::cerr << "iter " << it.iter + 1 << "/" << total << " lr " << it.lr << " loss " << it.loss << '\n';
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dense shape regression: synthetic data, training and evaluation"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "key=value file; command-line flags take precedence");
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--threads", g.threads, "worker pool size (DENSEREG_THREADS overrides; default all cores)");

  SynthOpts so;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--n-train", so.spec.n_train)->capture_default_str();
  synth->add_option("--n-test", so.spec.n_test)->capture_default_str();
  synth->add_option("--width", so.spec.synth.width)->capture_default_str();
  synth->add_option("--height", so.spec.synth.height)->capture_default_str();
  synth->add_option("--scale-ratios", so.spec.synth.scale_ratios)->delimiter(',');
  synth->add_option("--base-scale", so.spec.synth.base_scale_px, "pixels per model unit")->capture_default_str();
  synth->add_option("--yaw-range", so.spec.synth.yaw_range_deg, "degrees")->capture_default_str();
  synth->add_option("--roll-range", so.spec.synth.roll_range_deg, "degrees")->capture_default_str();
  synth->add_option("--translate", so.spec.synth.translate_px, "pixels")->capture_default_str();
  synth->add_option("--tps-grid", so.spec.synth.tps_grid)->capture_default_str();
  synth->add_option("--tps-jitter", so.spec.synth.tps_jitter_px, "pixels")->capture_default_str();
  synth->add_option("--tps-lambda", so.spec.synth.tps_lambda)->capture_default_str();
  synth->add_option("--noise", so.spec.synth.noise)->capture_default_str();
  synth->add_option("--template", so.mesh, "template mesh JSON")->capture_default_str();

  TrainOpts to;
  auto* train_cmd = app.add_subcommand("train", "train the network on a dataset");
  train_cmd->add_option("--data", to.data, "dataset directory");
  add_train_options(train_cmd, to);

  std::string infer_data, infer_ckpt, infer_mode = "full", infer_split = "test";
  int infer_k = 0;
  auto* infer = app.add_subcommand("infer", "predict correspondence fields");
  infer->add_option("--data", infer_data, "dataset directory");
  infer->add_option("--checkpoint", infer_ckpt, "model.drn");
  infer->add_option("--split", infer_split)->capture_default_str();
  infer->add_option("--decode-mode", infer_mode)
      ->check(CLI::IsMember({"full", "classification-only"}))
      ->capture_default_str();
  infer->add_option("--k", infer_k, "expected K; rejected if the checkpoint differs");

  EvalOpts eo;
  std::string eval_data, eval_pred;
  auto* eval = app.add_subcommand("eval", "landmark and segmentation evaluation");
  eval->add_option("--data", eval_data, "dataset directory");
  eval->add_option("--pred", eval_pred, "prediction directory");
  eval->add_option("--task", eo.task)->check(CLI::IsMember({"landmarks", "segmentation", "both"}))->capture_default_str();
  add_eval_options(eval, eo);

  GradcheckOptions go;
  std::string fault;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every backward pass");
  grad->add_option("--coords", go.coords_per_tensor, "coordinates per tensor")->capture_default_str();
  grad->add_option("--step", go.step)->capture_default_str();
  grad->add_option("--tolerance", go.tolerance)->capture_default_str();
  grad->add_option("--inject-fault", fault)->group("");

  TrainOpts ao;
  EvalOpts aeo;
  std::vector<int> ks{1, 5, 10};
  std::string ablate_data;
  auto* ablate = app.add_subcommand("ablate", "train and evaluate over several K");
  ablate->add_option("--data", ablate_data, "dataset directory");
  ablate->add_option("--ks", ks, "K values")->delimiter(',');
  add_train_options(ablate, ao);
  ablate->remove_option(ablate->get_option("--k"));
  add_eval_options(ablate, aeo);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!g.config.empty()) apply_config(app, *sub, g.config);
    const bool seed_given = app.count("--seed") > 0;
    int threads = 0;
    try {
      threads = resolve_threads(g.threads);
    } catch (const InvalidInput& e) {
      throw UsageError(e.what());
    }
    const auto need_out = [&] {
      if (g.out.empty()) throw UsageError("--out is required for " + sub->get_name());
    };

    if (sub == synth) {
      need_out();
      if (seed_given) so.spec.seed = g.seed;
      try {
        so.spec.validate();
      } catch (const InvalidInput& e) {
        throw UsageError(e.what());
      }
      const TemplateMesh mesh = load_mesh(so.mesh);
      const auto recs = write_dataset(g.out, mesh, so.spec, threads);
      std::cout << "wrote " << recs.size() << " samples to " << g.out << '\n';
      return kOk;
    }
    if (sub == train_cmd) {
      need_out();
      finish_train(to, train_cmd, g.seed, seed_given);
      require_dataset(to.data);
      const auto s = run_train(to.data, g.out, to.cfg, threads, &std::cout,
                               progress_printer(to.log_every, to.cfg.iterations));
      std::cout << "final loss " << s.final_loss << "\ncheckpoint " << s.checkpoint.string() << '\n';
      return kOk;
    }
    if (sub == infer) {
      need_out();
      require_dataset(infer_data);
      if (infer_ckpt.empty()) throw UsageError("--checkpoint is required");
      if (!fs::is_regular_file(infer_ckpt)) throw Error("checkpoint missing: " + infer_ckpt);
      InferJob job{infer_data, infer_ckpt, g.out, infer_split,
                   infer_mode == "full" ? DecodeMode::kFull : DecodeMode::kClassificationOnly, std::nullopt, threads};
      if (infer->count("--k")) {
        if (infer_k < 1) throw UsageError("--k must be >= 1");
        job.expected_bins = infer_k;
      }
      try {
        const auto preds = run_infer(job);
        std::cout << "wrote " << preds.size() << " predictions to " << g.out << '\n';
      } catch (const InvalidInput& e) {
        throw UsageError(e.what());
      }
      return kOk;
    }
    if (sub == eval) {
      need_out();
      finish_eval(eo);
      require_dataset(eval_data);
      if (eval_pred.empty()) throw UsageError("--pred is required");
      eo.job.data = eval_data;
      eo.job.pred = eval_pred;
      eo.job.out = g.out;
      eo.job.threads = threads;
      const auto rep = run_eval(eo.job);
      std::cout << report_json(rep, eo.job) << '\n';
      return kOk;
    }
    if (sub == grad) {
      if (seed_given) go.seed = g.seed;
      go.inject_fault = fault;
      if (go.coords_per_tensor < 1 || !(go.step > 0.0) || !(go.tolerance > 0.0))
        throw UsageError("gradcheck: coords, step and tolerance must be positive");
      const auto rep = run_all_gradchecks(go);
      std::map<std::string, double> worst;
      std::map<std::string, bool> ok;
      for (const auto& e : rep.entries) {
        worst[e.op] = std::max(worst[e.op], e.max_rel_error);
        ok.try_emplace(e.op, true);
        ok[e.op] = ok[e.op] && e.passed;
      }
      for (const auto& [op, err] : worst)
        std::cout << (ok[op] ? "PASS " : "FAIL ") << op << " max_rel_error=" << err << '\n';
      for (const auto& e : rep.entries)
        if (!e.passed)
          std::cout << "  failed: " << e.op << " / " << e.tensor << " max_rel_error=" << e.max_rel_error
                    << " tolerance=" << e.tolerance << '\n';
      return rep.passed() ? kOk : kVerification;
    }
    if (sub == ablate) {
      need_out();
      finish_train(ao, ablate, g.seed, seed_given);
      finish_eval(aeo);
      require_dataset(ablate_data);
      for (int k : ks)
        if (k < 1) throw UsageError("--ks entries must be >= 1");
      const auto rows = run_ablate(ablate_data, g.out, ks, ao.cfg, aeo.job, threads, &std::cout);
      std::cout << "wrote " << rows.size() << " rows to " << (fs::path(g.out) / "ablation.tsv").string() << '\n';
      return kOk;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
