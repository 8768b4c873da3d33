// stereo4p command-line front end.
//
// Exit codes: 0 success, 1 usage, 2 missing input, 3 unreadable input
// format, 4 invalid configuration, 5 failure inside a processing stage,
// 6 output could not be written, 7 non-finite result, 8 gradient check
// above tolerance.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stereo4p/classic_costs.hpp"
#include "stereo4p/dataset.hpp"
#include "stereo4p/eval.hpp"
#include "stereo4p/file_util.hpp"
#include "stereo4p/io.hpp"
#include "stereo4p/matchnet.hpp"
#include "stereo4p/parallel.hpp"
#include "stereo4p/postproc.hpp"
#include "stereo4p/simd.hpp"
#include "stereo4p/trainer.hpp"

namespace fs = std::filesystem;
using namespace stereo4p;

namespace {

enum Exit {
  kOk = 0,
  kUsage = 1,
  kMissing = 2,
  kFormat = 3,
  kConfig = 4,
  kStage = 5,
  kWrite = 6,
  kNonFinite = 7,
  kGradCheck = 8,
};

struct Failure {
  int code;
  std::string message;
};

[[noreturn]] void fail(int code, const std::string& message) { throw Failure{code, message}; }

// ---------------------------------------------------------------- inputs
// Everything a command reads is loaded before any compute starts.

template <class F>
auto load(const std::string& what, const fs::path& path, F&& reader) {
  if (!fs::exists(path)) fail(kMissing, what + ": not found (" + path.string() + ")");
  try {
    return reader(path);
  } catch (const IoError& e) {
    fail(kMissing, what + ": " + e.what());
  } catch (const FormatError& e) {
    fail(kFormat, what + ": " + e.what());
  } catch (const ConfigError& e) {
    fail(kConfig, what + ": " + e.what());
  } catch (const SpecMismatchError& e) {
    fail(kConfig, what + ": " + e.what());
  } catch (const ArgumentError& e) {
    fail(kConfig, what + ": " + e.what());
  }
}

KeyValueConfig load_config(const std::string& what, const std::string& path) {
  if (path.empty()) return {};
  return load(what, path, [](const fs::path& p) { return KeyValueConfig::load(p); });
}

template <class F>
auto configure(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    fail(kConfig, what + ": " + e.what());
  } catch (const ArgumentError& e) {
    fail(kConfig, what + ": " + e.what());
  } catch (const SpecMismatchError& e) {
    fail(kConfig, what + ": " + e.what());
  }
}

NetworkSpec preset(const std::string& name) {
  if (name == "tiny_baseline") return NetworkSpec::tiny_baseline();
  if (name == "tiny_proposed") return NetworkSpec::tiny_proposed();
  if (name == "paper_baseline") return NetworkSpec::paper_baseline();
  if (name == "paper_proposed") return NetworkSpec::paper_proposed();
  fail(kConfig, "network: unknown preset '" + name + "'");
}

// --network wins, then --preset, then the layout stored in the weights.
NetworkSpec resolve_spec(const std::string& network_path, const std::string& preset_name,
                         const Weights* weights, const std::string& fallback) {
  if (!network_path.empty()) {
    const auto c = load_config("network", network_path);
    return configure("network", [&] { return NetworkSpec::from_config(c); });
  }
  if (!preset_name.empty()) return preset(preset_name);
  if (weights && weights->metadata.count("network")) {
    return configure("weights", [&] {
      return NetworkSpec::from_config(
          KeyValueConfig::parse(weights->metadata.at("network"), "weights metadata"));
    });
  }
  return preset(fallback);
}

Weights load_weights_file(const std::string& path) {
  if (path.empty()) fail(kMissing, "weights: not found (no --weights given)");
  return load("weights", path, [](const fs::path& p) { return load_weights_unchecked(p); });
}

// ---------------------------------------------------------------- stages

class Timer {
 public:
  template <class F>
  auto run(const std::string& stage, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<decltype(f())>) {
        f();
        record(stage, t0);
      } else {
        auto out = f();
        record(stage, t0);
        return out;
      }
    } catch (const Failure&) {
      throw;
    } catch (const DivergenceError& e) {
      fail(kNonFinite, "stage " + stage + ": " + e.what());
    } catch (const std::exception& e) {
      fail(kStage, "stage " + stage + ": " + e.what());
    }
  }
  void add(const std::string& stage, double seconds) { rows_.emplace_back(stage, seconds); }
  std::string csv() const {
    std::string out = "stage,seconds\n";
    char buf[64];
    for (const auto& [s, t] : rows_) {
      std::snprintf(buf, sizeof buf, ",%.6f\n", t);
      out += s + buf;
    }
    return out;
  }

 private:
  void record(const std::string& stage, std::chrono::steady_clock::time_point t0) {
    rows_.emplace_back(stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::vector<std::pair<std::string, double>> rows_;
};

class Output {
 public:
  explicit Output(const std::string& dir) : dir_(dir) {
    if (dir.empty()) fail(kUsage, "--out is required");
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) fail(kWrite, "output directory " + dir + ": " + ec.message());
  }
  fs::path path(const std::string& name) const { return dir_ / name; }
  void write(const std::string& name, const std::function<void(const fs::path&)>& writer) const {
    try {
      writer(path(name));
    } catch (const std::exception& e) {
      fail(kWrite, "writing " + path(name).string() + ": " + e.what());
    }
  }
  void text(const std::string& name, const std::string& bytes) const {
    write(name, [&](const fs::path& p) { write_file_atomic(p, bytes); });
  }

 private:
  fs::path dir_;
};

void require_finite(const DisparityMap& d, const std::string& what) {
  for (float v : d.values()) {
    if (std::isnan(v) || v == -INFINITY) fail(kNonFinite, what + " contains non-finite values");
  }
}

struct Common {
  std::string config;
  std::string weights;
  std::string out;
  std::uint64_t seed = 1;
  int threads = 0;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value configuration file");
  cmd->add_option("--weights", c.weights, "weights file");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--threads", c.threads, "worker threads (0: hardware concurrency)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_flag("--deterministic", c.deterministic,
                "pin the scalar reference kernels so results match across hosts");
}

void apply_common(const Common& c) {
  if (c.threads > 0) set_thread_count(c.threads);
  if (c.deterministic) simd::set_active_isa(simd::Isa::scalar);
}

// ---------------------------------------------------------------- match

struct MatchArgs {
  Common common;
  std::string left, right, calib, network, preset, stages;
  int ndisp = 0;
};

int cmd_match(const MatchArgs& a) {
  apply_common(a.common);
  const Tensor left = load("left image", a.left, [](const fs::path& p) { return read_image(p); });
  const Tensor right = load("right image", a.right, [](const fs::path& p) { return read_image(p); });
  int ndisp = a.ndisp;
  if (!a.calib.empty()) {
    const Calibration c = load("calib", a.calib, [](const fs::path& p) { return read_calib(p); });
    if (ndisp == 0) ndisp = c.ndisp;
  }
  if (ndisp < 1) fail(kConfig, "ndisp: give --ndisp or a calib.txt with ndisp");
  const Weights weights = load_weights_file(a.common.weights);
  const NetworkSpec spec = resolve_spec(a.network, a.preset, &weights, "tiny_proposed");
  const KeyValueConfig pc = load_config("pipeline config", a.common.config);
  PipelineConfig pipeline = configure("pipeline config", [&] { return PipelineConfig::from_config(pc); });
  if (!a.stages.empty()) configure("--stages", [&] { pipeline.set_stages(a.stages); });
  configure("pipeline config", [&] { pipeline.validate(); });
  if (left.shape() != right.shape()) fail(kFormat, "left and right images differ in size");
  const MatchNet net = configure("weights", [&] { return MatchNet(spec, weights); });
  const Output out(a.common.out);

  Timer timer;
  const CostVolume volume = timer.run("cost_volume", [&] {
    return net.compute_cost_volume(normalize_image(left), normalize_image(right), ndisp);
  });
  PipelineReport report;
  const DisparityMap disparity =
      timer.run("pipeline", [&] { return run_pipeline(volume, left, right, pipeline, &report); });
  for (const auto& [stage, seconds] : report.stage_seconds) timer.add("pipeline." + stage, seconds);
  require_finite(report.raw_wta, "raw WTA disparity");
  require_finite(disparity, "disparity");

  out.write("disparity_raw.pfm", [&](const fs::path& p) { write_pfm(report.raw_wta, p); });
  out.write("disparity.pfm", [&](const fs::path& p) { write_pfm(disparity, p); });
  out.write("disparity_raw.png", [&](const fs::path& p) { write_gray8(render_disparity(report.raw_wta, ndisp), p); });
  out.write("disparity.png", [&](const fs::path& p) { write_gray8(render_disparity(disparity, ndisp), p); });
  out.text("timing.csv", timer.csv());
  std::cout << timer.csv();
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  Common common;
  std::string data, network, preset, init = "warm";
  int synthetic = 0;
  bool weak = true;
  bool half = false;
  int samples = 20000;
};

std::vector<StereoSample> training_data(const TrainArgs& a) {
  if (!a.data.empty()) {
    return load("dataset", a.data, [&](const fs::path& p) { return load_middlebury_set(p, a.half); });
  }
  if (a.synthetic < 1) fail(kUsage, "give --data DIR or --synthetic N");
  SyntheticOptions o;
  o.weak_regions = a.weak;
  return configure("synthetic", [&] { return make_synthetic_suite(a.synthetic, o, a.common.seed); });
}

int run_training(const TrainArgs& a, bool finetune) {
  apply_common(a.common);
  const KeyValueConfig sc = load_config("schedule config", a.common.config);
  TrainSchedule schedule = configure("schedule config", [&] { return TrainSchedule::from_config(sc); });
  if (!sc.has("seed")) schedule.seed = a.common.seed;
  std::optional<Weights> pretrained;
  if (finetune) pretrained = load_weights_file(a.common.weights);
  const NetworkSpec spec =
      resolve_spec(a.network, a.preset, nullptr, finetune ? "tiny_proposed" : "tiny_baseline");
  const HeadInit init = a.init == "random" ? HeadInit::random : HeadInit::warm_start;
  if (a.init != "random" && a.init != "warm") fail(kConfig, "--init must be warm or random");
  if (finetune) configure("weights", [&] { return initial_finetune_weights(*pretrained, spec, init, schedule.seed); });
  const auto data = training_data(a);
  const Output out(a.common.out);

  Timer timer;
  SamplingOptions so;
  so.patch = std::max(spec.effective_patch(), NetworkSpec::tiny_proposed().effective_patch());
  const auto samples = timer.run("sampling", [&] { return sample_patches(data, a.samples, schedule.seed, so); });
  const TrainResult r = timer.run(finetune ? "finetune" : "train", [&] {
    return finetune ? finetune_head(*pretrained, spec, data, samples, schedule, init)
                    : train(spec, data, samples, schedule);
  });
  for (double l : r.epoch_loss) {
    if (!std::isfinite(l)) fail(kNonFinite, "training loss is not finite");
  }
  out.write("weights.w4ps", [&](const fs::path& p) { save_weights(r.weights, p); });
  out.text("loss.csv", loss_trace_csv(r.trace));
  std::string epochs = "epoch,lr,mean_loss\n";
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e + 1, r.epoch_lr[e], r.epoch_loss[e]);
    epochs += buf;
  }
  out.text("epochs.csv", epochs);
  out.text("schedule.cfg", schedule.to_config().str());
  out.text("timing.csv", timer.csv());
  std::cout << epochs;
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  Common common;
  std::vector<std::string> disp, gt, names;
  std::string sample_weights;
  int ndisp = 0;
  double threshold = kBadPixelThreshold;
};

int cmd_eval(const EvalArgs& a) {
  apply_common(a.common);
  if (a.disp.empty() || a.disp.size() != a.gt.size()) {
    fail(kUsage, "give matching numbers of --disp and --gt files");
  }
  if (!a.names.empty() && a.names.size() != a.disp.size()) fail(kUsage, "--name count differs from --disp");
  std::vector<DisparityMap> ds, gs;
  for (std::size_t i = 0; i < a.disp.size(); ++i) {
    ds.push_back(load("disparity", a.disp[i], [](const fs::path& p) { return read_pfm(p); }));
    gs.push_back(load("ground truth", a.gt[i], [](const fs::path& p) { return read_pfm(p); }));
    if (ds.back().height() != gs.back().height() || ds.back().width() != gs.back().width()) {
      fail(kFormat, a.disp[i] + " and " + a.gt[i] + " differ in size");
    }
  }
  std::map<std::string, double> weights;
  if (!a.sample_weights.empty()) {
    weights = load("sample weights", a.sample_weights, [](const fs::path& p) { return read_sample_weights(p); });
  }
  const Output out(a.common.out);
  std::vector<MetricRow> rows;
  std::vector<double> errors, ws;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::string name = a.names.empty() ? fs::path(a.disp[i]).stem().string() : a.names[i];
    const auto it = weights.find(name);
    if (!weights.empty() && it == weights.end()) fail(kConfig, "sample weights: no entry for '" + name + "'");
    const double w = weights.empty() ? 1.0 : it->second;
    const double e = bad_pixel_error(ds[i], gs[i], a.threshold);
    rows.push_back({name, e, w});
    errors.push_back(e);
    ws.push_back(w);
    out.write("error_" + name + ".png", [&](const fs::path& p) { write_gray8(render_error(ds[i], gs[i], a.threshold), p); });
    if (a.ndisp > 0) {
      out.write("disparity_" + name + ".png", [&](const fs::path& p) { write_gray8(render_disparity(ds[i], a.ndisp), p); });
    }
  }
  const double avg = configure("sample weights", [&] { return weighted_average(errors, ws); });
  out.text("metrics.csv", metrics_csv(rows));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f\n", avg);
  out.text("average.txt", buf);
  std::cout << metrics_csv(rows) << "weighted_average," << buf;
  return kOk;
}

// ---------------------------------------------------------------- profile

struct ProfileArgs {
  Common common;
  std::string left, right, network, preset;
  std::vector<std::string> pixels;
  std::vector<std::string> costs{"census11", "census37", "net"};
  int ndisp = 0;
};

CostFunction classic_cost(const std::string& name) {
  auto window = [&](std::size_t prefix) {
    try {
      return std::stoi(name.substr(prefix));
    } catch (const std::exception&) {
      fail(kConfig, "cost '" + name + "': expected a window size suffix");
    }
  };
  if (name == "pixelwise") return make_pixelwise();
  if (name.rfind("census", 0) == 0) return make_census(window(6));
  if (name.rfind("sad", 0) == 0) return make_sad(window(3));
  fail(kConfig, "unknown cost '" + name + "' (census<N>, sad<N>, pixelwise, net)");
}

int cmd_profile(const ProfileArgs& a) {
  apply_common(a.common);
  const Tensor left = load("left image", a.left, [](const fs::path& p) { return read_image(p); });
  const Tensor right = load("right image", a.right, [](const fs::path& p) { return read_image(p); });
  if (left.shape() != right.shape()) fail(kFormat, "left and right images differ in size");
  if (a.ndisp < 1) fail(kConfig, "--ndisp must be positive");
  std::vector<std::pair<int, int>> px;
  for (const auto& s : a.pixels) {
    int y = 0, x = 0;
    char comma = 0;
    std::istringstream in(s);
    if (!(in >> y >> comma >> x) || comma != ',' || y < 0 || x < 0 || y >= left.height() || x >= left.width()) {
      fail(kConfig, "--pixel '" + s + "' is not y,x inside the image");
    }
    px.emplace_back(y, x);
  }
  if (px.empty()) fail(kUsage, "give at least one --pixel y,x");
  std::optional<CostVolume> learned;
  std::vector<CostFunction> fns;
  for (const auto& c : a.costs) fns.push_back(c == "net" ? CostFunction{} : classic_cost(c));
  std::optional<Weights> weights;
  for (const auto& c : a.costs) {
    if (c == "net" && !weights) weights = load_weights_file(a.common.weights);
  }
  const Output out(a.common.out);
  Timer timer;
  if (weights) {
    const NetworkSpec spec = resolve_spec(a.network, a.preset, &*weights, "tiny_proposed");
    const MatchNet net = configure("weights", [&] { return MatchNet(spec, *weights); });
    learned = timer.run("cost_volume", [&] {
      return net.compute_cost_volume(normalize_image(left), normalize_image(right), a.ndisp);
    });
  }
  std::string summary = "cost,y,x,local_minima,argmin\n";
  for (std::size_t k = 0; k < a.costs.size(); ++k) {
    for (const auto& [y, x] : px) {
      const CostProfile p = timer.run("profile", [&] {
        if (a.costs[k] != "net") return cost_profile(fns[k], left, right, y, x, a.ndisp);
        std::vector<float> c(static_cast<std::size_t>(a.ndisp));
        for (int d = 0; d < a.ndisp; ++d) c[static_cast<std::size_t>(d)] = (*learned)(y, x, d);
        return cost_profile(c, y, x);
      });
      const std::string name = "profile_" + a.costs[k] + "_y" + std::to_string(y) + "_x" + std::to_string(x) + ".csv";
      out.text(name, p.csv());
      const auto best = std::min_element(p.normalized.begin(), p.normalized.end()) - p.normalized.begin();
      summary += a.costs[k] + "," + std::to_string(y) + "," + std::to_string(x) + "," +
                 std::to_string(count_local_minima(p.raw)) + "," + std::to_string(best) + "\n";
    }
  }
  out.text("profiles.csv", summary);
  std::cout << summary;
  return kOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradArgs {
  Common common;
  std::string network, preset = "tiny_proposed";
  int points = 8;
  double eps = 1e-3;
  double tolerance = 1e-3;
};

int cmd_gradcheck(const GradArgs& a) {
  apply_common(a.common);
  const NetworkSpec spec = resolve_spec(a.network, a.network.empty() ? a.preset : "", nullptr, a.preset);
  Timer timer;
  const GradCheckReport r = timer.run("gradcheck", [&] { return grad_check(spec, a.common.seed, a.points, a.eps); });
  std::string text = "blob,max_relative_error\n";
  char buf[128];
  for (const auto& [name, err] : r.per_blob) {
    std::snprintf(buf, sizeof buf, "%s,%.3e\n", name.c_str(), err);
    text += buf;
  }
  std::snprintf(buf, sizeof buf, "max,%.3e\nchecked,%zu\nskipped,%zu\n", r.max_relative_error, r.checked, r.skipped);
  text += buf;
  if (!a.common.out.empty()) Output(a.common.out).text("gradcheck.csv", text);
  std::cout << text;
  if (!std::isfinite(r.max_relative_error)) return kNonFinite;
  return r.max_relative_error < a.tolerance ? kOk : kGradCheck;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  Common common;
  int height = 64, width = 96, max_disparity = 16, shift = -1;
  bool weak = true;
};

int cmd_synth(const SynthArgs& a) {
  apply_common(a.common);
  const StereoSample s = configure("synthetic", [&] {
    if (a.shift >= 0) return make_shifted_pair(a.height, a.width, a.shift, a.max_disparity + 1, a.common.seed);
    SyntheticOptions o;
    o.height = a.height;
    o.width = a.width;
    o.max_disparity = a.max_disparity;
    o.weak_regions = a.weak;
    return make_synthetic_pair(o, a.common.seed);
  });
  const Output out(a.common.out);
  out.write("im0.png", [&](const fs::path& p) { write_gray8(to_gray8(s.left), p); });
  out.write("im1.png", [&](const fs::path& p) { write_gray8(to_gray8(s.right), p); });
  out.write("disp0GT.pfm", [&](const fs::path& p) { write_pfm(*s.gt, p); });
  if (!s.nonoccluded.empty()) {
    Gray8 m(s.left.height(), s.left.width());
    for (std::size_t i = 0; i < m.pixels.size(); ++i) m.pixels[i] = s.nonoccluded[i] ? 255 : 0;
    out.write("mask0nocc.png", [&](const fs::path& p) { write_gray8(m, p); });
  }
  out.text("calib.txt", "ndisp=" + std::to_string(s.ndisp) + "\nwidth=" + std::to_string(s.left.width()) +
                            "\nheight=" + std::to_string(s.left.height()) + "\n");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo matching with per-pixel pyramid pooling"};
  app.require_subcommand(1);

  MatchArgs match;
  auto* m = app.add_subcommand("match", "disparity map for one rectified pair");
  add_common(m, match.common);
  m->add_option("--left", match.left, "left image (PNG or PGM)")->required();
  m->add_option("--right", match.right, "right image (PNG or PGM)")->required();
  m->add_option("--calib", match.calib, "Middlebury calib.txt supplying ndisp");
  m->add_option("--ndisp", match.ndisp, "number of disparities (overrides calib)");
  m->add_option("--network", match.network, "network layout config");
  m->add_option("--preset", match.preset, "network preset (tiny_baseline, tiny_proposed, ...)");
  m->add_option("--stages", match.stages, "post-processing stages: none, all or a comma list");

  TrainArgs train_args, finetune_args;
  for (auto [name, args] : {std::pair{"train", &train_args}, std::pair{"finetune", &finetune_args}}) {
    auto* t = app.add_subcommand(name, std::string(name) == "train"
                                           ? "train a network end to end on patch pairs"
                                           : "fine-tune the head of a network on a pretrained trunk");
    add_common(t, args->common);
    t->add_option("--data", args->data, "directory of Middlebury-layout sample directories");
    t->add_option("--synthetic", args->synthetic, "train on N synthetic scenes instead");
    t->add_flag("--weak,!--no-weak", args->weak, "synthetic scenes with weakly textured regions");
    t->add_flag("--half", args->half, "load Middlebury data at half resolution");
    t->add_option("--samples", args->samples, "number of patch pairs");
    t->add_option("--network", args->network, "network layout config");
    t->add_option("--preset", args->preset, "network preset");
    if (std::string(name) == "finetune") t->add_option("--init", args->init, "head start: warm or random");
  }

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "bad-pixel errors and their weighted average");
  add_common(e, eval.common);
  e->add_option("--disp", eval.disp, "disparity PFM (repeatable)")->required();
  e->add_option("--gt", eval.gt, "ground-truth PFM, paired with --disp")->required();
  e->add_option("--name", eval.names, "sample names (default: file stem)");
  e->add_option("--sample-weights", eval.sample_weights, "`name weight` lines");
  e->add_option("--ndisp", eval.ndisp, "also render disparity maps for this range");
  e->add_option("--threshold", eval.threshold, "bad-pixel threshold");

  ProfileArgs profile;
  auto* p = app.add_subcommand("profile", "normalized matching-cost profiles over disparity");
  add_common(p, profile.common);
  p->add_option("--left", profile.left, "left image")->required();
  p->add_option("--right", profile.right, "right image")->required();
  p->add_option("--pixel", profile.pixels, "y,x (repeatable)")->required();
  p->add_option("--cost", profile.costs, "census<N>, sad<N>, pixelwise or net (repeatable)");
  p->add_option("--ndisp", profile.ndisp, "number of disparities")->required();
  p->add_option("--network", profile.network, "network layout config");
  p->add_option("--preset", profile.preset, "network preset");

  GradArgs grad;
  auto* g = app.add_subcommand("gradcheck", "finite-difference check of the network gradients");
  add_common(g, grad.common);
  g->add_option("--network", grad.network, "network layout config");
  g->add_option("--preset", grad.preset, "network preset");
  g->add_option("--points", grad.points, "entries checked per blob (0: all)");
  g->add_option("--eps", grad.eps, "central-difference step");
  g->add_option("--tolerance", grad.tolerance, "maximum relative error");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "write a synthetic pair in Middlebury layout");
  add_common(s, synth.common);
  s->add_option("--height", synth.height);
  s->add_option("--width", synth.width);
  s->add_option("--max-disparity", synth.max_disparity);
  s->add_option("--shift", synth.shift, "uniform shift instead of a layered scene");
  s->add_flag("--weak,!--no-weak", synth.weak, "include weakly textured regions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*m) return cmd_match(match);
    if (app.got_subcommand("train")) return run_training(train_args, false);
    if (app.got_subcommand("finetune")) return run_training(finetune_args, true);
    if (*e) return cmd_eval(eval);
    if (*p) return cmd_profile(profile);
    if (*g) return cmd_gradcheck(grad);
    if (*s) return cmd_synth(synth);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kStage;
  }
  return kUsage;
}
