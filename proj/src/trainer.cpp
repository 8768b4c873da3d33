#include "stereo4p/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "stereo4p/error.hpp"
#include "stereo4p/parallel.hpp"
#include "stereo4p/random.hpp"

namespace stereo4p {
namespace {

struct LossGrad {
  double loss = 0.0;
  double dlogit = 0.0;
};

LossGrad loss_and_grad(LossKind kind, double z, bool positive, double margin) {
  const double y = positive ? 1.0 : 0.0;
  if (kind == LossKind::bce) {
    const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    return {softplus - y * z, 1.0 / (1.0 + std::exp(-z)) - y};
  }
  const double s = positive ? 1.0 : -1.0;
  const double m = margin - s * z;
  return m > 0.0 ? LossGrad{m, -s} : LossGrad{0.0, 0.0};
}

std::vector<Tensor> normalized(std::span<const StereoSample> dataset, bool left) {
  std::vector<Tensor> out;
  out.reserve(dataset.size());
  for (const auto& s : dataset) out.push_back(normalize_image(left ? s.left : s.right));
  return out;
}

// Pointers to the trainable blobs, in PatchGraph parameter order.
std::vector<std::span<float>> blob_views(std::vector<ConvLayer>& layers) {
  std::vector<std::span<float>> v;
  for (auto& l : layers) {
    v.push_back(l.kernel.values());
    v.push_back(l.bias);
  }
  return v;
}

void check_samples(std::span<const StereoSample> dataset, std::span<const PatchSample> samples) {
  if (samples.empty()) throw ArgumentError("training needs at least one sample");
  for (const auto& s : samples) {
    if (s.image < 0 || static_cast<std::size_t>(s.image) >= dataset.size()) {
      throw ArgumentError("sample refers to image " + std::to_string(s.image) + " outside the dataset");
    }
  }
}

// Shared optimizer loop. `per_sample` records one sample on a tape and
// returns the logit node and parameter nodes.
// `sync` runs before training and after every update so that `record`
// sees the current parameters.
template <class Record, class Sync>
void run_sgd(std::vector<ConvLayer>& trainable, std::span<const PatchSample> samples,
             const TrainSchedule& schedule, TrainResult& result, Record&& record, Sync&& sync) {
  schedule.validate();
  sync();
  auto blobs = blob_views(trainable);
  std::vector<std::vector<double>> velocity;
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (auto b : blobs) {
    velocity.emplace_back(b.size(), 0.0);
    offsets.push_back(total);
    total += b.size();
  }
  Rng rng(schedule.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(schedule.batch_size);
  int step = 0;
  for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
    const double lr = schedule.lr_at(epoch);
    rng.shuffle(order.begin(), order.end());
    double epoch_sum = 0.0;
    std::size_t epoch_n = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t n = std::min(batch, order.size() - start);
      std::vector<std::vector<float>> grads(n);
      std::vector<double> losses(n);
      parallel_for(0, static_cast<std::ptrdiff_t>(n), [&](std::ptrdiff_t i) {
        const PatchSample& s = samples[order[start + static_cast<std::size_t>(i)]];
        Tape tape;
        const PatchGraph g = record(tape, s);
        const auto lg = loss_and_grad(schedule.loss, tape.value(g.logit)(0, 0, 0), s.positive,
                                      schedule.hinge_margin);
        losses[static_cast<std::size_t>(i)] = lg.loss;
        tape.backward(g.logit, Tensor(1, 1, 1, static_cast<float>(lg.dlogit)));
        auto& out = grads[static_cast<std::size_t>(i)];
        out.reserve(total);
        for (NodeId p : g.parameters) {
          const Tensor gp = tape.grad(p);
          out.insert(out.end(), gp.values().begin(), gp.values().end());
        }
      });
      double batch_loss = 0.0;
      for (double l : losses) batch_loss += l;
      batch_loss /= static_cast<double>(n);
      ++step;
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step) + ": loss is " + std::to_string(batch_loss) +
                              " (lr " + std::to_string(lr) + ")");
      }
      result.trace.push_back({epoch, step, lr, batch_loss});
      epoch_sum += batch_loss * static_cast<double>(n);
      epoch_n += n;

      for (std::size_t b = 0; b < blobs.size(); ++b) {
        auto w = blobs[b];
        auto& v = velocity[b];
        for (std::size_t j = 0; j < w.size(); ++j) {
          double g = 0.0;
          for (std::size_t i = 0; i < n; ++i) g += grads[i][offsets[b] + j];
          g /= static_cast<double>(n);
          v[j] = step == 1 ? g : schedule.momentum * v[j] + (1.0 - schedule.dampening) * g;
          w[j] = static_cast<float>(w[j] - lr * v[j]);
        }
      }
      sync();
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_n));
    result.epoch_lr.push_back(lr);
  }
}

// Per-stream head inputs of a whole image, indexed by image pixel.
Tensor stream_map(const MatchNet& net, const Tensor& normalized_image) {
  const NetworkSpec& spec = net.spec();
  const Tensor f = net.extract_features(pad(normalized_image, spec.trunk_radius(), 0.0f));
  return spec.fourp_sizes ? fourp(f, *spec.fourp_sizes, spec.pooling_mode) : f;
}

Tensor vector_at(const Tensor& map, int y, int x) {
  Tensor v(1, 1, map.channels());
  std::copy_n(map.pixel(y, x), map.channels(), v.data());
  return v;
}

}  // namespace

void SamplingOptions::validate() const {
  if (jitter < 0 || neg_min <= jitter || neg_max < neg_min) {
    throw ArgumentError("sampling needs 0 <= jitter < neg_min <= neg_max");
  }
  if (patch < 1 || patch % 2 == 0) throw ArgumentError("sampling patch size must be odd");
}

std::vector<PatchSample> sample_patches(std::span<const StereoSample> dataset, int count,
                                        std::uint64_t seed, const SamplingOptions& o) {
  o.validate();
  if (count < 1) throw ArgumentError("sample count must be positive");
  const int r = o.patch / 2;
  const int min_h = o.patch;
  const int min_w = o.patch + o.neg_max + 1;
  auto too_small = [&] {
    return ArgumentError("dataset too small: sampling needs images of at least " +
                         std::to_string(min_w) + "x" + std::to_string(min_h) +
                         " pixels (width x height) with ground truth");
  };
  // Candidate centres per image: valid, non-occluded ground truth with
  // the left patch inside the image.
  std::vector<std::vector<std::pair<int, int>>> cand(dataset.size());
  std::size_t usable = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset[i];
    if (!s.gt || s.left.height() < min_h || s.left.width() < min_w) continue;
    for (int y = r; y < s.left.height() - r; ++y) {
      for (int x = r; x < s.left.width() - r; ++x) {
        const float d = (*s.gt)(y, x);
        const std::size_t k = static_cast<std::size_t>(y) * s.left.width() + x;
        if (!DisparityMap::is_valid(d) || (!s.nonoccluded.empty() && !s.nonoccluded[k])) continue;
        const int xr = x - static_cast<int>(std::lround(d));
        if (xr - o.neg_max < r || xr + o.neg_max >= s.left.width() - r) continue;
        cand[i].emplace_back(y, x);
      }
    }
    usable += !cand[i].empty();
  }
  if (usable == 0) throw too_small();
  std::vector<std::size_t> images;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (!cand[i].empty()) images.push_back(i);
  }
  Rng rng(seed);
  const int total = count + (count % 2);
  std::vector<PatchSample> out;
  out.reserve(static_cast<std::size_t>(total));
  for (int k = 0; k < total; ++k) {
    const std::size_t img = images[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(images.size()) - 1))];
    const auto& c = cand[img];
    const auto [y, x] = c[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(c.size()) - 1))];
    PatchSample s;
    s.image = static_cast<int>(img);
    s.y = y;
    s.x = x;
    s.disparity = static_cast<int>(std::lround((*dataset[img].gt)(y, x)));
    s.positive = k % 2 == 0;
    if (s.positive) {
      s.offset = rng.uniform_int(-o.jitter, o.jitter);
    } else {
      const int mag = rng.uniform_int(o.neg_min, o.neg_max);
      s.offset = rng.uniform_int(0, 1) ? mag : -mag;
    }
    out.push_back(s);
  }
  return out;
}

Tensor extract_patch(const Tensor& image, int y, int x, int size) {
  return crop(image, y - size / 2, x - size / 2, size, size);
}

void TrainSchedule::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr_initial >= 0.0) || !(lr_final >= 0.0) || lr_final > lr_initial) {
    throw ConfigError("learning rates must satisfy 0 <= lr_final <= lr_initial");
  }
  if (lr_drop_epoch < 1) throw ConfigError("lr_drop_epoch must be >= 1");
  if (!(momentum >= 0.0) || !(momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(dampening >= 0.0) || !(dampening <= 1.0)) throw ConfigError("dampening must be in [0, 1]");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(hinge_margin > 0.0)) throw ConfigError("hinge_margin must be positive");
}

TrainSchedule TrainSchedule::from_config(const KeyValueConfig& c) {
  TrainSchedule s;
  s.epochs = c.get_int("epochs", s.epochs);
  s.lr_initial = c.get_double("lr_initial", s.lr_initial);
  s.lr_final = c.get_double("lr_final", s.lr_final);
  s.lr_drop_epoch = c.get_int("lr_drop_epoch", s.lr_drop_epoch);
  s.momentum = c.get_double("momentum", s.momentum);
  s.dampening = c.get_double("dampening", s.dampening);
  s.batch_size = c.get_int("batch_size", s.batch_size);
  s.seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<int>(s.seed)));
  const std::string loss = c.get_string("loss", "bce");
  if (loss == "bce") {
    s.loss = LossKind::bce;
  } else if (loss == "hinge") {
    s.loss = LossKind::hinge;
  } else {
    throw ConfigError(c.origin() + ": loss must be bce or hinge, got '" + loss + "'");
  }
  s.hinge_margin = c.get_double("hinge_margin", s.hinge_margin);
  s.validate();
  return s;
}

KeyValueConfig TrainSchedule::to_config() const {
  KeyValueConfig c;
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  c.set("epochs", std::to_string(epochs));
  c.set("lr_initial", num(lr_initial));
  c.set("lr_final", num(lr_final));
  c.set("lr_drop_epoch", std::to_string(lr_drop_epoch));
  c.set("momentum", num(momentum));
  c.set("dampening", num(dampening));
  c.set("batch_size", std::to_string(batch_size));
  c.set("seed", std::to_string(seed));
  c.set("loss", loss == LossKind::bce ? "bce" : "hinge");
  c.set("hinge_margin", num(hinge_margin));
  return c;
}

std::string loss_trace_csv(std::span<const LossRecord> trace) {
  std::string out = "epoch,step,lr,loss\n";
  char buf[96];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g\n", r.epoch, r.step, r.lr, r.loss);
    out += buf;
  }
  return out;
}

TrainResult train(const NetworkSpec& spec, std::span<const StereoSample> dataset,
                  std::span<const PatchSample> samples, const TrainSchedule& schedule,
                  const Weights* init) {
  spec.validate();
  check_samples(dataset, samples);
  TrainResult result;
  result.weights = init ? *init : Weights::random(spec, schedule.seed);
  result.weights.check_matches(spec);
  const auto left = normalized(dataset, true);
  const auto right = normalized(dataset, false);
  const int p = spec.effective_patch();

  // Trunk and head are trained together, so both live in one list.
  std::vector<ConvLayer> params = result.weights.trunk;
  params.insert(params.end(), result.weights.head.begin(), result.weights.head.end());
  const std::size_t ntrunk = result.weights.trunk.size();
  BasicWeights<float> view;
  auto refresh = [&] {
    view.trunk.assign(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(ntrunk));
    view.head.assign(params.begin() + static_cast<std::ptrdiff_t>(ntrunk), params.end());
  };
  run_sgd(
      params, samples, schedule, result,
      [&](Tape& tape, const PatchSample& s) {
        return record_patch_pair(tape, spec, view, extract_patch(left[s.image], s.y, s.x, p),
                                 extract_patch(right[s.image], s.y, s.right_x(), p));
      },
      refresh);
  result.weights.trunk.assign(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(ntrunk));
  result.weights.head.assign(params.begin() + static_cast<std::ptrdiff_t>(ntrunk), params.end());
  result.weights.metadata["provenance"] =
      "train epochs=" + std::to_string(schedule.epochs) + " samples=" + std::to_string(samples.size()) +
      " seed=" + std::to_string(schedule.seed);
  result.weights.metadata["normalization"] = "per-image zero mean, unit variance";
  return result;
}

Weights initial_finetune_weights(const Weights& pretrained, const NetworkSpec& spec, HeadInit init,
                                 std::uint64_t seed) {
  spec.validate();
  const auto trunk = spec.trunk_geometries();
  if (pretrained.trunk.size() != trunk.size()) {
    throw SpecMismatchError("pretrained trunk has " + std::to_string(pretrained.trunk.size()) +
                            " layers, spec needs " + std::to_string(trunk.size()));
  }
  for (std::size_t i = 0; i < trunk.size(); ++i) {
    if (!(pretrained.trunk[i].geometry == trunk[i])) {
      throw SpecMismatchError("pretrained trunk layer " + std::to_string(i) + " has a different shape");
    }
  }
  Weights w = Weights::random(spec, seed);
  w.trunk = pretrained.trunk;
  if (init == HeadInit::random) return w;

  const auto head = spec.head_geometries();
  const int c = spec.trunk_channels;
  if (pretrained.head.size() != head.size() || pretrained.head.front().geometry.in_channels != 2 * c) {
    throw SpecMismatchError("warm start needs a pretrained head of the same depth on " +
                            std::to_string(2 * c) + " input channels");
  }
  for (std::size_t j = 1; j < head.size(); ++j) {
    if (!(pretrained.head[j].geometry == head[j])) {
      throw SpecMismatchError("pretrained head layer " + std::to_string(j) + " has a different shape");
    }
    w.head[j] = pretrained.head[j];
  }
  const int levels = spec.pyramid_levels();
  int finest = levels - 1;
  if (spec.fourp_sizes) {
    const auto sizes = spec.fourp_sizes->sizes();
    const auto it = std::find(sizes.begin(), sizes.end(), 1);
    if (it == sizes.end()) throw SpecMismatchError("warm start needs pooling size 1 in the pyramid");
    finest = static_cast<int>(it - sizes.begin());
  }
  const ConvLayer& src = pretrained.head.front();
  ConvLayer& dst = w.head.front();
  const int cout = dst.geometry.out_channels;
  if (src.geometry.out_channels != cout) throw SpecMismatchError("head width differs from pretrained");
  std::fill(dst.kernel.values().begin(), dst.kernel.values().end(), 0.0f);
  const bool scale_major = spec.fourp_sizes && spec.placement == FourpPlacement::after_concat;
  for (int stream = 0; stream < 2; ++stream) {
    for (int ch = 0; ch < c; ++ch) {
      const int from = stream * c + ch;
      const int to = scale_major ? 2 * finest * c + stream * c + ch
                                 : stream * levels * c + finest * c + ch;
      for (int co = 0; co < cout; ++co) dst.kernel.data()[to * cout + co] = src.kernel.data()[from * cout + co];
    }
  }
  dst.bias = src.bias;
  return w;
}

TrainResult finetune_head(const Weights& pretrained, const NetworkSpec& spec,
                          std::span<const StereoSample> dataset,
                          std::span<const PatchSample> samples, const TrainSchedule& schedule,
                          HeadInit init) {
  check_samples(dataset, samples);
  TrainResult result;
  result.weights = initial_finetune_weights(pretrained, spec, init, schedule.seed);
  const MatchNet net(spec, result.weights);
  std::vector<Tensor> ls, rs;
  for (const auto& s : dataset) {
    ls.push_back(stream_map(net, normalize_image(s.left)));
    rs.push_back(stream_map(net, normalize_image(s.right)));
  }
  std::vector<ConvLayer> head = result.weights.head;
  BasicWeights<float> view;
  run_sgd(
      head, samples, schedule, result,
      [&](Tape& tape, const PatchSample& s) {
        return record_head(tape, spec, view, vector_at(ls[s.image], s.y, s.x),
                           vector_at(rs[s.image], s.y, s.right_x()));
      },
      [&] { view.head = head; });
  result.weights.head = std::move(head);
  result.weights.metadata["provenance"] =
      "finetune_head epochs=" + std::to_string(schedule.epochs) + " samples=" +
      std::to_string(samples.size()) + " seed=" + std::to_string(schedule.seed) +
      " init=" + (init == HeadInit::warm_start ? "warm_start" : "random") + " from=[" +
      (pretrained.metadata.count("provenance") ? pretrained.metadata.at("provenance") : "") + "]";
  result.weights.metadata["normalization"] = "per-image zero mean, unit variance";
  return result;
}

std::vector<float> score_samples(const MatchNet& net, std::span<const StereoSample> dataset,
                                 std::span<const PatchSample> samples) {
  check_samples(dataset, samples);
  std::vector<Tensor> ls(dataset.size()), rs(dataset.size());
  std::vector<char> used(dataset.size(), 0);
  for (const auto& s : samples) used[static_cast<std::size_t>(s.image)] = 1;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (!used[i]) continue;
    ls[i] = stream_map(net, normalize_image(dataset[i].left));
    rs[i] = stream_map(net, normalize_image(dataset[i].right));
  }
  const BasicWeights<float> view = net.weights().cast<float>();
  std::vector<float> out(samples.size());
  parallel_for(0, static_cast<std::ptrdiff_t>(samples.size()), [&](std::ptrdiff_t i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    Tape tape;
    const PatchGraph g = record_head(tape, net.spec(), view, vector_at(ls[s.image], s.y, s.x),
                                     vector_at(rs[s.image], s.y, s.right_x()));
    const double z = tape.value(g.logit)(0, 0, 0);
    out[static_cast<std::size_t>(i)] = static_cast<float>(1.0 / (1.0 + std::exp(-z)));
  });
  return out;
}

double auc(std::span<const float> scores, std::span<const PatchSample> samples) {
  if (scores.size() != samples.size()) throw ArgumentError("auc: scores and samples differ in length");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with average ranks for ties.
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (samples[idx[k]].positive) {
        rank_sum += rank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = samples.size() - pos;
  if (pos == 0 || neg == 0) throw ArgumentError("auc needs both positive and negative samples");
  const double u = rank_sum - static_cast<double>(pos) * (pos + 1) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

GradCheckReport grad_check(const NetworkSpec& spec, std::uint64_t seed, int points_per_blob,
                           double eps) {
  spec.validate();
  Rng rng(seed);
  BasicWeights<double> w = Weights::random(spec, seed).cast<double>();
  // Nonzero biases so every bias gradient path is exercised.
  for (auto* part : {&w.trunk, &w.head}) {
    for (auto& l : *part) {
      for (auto& b : l.bias) b = rng.uniform(-0.1, 0.1);
    }
  }
  const int p = spec.effective_patch();
  TensorD left(p, p, 1), right(p, p, 1);
  for (auto& v : left.values()) v = rng.normal();
  for (auto& v : right.values()) v = rng.normal();
  const double label = 1.0;

  auto evaluate = [&](TapeD& tape) {
    const PatchGraph g = record_patch_pair(tape, spec, w, left, right);
    const NodeId loss = tape.bce_with_logits(g.logit, label);
    return std::pair{g, loss};
  };
  TapeD base;
  const auto [graph, loss_node] = evaluate(base);
  base.backward(loss_node);
  const std::uint64_t signature = base.kink_signature();

  std::vector<std::pair<std::string, std::span<double>>> blobs;
  for (std::size_t i = 0; i < w.trunk.size(); ++i) {
    blobs.emplace_back("trunk" + std::to_string(i) + ".kernel", w.trunk[i].kernel.values());
    blobs.emplace_back("trunk" + std::to_string(i) + ".bias", w.trunk[i].bias);
  }
  for (std::size_t j = 0; j < w.head.size(); ++j) {
    blobs.emplace_back("head" + std::to_string(j) + ".kernel", w.head[j].kernel.values());
    blobs.emplace_back("head" + std::to_string(j) + ".bias", w.head[j].bias);
  }

  GradCheckReport report;
  for (std::size_t b = 0; b < blobs.size(); ++b) {
    auto& [name, values] = blobs[b];
    const TensorD analytic = base.grad(graph.parameters[b]);
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (points_per_blob > 0 && idx.size() > static_cast<std::size_t>(points_per_blob)) {
      rng.shuffle(idx.begin(), idx.end());
      idx.resize(static_cast<std::size_t>(points_per_blob));
    }
    double worst = 0.0;
    for (std::size_t k : idx) {
      const double saved = values[k];
      auto at = [&](double v) {
        values[k] = v;
        TapeD t;
        const auto [g, l] = evaluate(t);
        return std::pair{t.value(l)(0, 0, 0), t.kink_signature()};
      };
      const auto [fp, sp] = at(saved + eps);
      const auto [fm, sm] = at(saved - eps);
      values[k] = saved;
      if (sp != signature || sm != signature) {
        ++report.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic.data()[k];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, rel);
      ++report.checked;
    }
    report.per_blob.emplace_back(name, worst);
    report.max_relative_error = std::max(report.max_relative_error, worst);
  }
  return report;
}

}  // namespace stereo4p
