#include "stereo4p/matchnet.hpp"

#include <cmath>
#include <numeric>

#include "stereo4p/parallel.hpp"
#include "stereo4p/random.hpp"
#include "stereo4p/simd.hpp"

namespace stereo4p {

// ------------------------------------------------------------ NetworkSpec

NetworkSpec NetworkSpec::tiny_baseline() { return NetworkSpec{}; }

NetworkSpec NetworkSpec::tiny_proposed() {
  NetworkSpec s;
  s.fourp_sizes = PoolSizeVector::proposed();
  return s;
}

NetworkSpec NetworkSpec::paper_baseline() {
  NetworkSpec s;
  s.trunk_channels = 112;
  s.head_channels = 384;
  return s;
}

NetworkSpec NetworkSpec::paper_proposed() {
  NetworkSpec s = paper_baseline();
  s.fourp_sizes = PoolSizeVector::proposed();
  return s;
}

void NetworkSpec::validate() const {
  if (trunk_layers < 1) throw ArgumentError("trunk_layers must be at least 1");
  if (trunk_kernel < 1 || trunk_kernel % 2 == 0) {
    throw ArgumentError("trunk_kernel must be odd and positive");
  }
  if (trunk_channels < 1 || head_channels < 1) throw ArgumentError("channel counts must be positive");
  if (head_layers < 1) throw ArgumentError("head_layers must be at least 1");
}

std::vector<ConvGeometry> NetworkSpec::trunk_geometries() const {
  std::vector<ConvGeometry> out;
  for (int i = 0; i < trunk_layers; ++i) {
    out.push_back({trunk_kernel, trunk_kernel, i == 0 ? 1 : trunk_channels, trunk_channels,
                   Padding::valid});
  }
  return out;
}

std::vector<ConvGeometry> NetworkSpec::head_geometries() const {
  std::vector<ConvGeometry> out;
  for (int j = 0; j < head_layers; ++j) {
    out.push_back({1, 1, j == 0 ? head_input_channels() : head_channels,
                   j == head_layers - 1 ? 1 : head_channels, Padding::valid});
  }
  return out;
}

std::string NetworkSpec::canonical() const {
  std::string s = "trunk=" + std::to_string(trunk_layers) + "x" + std::to_string(trunk_kernel) +
                  "x" + std::to_string(trunk_channels) +
                  ";final_relu=" + (trunk_final_relu ? "1" : "0") +
                  ";head=" + std::to_string(head_layers) + "x" + std::to_string(head_channels) +
                  ";fourp=";
  if (!fourp_sizes) return s + "none";
  s += fourp_sizes->str();
  s += pooling_mode == PoolMode::max ? ";mode=max" : ";mode=mean";
  s += placement == FourpPlacement::before_concat ? ";placement=before_concat"
                                                  : ";placement=after_concat";
  return s;
}

std::uint64_t NetworkSpec::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

NetworkSpec NetworkSpec::from_config(const KeyValueConfig& c) {
  NetworkSpec s;
  s.trunk_layers = c.get_int("trunk_layers", s.trunk_layers);
  s.trunk_kernel = c.get_int("trunk_kernel", s.trunk_kernel);
  s.trunk_channels = c.get_int("trunk_channels", s.trunk_channels);
  s.trunk_final_relu = c.get_bool("trunk_final_relu", s.trunk_final_relu);
  s.head_layers = c.get_int("head_layers", s.head_layers);
  s.head_channels = c.get_int("head_channels", s.head_channels);
  const std::string sizes = c.get_string("fourp_sizes", "none");
  if (sizes != "none" && !sizes.empty()) {
    try {
      s.fourp_sizes = PoolSizeVector::parse(sizes);
    } catch (const ArgumentError& e) {
      throw ConfigError(c.origin() + ": fourp_sizes: " + e.what());
    }
  }
  const std::string mode = c.get_string("pooling_mode", "max");
  if (mode == "max") {
    s.pooling_mode = PoolMode::max;
  } else if (mode == "mean") {
    s.pooling_mode = PoolMode::mean;
  } else {
    throw ConfigError(c.origin() + ": pooling_mode must be max or mean, got '" + mode + "'");
  }
  const std::string place = c.get_string("fourp_placement", "before_concat");
  if (place == "before_concat") {
    s.placement = FourpPlacement::before_concat;
  } else if (place == "after_concat") {
    s.placement = FourpPlacement::after_concat;
  } else {
    throw ConfigError(c.origin() + ": fourp_placement must be before_concat or after_concat");
  }
  try {
    s.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(c.origin() + ": " + e.what());
  }
  return s;
}

KeyValueConfig NetworkSpec::to_config() const {
  KeyValueConfig c;
  c.set("trunk_layers", std::to_string(trunk_layers));
  c.set("trunk_kernel", std::to_string(trunk_kernel));
  c.set("trunk_channels", std::to_string(trunk_channels));
  c.set("trunk_final_relu", trunk_final_relu ? "true" : "false");
  c.set("head_layers", std::to_string(head_layers));
  c.set("head_channels", std::to_string(head_channels));
  c.set("fourp_sizes", fourp_sizes ? fourp_sizes->str() : "none");
  c.set("pooling_mode", pooling_mode == PoolMode::max ? "max" : "mean");
  c.set("fourp_placement",
        placement == FourpPlacement::before_concat ? "before_concat" : "after_concat");
  return c;
}

// ---------------------------------------------------------------- Weights

Weights Weights::random(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  Weights w;
  auto make = [&](const ConvGeometry& g) {
    ConvLayer layer = ConvLayer::zeros(g);
    const double bound = std::sqrt(6.0 / (g.kernel_h * g.kernel_w * g.in_channels));
    for (float& v : layer.kernel.values()) v = static_cast<float>(rng.uniform(-bound, bound));
    return layer;
  };
  for (const auto& g : spec.trunk_geometries()) w.trunk.push_back(make(g));
  for (const auto& g : spec.head_geometries()) w.head.push_back(make(g));
  w.spec_hash = spec.hash();
  w.metadata["provenance"] = "random-init seed=" + std::to_string(seed);
  w.metadata["network"] = spec.to_config().str();
  return w;
}

void Weights::check_matches(const NetworkSpec& spec) const {
  if (spec_hash != spec.hash()) {
    throw SpecMismatchError("weights were produced for network hash " + std::to_string(spec_hash) +
                            ", expected " + std::to_string(spec.hash()) + " (" +
                            spec.canonical() + ")");
  }
  auto check = [](const std::vector<ConvLayer>& layers, const std::vector<ConvGeometry>& geoms,
                  const char* part) {
    if (layers.size() != geoms.size()) {
      throw SpecMismatchError(std::string(part) + ": " + std::to_string(layers.size()) +
                              " layers, spec has " + std::to_string(geoms.size()));
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (!(l.geometry == geoms[i]) || l.kernel.size() != geoms[i].kernel_size() ||
          l.bias.size() != static_cast<std::size_t>(geoms[i].out_channels)) {
        throw SpecMismatchError(std::string(part) + " layer " + std::to_string(i) +
                                " does not match the spec");
      }
    }
  };
  check(trunk, spec.trunk_geometries(), "trunk");
  check(head, spec.head_geometries(), "head");
}

std::size_t Weights::parameter_count() const {
  std::size_t n = 0;
  for (const auto* part : {&trunk, &head}) {
    for (const auto& l : *part) n += l.kernel.size() + l.bias.size();
  }
  return n;
}

Tensor normalize_image(const Tensor& image) {
  if (image.empty()) return image;
  double sum = 0.0;
  for (float v : image.values()) sum += v;
  const double mean = sum / static_cast<double>(image.size());
  double sq = 0.0;
  for (float v : image.values()) sq += (v - mean) * (v - mean);
  double sd = std::sqrt(sq / static_cast<double>(image.size()));
  if (!(sd > 0.0)) sd = 1.0;
  Tensor out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) {
    out.data()[i] = static_cast<float>((image.data()[i] - mean) / sd);
  }
  return out;
}

// ------------------------------------------------------------ tape graphs

namespace {

template <class T>
BasicTensor<T> bias_tensor(const std::vector<T>& bias) {
  return BasicTensor<T>(1, 1, static_cast<int>(bias.size()), bias);
}

template <class T>
NodeId record_head_layers(BasicTape<T>& tape, const BasicWeights<T>& weights, NodeId x,
                          std::vector<NodeId>& params) {
  for (std::size_t j = 0; j < weights.head.size(); ++j) {
    const auto& l = weights.head[j];
    const NodeId k = tape.leaf(l.kernel);
    const NodeId b = tape.leaf(bias_tensor(l.bias));
    params.push_back(k);
    params.push_back(b);
    x = tape.conv2d(x, k, b, l.geometry);
    if (j + 1 < weights.head.size()) x = tape.relu(x);
  }
  return x;
}

template <class T>
NodeId centre(BasicTape<T>& tape, NodeId x) {
  const auto& v = tape.value(x);
  if (v.height() == 1 && v.width() == 1) return x;
  return tape.crop(x, v.height() / 2, v.width() / 2, 1, 1);
}

}  // namespace

template <class T>
PatchGraph record_patch_pair(BasicTape<T>& tape, const NetworkSpec& spec,
                             const BasicWeights<T>& weights, const BasicTensor<T>& left_patch,
                             const BasicTensor<T>& right_patch) {
  const int p = spec.effective_patch();
  for (const auto* patch : {&left_patch, &right_patch}) {
    if (patch->height() != p || patch->width() != p || patch->channels() != 1) {
      throw ShapeError("patch " + patch->shape().str() + " does not match the network's " +
                       std::to_string(p) + "x" + std::to_string(p) + "x1 window");
    }
  }
  PatchGraph g;
  // Shared trunk parameters: one leaf per blob, used by both streams.
  std::vector<NodeId> trunk_params;
  for (const auto& l : weights.trunk) {
    trunk_params.push_back(tape.leaf(l.kernel));
    trunk_params.push_back(tape.leaf(bias_tensor(l.bias)));
  }
  g.parameters = trunk_params;

  auto trunk = [&](NodeId x) {
    for (std::size_t i = 0; i < weights.trunk.size(); ++i) {
      x = tape.conv2d(x, trunk_params[2 * i], trunk_params[2 * i + 1], weights.trunk[i].geometry);
      if (i + 1 < weights.trunk.size() || spec.trunk_final_relu) x = tape.relu(x);
    }
    return x;
  };

  g.left_input = tape.leaf(left_patch);
  g.right_input = tape.leaf(right_patch);
  const NodeId fl = trunk(g.left_input);
  const NodeId fr = trunk(g.right_input);

  NodeId fused = 0;
  if (spec.fourp_sizes && spec.placement == FourpPlacement::after_concat) {
    const NodeId both[] = {fl, fr};
    const NodeId joint = tape.concat(both);
    fused = centre(tape, record_pyramid_pool(tape, joint, spec.fourp_sizes->sizes(),
                                             spec.pooling_mode));
  } else {
    NodeId sl = fl;
    NodeId sr = fr;
    if (spec.fourp_sizes) {
      sl = record_pyramid_pool(tape, fl, spec.fourp_sizes->sizes(), spec.pooling_mode);
      sr = record_pyramid_pool(tape, fr, spec.fourp_sizes->sizes(), spec.pooling_mode);
    }
    const NodeId both[] = {centre(tape, sl), centre(tape, sr)};
    fused = tape.concat(both);
  }
  g.logit = record_head_layers(tape, weights, fused, g.parameters);
  return g;
}

template <class T>
PatchGraph record_head(BasicTape<T>& tape, const NetworkSpec& spec,
                       const BasicWeights<T>& weights, const BasicTensor<T>& left_stream,
                       const BasicTensor<T>& right_stream) {
  const int k = spec.stream_channels();
  for (const auto* s : {&left_stream, &right_stream}) {
    if (s->height() != 1 || s->width() != 1 || s->channels() != k) {
      throw ShapeError("head stream input " + s->shape().str() + ", expected 1x1x" +
                       std::to_string(k));
    }
  }
  PatchGraph g;
  g.left_input = tape.leaf(left_stream);
  g.right_input = tape.leaf(right_stream);
  NodeId fused = 0;
  if (spec.fourp_sizes && spec.placement == FourpPlacement::after_concat) {
    // Scale-major order of a pyramid over the joint map: for every scale,
    // the left channels then the right channels.
    const int c = spec.trunk_channels;
    BasicTensor<T> joint(1, 1, 2 * k);
    for (int level = 0; level < spec.pyramid_levels(); ++level) {
      std::copy_n(left_stream.data() + level * c, c, joint.data() + 2 * level * c);
      std::copy_n(right_stream.data() + level * c, c, joint.data() + 2 * level * c + c);
    }
    fused = tape.leaf(std::move(joint));
  } else {
    const NodeId both[] = {g.left_input, g.right_input};
    fused = tape.concat(both);
  }
  g.logit = record_head_layers(tape, weights, fused, g.parameters);
  return g;
}

template PatchGraph record_patch_pair<float>(BasicTape<float>&, const NetworkSpec&,
                                             const BasicWeights<float>&,
                                             const BasicTensor<float>&,
                                             const BasicTensor<float>&);
template PatchGraph record_patch_pair<double>(BasicTape<double>&, const NetworkSpec&,
                                              const BasicWeights<double>&,
                                              const BasicTensor<double>&,
                                              const BasicTensor<double>&);
template PatchGraph record_head<float>(BasicTape<float>&, const NetworkSpec&,
                                       const BasicWeights<float>&, const BasicTensor<float>&,
                                       const BasicTensor<float>&);
template PatchGraph record_head<double>(BasicTape<double>&, const NetworkSpec&,
                                        const BasicWeights<double>&,
                                        const BasicTensor<double>&,
                                        const BasicTensor<double>&);

// --------------------------------------------------------------- MatchNet

MatchNet::MatchNet(NetworkSpec spec, Weights weights)
    : spec_(std::move(spec)), weights_(std::move(weights)) {
  spec_.validate();
  weights_.check_matches(spec_);
}

Tensor MatchNet::extract_features(const Tensor& image) const {
  const int rf = spec_.trunk_receptive_field();
  if (image.channels() != 1) {
    throw ShapeError("extract_features expects a grayscale image, got " + image.shape().str());
  }
  if (image.height() < rf || image.width() < rf) {
    throw ShapeError("image " + image.shape().str() + " is smaller than the " +
                     std::to_string(rf) + "x" + std::to_string(rf) + " trunk receptive field");
  }
  extractions_->fetch_add(1);
  Tensor x = image;
  for (std::size_t i = 0; i < weights_.trunk.size(); ++i) {
    x = conv2d(x, weights_.trunk[i]);
    if (i + 1 < weights_.trunk.size() || spec_.trunk_final_relu) x = relu(x);
  }
  return x;
}

Tensor MatchNet::stream_features(const Tensor& trunk_features) const {
  if (spec_.fourp_sizes && spec_.placement == FourpPlacement::before_concat) {
    return fourp(trunk_features, *spec_.fourp_sizes, spec_.pooling_mode);
  }
  return trunk_features;
}

Tensor MatchNet::decision_logits(const Tensor& left_features, const Tensor& right_features) const {
  if (left_features.shape() != right_features.shape()) {
    throw ShapeError("decision_head feature maps differ: " + left_features.shape().str() +
                     " vs " + right_features.shape().str());
  }
  if (left_features.channels() != spec_.trunk_channels) {
    throw ShapeError("decision_head expects " + std::to_string(spec_.trunk_channels) +
                     " feature channels, got " + left_features.shape().str());
  }
  Tensor x;
  if (spec_.fourp_sizes && spec_.placement == FourpPlacement::after_concat) {
    const Tensor* both[] = {&left_features, &right_features};
    x = fourp(concat_channels<float>(both), *spec_.fourp_sizes, spec_.pooling_mode);
  } else {
    const Tensor sl = stream_features(left_features);
    const Tensor sr = stream_features(right_features);
    const Tensor* both[] = {&sl, &sr};
    x = concat_channels<float>(both);
  }
  for (std::size_t j = 0; j < weights_.head.size(); ++j) {
    x = conv2d(x, weights_.head[j]);
    if (j + 1 < weights_.head.size()) x = relu(x);
  }
  return x;
}

Tensor MatchNet::decision_head(const Tensor& left_features, const Tensor& right_features) const {
  return sigmoid(decision_logits(left_features, right_features));
}

float MatchNet::patch_similarity(const Tensor& left_patch, const Tensor& right_patch) const {
  const int p = spec_.effective_patch();
  for (const auto* patch : {&left_patch, &right_patch}) {
    if (patch->height() != p || patch->width() != p || patch->channels() != 1) {
      throw ShapeError("patch " + patch->shape().str() + " does not match the " +
                       std::to_string(p) + "x" + std::to_string(p) + "x1 window");
    }
  }
  const Tensor sim = decision_head(extract_features(left_patch), extract_features(right_patch));
  return sim(sim.height() / 2, sim.width() / 2, 0);
}

namespace {

float cost_from_logit(float z) {
  const float s = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(z))));
  return 1.0f - s;
}

}  // namespace

CostVolume MatchNet::compute_cost_volume(const Tensor& left, const Tensor& right, int ndisp) const {
  if (left.shape() != right.shape()) {
    throw ShapeError("stereo pair dimensions differ: " + left.shape().str() + " vs " +
                     right.shape().str());
  }
  if (left.channels() != 1) throw ShapeError("cost volume needs grayscale images");
  if (ndisp < 1) throw ArgumentError("ndisp must be at least 1");

  const int r = spec_.trunk_radius();
  const Tensor fl = extract_features(pad(left, r, 0.0f));
  const Tensor fr = extract_features(pad(right, r, 0.0f));
  if (spec_.fourp_sizes && spec_.placement == FourpPlacement::after_concat) {
    return cost_volume_after_concat(fl, fr, ndisp);
  }

  const Tensor sl = stream_features(fl);
  const Tensor sr = stream_features(fr);
  const int k = sl.channels();
  const ConvLayer& first = weights_.head.front();
  const int c0 = first.geometry.out_channels;
  const ConvGeometry half{1, 1, k, c0, Padding::valid};
  const std::vector<float> no_bias(static_cast<std::size_t>(c0), 0.0f);
  const auto kernel = first.kernel.values();
  const std::size_t half_size = static_cast<std::size_t>(k) * c0;
  // The first head layer is linear in the concatenated input, so each
  // stream's contribution is computed once per image instead of per d.
  const Tensor a = conv2d<float>(sl, half, kernel.subspan(0, half_size), no_bias);
  const Tensor b = conv2d<float>(sr, half, kernel.subspan(half_size, half_size), no_bias);

  const int H = left.height();
  const int W = left.width();
  CostVolume volume(H, W, ndisp, CostVolume::kInvalidCost);
  const auto& kern = simd::kernels();
  const std::size_t layers = weights_.head.size();

  parallel_for(0, H, [&](std::ptrdiff_t yy) {
    const int y = static_cast<int>(yy);
    std::vector<float> h(static_cast<std::size_t>(std::max(c0, spec_.head_channels)));
    std::vector<float> next(h.size());
    std::vector<double> acc(h.size());
    for (int x = 0; x < W; ++x) {
      float* out = volume.costs(y, x);
      for (int d = 0; d < ndisp && d <= x; ++d) {
        const float* av = a.pixel(y, x);
        const float* bv = b.pixel(y, x - d);
        float logit = 0.0f;
        if (layers == 1) {
          logit = (av[0] + bv[0]) + first.bias[0];
        } else {
          kern.add_bias_relu(av, bv, first.bias.data(), h.data(), static_cast<std::size_t>(c0));
          int width = c0;
          for (std::size_t j = 1; j < layers; ++j) {
            const ConvLayer& l = weights_.head[j];
            const auto cout = static_cast<std::size_t>(l.geometry.out_channels);
            std::fill_n(acc.begin(), cout, 0.0);
            const float* w = l.kernel.data();
            for (int ci = 0; ci < width; ++ci) kern.axpy_widen(acc.data(), h[ci], w + ci * cout, cout);
            const bool last = j + 1 == layers;
            for (std::size_t co = 0; co < cout; ++co) {
              const float v = static_cast<float>(acc[co] + static_cast<double>(l.bias[co]));
              next[co] = last ? v : (v > 0.0f ? v : 0.0f);
            }
            std::swap(h, next);
            width = static_cast<int>(cout);
          }
          logit = h[0];
        }
        out[d] = cost_from_logit(logit);
      }
    }
  });
  return volume;
}

CostVolume MatchNet::cost_volume_after_concat(const Tensor& fl, const Tensor& fr, int ndisp) const {
  const int H = fl.height();
  const int W = fl.width();
  CostVolume volume(H, W, ndisp, CostVolume::kInvalidCost);
  for (int d = 0; d < ndisp && d < W; ++d) {
    Tensor shifted(fr.shape());
    for (int y = 0; y < H; ++y) {
      for (int x = d; x < W; ++x) std::copy_n(fr.pixel(y, x - d), fr.channels(), shifted.pixel(y, x));
    }
    const Tensor logits = decision_logits(fl, shifted);
    for (int y = 0; y < H; ++y) {
      for (int x = d; x < W; ++x) volume(y, x, d) = cost_from_logit(logits(y, x, 0));
    }
  }
  return volume;
}

}  // namespace stereo4p
