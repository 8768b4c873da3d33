#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stereo4p/config.hpp"
#include "stereo4p/cost_volume.hpp"
#include "stereo4p/fourp.hpp"
#include "stereo4p/ops.hpp"
#include "stereo4p/tape.hpp"
#include "stereo4p/tensor.hpp"

namespace stereo4p {

/// Where the pyramid pooling sits relative to the fusion of the two
/// feature streams.
enum class FourpPlacement { before_concat, after_concat };

/// Layer layout of the siamese matching network: a trunk of square
/// valid convolutions shared by both images, then a head of 1x1
/// convolutions on the fused features ending in one logit. With
/// `fourp_sizes` set the trunk output is pyramid-pooled before the head.
struct NetworkSpec {
  int trunk_layers = 5;
  int trunk_kernel = 3;
  int trunk_channels = 16;
  bool trunk_final_relu = true;
  int head_layers = 3;
  int head_channels = 32;
  std::optional<PoolSizeVector> fourp_sizes;
  PoolMode pooling_mode = PoolMode::max;
  FourpPlacement placement = FourpPlacement::before_concat;

  static NetworkSpec tiny_baseline();
  static NetworkSpec tiny_proposed();
  /// 112-channel trunk, 384-channel head.
  static NetworkSpec paper_baseline();
  static NetworkSpec paper_proposed();

  /// Throws ArgumentError for an unusable layout.
  void validate() const;

  bool proposed() const { return fourp_sizes.has_value(); }
  int trunk_receptive_field() const { return trunk_layers * (trunk_kernel - 1) + 1; }
  int trunk_radius() const { return trunk_receptive_field() / 2; }
  /// Side of the input window that can influence one output pixel.
  int effective_patch() const {
    return trunk_receptive_field() + (fourp_sizes ? fourp_sizes->largest() - 1 : 0);
  }
  int pyramid_levels() const { return fourp_sizes ? static_cast<int>(fourp_sizes->count()) : 1; }
  /// Channels per image stream entering the head.
  int stream_channels() const { return trunk_channels * pyramid_levels(); }
  int head_input_channels() const { return 2 * stream_channels(); }

  std::vector<ConvGeometry> trunk_geometries() const;
  std::vector<ConvGeometry> head_geometries() const;

  /// Canonical layout description; the weights file stores its hash.
  std::string canonical() const;
  std::uint64_t hash() const;

  /// Keys: trunk_layers, trunk_kernel, trunk_channels, trunk_final_relu,
  /// head_layers, head_channels, fourp_sizes (absent or "none" for the
  /// baseline), pooling_mode (max|mean), fourp_placement
  /// (before_concat|after_concat). Missing keys take tiny-preset values.
  static NetworkSpec from_config(const KeyValueConfig& config);
  KeyValueConfig to_config() const;

  bool operator==(const NetworkSpec&) const = default;
};

template <class T>
struct BasicWeights {
  std::vector<BasicConvLayer<T>> trunk;
  std::vector<BasicConvLayer<T>> head;
};

/// Parameter blobs plus provenance. Blob order is trunk layers then head
/// layers, each as kernel followed by bias.
struct Weights {
  std::vector<ConvLayer> trunk;
  std::vector<ConvLayer> head;
  std::uint64_t spec_hash = 0;
  std::map<std::string, std::string> metadata;

  /// He-uniform kernels, zero biases.
  static Weights random(const NetworkSpec& spec, std::uint64_t seed);
  /// Throws SpecMismatchError when any blob disagrees with `spec`.
  void check_matches(const NetworkSpec& spec) const;
  std::size_t parameter_count() const;

  template <class T>
  BasicWeights<T> cast() const {
    BasicWeights<T> out;
    auto convert = [](const ConvLayer& l) {
      BasicConvLayer<T> c{l.geometry, l.kernel.template cast<T>(), {}};
      c.bias.assign(l.bias.begin(), l.bias.end());
      return c;
    };
    for (const auto& l : trunk) out.trunk.push_back(convert(l));
    for (const auto& l : head) out.head.push_back(convert(l));
    return out;
  }

  bool operator==(const Weights&) const = default;
};

/// Writes the versioned "W4PS" container (atomically).
void save_weights(const Weights& weights, const std::filesystem::path& path);
/// Throws IoError, FormatError (corrupt or truncated) or SpecMismatchError.
Weights load_weights(const std::filesystem::path& path, const NetworkSpec& spec);
/// Loads without a spec check; used when only the trunk is reused.
Weights load_weights_unchecked(const std::filesystem::path& path);

/// Zero-mean, unit-variance copy of a grayscale image.
Tensor normalize_image(const Tensor& image);

/// Nodes recorded by record_patch_pair.
struct PatchGraph {
  NodeId left_input = 0;
  NodeId right_input = 0;
  NodeId logit = 0;
  /// Parameter leaves in blob order (kernel, bias per layer).
  std::vector<NodeId> parameters;
};

/// Records the network on two patches of side spec.effective_patch()
/// and returns the logit of the centre pixel (1x1x1).
template <class T>
PatchGraph record_patch_pair(BasicTape<T>& tape, const NetworkSpec& spec,
                             const BasicWeights<T>& weights, const BasicTensor<T>& left_patch,
                             const BasicTensor<T>& right_patch);

/// Records only the head on precomputed per-stream head inputs of shape
/// 1x1xstream_channels (the pyramid is already applied).
template <class T>
PatchGraph record_head(BasicTape<T>& tape, const NetworkSpec& spec,
                       const BasicWeights<T>& weights, const BasicTensor<T>& left_stream,
                       const BasicTensor<T>& right_stream);

class MatchNet {
 public:
  /// Throws SpecMismatchError when `weights` do not fit `spec`.
  MatchNet(NetworkSpec spec, Weights weights);

  const NetworkSpec& spec() const { return spec_; }
  const Weights& weights() const { return weights_; }

  /// Trunk on a normalized grayscale image with valid padding:
  /// H x W x 1 -> (H-r+1) x (W-r+1) x trunk_channels, r the trunk
  /// receptive field.
  Tensor extract_features(const Tensor& image) const;

  /// Per-stream head input for a trunk feature map: the pyramid when
  /// configured (before concatenation), the features otherwise.
  Tensor stream_features(const Tensor& trunk_features) const;

  /// Similarity in [0, 1] for aligned trunk feature maps.
  Tensor decision_head(const Tensor& left_features, const Tensor& right_features) const;
  Tensor decision_logits(const Tensor& left_features, const Tensor& right_features) const;

  /// cost(y, x, d) = 1 - similarity(left at (y, x), right at (y, x - d)).
  /// Images are zero-padded so every pixel gets a cost; entries with
  /// x - d < 0 hold CostVolume::kInvalidCost.
  CostVolume compute_cost_volume(const Tensor& left, const Tensor& right, int ndisp) const;

  /// Similarity of the centre pixels of two effective_patch() sized patches.
  float patch_similarity(const Tensor& left_patch, const Tensor& right_patch) const;

  /// Number of extract_features calls so far.
  std::size_t feature_extractions() const { return extractions_->load(); }

 private:
  CostVolume cost_volume_after_concat(const Tensor& fl, const Tensor& fr, int ndisp) const;

  NetworkSpec spec_;
  Weights weights_;
  std::shared_ptr<std::atomic<std::size_t>> extractions_ =
      std::make_shared<std::atomic<std::size_t>>(0);
};

}  // namespace stereo4p
