#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stereo4p/config.hpp"
#include "stereo4p/dataset.hpp"
#include "stereo4p/matchnet.hpp"

namespace stereo4p {

struct SamplingOptions {
  /// Positives: right centre within +-jitter of the true match.
  int jitter = 1;
  /// Negatives: offset magnitude in [neg_min, neg_max].
  int neg_min = 2;
  int neg_max = 8;
  /// Side of the square patches that must fit inside both images.
  int patch = 37;

  void validate() const;
};

/// A patch pair by reference: left centre (y, x) of dataset image
/// `image`, right centre (y, x - disparity + offset).
struct PatchSample {
  int image = 0;
  int y = 0;
  int x = 0;
  int disparity = 0;
  int offset = 0;
  bool positive = true;

  int right_x() const { return x - disparity + offset; }
  bool operator==(const PatchSample&) const = default;
};

/// Alternating positive/negative draws (count rounded up to even) from
/// pixels with valid, non-occluded ground truth. Throws ArgumentError
/// naming the minimum usable image size when no pixel qualifies.
std::vector<PatchSample> sample_patches(std::span<const StereoSample> dataset, int count,
                                        std::uint64_t seed, const SamplingOptions& options = {});

/// Square crop centred at (y, x); the caller guarantees it fits.
Tensor extract_patch(const Tensor& image, int y, int x, int size);

enum class LossKind { bce, hinge };

struct TrainSchedule {
  int epochs = 4;
  double lr_initial = 0.003;
  double lr_final = 0.0003;
  /// First epoch (1-based) run at lr_final.
  int lr_drop_epoch = 3;
  /// Velocity update v = momentum * v + (1 - dampening) * g after a first
  /// step that sets v = g; weights move by -lr * v.
  double momentum = 0.9;
  double dampening = 0.9;
  int batch_size = 64;
  std::uint64_t seed = 1;
  LossKind loss = LossKind::bce;
  /// Margin on the logit for the hinge loss.
  double hinge_margin = 1.0;

  double lr_at(int epoch) const { return epoch < lr_drop_epoch ? lr_initial : lr_final; }
  /// Throws ConfigError for an unusable schedule.
  void validate() const;
  /// Keys: epochs, lr_initial, lr_final, lr_drop_epoch, momentum, dampening,
  /// batch_size, seed, loss (bce|hinge), hinge_margin.
  static TrainSchedule from_config(const KeyValueConfig& config);
  KeyValueConfig to_config() const;
};

struct LossRecord {
  int epoch = 0;
  int step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  Weights weights;
  std::vector<LossRecord> trace;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_lr;
};

/// "epoch,step,lr,loss" header then one row per optimizer step.
std::string loss_trace_csv(std::span<const LossRecord> trace);

/// End-to-end SGD on effective_patch() crops of the normalized images.
/// Starts from `init` when given, else from Weights::random(spec, seed).
TrainResult train(const NetworkSpec& spec, std::span<const StereoSample> dataset,
                  std::span<const PatchSample> samples, const TrainSchedule& schedule,
                  const Weights* init = nullptr);

enum class HeadInit {
  /// Fresh random head.
  random,
  /// Pretrained head with its first layer reading the finest (size 1)
  /// pyramid level and zeros elsewhere, so training starts from the
  /// pretrained network's decisions.
  warm_start,
};

/// Copies the pretrained trunk into `spec` and trains the head only, on
/// per-stream head inputs looked up in full-image features. Throws
/// SpecMismatchError when the trunk layouts differ.
TrainResult finetune_head(const Weights& pretrained, const NetworkSpec& spec,
                          std::span<const StereoSample> dataset,
                          std::span<const PatchSample> samples, const TrainSchedule& schedule,
                          HeadInit init = HeadInit::warm_start);

/// Head weights for `spec` initialised per `init` from `pretrained`.
Weights initial_finetune_weights(const Weights& pretrained, const NetworkSpec& spec, HeadInit init,
                                 std::uint64_t seed);

/// Similarities of the samples' patch pairs, computed from full-image
/// features exactly as compute_cost_volume does.
std::vector<float> score_samples(const MatchNet& net, std::span<const StereoSample> dataset,
                                 std::span<const PatchSample> samples);

/// Probability that a random positive outscores a random negative; ties
/// count one half.
double auc(std::span<const float> scores, std::span<const PatchSample> samples);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  /// Points whose perturbation crossed a ReLU or max-pool kink.
  std::size_t skipped = 0;
  std::vector<std::pair<std::string, double>> per_blob;
};

/// Central differences (step eps) against the analytic gradient of the
/// BCE loss of one random patch pair, in double precision. Checks up to
/// `points_per_blob` randomly chosen entries of every blob (0: all).
GradCheckReport grad_check(const NetworkSpec& spec, std::uint64_t seed, int points_per_blob = 8,
                           double eps = 1e-3);

}  // namespace stereo4p
