#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stereo4p/config.hpp"
#include "stereo4p/cost_volume.hpp"
#include "stereo4p/tensor.hpp"

namespace stereo4p {

/// Smoothness penalties of semi-global matching. P1 applies to unit
/// disparity changes, P2 to larger ones; both are divided by Q1 when the
/// intensity step along the path exceeds V in exactly one image, by Q2
/// when it does in both.
struct SgmParams {
  float P1 = 1.3f;
  float P2 = 17.0f;
  float Q1 = 3.6f;
  float Q2 = 36.0f;
  float V = 1.4f;

  /// Throws ArgumentError unless P2 > P1 > 0, Q1, Q2 >= 1 and V > 0.
  void validate() const;
};

struct CbcaParams {
  float intensity_threshold = 0.02f;
  int max_arm = 14;
  int iterations_1 = 0;
  int iterations_2 = 1;

  void validate() const;
};

struct SgmDirection {
  int dy = 0;
  int dx = 1;
};

/// Left-to-right, right-to-left, top-to-bottom, bottom-to-top.
std::span<const SgmDirection> sgm_directions_4();
/// The four above plus the diagonals.
std::span<const SgmDirection> sgm_directions_8();

/// Cross-based aggregation: each pixel's support is the union of the
/// horizontal arms of the pixels on its vertical arm; arms stop before
/// the first pixel whose guide intensity differs from the anchor's by
/// `intensity_threshold` or more, or at `max_arm`. Invalid entries are
/// left out of every average. Repeated `iterations` times.
CostVolume cbca(const CostVolume& volume, const Tensor& guide, const CbcaParams& params,
                int iterations);

/// Semi-global matching summed over `directions` and divided by their
/// count. `left` and `right` are the intensity guides for penalty
/// adaptation.
CostVolume sgm(const CostVolume& volume, const Tensor& left, const Tensor& right,
               const SgmParams& params, std::span<const SgmDirection> directions);

inline CostVolume sgm(const CostVolume& volume, const Tensor& left, const Tensor& right,
                      const SgmParams& params) {
  return sgm(volume, left, right, params, sgm_directions_4());
}

/// Per-pixel argmin, ties to the smaller disparity; pixels with only
/// invalid entries get DisparityMap::kInvalid.
DisparityMap wta(const CostVolume& volume);

/// Parabola through the costs at d-1, d, d+1; offset clamped to
/// [-0.5, 0.5]. Disparities at the ends of the range stay integer.
DisparityMap subpixel_refine(const CostVolume& volume, const DisparityMap& disparity);

/// (2r+1)^2 median over valid pixels (lower median for even counts).
/// Invalid pixels stay invalid.
DisparityMap median_filter(const DisparityMap& disparity, int radius);

/// Weighted mean over valid pixels with weights
/// exp(-|dp|^2 / 2 sigma_s^2) * exp(-(I(q)-I(p))^2 / 2 sigma_r^2).
DisparityMap bilateral_filter(const DisparityMap& disparity, const Tensor& guide,
                              float sigma_spatial, float sigma_range);

/// Right-view disparities read off the left volume, cost_R(y, x, d) =
/// cost_L(y, x + d, d).
DisparityMap wta_right(const CostVolume& volume);

/// Invalidates pixels whose left and right disparities disagree by more
/// than one, then fills each from the nearer-background of its nearest
/// valid row neighbours.
DisparityMap left_right_check(const DisparityMap& left, const DisparityMap& right);

struct PipelineConfig {
  bool cbca_1 = true;
  bool sgm = true;
  bool cbca_2 = true;
  bool lr_check = false;
  bool subpixel = true;
  bool median = true;
  bool bilateral = true;

  CbcaParams cbca;
  SgmParams sgm_params;
  int sgm_directions = 4;
  int median_radius = 2;
  float bilateral_sigma_spatial = 1.7f;
  float bilateral_sigma_range = 0.1f;

  /// Footnote-tuned values of the proposed network.
  static PipelineConfig paper_tuned();
  /// Reconstruction of the baseline network's original setting.
  static PipelineConfig baseline();
  /// Every stage off: the result is the raw WTA map.
  static PipelineConfig none();

  /// Stage list: "none", "all", or comma-separated names among cbca1,
  /// sgm, cbca2, lr, subpixel, median, bilateral.
  void set_stages(const std::string& stages);

  void validate() const;
  /// Keys mirror the parameter names (cbca_num_iterations_1,
  /// cbca_num_iterations_2, sgm_P1, sgm_P2, sgm_Q1, sgm_Q2, sgm_V) plus
  /// cbca_intensity, cbca_max_arm, sgm_directions, median_radius,
  /// bilateral_sigma_spatial, bilateral_sigma_range, stages and
  /// stage_<name> toggles. Missing keys keep paper_tuned() values.
  static PipelineConfig from_config(const KeyValueConfig& config);
  KeyValueConfig to_config() const;
};

struct PipelineReport {
  int cbca_passes = 0;
  std::vector<std::pair<std::string, double>> stage_seconds;
  CostVolume final_volume;
  DisparityMap raw_wta;
};

/// cbca(iterations_1) -> sgm -> cbca(iterations_2) -> wta -> [lr check]
/// -> subpixel -> median -> bilateral. `left` and `right` are unit-range
/// intensity images; SGM adapts its penalties on their normalized copies.
DisparityMap run_pipeline(const CostVolume& volume, const Tensor& left, const Tensor& right,
                          const PipelineConfig& config, PipelineReport* report = nullptr);

}  // namespace stereo4p
