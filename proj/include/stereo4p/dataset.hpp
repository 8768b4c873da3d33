#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stereo4p/cost_volume.hpp"
#include "stereo4p/tensor.hpp"

namespace stereo4p {

/// Rectified grayscale pair in unit range.
struct StereoSample {
  std::string name;
  Tensor left;
  Tensor right;
  std::optional<DisparityMap> gt;
  /// Nonzero where the ground truth is visible in both views; empty when
  /// unknown.
  std::vector<std::uint8_t> nonoccluded;
  int ndisp = 0;
  double weight = 1.0;

  /// Throws ShapeError when the parts disagree.
  void validate() const;
};

/// Reads im0.png, im1.png, calib.txt and, when present, disp0GT.pfm and
/// mask0nocc.png (255 = non-occluded). `half` halves images, ground
/// truth and ndisp.
StereoSample load_middlebury(const std::filesystem::path& dir, bool half = true);

/// Every subdirectory of `root` holding a calib.txt, sorted by name.
std::vector<StereoSample> load_middlebury_set(const std::filesystem::path& root, bool half = true);

struct SyntheticOptions {
  int height = 64;
  int width = 96;
  /// Ground truth lies in [0, max_disparity]; ndisp = max_disparity + 1.
  int max_disparity = 16;
  /// Fronto-parallel rectangles in front of the background.
  int objects = 3;
  /// A third of the objects (rounded up) and a full-width background band
  /// a quarter of the height tall are rendered with faint, low-frequency
  /// texture.
  bool weak_regions = true;
  float weak_contrast = 0.04f;
  /// Independent Gaussian noise per view.
  float noise = 0.01f;
};

/// Piecewise-constant integer disparities with layered procedural
/// textures; occlusions are rendered consistently and reported in
/// `nonoccluded`.
StereoSample make_synthetic_pair(const SyntheticOptions& options, std::uint64_t seed);

std::vector<StereoSample> make_synthetic_suite(int count, const SyntheticOptions& options,
                                               std::uint64_t seed);

/// Textured left image and right = left shifted by `shift` pixels.
StereoSample make_shifted_pair(int height, int width, int shift, int ndisp, std::uint64_t seed);

/// Pixels with valid ground truth, not occluded, at least `margin`
/// pixels from the image border and from any ground-truth discontinuity.
std::vector<std::uint8_t> interior_mask(const StereoSample& sample, int margin);

}  // namespace stereo4p
