#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stereo4p/cost_volume.hpp"
#include "stereo4p/tensor.hpp"

namespace stereo4p {

// Window presets: 9x9 census default, plus the 11x11 and 37x37 windows
// used when comparing small and large supports.
inline constexpr int kDefaultCensusWindow = 9;
inline constexpr int kSmallWindow = 11;
inline constexpr int kLargeWindow = 37;

/// Mean absolute difference over the window pixels that fall inside both
/// images. Returns CostVolume::kInvalidCost when x - d leaves the right image.
float sad_cost(const Tensor& left, const Tensor& right, int window, int y, int x, int d);

/// Fraction of differing census bits (neighbour < centre) over the
/// window offsets valid in both images.
float census_cost(const Tensor& left, const Tensor& right, int window, int y, int x, int d);

/// Sampling-insensitive absolute difference against the linearly
/// interpolated half-pixel neighbours, taken symmetrically.
float pixelwise_cost(const Tensor& left, const Tensor& right, int y, int x, int d);

using CostFunction = std::function<float(const Tensor&, const Tensor&, int, int, int)>;

CostFunction make_sad(int window);
CostFunction make_census(int window);
CostFunction make_pixelwise();

/// Builds a full volume from a per-pixel cost function.
CostVolume classic_cost_volume(const CostFunction& cost, const Tensor& left, const Tensor& right,
                               int ndisp);

struct CostProfile {
  int y = 0;
  int x = 0;
  std::vector<float> raw;
  /// Min-max normalized to [0, 1] over valid entries; invalid entries
  /// read 1; a flat profile normalizes to all zeros.
  std::vector<float> normalized;

  /// "d,cost" header then one row per disparity.
  std::string csv() const;
};

CostProfile cost_profile(std::span<const float> costs, int y, int x);
CostProfile cost_profile(const CostFunction& cost, const Tensor& left, const Tensor& right, int y,
                         int x, int ndisp);

/// Strict local minima, endpoints compared with their single neighbour.
int count_local_minima(std::span<const float> values);

}  // namespace stereo4p
