#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "stereo4p/error.hpp"
#include "stereo4p/tensor.hpp"

namespace stereo4p {

/// H x W x D matching costs, disparity varying fastest. Entries for
/// hypotheses that fall outside the other image hold kInvalidCost.
class CostVolume {
 public:
  static constexpr float kInvalidCost = std::numeric_limits<float>::max();

  CostVolume() = default;
  CostVolume(int height, int width, int ndisp, float fill = 0.0f)
      : costs_(height, width, check_ndisp(ndisp), fill) {}
  explicit CostVolume(Tensor costs) : costs_(std::move(costs)) { check_ndisp(costs_.channels()); }

  int height() const { return costs_.height(); }
  int width() const { return costs_.width(); }
  int ndisp() const { return costs_.channels(); }

  float& operator()(int y, int x, int d) { return costs_(y, x, d); }
  float operator()(int y, int x, int d) const { return costs_(y, x, d); }
  float* costs(int y, int x) { return costs_.pixel(y, x); }
  const float* costs(int y, int x) const { return costs_.pixel(y, x); }

  const Tensor& tensor() const { return costs_; }
  Tensor& tensor() { return costs_; }

  static bool is_invalid(float c) { return c == kInvalidCost; }

  bool operator==(const CostVolume&) const = default;

 private:
  static int check_ndisp(int n) {
    if (n < 1) throw ArgumentError("cost volume needs at least one disparity");
    return n;
  }
  Tensor costs_;
};

/// Per-pixel real disparities; kInvalid marks pixels without an estimate.
class DisparityMap {
 public:
  static constexpr float kInvalid = std::numeric_limits<float>::infinity();

  DisparityMap() = default;
  DisparityMap(int height, int width, float fill = kInvalid)
      : height_(height), width_(width), values_(static_cast<std::size_t>(height) * width, fill) {
    if (height < 0 || width < 0) throw ShapeError("negative disparity map size");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }

  float& operator()(int y, int x) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  float operator()(int y, int x) const {
    return values_[static_cast<std::size_t>(y) * width_ + x];
  }
  std::vector<float>& values() { return values_; }
  const std::vector<float>& values() const { return values_; }

  static bool is_valid(float v) { return std::isfinite(v); }

  bool operator==(const DisparityMap& o) const {
    // Bitwise comparison so that the invalid marker compares equal.
    return height_ == o.height_ && width_ == o.width_ &&
           std::equal(values_.begin(), values_.end(), o.values_.begin(), o.values_.end(),
                      [](float a, float b) { return a == b || (std::isnan(a) && std::isnan(b)); });
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> values_;
};

}  // namespace stereo4p
