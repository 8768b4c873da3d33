#pragma once

#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "stereo4p/ops.hpp"
#include "stereo4p/tensor.hpp"

namespace stereo4p {

/// Window sizes of a per-pixel pyramid: odd, positive, strictly
/// decreasing (largest scale first).
class PoolSizeVector {
 public:
  /// Throws ArgumentError on an empty, even, nonpositive or
  /// non-decreasing list.
  explicit PoolSizeVector(std::vector<int> sizes);
  PoolSizeVector(std::initializer_list<int> sizes) : PoolSizeVector(std::vector<int>(sizes)) {}

  /// [27, 9, 3, 1], the pyramid of the proposed network.
  static PoolSizeVector proposed() { return PoolSizeVector{27, 9, 3, 1}; }

  /// Parses "27,9,3,1".
  static PoolSizeVector parse(const std::string& text);

  std::span<const int> sizes() const { return sizes_; }
  std::size_t count() const { return sizes_.size(); }
  int largest() const { return sizes_.front(); }
  std::string str() const;

  bool operator==(const PoolSizeVector&) const = default;

 private:
  std::vector<int> sizes_;
};

/// Stride-1 pooling at every listed size, concatenated along channels in
/// list order. Accepts any order of odd positive sizes.
template <class T>
BasicTensor<T> pyramid_pool(const BasicTensor<T>& features, std::span<const int> sizes,
                            PoolMode mode);

/// Per-pixel pyramid pooling: H x W x C -> H x W x (M*C).
template <class T>
BasicTensor<T> fourp(const BasicTensor<T>& features, const PoolSizeVector& sizes,
                     PoolMode mode) {
  return pyramid_pool<T>(features, sizes.sizes(), mode);
}

template <class T>
BasicTensor<T> pyramid_pool_backward(const BasicTensor<T>& features, std::span<const int> sizes,
                                     PoolMode mode, const BasicTensor<T>& upstream);

}  // namespace stereo4p
