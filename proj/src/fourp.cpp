#include "stereo4p/fourp.hpp"

#include <cctype>
#include <sstream>

namespace stereo4p {

PoolSizeVector::PoolSizeVector(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.empty()) throw ArgumentError("pool size vector must not be empty");
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    const int s = sizes_[i];
    if (s < 1 || s % 2 == 0) {
      throw ArgumentError("pool size vector entries must be odd and positive, got " +
                          std::to_string(s));
    }
    if (i > 0 && !(sizes_[i - 1] > s)) {
      throw ArgumentError("pool size vector must be strictly decreasing: " + str());
    }
  }
}

PoolSizeVector PoolSizeVector::parse(const std::string& text) {
  std::vector<int> sizes;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      throw ArgumentError("pool size vector: cannot parse '" + item + "'");
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used != item.size()) throw ArgumentError("pool size vector: cannot parse '" + item + "'");
    sizes.push_back(v);
  }
  return PoolSizeVector(std::move(sizes));
}

std::string PoolSizeVector::str() const {
  std::string out;
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(sizes_[i]);
  }
  return out;
}

template <class T>
BasicTensor<T> pyramid_pool(const BasicTensor<T>& features, std::span<const int> sizes,
                            PoolMode mode) {
  if (sizes.empty()) throw ArgumentError("pyramid_pool needs at least one size");
  std::vector<BasicTensor<T>> slabs;
  slabs.reserve(sizes.size());
  for (int s : sizes) slabs.push_back(pool<T>(features, s, mode));
  return concat_channels<T>(std::span<const BasicTensor<T>>(slabs));
}

template <class T>
BasicTensor<T> pyramid_pool_backward(const BasicTensor<T>& features, std::span<const int> sizes,
                                     PoolMode mode, const BasicTensor<T>& upstream) {
  const std::vector<int> counts(sizes.size(), features.channels());
  const auto parts = split_channels<T>(upstream, counts);
  std::vector<double> acc(features.size(), 0.0);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const auto g = pool_backward<T>(features, sizes[i], mode, parts[i]);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += static_cast<double>(g.data()[k]);
  }
  BasicTensor<T> out(features.shape());
  for (std::size_t k = 0; k < acc.size(); ++k) out.data()[k] = static_cast<T>(acc[k]);
  return out;
}

template BasicTensor<float> pyramid_pool<float>(const BasicTensor<float>&, std::span<const int>,
                                                PoolMode);
template BasicTensor<double> pyramid_pool<double>(const BasicTensor<double>&,
                                                  std::span<const int>, PoolMode);
template BasicTensor<float> pyramid_pool_backward<float>(const BasicTensor<float>&,
                                                         std::span<const int>, PoolMode,
                                                         const BasicTensor<float>&);
template BasicTensor<double> pyramid_pool_backward<double>(const BasicTensor<double>&,
                                                           std::span<const int>, PoolMode,
                                                           const BasicTensor<double>&);

}  // namespace stereo4p
