#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "stereo4p/ops.hpp"
#include "stereo4p/tensor.hpp"

namespace stereo4p {

using NodeId = std::size_t;

/// Reverse-mode tape over the tensor-core ops. Every recorded node keeps
/// its forward value (and whatever else its backward needs) until clear().
template <class T>
class BasicTape {
 public:
  using TensorT = BasicTensor<T>;

  /// Leaf whose gradient is reported after backward().
  NodeId leaf(TensorT value);

  NodeId conv2d(NodeId input, NodeId kernel, NodeId bias, const ConvGeometry& geometry);
  NodeId relu(NodeId input);
  NodeId pool(NodeId input, int size, PoolMode mode);
  NodeId concat(std::span<const NodeId> parts);
  NodeId crop(NodeId input, int y0, int x0, int height, int width);
  NodeId sigmoid(NodeId input);
  /// Mean binary cross-entropy of logistic(input) against `label` in
  /// {0, 1}, computed from logits; result is 1x1x1.
  NodeId bce_with_logits(NodeId logits, T label);

  const TensorT& value(NodeId id) const;

  /// Propagates `seed` (shaped like value(root)) back to every node
  /// reachable from `root`. Gradients accumulate across calls until
  /// zero_grad() or clear(). Throws ArgumentError for a node that has no
  /// cached forward state.
  void backward(NodeId root, const TensorT& seed);
  /// Seeds with ones; for scalar losses.
  void backward(NodeId root);

  /// Gradient reached during backward; zeros if none did.
  TensorT grad(NodeId id) const;

  void zero_grad();
  void clear();
  std::size_t size() const { return nodes_.size(); }

  /// Hash of every ReLU sign pattern and max-pool argmax on the tape.
  /// Equal signatures mean the network is locally affine between two
  /// evaluations, which finite-difference checks rely on.
  std::uint64_t kink_signature() const;

 private:
  enum class Kind { leaf, conv2d, relu, pool, concat, crop, sigmoid, bce };

  struct Node {
    Kind kind = Kind::leaf;
    std::vector<NodeId> inputs;
    TensorT value;
    std::optional<TensorT> grad;
    ConvGeometry geometry{};
    int size = 0;
    PoolMode mode = PoolMode::max;
    int y0 = 0;
    int x0 = 0;
    T label = T(0);
  };

  const Node& node(NodeId id) const;
  NodeId push(Node n);
  void accumulate(NodeId id, const TensorT& g);

  std::vector<Node> nodes_;
};

using Tape = BasicTape<float>;
using TapeD = BasicTape<double>;

/// Records the per-pixel pyramid on a tape as pool nodes plus one concat.
template <class T>
NodeId record_pyramid_pool(BasicTape<T>& tape, NodeId input, std::span<const int> sizes,
                           PoolMode mode) {
  std::vector<NodeId> slabs;
  slabs.reserve(sizes.size());
  for (int s : sizes) slabs.push_back(tape.pool(input, s, mode));
  return tape.concat(slabs);
}

}  // namespace stereo4p
