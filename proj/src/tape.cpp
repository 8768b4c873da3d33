#include "stereo4p/tape.hpp"

#include <cmath>
#include <string>

namespace stereo4p {
namespace {

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  // FNV-1a over the 8 bytes of v.
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffu;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

template <class T>
const typename BasicTape<T>::Node& BasicTape<T>::node(NodeId id) const {
  if (id >= nodes_.size()) {
    throw ArgumentError("tape node " + std::to_string(id) + " has no cached forward state");
  }
  return nodes_[id];
}

template <class T>
NodeId BasicTape<T>::push(Node n) {
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

template <class T>
NodeId BasicTape<T>::leaf(TensorT value) {
  Node n;
  n.kind = Kind::leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

template <class T>
NodeId BasicTape<T>::conv2d(NodeId input, NodeId kernel, NodeId bias, const ConvGeometry& g) {
  Node n;
  n.kind = Kind::conv2d;
  n.inputs = {input, kernel, bias};
  n.geometry = g;
  n.value = stereo4p::conv2d<T>(node(input).value, g, node(kernel).value.values(),
                                node(bias).value.values());
  return push(std::move(n));
}

template <class T>
NodeId BasicTape<T>::relu(NodeId input) {
  Node n;
  n.kind = Kind::relu;
  n.inputs = {input};
  n.value = stereo4p::relu<T>(node(input).value);
  return push(std::move(n));
}

template <class T>
NodeId BasicTape<T>::pool(NodeId input, int size, PoolMode mode) {
  Node n;
  n.kind = Kind::pool;
  n.inputs = {input};
  n.size = size;
  n.mode = mode;
  n.value = stereo4p::pool<T>(node(input).value, size, mode);
  return push(std::move(n));
}

template <class T>
NodeId BasicTape<T>::concat(std::span<const NodeId> parts) {
  Node n;
  n.kind = Kind::concat;
  n.inputs.assign(parts.begin(), parts.end());
  std::vector<const TensorT*> ptrs;
  for (NodeId p : parts) ptrs.push_back(&node(p).value);
  n.value = concat_channels<T>(std::span<const TensorT* const>(ptrs));
  return push(std::move(n));
}

template <class T>
NodeId BasicTape<T>::crop(NodeId input, int y0, int x0, int height, int width) {
  Node n;
  n.kind = Kind::crop;
  n.inputs = {input};
  n.y0 = y0;
  n.x0 = x0;
  n.value = stereo4p::crop<T>(node(input).value, y0, x0, height, width);
  return push(std::move(n));
}

template <class T>
NodeId BasicTape<T>::sigmoid(NodeId input) {
  Node n;
  n.kind = Kind::sigmoid;
  n.inputs = {input};
  n.value = stereo4p::sigmoid<T>(node(input).value);
  return push(std::move(n));
}

template <class T>
NodeId BasicTape<T>::bce_with_logits(NodeId logits, T label) {
  const TensorT& z = node(logits).value;
  if (z.empty()) throw ShapeError("bce_with_logits on an empty tensor");
  double total = 0.0;
  for (T v : z.values()) {
    const double zd = v;
    total += std::max(zd, 0.0) + std::log1p(std::exp(-std::abs(zd))) - label * zd;
  }
  Node n;
  n.kind = Kind::bce;
  n.inputs = {logits};
  n.label = label;
  n.value = TensorT(1, 1, 1, static_cast<T>(total / static_cast<double>(z.size())));
  return push(std::move(n));
}

template <class T>
const BasicTensor<T>& BasicTape<T>::value(NodeId id) const {
  return node(id).value;
}

template <class T>
void BasicTape<T>::accumulate(NodeId id, const TensorT& g) {
  auto& slot = nodes_[id].grad;
  if (!slot) {
    slot = g;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) slot->data()[i] += g.data()[i];
}

template <class T>
void BasicTape<T>::backward(NodeId root) {
  backward(root, TensorT(node(root).value.shape(), T(1)));
}

template <class T>
void BasicTape<T>::backward(NodeId root, const TensorT& seed) {
  if (seed.shape() != node(root).value.shape()) {
    throw ShapeError("backward seed " + seed.shape().str() + " does not match node value " +
                     node(root).value.shape().str());
  }
  // Gradients of the previous pass stay on interior nodes only until
  // this pass reaches them; interior slots are reset first.
  for (NodeId i = 0; i <= root; ++i) {
    if (nodes_[i].kind != Kind::leaf) nodes_[i].grad.reset();
  }
  accumulate(root, seed);

  for (NodeId id = root + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.kind == Kind::leaf || !n.grad) continue;
    const TensorT& up = *n.grad;
    switch (n.kind) {
      case Kind::conv2d: {
        const TensorT& in = nodes_[n.inputs[0]].value;
        const TensorT& k = nodes_[n.inputs[1]].value;
        auto g = conv2d_backward<T>(in, n.geometry, k.values(), up);
        accumulate(n.inputs[0], g.input);
        accumulate(n.inputs[1], TensorT(k.height(), k.width(), k.channels(), std::move(g.kernel)));
        const TensorT& b = nodes_[n.inputs[2]].value;
        accumulate(n.inputs[2], TensorT(b.height(), b.width(), b.channels(), std::move(g.bias)));
        break;
      }
      case Kind::relu:
        accumulate(n.inputs[0], relu_backward<T>(nodes_[n.inputs[0]].value, up));
        break;
      case Kind::pool:
        accumulate(n.inputs[0], pool_backward<T>(nodes_[n.inputs[0]].value, n.size, n.mode, up));
        break;
      case Kind::concat: {
        std::vector<int> counts;
        for (NodeId p : n.inputs) counts.push_back(nodes_[p].value.channels());
        auto parts = split_channels<T>(up, counts);
        for (std::size_t i = 0; i < parts.size(); ++i) accumulate(n.inputs[i], parts[i]);
        break;
      }
      case Kind::crop:
        accumulate(n.inputs[0], crop_backward<T>(nodes_[n.inputs[0]].value.shape(), n.y0, n.x0, up));
        break;
      case Kind::sigmoid: {
        TensorT g(n.value.shape());
        for (std::size_t i = 0; i < g.size(); ++i) {
          const T s = n.value.data()[i];
          g.data()[i] = up.data()[i] * s * (T(1) - s);
        }
        accumulate(n.inputs[0], g);
        break;
      }
      case Kind::bce: {
        const TensorT& z = nodes_[n.inputs[0]].value;
        TensorT g(z.shape());
        const double scale = static_cast<double>(up.data()[0]) / static_cast<double>(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) {
          const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(z.data()[i])));
          g.data()[i] = static_cast<T>((s - n.label) * scale);
        }
        accumulate(n.inputs[0], g);
        break;
      }
      case Kind::leaf:
        break;
    }
  }
}

template <class T>
BasicTensor<T> BasicTape<T>::grad(NodeId id) const {
  const Node& n = node(id);
  if (n.grad) return *n.grad;
  return TensorT(n.value.shape());
}

template <class T>
void BasicTape<T>::zero_grad() {
  for (auto& n : nodes_) n.grad.reset();
}

template <class T>
void BasicTape<T>::clear() {
  nodes_.clear();
}

template <class T>
std::uint64_t BasicTape<T>::kink_signature() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const Node& n : nodes_) {
    if (n.kind == Kind::relu) {
      for (T v : nodes_[n.inputs[0]].value.values()) h = mix(h, v > T(0) ? 1u : 0u);
    } else if (n.kind == Kind::pool && n.mode == PoolMode::max && n.size > 1) {
      for (int a : pool_argmax<T>(nodes_[n.inputs[0]].value, n.size)) {
        h = mix(h, static_cast<std::uint64_t>(a));
      }
    }
  }
  return h;
}

template class BasicTape<float>;
template class BasicTape<double>;

}  // namespace stereo4p
