#include <doctest.h>

#include <functional>
#include <vector>

#include "oracles.hpp"
#include "stereo4p/random.hpp"
#include "stereo4p/tape.hpp"
#include "stereo4p/trainer.hpp"

using namespace stereo4p;

using oracle::Build;
using oracle::finite_difference;
using oracle::random_d;

namespace {

TensorD conv_kernel(Rng& rng, const ConvGeometry& g) {
  return random_d(rng, g.kernel_h, g.kernel_w, g.in_channels * g.out_channels);
}

}  // namespace

TEST_CASE("conv2d gradient, valid and same padding") {
  Rng rng(1);
  for (Padding pad : {Padding::valid, Padding::same}) {
    const ConvGeometry g{3, 3, 2, 3, pad};
    Build b = [&](TapeD& t, const std::vector<NodeId>& l) { return t.conv2d(l[0], l[1], l[2], g); };
    auto r = finite_difference(b, {random_d(rng, 5, 5, 2), conv_kernel(rng, g), random_d(rng, 1, 1, 3)},
                               rng);
    CHECK(r.checked >= 20);
    CHECK(r.max_rel < 1e-3);
  }
}

TEST_CASE("relu gradient") {
  Rng rng(2);
  Build b = [](TapeD& t, const std::vector<NodeId>& l) { return t.relu(l[0]); };
  auto r = finite_difference(b, {random_d(rng, 6, 6, 2)}, rng);
  CHECK(r.checked >= 20);
  CHECK(r.max_rel < 1e-3);
}

TEST_CASE("pool gradients") {
  Rng rng(3);
  for (PoolMode mode : {PoolMode::max, PoolMode::mean}) {
    for (int size : {3, 5}) {
      Build b = [&](TapeD& t, const std::vector<NodeId>& l) { return t.pool(l[0], size, mode); };
      auto r = finite_difference(b, {random_d(rng, 7, 6, 2)}, rng);
      CHECK(r.checked >= 20);
      CHECK(r.max_rel < 1e-3);
    }
  }
}

TEST_CASE("pyramid, concat and crop gradients") {
  Rng rng(4);
  const int sizes[] = {5, 3, 1};
  for (PoolMode mode : {PoolMode::max, PoolMode::mean}) {
    Build b = [&](TapeD& t, const std::vector<NodeId>& l) {
      return record_pyramid_pool(t, l[0], std::span<const int>(sizes), mode);
    };
    auto r = finite_difference(b, {random_d(rng, 6, 6, 2)}, rng);
    CHECK(r.checked >= 20);
    CHECK(r.max_rel < 1e-3);
  }
  Build c = [](TapeD& t, const std::vector<NodeId>& l) {
    const NodeId parts[] = {l[0], l[1]};
    return t.crop(t.concat(parts), 1, 2, 3, 2);
  };
  auto r = finite_difference(c, {random_d(rng, 5, 5, 2), random_d(rng, 5, 5, 1)}, rng);
  CHECK(r.checked >= 20);
  CHECK(r.max_rel < 1e-3);
}

TEST_CASE("sigmoid and binary cross-entropy gradients") {
  Rng rng(5);
  Build s = [](TapeD& t, const std::vector<NodeId>& l) { return t.sigmoid(l[0]); };
  auto r = finite_difference(s, {random_d(rng, 5, 5, 1)}, rng);
  CHECK(r.checked >= 20);
  CHECK(r.max_rel < 1e-3);
  for (double label : {0.0, 1.0}) {
    Build b = [&](TapeD& t, const std::vector<NodeId>& l) { return t.bce_with_logits(l[0], label); };
    auto rb = finite_difference(b, {random_d(rng, 5, 5, 1)}, rng);
    CHECK(rb.checked >= 20);
    CHECK(rb.max_rel < 1e-3);
  }
}

TEST_CASE("single linear layer gradient is exact") {
  Rng rng(6);
  const ConvGeometry g{1, 1, 4, 1};
  TapeD tape;
  TensorD x = random_d(rng, 1, 1, 4);
  const NodeId in = tape.leaf(x);
  const NodeId k = tape.leaf(random_d(rng, 1, 1, 4));
  const NodeId b = tape.leaf(TensorD(1, 1, 1));
  const NodeId out = tape.conv2d(in, k, b, g);
  TensorD seed(1, 1, 1, 0.75);
  tape.backward(out, seed);
  for (int c = 0; c < 4; ++c) CHECK(tape.grad(k)(0, 0, c) == 0.75 * x(0, 0, c));
  CHECK(tape.grad(b)(0, 0, 0) == 0.75);
}

TEST_CASE("tape rejects nodes without cached state") {
  TapeD tape;
  const NodeId a = tape.leaf(TensorD(2, 2, 1, 1.0));
  CHECK_THROWS_AS(tape.backward(a + 5), ArgumentError);
  CHECK_THROWS_AS(tape.value(a + 1), ArgumentError);
  const NodeId r = tape.relu(a);
  CHECK_THROWS_AS(tape.backward(r, TensorD(3, 2, 1)), ShapeError);
}

TEST_CASE("full tiny networks pass the gradient check") {
  NetworkSpec mean = NetworkSpec::tiny_proposed();
  mean.pooling_mode = PoolMode::mean;
  NetworkSpec after = NetworkSpec::tiny_proposed();
  after.placement = FourpPlacement::after_concat;
  for (const auto& spec : {NetworkSpec::tiny_baseline(), NetworkSpec::tiny_proposed(), mean, after}) {
    const auto report = grad_check(spec, 17, 4);
    CAPTURE(spec.canonical());
    CHECK(report.checked >= 20);
    CHECK(report.max_relative_error < 1e-3);
  }
}
