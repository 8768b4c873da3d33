#include <doctest.h>

#include <vector>

#include "oracles.hpp"
#include "stereo4p/ops.hpp"
#include "stereo4p/parallel.hpp"

using namespace stereo4p;

namespace {

ConvLayer random_layer(Rng& rng, int k, int cin, int cout, Padding pad = Padding::valid) {
  ConvLayer l = ConvLayer::zeros({k, k, cin, cout, pad});
  for (auto& v : l.kernel.values()) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto& b : l.bias) b = static_cast<float>(rng.uniform(-1, 1));
  return l;
}

double max_rel(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, oracle::rel_error(a.data()[i], b.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("conv2d scalar and identity") {
  ConvLayer l = ConvLayer::zeros({1, 1, 1, 1});
  l.kernel(0, 0, 0) = 3.0f;
  l.bias[0] = 0.5f;
  Tensor in(1, 1, 1, 2.0f);
  CHECK(conv2d(in, l)(0, 0) == 6.5f);

  Rng rng(3);
  Tensor img = oracle::random_tensor(rng, 6, 5, 2);
  ConvLayer id = ConvLayer::zeros({3, 3, 2, 2, Padding::same});
  id.weight(1, 1, 0, 0) = 1.0f;
  id.weight(1, 1, 1, 1) = 1.0f;
  CHECK(conv2d(img, id) == img);
}

TEST_CASE("conv2d matches the quadruple loop") {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const int k = 1 + 2 * rng.uniform_int(0, 2);
    const int cin = rng.uniform_int(1, 4);
    const int cout = rng.uniform_int(1, 5);
    const Padding pad = trial % 2 ? Padding::same : Padding::valid;
    const int h = rng.uniform_int(k, 12), w = rng.uniform_int(k, 12);
    Tensor in = oracle::random_tensor(rng, h, w, cin);
    ConvLayer l = random_layer(rng, k, cin, cout, pad);
    CHECK(max_rel(conv2d(in, l), oracle::conv2d(in, l)) < 1e-6);
  }
}

TEST_CASE("conv2d is linear in its input") {
  Rng rng(5);
  Tensor x = oracle::random_tensor(rng, 7, 7, 2);
  Tensor y = oracle::random_tensor(rng, 7, 7, 2);
  ConvLayer l = random_layer(rng, 3, 2, 3);
  const float a = 0.7f, b = -1.3f;
  Tensor mix(x.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix.data()[i] = a * x.data()[i] + b * y.data()[i];
  Tensor lhs = conv2d(mix, l);
  Tensor cx = conv2d(x, l), cy = conv2d(y, l);
  for (int yy = 0; yy < lhs.height(); ++yy)
    for (int xx = 0; xx < lhs.width(); ++xx)
      for (int c = 0; c < lhs.channels(); ++c) {
        const double bias = l.bias[static_cast<std::size_t>(c)];
        const double rhs = a * (cx(yy, xx, c) - bias) + b * (cy(yy, xx, c) - bias) + bias;
        CHECK(std::abs(lhs(yy, xx, c) - rhs) <= 1e-5 * std::max(1.0, std::abs(rhs)));
      }
}

TEST_CASE("conv2d shape errors") {
  ConvLayer l = ConvLayer::zeros({3, 3, 2, 1});
  CHECK_THROWS_AS(conv2d(Tensor(5, 5, 1), l), ShapeError);
  CHECK_THROWS_AS(conv2d(Tensor(2, 5, 2), l), ShapeError);
  CHECK_THROWS_AS(ConvLayer::zeros({2, 3, 1, 1}), ArgumentError);
  CHECK(conv2d(Tensor(5, 6, 2), l).shape() == Shape{3, 4, 1});
}

TEST_CASE("relu") {
  Tensor t(1, 3, 1, std::vector<float>{-1, 0, 2});
  CHECK(relu(t) == Tensor(1, 3, 1, std::vector<float>{0, 0, 2}));
  Tensor pos(2, 2, 1, 4.0f);
  CHECK(relu(pos) == pos);
  CHECK(relu(Tensor(2, 2, 3, -1.0f)) == Tensor(2, 2, 3, 0.0f));
}

TEST_CASE("pool matches the window scan") {
  Rng rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const int size = 1 + 2 * rng.uniform_int(0, 4);
    Tensor in = oracle::random_tensor(rng, rng.uniform_int(1, 12), rng.uniform_int(1, 12),
                                      rng.uniform_int(1, 3));
    CHECK(pool(in, size, PoolMode::max) == oracle::pool(in, size, PoolMode::max));
    CHECK(max_rel(pool(in, size, PoolMode::mean), oracle::pool(in, size, PoolMode::mean)) < 1e-6);
  }
}

TEST_CASE("pool identities and monotonicity") {
  Rng rng(8);
  Tensor in = oracle::random_tensor(rng, 9, 9, 2);
  CHECK(pool(in, 1, PoolMode::max) == in);
  CHECK(pool(in, 1, PoolMode::mean) == in);
  Tensor flat(6, 7, 2, 0.3f);
  for (int s : {3, 5, 9, 27}) {
    CHECK(pool(flat, s, PoolMode::max) == flat);
    CHECK(pool(flat, s, PoolMode::mean) == flat);
  }
  Tensor up = in;
  for (auto& v : up.values()) v += static_cast<float>(rng.uniform(0, 0.5));
  Tensor a = pool(in, 5, PoolMode::max), b = pool(up, 5, PoolMode::max);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] <= b.data()[i]);
  CHECK_THROWS_AS(pool(in, 4, PoolMode::max), ArgumentError);
  CHECK_THROWS_AS(pool(in, 0, PoolMode::mean), ArgumentError);
  CHECK_THROWS_AS(pool(in, -3, PoolMode::mean), ArgumentError);
}

TEST_CASE("concat and split") {
  Rng rng(9);
  Tensor a = oracle::random_tensor(rng, 4, 4, 2);
  Tensor b = oracle::random_tensor(rng, 4, 4, 3);
  std::vector<Tensor> parts{a, b};
  Tensor c = concat_channels<float>(std::span<const Tensor>(parts));
  CHECK(c.shape() == Shape{4, 4, 5});
  CHECK(c(2, 1, 0) == a(2, 1, 0));
  CHECK(c(2, 1, 1) == a(2, 1, 1));
  CHECK(c(2, 1, 2) == b(2, 1, 0));
  const int counts[] = {2, 3};
  auto back = split_channels(c, std::span<const int>(counts));
  CHECK(back[0] == a);
  CHECK(back[1] == b);
  std::vector<Tensor> one{a};
  CHECK(concat_channels<float>(std::span<const Tensor>(one)) == a);
  std::vector<Tensor> bad{a, Tensor(3, 4, 1)};
  CHECK_THROWS_AS(concat_channels<float>(std::span<const Tensor>(bad)), ShapeError);
}

TEST_CASE("crop and pad") {
  Rng rng(10);
  Tensor t = oracle::random_tensor(rng, 5, 6, 2);
  Tensor p = pad(t, 2, 0.0f);
  CHECK(p.shape() == Shape{9, 10, 2});
  CHECK(p(0, 0, 1) == 0.0f);
  CHECK(crop(p, 2, 2, 5, 6) == t);
  CHECK_THROWS_AS(crop(t, 1, 1, 5, 6), ShapeError);
}

TEST_CASE("forward ops are deterministic across thread counts") {
  Rng rng(12);
  Tensor in = oracle::random_tensor(rng, 20, 23, 3);
  ConvLayer l = random_layer(rng, 3, 3, 8);
  set_thread_count(1);
  Tensor c1 = conv2d(in, l);
  Tensor p1 = pool(in, 7, PoolMode::mean);
  set_thread_count(4);
  CHECK(conv2d(in, l) == c1);
  CHECK(conv2d(in, l) == c1);
  CHECK(pool(in, 7, PoolMode::mean) == p1);
}

TEST_CASE("relu and max-pool backward") {
  Tensor x(1, 3, 1, std::vector<float>{-1, 0.5f, 2});
  Tensor up(1, 3, 1, 1.0f);
  Tensor g = relu_backward(x, up);
  CHECK(g(0, 0) == 0.0f);
  CHECK(g(0, 1) == 1.0f);

  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor in = oracle::random_tensor(rng, 8, 7, 2);
    Tensor u = oracle::random_tensor(rng, 8, 7, 2);
    const int s = 3 + 2 * (trial % 3), r = s / 2;
    Tensor got = pool_backward(in, s, PoolMode::max, u);
    // Brute force: each output sends its gradient to the first maximum
    // of its window in scan order.
    std::vector<double> want(in.size(), 0.0);
    for (int y = 0; y < 8; ++y)
      for (int x0 = 0; x0 < 7; ++x0)
        for (int c = 0; c < 2; ++c) {
          int by = -1, bx = -1;
          for (int yy = std::max(0, y - r); yy <= std::min(7, y + r); ++yy)
            for (int xx = std::max(0, x0 - r); xx <= std::min(6, x0 + r); ++xx)
              if (by < 0 || in(yy, xx, c) > in(by, bx, c)) by = yy, bx = xx;
          want[(static_cast<std::size_t>(by) * 7 + bx) * 2 + c] += u(y, x0, c);
        }
    double worst = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(got.data()[i] - want[i]));
    CHECK(worst < 1e-5);
  }
}
