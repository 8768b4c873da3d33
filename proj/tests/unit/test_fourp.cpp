#include <doctest.h>

#include "oracles.hpp"
#include "stereo4p/fourp.hpp"

using namespace stereo4p;

TEST_CASE("size vector validation") {
  CHECK(PoolSizeVector::proposed().str() == "27,9,3,1");
  CHECK(PoolSizeVector::parse("5, 3,1") == PoolSizeVector{5, 3, 1});
  CHECK_THROWS_AS(PoolSizeVector(std::vector<int>{}), ArgumentError);
  CHECK_THROWS_AS((PoolSizeVector{4, 1}), ArgumentError);
  CHECK_THROWS_AS((PoolSizeVector{3, 5}), ArgumentError);
  CHECK_THROWS_AS((PoolSizeVector{3, 3}), ArgumentError);
  CHECK_THROWS_AS((PoolSizeVector{3, -1}), ArgumentError);
  CHECK_THROWS_AS(PoolSizeVector::parse("9,x"), ArgumentError);
}

TEST_CASE("size [1] is the identity") {
  Rng rng(1);
  Tensor f = oracle::random_tensor(rng, 9, 11, 3);
  CHECK(fourp(f, PoolSizeVector{1}, PoolMode::max) == f);
  CHECK(fourp(f, PoolSizeVector{1}, PoolMode::mean) == f);
}

TEST_CASE("slabs equal single-scale pools") {
  Rng rng(2);
  const int C = 3;
  Tensor f = oracle::random_tensor(rng, 16, 16, C);
  for (PoolMode mode : {PoolMode::max, PoolMode::mean}) {
    Tensor out = fourp(f, PoolSizeVector{5, 3, 1}, mode);
    CHECK(out.shape() == Shape{16, 16, 3 * C});
    const int counts[] = {C, C, C};
    auto slabs = split_channels(out, std::span<const int>(counts));
    CHECK(slabs[0] == pool(f, 5, mode));
    CHECK(slabs[1] == pool(f, 3, mode));
    CHECK(slabs[2] == f);
  }
  Tensor big = oracle::random_tensor(rng, 12, 20, 2);
  CHECK(fourp(big, PoolSizeVector::proposed(), PoolMode::max).shape() == Shape{12, 20, 8});
}

TEST_CASE("permuting sizes permutes slabs") {
  Rng rng(3);
  Tensor f = oracle::random_tensor(rng, 10, 8, 2);
  const int a[] = {9, 3, 1};
  const int b[] = {3, 9, 1};
  const int counts[] = {2, 2, 2};
  auto sa = split_channels(pyramid_pool(f, std::span<const int>(a), PoolMode::max),
                           std::span<const int>(counts));
  auto sb = split_channels(pyramid_pool(f, std::span<const int>(b), PoolMode::max),
                           std::span<const int>(counts));
  CHECK(sa[0] == sb[1]);
  CHECK(sa[1] == sb[0]);
  CHECK(sa[2] == sb[2]);
}

TEST_CASE("impulse response covers the clipped 27x27 neighbourhood") {
  Tensor f(40, 40, 1, 0.0f);
  for (auto [iy, ix] : {std::pair{20, 20}, std::pair{3, 5}}) {
    f.fill(0.0f);
    f(iy, ix) = 1.0f;
    Tensor out = fourp(f, PoolSizeVector::proposed(), PoolMode::max);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x) {
        const bool inside = std::abs(y - iy) <= 13 && std::abs(x - ix) <= 13;
        CHECK((out(y, x, 0) != 0.0f) == inside);
      }
  }
}

TEST_CASE("fifty random tensors keep their resolution") {
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const int h = rng.uniform_int(1, 20), w = rng.uniform_int(1, 20), c = rng.uniform_int(1, 4);
    Tensor f = oracle::random_tensor(rng, h, w, c);
    CHECK(fourp(f, PoolSizeVector::proposed(), PoolMode::max).shape() == Shape{h, w, 4 * c});
    CHECK(fourp(f, PoolSizeVector{1}, PoolMode::max) == f);
  }
}
