#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stereo4p/classic_costs.hpp"

using namespace stereo4p;

namespace {

double sad_oracle(const Tensor& l, const Tensor& r, int win, int y, int x, int d) {
  double s = 0.0;
  int n = 0;
  for (int dy = -win / 2; dy <= win / 2; ++dy)
    for (int dx = -win / 2; dx <= win / 2; ++dx) {
      const int yy = y + dy, xl = x + dx, xr = x + dx - d;
      if (yy < 0 || yy >= l.height() || xl < 0 || xl >= l.width() || xr < 0 || xr >= l.width())
        continue;
      s += std::abs(static_cast<double>(l(yy, xl)) - r(yy, xr));
      ++n;
    }
  return s / n;
}

double census_oracle(const Tensor& l, const Tensor& r, int win, int y, int x, int d) {
  int differ = 0, bits = 0;
  for (int dy = -win / 2; dy <= win / 2; ++dy)
    for (int dx = -win / 2; dx <= win / 2; ++dx) {
      if (dy == 0 && dx == 0) continue;
      const int yy = y + dy, xl = x + dx, xr = x + dx - d;
      if (yy < 0 || yy >= l.height() || xl < 0 || xl >= l.width() || xr < 0 || xr >= l.width())
        continue;
      const bool bl = l(yy, xl) < l(y, x);
      const bool br = r(yy, xr) < r(y, x - d);
      differ += bl != br;
      ++bits;
    }
  return bits == 0 ? 0.0 : static_cast<double>(differ) / bits;
}

}  // namespace

TEST_CASE("SAD") {
  Rng rng(1);
  Tensor a = oracle::random_tensor(rng, 20, 24, 1, 0, 1);
  Tensor b = oracle::random_tensor(rng, 20, 24, 1, 0, 1);
  CHECK(sad_cost(a, a, 11, 5, 5, 0) == 0.0f);
  CHECK(sad_cost(Tensor(8, 8, 1, 1.0f), Tensor(8, 8, 1, 0.0f), 5, 4, 4, 1) == 1.0f);
  for (int t = 0; t < 100; ++t) {
    const int y = rng.uniform_int(0, 19), x = rng.uniform_int(0, 23), d = rng.uniform_int(0, x);
    CHECK(oracle::rel_error(sad_cost(a, b, 11, y, x, d), sad_oracle(a, b, 11, y, x, d)) < 1e-6);
    CHECK(sad_cost(a, b, 1, y, x, d) == std::abs(a(y, x) - b(y, x - d)));
  }
  CHECK(sad_cost(a, b, 11, 3, 2, 3) == CostVolume::kInvalidCost);
}

TEST_CASE("census") {
  Rng rng(2);
  Tensor a = oracle::random_tensor(rng, 20, 24, 1, 0, 1);
  Tensor b = oracle::random_tensor(rng, 20, 24, 1, 0, 1);
  CHECK(census_cost(a, a, 9, 10, 10, 0) == 0.0f);
  Tensor shifted = a;
  for (auto& v : shifted.values()) v += 0.25f;
  Tensor remapped = a;
  for (auto& v : remapped.values()) v = v * v * v + 2.0f * v;
  for (int t = 0; t < 100; ++t) {
    const int y = rng.uniform_int(0, 19), x = rng.uniform_int(0, 23), d = rng.uniform_int(0, x);
    CHECK(census_cost(a, b, 9, y, x, d) == static_cast<float>(census_oracle(a, b, 9, y, x, d)));
    CHECK(census_cost(a, shifted, 9, y, x, 0) == 0.0f);
    CHECK(census_cost(a, b, 9, y, x, d) == census_cost(remapped, b, 9, y, x, d));
  }
  CHECK(census_cost(a, b, 9, 0, 0, 1) == CostVolume::kInvalidCost);
  CHECK_THROWS_AS(census_cost(a, b, 4, 5, 5, 0), ArgumentError);
}

TEST_CASE("pixelwise") {
  Rng rng(3);
  Tensor a = oracle::random_tensor(rng, 6, 10, 1, 0, 1);
  for (int x = 0; x < 10; ++x) CHECK(pixelwise_cost(a, a, 2, x, 0) == 0.0f);
  CHECK(pixelwise_cost(Tensor(4, 4, 1, 0.75f), Tensor(4, 4, 1, 0.5f), 1, 2, 1) == 0.25f);
  // A step edge sampled half a pixel later.
  Tensor l(1, 6, 1, std::vector<float>{0, 0, 0, 1, 1, 1});
  Tensor r(1, 6, 1, std::vector<float>{0, 0, 0, 0.5f, 1, 1});
  for (int x = 0; x < 6; ++x) CHECK(pixelwise_cost(l, r, 0, x, 0) == 0.0f);
  CHECK(pixelwise_cost(l, r, 0, 1, 2) == CostVolume::kInvalidCost);
}

TEST_CASE("profiles") {
  const float flat[] = {0.4f, 0.4f, 0.4f};
  for (float v : cost_profile(flat, 0, 0).normalized) CHECK(v == 0.0f);
  const float c[] = {3, 1, 2, CostVolume::kInvalidCost};
  const auto p = cost_profile(c, 1, 2);
  CHECK(p.normalized == std::vector<float>{1.0f, 0.0f, 0.5f, 1.0f});
  CHECK(p.csv() == "d,cost\n0,1\n1,0\n2,0.5\n3,1\n");

  Rng rng(4);
  Tensor img = oracle::random_tensor(rng, 30, 40, 1, 0, 1);
  for (const auto& fn : {make_sad(5), make_census(9), make_pixelwise()}) {
    const auto q = cost_profile(fn, img, img, 15, 30, 12);
    CHECK(q.raw[0] == 0.0f);
    CHECK(*std::min_element(q.raw.begin(), q.raw.end()) >= 0.0f);
    CHECK(*std::min_element(q.normalized.begin(), q.normalized.end()) == 0.0f);
    CHECK(*std::max_element(q.normalized.begin(), q.normalized.end()) == 1.0f);
  }
}

TEST_CASE("local minima counting") {
  const float a[] = {1, 0, 1, 0.5f, 2, 3, 2.5f};
  CHECK(count_local_minima(a) == 3);
  const float b[] = {0, 1, 2};
  CHECK(count_local_minima(b) == 1);
  const float tie[] = {1, 0, 0, 1};
  CHECK(count_local_minima(tie) == 0);
}

TEST_CASE("a larger census window gives fewer local minima") {
  // A flat, faintly noisy square inside smooth structure. The 11x11 window
  // at the square's centre sees only noise; the 37x37 window reaches the
  // structure around it.
  const int H = 80, W = 120, shift = 6;
  auto scene = [](double y, double x) {
    return 0.5 + 0.2 * std::sin(2 * M_PI * x / 23) * std::cos(2 * M_PI * y / 31) +
           0.1 * std::sin(2 * M_PI * (x + y) / 17);
  };
  auto flat = [](int y, int x) { return y >= 30 && y < 50 && x >= 50 && x < 72; };
  Rng rng(31);
  Tensor l(H, W, 1), r(H, W, 1);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      l(y, x) = static_cast<float>((flat(y, x) ? 0.5 : scene(y, x)) + rng.uniform(-0.005, 0.005));
      const int xs = x + shift;
      r(y, x) = static_cast<float>((flat(y, xs) ? 0.5 : scene(y, xs)) + rng.uniform(-0.005, 0.005));
    }
  const auto small = make_census(kSmallWindow), large = make_census(kLargeWindow);
  int ns = 0, nl = 0;
  for (int y = 36; y < 44; ++y)
    for (int x = 56; x < 66; ++x) {
      ns += count_local_minima(cost_profile(small, l, r, y, x, 17).raw);
      nl += count_local_minima(cost_profile(large, l, r, y, x, 17).raw);
    }
  CAPTURE(ns);
  CAPTURE(nl);
  CHECK(nl < ns);
}

TEST_CASE("cost volume from a cost function") {
  Rng rng(5);
  Tensor a = oracle::random_tensor(rng, 7, 9, 1, 0, 1), b = oracle::random_tensor(rng, 7, 9, 1, 0, 1);
  CostVolume v = classic_cost_volume(make_sad(3), a, b, 4);
  CHECK(v(3, 5, 2) == sad_cost(a, b, 3, 3, 5, 2));
  CHECK(v(3, 1, 2) == CostVolume::kInvalidCost);
  CHECK_THROWS_AS(classic_cost_volume(make_sad(3), a, Tensor(7, 8, 1), 4), ShapeError);
}
