#include "stereo4p/classic_costs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "stereo4p/error.hpp"
#include "stereo4p/parallel.hpp"

namespace stereo4p {
namespace {

void check_pair(const Tensor& left, const Tensor& right) {
  if (left.shape() != right.shape() || left.channels() != 1) {
    throw ShapeError("stereo pair must be two grayscale images of equal size, got " +
                     left.shape().str() + " and " + right.shape().str());
  }
}

void check_window(int window) {
  if (window < 1 || window % 2 == 0) {
    throw ArgumentError("matching window must be odd and positive, got " + std::to_string(window));
  }
}

bool out_of_range(const Tensor& left, int y, int x, int d) {
  return d < 0 || y < 0 || y >= left.height() || x < 0 || x >= left.width() || x - d < 0;
}

}  // namespace

float sad_cost(const Tensor& left, const Tensor& right, int window, int y, int x, int d) {
  check_pair(left, right);
  check_window(window);
  if (out_of_range(left, y, x, d)) return CostVolume::kInvalidCost;
  const int r = window / 2;
  const int w = left.width();
  double sum = 0.0;
  int n = 0;
  for (int yy = std::max(0, y - r); yy <= std::min(left.height() - 1, y + r); ++yy) {
    const int lo = std::max({0, x - r, d});
    const int hi = std::min({w - 1, x + r, w - 1 + d});
    for (int xx = lo; xx <= hi; ++xx) {
      sum += std::abs(static_cast<double>(left(yy, xx)) - right(yy, xx - d));
      ++n;
    }
  }
  return static_cast<float>(sum / n);
}

float census_cost(const Tensor& left, const Tensor& right, int window, int y, int x, int d) {
  check_pair(left, right);
  check_window(window);
  if (out_of_range(left, y, x, d)) return CostVolume::kInvalidCost;
  const int r = window / 2;
  const float cl = left(y, x);
  const float cr = right(y, x - d);
  int differ = 0;
  int bits = 0;
  for (int yy = std::max(0, y - r); yy <= std::min(left.height() - 1, y + r); ++yy) {
    const int lo = std::max({0, x - r, d});
    const int hi = std::min({left.width() - 1, x + r, left.width() - 1 + d});
    for (int xx = lo; xx <= hi; ++xx) {
      if (yy == y && xx == x) continue;
      differ += (left(yy, xx) < cl) != (right(yy, xx - d) < cr);
      ++bits;
    }
  }
  return bits == 0 ? 0.0f : static_cast<float>(static_cast<double>(differ) / bits);
}

float pixelwise_cost(const Tensor& left, const Tensor& right, int y, int x, int d) {
  check_pair(left, right);
  if (out_of_range(left, y, x, d)) return CostVolume::kInvalidCost;
  const int w = left.width();
  // Interval spanned by a pixel and its half-pixel neighbours.
  auto span = [w, y](const Tensor& img, int xx) {
    const double c = img(y, xx);
    const double m = xx > 0 ? 0.5 * (c + img(y, xx - 1)) : c;
    const double p = xx + 1 < w ? 0.5 * (c + img(y, xx + 1)) : c;
    return std::pair{std::min({m, c, p}), std::max({m, c, p})};
  };
  const double il = left(y, x);
  const double ir = right(y, x - d);
  const auto [rmin, rmax] = span(right, x - d);
  const auto [lmin, lmax] = span(left, x);
  const double dlr = std::max({0.0, il - rmax, rmin - il});
  const double drl = std::max({0.0, ir - lmax, lmin - ir});
  return static_cast<float>(std::min(dlr, drl));
}

CostFunction make_sad(int window) {
  check_window(window);
  return [window](const Tensor& l, const Tensor& r, int y, int x, int d) {
    return sad_cost(l, r, window, y, x, d);
  };
}

CostFunction make_census(int window) {
  check_window(window);
  return [window](const Tensor& l, const Tensor& r, int y, int x, int d) {
    return census_cost(l, r, window, y, x, d);
  };
}

CostFunction make_pixelwise() { return &pixelwise_cost; }

CostVolume classic_cost_volume(const CostFunction& cost, const Tensor& left, const Tensor& right,
                               int ndisp) {
  check_pair(left, right);
  CostVolume out(left.height(), left.width(), ndisp);
  parallel_for(0, left.height(), [&](int y) {
    for (int x = 0; x < left.width(); ++x) {
      for (int d = 0; d < ndisp; ++d) out(y, x, d) = cost(left, right, y, x, d);
    }
  });
  return out;
}

std::string CostProfile::csv() const {
  std::string out = "d,cost\n";
  char buf[64];
  for (std::size_t d = 0; d < normalized.size(); ++d) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", d, static_cast<double>(normalized[d]));
    out += buf;
  }
  return out;
}

CostProfile cost_profile(std::span<const float> costs, int y, int x) {
  CostProfile p;
  p.y = y;
  p.x = x;
  p.raw.assign(costs.begin(), costs.end());
  float lo = std::numeric_limits<float>::infinity();
  float hi = -lo;
  for (float c : costs) {
    if (CostVolume::is_invalid(c)) continue;
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  p.normalized.resize(costs.size());
  for (std::size_t d = 0; d < costs.size(); ++d) {
    const float c = costs[d];
    if (CostVolume::is_invalid(c)) {
      p.normalized[d] = 1.0f;
    } else if (hi > lo) {
      p.normalized[d] = static_cast<float>((static_cast<double>(c) - lo) / (static_cast<double>(hi) - lo));
    } else {
      p.normalized[d] = 0.0f;
    }
  }
  return p;
}

CostProfile cost_profile(const CostFunction& cost, const Tensor& left, const Tensor& right, int y,
                         int x, int ndisp) {
  if (ndisp < 1) throw ArgumentError("profile needs at least one disparity");
  std::vector<float> c(static_cast<std::size_t>(ndisp));
  for (int d = 0; d < ndisp; ++d) c[static_cast<std::size_t>(d)] = cost(left, right, y, x, d);
  return cost_profile(c, y, x);
}

int count_local_minima(std::span<const float> v) {
  const std::size_t n = v.size();
  if (n < 2) return static_cast<int>(n);
  int count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool left_ok = i == 0 || v[i] < v[i - 1];
    const bool right_ok = i + 1 == n || v[i] < v[i + 1];
    count += left_ok && right_ok;
  }
  return count;
}

}  // namespace stereo4p
