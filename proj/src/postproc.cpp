#include "stereo4p/postproc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "stereo4p/error.hpp"
#include "stereo4p/matchnet.hpp"
#include "stereo4p/parallel.hpp"
#include "stereo4p/simd.hpp"

namespace stereo4p {
namespace {

constexpr float kSentinel = CostVolume::kInvalidCost;
constexpr float kInf = std::numeric_limits<float>::infinity();

void check_guide(const CostVolume& v, const Tensor& guide, const char* what) {
  if (guide.height() != v.height() || guide.width() != v.width() || guide.channels() != 1) {
    throw ShapeError(std::string(what) + " guide " + guide.shape().str() +
                     " does not match cost volume " + std::to_string(v.height()) + "x" +
                     std::to_string(v.width()));
  }
}

struct Arms {
  std::vector<int> left, right, up, down;
};

Arms cross_arms(const Tensor& g, float tau, int max_arm) {
  const int h = g.height();
  const int w = g.width();
  Arms a;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  a.left.resize(n);
  a.right.resize(n);
  a.up.resize(n);
  a.down.resize(n);
  parallel_for(0, h, [&](std::ptrdiff_t yi) {
    const int y = static_cast<int>(yi);
    for (int x = 0; x < w; ++x) {
      const float c = g(y, x);
      auto grow = [&](int dy, int dx) {
        int k = 0;
        while (k < max_arm) {
          const int yy = y + (k + 1) * dy;
          const int xx = x + (k + 1) * dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) break;
          if (!(std::abs(g(yy, xx) - c) < tau)) break;
          ++k;
        }
        return k;
      };
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      a.left[i] = grow(0, -1);
      a.right[i] = grow(0, 1);
      a.up[i] = grow(-1, 0);
      a.down[i] = grow(1, 0);
    }
  });
  return a;
}

CostVolume cbca_once(const CostVolume& in, const Arms& arms) {
  const int h = in.height();
  const int w = in.width();
  const int nd = in.ndisp();
  // Row prefix sums of valid costs and of valid counts, per disparity.
  const std::size_t stride = static_cast<std::size_t>(w + 1) * nd;
  std::vector<double> sum(static_cast<std::size_t>(h) * stride, 0.0);
  std::vector<int> cnt(static_cast<std::size_t>(h) * stride, 0);
  parallel_for(0, h, [&](std::ptrdiff_t y) {
    double* s = sum.data() + y * stride;
    int* c = cnt.data() + y * stride;
    for (int x = 0; x < w; ++x) {
      const float* cost = in.costs(static_cast<int>(y), x);
      for (int d = 0; d < nd; ++d) {
        const bool ok = !CostVolume::is_invalid(cost[d]);
        s[(x + 1) * nd + d] = s[x * nd + d] + (ok ? cost[d] : 0.0);
        c[(x + 1) * nd + d] = c[x * nd + d] + ok;
      }
    }
  });
  CostVolume out(h, w, nd);
  parallel_for(0, h, [&](std::ptrdiff_t yi) {
    const int y = static_cast<int>(yi);
    std::vector<double> acc(static_cast<std::size_t>(nd));
    std::vector<int> n(static_cast<std::size_t>(nd));
    for (int x = 0; x < w; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      std::fill(n.begin(), n.end(), 0);
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      for (int yy = y - arms.up[p]; yy <= y + arms.down[p]; ++yy) {
        const std::size_t q = static_cast<std::size_t>(yy) * w + x;
        const int lo = x - arms.left[q];
        const int hi = x + arms.right[q] + 1;
        const double* s = sum.data() + yy * stride;
        const int* c = cnt.data() + yy * stride;
        for (int d = 0; d < nd; ++d) {
          acc[static_cast<std::size_t>(d)] += s[hi * nd + d] - s[lo * nd + d];
          n[static_cast<std::size_t>(d)] += c[hi * nd + d] - c[lo * nd + d];
        }
      }
      float* o = out.costs(y, x);
      for (int d = 0; d < nd; ++d) {
        const auto k = static_cast<std::size_t>(d);
        o[d] = n[k] == 0 ? kSentinel : static_cast<float>(acc[k] / n[k]);
      }
    }
  });
  return out;
}

// Penalty divisors for the step from (y-dy, x-dx) to (y, x) at every d.
void step_penalties(const Tensor& left, const Tensor& right, const SgmParams& prm, int y, int x,
                    int dy, int dx, int nd, float* p1, float* p2) {
  const int w = left.width();
  const bool edge_l = std::abs(left(y, x) - left(y - dy, x - dx)) > prm.V;
  for (int d = 0; d < nd; ++d) {
    const int xr = x - d;
    const int xr_prev = xr - dx;
    bool edge_r = false;
    if (xr >= 0 && xr < w && xr_prev >= 0 && xr_prev < w) {
      edge_r = std::abs(right(y, xr) - right(y - dy, xr_prev)) > prm.V;
    }
    float q = 1.0f;
    if (edge_l && edge_r) {
      q = prm.Q2;
    } else if (edge_l || edge_r) {
      q = prm.Q1;
    }
    p1[d] = prm.P1 / q;
    p2[d] = prm.P2 / q;
  }
}

// Path-start value: the cost itself.
float start_path(const float* cost, float* out, int nd) {
  float m = kInf;
  for (int d = 0; d < nd; ++d) {
    out[d] = cost[d];
    m = std::min(m, cost[d]);
  }
  return m;
}

// Accumulates one direction's path costs into `sum`.
void sgm_direction(const CostVolume& v, const Tensor& left, const Tensor& right,
                   const SgmParams& prm, SgmDirection dir, Tensor& sum) {
  const int h = v.height();
  const int w = v.width();
  const int nd = v.ndisp();
  const auto& k = simd::kernels();
  const std::size_t padded = static_cast<std::size_t>(nd) + 2;

  auto step = [&](int y, int x, const float* prev, float prev_min, float* out, float* p1,
                  float* p2) {
    const float* cost = v.costs(y, x);
    if (prev == nullptr || prev_min == kSentinel) return start_path(cost, out, nd);
    step_penalties(left, right, prm, y, x, dir.dy, dir.dx, nd, p1, p2);
    return k.sgm_step(cost, prev, prev_min, p1, p2, kSentinel, out,
                      static_cast<std::size_t>(nd));
  };
  auto add = [&](int y, int x, const float* l) {
    float* s = sum.pixel(y, x);
    k.add_inplace(s, l, static_cast<std::size_t>(nd));
  };

  if (dir.dy == 0) {
    parallel_for(0, h, [&](std::ptrdiff_t yi) {
      const int y = static_cast<int>(yi);
      std::vector<float> a(padded, kInf), b(padded, kInf), p1(nd), p2(nd);
      float* prev = nullptr;
      float prev_min = kInf;
      float* cur = a.data() + 1;
      float* other = b.data() + 1;
      const int x0 = dir.dx > 0 ? 0 : w - 1;
      for (int i = 0; i < w; ++i) {
        const int x = x0 + i * dir.dx;
        prev_min = step(y, x, prev, prev_min, cur, p1.data(), p2.data());
        add(y, x, cur);
        prev = cur;
        std::swap(cur, other);
      }
    });
    return;
  }

  std::vector<float> rows[2] = {std::vector<float>(padded * w, kInf),
                                std::vector<float>(padded * w, kInf)};
  std::vector<float> mins[2] = {std::vector<float>(w, kInf), std::vector<float>(w, kInf)};
  std::vector<float> p1(static_cast<std::size_t>(nd) * w), p2(static_cast<std::size_t>(nd) * w);
  const int y0 = dir.dy > 0 ? 0 : h - 1;
  for (int i = 0; i < h; ++i) {
    const int y = y0 + i * dir.dy;
    auto& cur = rows[i % 2];
    auto& cur_min = mins[i % 2];
    const auto& prev = rows[(i + 1) % 2];
    const auto& prev_min = mins[(i + 1) % 2];
    parallel_for(0, w, [&](std::ptrdiff_t xi) {
      const int x = static_cast<int>(xi);
      const int px = x - dir.dx;
      const bool has_prev = i > 0 && px >= 0 && px < w;
      float* out = cur.data() + padded * x + 1;
      cur_min[x] = step(y, x, has_prev ? prev.data() + padded * px + 1 : nullptr,
                        has_prev ? prev_min[px] : kInf, out, p1.data() + nd * x,
                        p2.data() + nd * x);
    });
    for (int x = 0; x < w; ++x) add(y, x, cur.data() + padded * x + 1);
  }
}

void check_disparity_guide(const DisparityMap& m, const Tensor& guide) {
  if (guide.height() != m.height() || guide.width() != m.width() || guide.channels() != 1) {
    throw ShapeError("guide " + guide.shape().str() + " does not match disparity map");
  }
}

}  // namespace

void SgmParams::validate() const {
  if (!(P1 > 0.0f) || !(P2 > P1)) throw ArgumentError("SGM penalties need P2 > P1 > 0");
  if (!(Q1 >= 1.0f) || !(Q2 >= 1.0f)) throw ArgumentError("SGM divisors Q1, Q2 must be >= 1");
  if (!(V > 0.0f)) throw ArgumentError("SGM intensity threshold V must be positive");
}

void CbcaParams::validate() const {
  if (iterations_1 < 0 || iterations_2 < 0) throw ArgumentError("CBCA iterations must be >= 0");
  if (max_arm < 1) throw ArgumentError("CBCA max arm length must be >= 1");
  if (!(intensity_threshold > 0.0f)) throw ArgumentError("CBCA intensity threshold must be positive");
}

std::span<const SgmDirection> sgm_directions_4() {
  static constexpr SgmDirection dirs[] = {{0, 1}, {0, -1}, {1, 0}, {-1, 0}};
  return dirs;
}

std::span<const SgmDirection> sgm_directions_8() {
  static constexpr SgmDirection dirs[] = {{0, 1},  {0, -1}, {1, 0},  {-1, 0},
                                          {1, 1},  {1, -1}, {-1, 1}, {-1, -1}};
  return dirs;
}

CostVolume cbca(const CostVolume& volume, const Tensor& guide, const CbcaParams& params,
                int iterations) {
  params.validate();
  check_guide(volume, guide, "CBCA");
  if (iterations < 0) throw ArgumentError("CBCA iterations must be >= 0");
  if (iterations == 0) return volume;
  const Arms arms = cross_arms(guide, params.intensity_threshold, params.max_arm);
  CostVolume out = cbca_once(volume, arms);
  for (int i = 1; i < iterations; ++i) out = cbca_once(out, arms);
  return out;
}

CostVolume sgm(const CostVolume& volume, const Tensor& left, const Tensor& right,
               const SgmParams& params, std::span<const SgmDirection> directions) {
  params.validate();
  check_guide(volume, left, "SGM left");
  check_guide(volume, right, "SGM right");
  if (directions.empty()) throw ArgumentError("SGM needs at least one direction");
  for (const auto& d : directions) {
    if ((d.dy == 0 && d.dx == 0) || std::abs(d.dy) > 1 || std::abs(d.dx) > 1) {
      throw ArgumentError("SGM directions must be unit steps");
    }
  }
  Tensor sum(volume.height(), volume.width(), volume.ndisp(), 0.0f);
  for (const auto& d : directions) sgm_direction(volume, left, right, params, d, sum);
  const float scale = 1.0f / static_cast<float>(directions.size());
  CostVolume out(std::move(sum));
  const float* in = volume.tensor().data();
  float* o = out.tensor().data();
  for (std::size_t i = 0; i < out.tensor().size(); ++i) {
    o[i] = CostVolume::is_invalid(in[i]) ? kSentinel : o[i] * scale;
  }
  return out;
}

DisparityMap wta(const CostVolume& volume) {
  DisparityMap out(volume.height(), volume.width());
  parallel_for(0, volume.height(), [&](std::ptrdiff_t yi) {
    const int y = static_cast<int>(yi);
    for (int x = 0; x < volume.width(); ++x) {
      const float* c = volume.costs(y, x);
      int best = -1;
      for (int d = 0; d < volume.ndisp(); ++d) {
        if (CostVolume::is_invalid(c[d])) continue;
        if (best < 0 || c[d] < c[best]) best = d;
      }
      if (best >= 0) out(y, x) = static_cast<float>(best);
    }
  });
  return out;
}

DisparityMap wta_right(const CostVolume& volume) {
  const int w = volume.width();
  DisparityMap out(volume.height(), w);
  parallel_for(0, volume.height(), [&](std::ptrdiff_t yi) {
    const int y = static_cast<int>(yi);
    for (int x = 0; x < w; ++x) {
      int best = -1;
      float best_cost = 0.0f;
      for (int d = 0; d < volume.ndisp() && x + d < w; ++d) {
        const float c = volume(y, x + d, d);
        if (CostVolume::is_invalid(c)) continue;
        if (best < 0 || c < best_cost) {
          best = d;
          best_cost = c;
        }
      }
      if (best >= 0) out(y, x) = static_cast<float>(best);
    }
  });
  return out;
}

DisparityMap left_right_check(const DisparityMap& left, const DisparityMap& right) {
  if (left.height() != right.height() || left.width() != right.width()) {
    throw ShapeError("left/right disparity maps differ in size");
  }
  const int h = left.height();
  const int w = left.width();
  DisparityMap checked(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float dl = left(y, x);
      if (!DisparityMap::is_valid(dl)) continue;
      const int xr = x - static_cast<int>(std::lround(dl));
      if (xr < 0 || xr >= w) continue;
      const float dr = right(y, xr);
      if (DisparityMap::is_valid(dr) && std::abs(dl - dr) <= 1.0f) checked(y, x) = dl;
    }
  }
  DisparityMap out = checked;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (DisparityMap::is_valid(checked(y, x))) continue;
      float fill = DisparityMap::kInvalid;
      for (int xx = x - 1; xx >= 0; --xx) {
        if (DisparityMap::is_valid(checked(y, xx))) {
          fill = checked(y, xx);
          break;
        }
      }
      for (int xx = x + 1; xx < w; ++xx) {
        if (DisparityMap::is_valid(checked(y, xx))) {
          fill = std::min(fill, checked(y, xx));
          break;
        }
      }
      out(y, x) = fill;
    }
  }
  return out;
}

DisparityMap subpixel_refine(const CostVolume& volume, const DisparityMap& disparity) {
  if (disparity.height() != volume.height() || disparity.width() != volume.width()) {
    throw ShapeError("disparity map does not match cost volume");
  }
  DisparityMap out = disparity;
  const int nd = volume.ndisp();
  for (int y = 0; y < volume.height(); ++y) {
    for (int x = 0; x < volume.width(); ++x) {
      const float v = disparity(y, x);
      if (!DisparityMap::is_valid(v)) continue;
      const int d = static_cast<int>(std::lround(v));
      if (d < 1 || d > nd - 2) continue;
      const double cm = volume(y, x, d - 1);
      const double c = volume(y, x, d);
      const double cp = volume(y, x, d + 1);
      if (CostVolume::is_invalid(static_cast<float>(cm)) ||
          CostVolume::is_invalid(static_cast<float>(cp)) ||
          CostVolume::is_invalid(static_cast<float>(c))) {
        continue;
      }
      const double denom = 2.0 * (cm + cp - 2.0 * c);
      double off = denom > 0.0 ? (cm - cp) / denom : 0.0;
      off = std::clamp(off, -0.5, 0.5);
      out(y, x) = static_cast<float>(d + off);
    }
  }
  return out;
}

DisparityMap median_filter(const DisparityMap& disparity, int radius) {
  if (radius < 0) throw ArgumentError("median radius must be >= 0");
  const int h = disparity.height();
  const int w = disparity.width();
  DisparityMap out(h, w);
  parallel_for(0, h, [&](std::ptrdiff_t yi) {
    const int y = static_cast<int>(yi);
    std::vector<float> win;
    for (int x = 0; x < w; ++x) {
      if (!DisparityMap::is_valid(disparity(y, x))) continue;
      win.clear();
      for (int yy = std::max(0, y - radius); yy <= std::min(h - 1, y + radius); ++yy) {
        for (int xx = std::max(0, x - radius); xx <= std::min(w - 1, x + radius); ++xx) {
          const float v = disparity(yy, xx);
          if (DisparityMap::is_valid(v)) win.push_back(v);
        }
      }
      const auto mid = win.begin() + static_cast<std::ptrdiff_t>((win.size() - 1) / 2);
      std::nth_element(win.begin(), mid, win.end());
      out(y, x) = *mid;
    }
  });
  return out;
}

DisparityMap bilateral_filter(const DisparityMap& disparity, const Tensor& guide,
                              float sigma_spatial, float sigma_range) {
  check_disparity_guide(disparity, guide);
  if (!(sigma_spatial > 0.0f) || !(sigma_range > 0.0f)) {
    throw ArgumentError("bilateral sigmas must be positive");
  }
  const int h = disparity.height();
  const int w = disparity.width();
  const int r = std::max(1, static_cast<int>(std::ceil(2.0f * sigma_spatial)));
  const double ks = -0.5 / (static_cast<double>(sigma_spatial) * sigma_spatial);
  const double kr = -0.5 / (static_cast<double>(sigma_range) * sigma_range);
  DisparityMap out(h, w);
  parallel_for(0, h, [&](std::ptrdiff_t yi) {
    const int y = static_cast<int>(yi);
    for (int x = 0; x < w; ++x) {
      if (!DisparityMap::is_valid(disparity(y, x))) continue;
      const double c = guide(y, x);
      double num = 0.0;
      double den = 0.0;
      for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy) {
        for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) {
          const float v = disparity(yy, xx);
          if (!DisparityMap::is_valid(v)) continue;
          const double dg = guide(yy, xx) - c;
          const double dist2 = (yy - y) * (yy - y) + (xx - x) * (xx - x);
          const double wgt = std::exp(ks * dist2 + kr * dg * dg);
          num += wgt * v;
          den += wgt;
        }
      }
      out(y, x) = static_cast<float>(num / den);
    }
  });
  return out;
}

PipelineConfig PipelineConfig::paper_tuned() { return PipelineConfig{}; }

PipelineConfig PipelineConfig::baseline() {
  PipelineConfig c;
  c.cbca.iterations_1 = 2;
  c.cbca.iterations_2 = 4;
  c.sgm_params = SgmParams{2.3f, 42.3f, 3.0f, 6.0f, 2.0f};
  return c;
}

PipelineConfig PipelineConfig::none() {
  PipelineConfig c;
  c.set_stages("none");
  return c;
}

void PipelineConfig::set_stages(const std::string& stages) {
  const bool all = stages == "all";
  cbca_1 = sgm = cbca_2 = subpixel = median = bilateral = all;
  lr_check = false;
  if (stages == "none" || all) return;
  std::stringstream ss(stages);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name == "cbca1") {
      cbca_1 = true;
    } else if (name == "sgm") {
      sgm = true;
    } else if (name == "cbca2") {
      cbca_2 = true;
    } else if (name == "lr") {
      lr_check = true;
    } else if (name == "subpixel") {
      subpixel = true;
    } else if (name == "median") {
      median = true;
    } else if (name == "bilateral") {
      bilateral = true;
    } else {
      throw ConfigError("unknown pipeline stage '" + name +
                        "' (expected none, all, cbca1, sgm, cbca2, lr, subpixel, median, bilateral)");
    }
  }
}

void PipelineConfig::validate() const {
  cbca.validate();
  sgm_params.validate();
  if (sgm_directions != 4 && sgm_directions != 8) throw ConfigError("sgm_directions must be 4 or 8");
  if (median_radius < 0) throw ConfigError("median_radius must be >= 0");
  if (!(bilateral_sigma_spatial > 0.0f) || !(bilateral_sigma_range > 0.0f)) {
    throw ConfigError("bilateral sigmas must be positive");
  }
}

PipelineConfig PipelineConfig::from_config(const KeyValueConfig& kv) {
  PipelineConfig c = paper_tuned();
  if (auto s = kv.find("stages")) c.set_stages(*s);
  c.cbca_1 = kv.get_bool("stage_cbca1", c.cbca_1);
  c.sgm = kv.get_bool("stage_sgm", c.sgm);
  c.cbca_2 = kv.get_bool("stage_cbca2", c.cbca_2);
  c.lr_check = kv.get_bool("stage_lr", c.lr_check);
  c.subpixel = kv.get_bool("stage_subpixel", c.subpixel);
  c.median = kv.get_bool("stage_median", c.median);
  c.bilateral = kv.get_bool("stage_bilateral", c.bilateral);
  c.cbca.iterations_1 = kv.get_int("cbca_num_iterations_1", c.cbca.iterations_1);
  c.cbca.iterations_2 = kv.get_int("cbca_num_iterations_2", c.cbca.iterations_2);
  c.cbca.intensity_threshold =
      static_cast<float>(kv.get_double("cbca_intensity", c.cbca.intensity_threshold));
  c.cbca.max_arm = kv.get_int("cbca_max_arm", c.cbca.max_arm);
  c.sgm_params.P1 = static_cast<float>(kv.get_double("sgm_P1", c.sgm_params.P1));
  c.sgm_params.P2 = static_cast<float>(kv.get_double("sgm_P2", c.sgm_params.P2));
  c.sgm_params.Q1 = static_cast<float>(kv.get_double("sgm_Q1", c.sgm_params.Q1));
  c.sgm_params.Q2 = static_cast<float>(kv.get_double("sgm_Q2", c.sgm_params.Q2));
  c.sgm_params.V = static_cast<float>(kv.get_double("sgm_V", c.sgm_params.V));
  c.sgm_directions = kv.get_int("sgm_directions", c.sgm_directions);
  c.median_radius = kv.get_int("median_radius", c.median_radius);
  c.bilateral_sigma_spatial =
      static_cast<float>(kv.get_double("bilateral_sigma_spatial", c.bilateral_sigma_spatial));
  c.bilateral_sigma_range =
      static_cast<float>(kv.get_double("bilateral_sigma_range", c.bilateral_sigma_range));
  try {
    c.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(kv.origin() + ": " + e.what());
  }
  return c;
}

KeyValueConfig PipelineConfig::to_config() const {
  KeyValueConfig kv;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  auto f = [](float v) {
    std::ostringstream os;
    os.precision(9);
    os << v;
    return os.str();
  };
  kv.set("stage_cbca1", b(cbca_1));
  kv.set("stage_sgm", b(sgm));
  kv.set("stage_cbca2", b(cbca_2));
  kv.set("stage_lr", b(lr_check));
  kv.set("stage_subpixel", b(subpixel));
  kv.set("stage_median", b(median));
  kv.set("stage_bilateral", b(bilateral));
  kv.set("cbca_num_iterations_1", std::to_string(cbca.iterations_1));
  kv.set("cbca_num_iterations_2", std::to_string(cbca.iterations_2));
  kv.set("cbca_intensity", f(cbca.intensity_threshold));
  kv.set("cbca_max_arm", std::to_string(cbca.max_arm));
  kv.set("sgm_P1", f(sgm_params.P1));
  kv.set("sgm_P2", f(sgm_params.P2));
  kv.set("sgm_Q1", f(sgm_params.Q1));
  kv.set("sgm_Q2", f(sgm_params.Q2));
  kv.set("sgm_V", f(sgm_params.V));
  kv.set("sgm_directions", std::to_string(sgm_directions));
  kv.set("median_radius", std::to_string(median_radius));
  kv.set("bilateral_sigma_spatial", f(bilateral_sigma_spatial));
  kv.set("bilateral_sigma_range", f(bilateral_sigma_range));
  return kv;
}

DisparityMap run_pipeline(const CostVolume& volume, const Tensor& left, const Tensor& right,
                          const PipelineConfig& config, PipelineReport* report) {
  config.validate();
  check_guide(volume, left, "pipeline left");
  check_guide(volume, right, "pipeline right");
  PipelineReport local;
  PipelineReport& rep = report ? *report : local;
  rep = PipelineReport{};
  using clock = std::chrono::steady_clock;
  auto timed = [&rep](const char* name, auto&& fn) {
    const auto t0 = clock::now();
    fn();
    rep.stage_seconds.emplace_back(name, std::chrono::duration<double>(clock::now() - t0).count());
  };

  CostVolume v = volume;
  auto run_cbca = [&](int iterations) {
    if (iterations == 0) return;
    v = cbca(v, left, config.cbca, iterations);
    rep.cbca_passes += iterations;
  };
  if (config.cbca_1) timed("cbca1", [&] { run_cbca(config.cbca.iterations_1); });
  if (config.sgm) {
    timed("sgm", [&] {
      const Tensor gl = normalize_image(left);
      const Tensor gr = normalize_image(right);
      v = sgm(v, gl, gr, config.sgm_params,
              config.sgm_directions == 8 ? sgm_directions_8() : sgm_directions_4());
    });
  }
  if (config.cbca_2) timed("cbca2", [&] { run_cbca(config.cbca.iterations_2); });
  DisparityMap d;
  timed("wta", [&] { d = wta(v); });
  rep.raw_wta = d;
  if (config.lr_check) timed("lr", [&] { d = left_right_check(d, wta_right(v)); });
  if (config.subpixel) timed("subpixel", [&] { d = subpixel_refine(v, d); });
  if (config.median) timed("median", [&] { d = median_filter(d, config.median_radius); });
  if (config.bilateral) {
    timed("bilateral", [&] {
      d = bilateral_filter(d, left, config.bilateral_sigma_spatial, config.bilateral_sigma_range);
    });
  }
  rep.final_volume = std::move(v);
  return d;
}

}  // namespace stereo4p
