#include "stereo4p/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "stereo4p/error.hpp"
#include "stereo4p/io.hpp"
#include "stereo4p/random.hpp"

namespace stereo4p {
namespace {

// Bilinear value noise over a lattice of spacing `step`; coordinates may
// run `pad` pixels past either side horizontally.
class ValueNoise {
 public:
  ValueNoise(int height, int width, int pad, int step, Rng& rng)
      : step_(step), pad_(pad), rows_(height / step + 2), cols_((width + 2 * pad) / step + 2),
        lattice_(static_cast<std::size_t>(rows_) * cols_) {
    for (auto& v : lattice_) v = static_cast<float>(rng.uniform() - 0.5);
  }

  double operator()(int y, int u) const {
    const double fy = static_cast<double>(y) / step_;
    const double fx = static_cast<double>(u + pad_) / step_;
    const int y0 = static_cast<int>(fy);
    const int x0 = static_cast<int>(fx);
    const double ty = fy - y0;
    const double tx = fx - x0;
    auto at = [this](int r, int c) { return static_cast<double>(lattice_[static_cast<std::size_t>(r) * cols_ + c]); };
    const double top = at(y0, x0) * (1 - tx) + at(y0, x0 + 1) * tx;
    const double bottom = at(y0 + 1, x0) * (1 - tx) + at(y0 + 1, x0 + 1) * tx;
    return top * (1 - ty) + bottom * ty;
  }

 private:
  int step_, pad_, rows_, cols_;
  std::vector<float> lattice_;
};

// Sum of octaves around a mean intensity.
class Texture {
 public:
  Texture(int height, int width, int pad, bool weak, float weak_contrast, Rng& rng) {
    if (weak) {
      octaves_.emplace_back(ValueNoise(height, width, pad, 8, rng), 0.6);
      octaves_.emplace_back(ValueNoise(height, width, pad, 16, rng), 0.4);
      contrast_ = weak_contrast;
    } else {
      octaves_.emplace_back(ValueNoise(height, width, pad, 1, rng), 0.35);
      octaves_.emplace_back(ValueNoise(height, width, pad, 2, rng), 0.3);
      octaves_.emplace_back(ValueNoise(height, width, pad, 4, rng), 0.2);
      octaves_.emplace_back(ValueNoise(height, width, pad, 8, rng), 0.15);
      contrast_ = 1.0;
    }
    mean_ = rng.uniform(0.3, 0.7);
  }

  double operator()(int y, int u) const {
    double s = 0.0;
    for (const auto& [noise, amp] : octaves_) s += amp * noise(y, u);
    return mean_ + contrast_ * s;
  }

 private:
  std::vector<std::pair<ValueNoise, double>> octaves_;
  double contrast_ = 1.0;
  double mean_ = 0.5;
};

struct Layer {
  int y0, x0, y1, x1;  // half-open rectangle in left-image coordinates
  int disparity;
  Texture texture;

  bool contains(int y, int x) const { return y >= y0 && y < y1 && x >= x0 && x < x1; }
};

float noisy(double v, double sigma, Rng& rng) {
  if (sigma > 0.0) v += sigma * rng.normal();
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

}  // namespace

void StereoSample::validate() const {
  if (left.shape() != right.shape() || left.channels() != 1) {
    throw ShapeError(name + ": left " + left.shape().str() + " and right " + right.shape().str() +
                     " must be equal-sized grayscale images");
  }
  if (gt && (gt->height() != left.height() || gt->width() != left.width())) {
    throw ShapeError(name + ": ground truth size does not match the images");
  }
  if (!nonoccluded.empty() && nonoccluded.size() != left.size()) {
    throw ShapeError(name + ": occlusion mask size does not match the images");
  }
  if (ndisp < 1) throw ShapeError(name + ": ndisp must be positive");
}

StereoSample load_middlebury(const std::filesystem::path& dir, bool half) {
  StereoSample s;
  s.name = dir.filename().string();
  if (s.name.empty()) s.name = dir.parent_path().filename().string();
  s.left = read_image(dir / "im0.png");
  s.right = read_image(dir / "im1.png");
  s.ndisp = read_calib(dir / "calib.txt").ndisp;
  if (std::filesystem::exists(dir / "disp0GT.pfm")) s.gt = read_pfm(dir / "disp0GT.pfm");
  if (std::filesystem::exists(dir / "mask0nocc.png")) {
    const Tensor m = read_image(dir / "mask0nocc.png");
    s.nonoccluded.resize(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) s.nonoccluded[i] = m.data()[i] > 0.99f;
  }
  if (half) {
    const int h = s.left.height();
    const int w = s.left.width();
    s.left = downsample_half(s.left);
    s.right = downsample_half(s.right);
    if (s.gt) s.gt = downsample_half(*s.gt);
    if (!s.nonoccluded.empty()) s.nonoccluded = downsample_half(s.nonoccluded, h, w);
    s.ndisp = (s.ndisp + 1) / 2;
  }
  s.validate();
  return s;
}

std::vector<StereoSample> load_middlebury_set(const std::filesystem::path& root, bool half) {
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(root)) {
    if (e.is_directory() && std::filesystem::exists(e.path() / "calib.txt")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw IoError(root.string() + ": no sample directories with calib.txt");
  std::vector<StereoSample> out;
  for (const auto& d : dirs) out.push_back(load_middlebury(d, half));
  return out;
}

StereoSample make_synthetic_pair(const SyntheticOptions& o, std::uint64_t seed) {
  if (o.height < 16 || o.width < 2 * o.max_disparity + 16 || o.max_disparity < 2 || o.objects < 0) {
    throw ArgumentError("synthetic scene too small for the disparity range");
  }
  Rng rng(seed);
  const int h = o.height;
  const int w = o.width;
  const int pad = o.max_disparity + 1;
  std::vector<Layer> layers;
  const int bg = rng.uniform_int(0, std::min(3, o.max_disparity - 2));
  layers.push_back({0, -pad, h, w + pad, bg, Texture(h, w, pad, false, o.weak_contrast, rng)});
  if (o.weak_regions) {
    // Listed before the background so that it wins at equal disparity.
    const int bh = std::max(1, h / 4);
    const int by = rng.uniform_int(0, h - bh);
    layers.insert(layers.begin(),
                  Layer{by, -pad, by + bh, w + pad, bg, Texture(h, w, pad, true, o.weak_contrast, rng)});
  }
  const int weak_count = o.weak_regions ? (o.objects + 2) / 3 : 0;
  for (int i = 0; i < o.objects; ++i) {
    const bool weak = i < weak_count;
    const int oh = rng.uniform_int(std::min(12, h / 2), std::max(12, h / 2));
    const int ow = weak ? rng.uniform_int(16, std::max(16, std::min(36, w / 2)))
                        : rng.uniform_int(12, std::max(12, w / 2));
    const int y0 = rng.uniform_int(0, h - oh);
    const int x0 = rng.uniform_int(0, w - ow);
    const int d = rng.uniform_int(bg + 2, o.max_disparity);
    layers.push_back({y0, x0, y0 + oh, x0 + ow, d, Texture(h, w, pad, weak, o.weak_contrast, rng)});
  }
  // Nearest first; equal disparities keep generation order.
  std::stable_sort(layers.begin(), layers.end(),
                   [](const Layer& a, const Layer& b) { return a.disparity > b.disparity; });

  auto top_left = [&](int y, int x) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].contains(y, x)) return i;
    }
    return layers.size() - 1;
  };
  auto top_right = [&](int y, int xr) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].contains(y, xr + layers[i].disparity)) return i;
    }
    return layers.size() - 1;
  };

  StereoSample s;
  s.name = "synthetic_" + std::to_string(seed);
  s.left = Tensor(h, w, 1);
  s.right = Tensor(h, w, 1);
  s.gt = DisparityMap(h, w);
  s.nonoccluded.assign(static_cast<std::size_t>(h) * w, 0);
  s.ndisp = o.max_disparity + 1;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t l = top_left(y, x);
      const Layer& L = layers[l];
      s.left(y, x) = static_cast<float>(L.texture(y, x));
      (*s.gt)(y, x) = static_cast<float>(L.disparity);
      const int xr = x - L.disparity;
      s.nonoccluded[static_cast<std::size_t>(y) * w + x] = xr >= 0 && top_right(y, xr) == l;
      const Layer& R = layers[top_right(y, x)];
      s.right(y, x) = static_cast<float>(R.texture(y, x + R.disparity));
    }
  }
  for (auto& v : s.left.values()) v = noisy(v, o.noise, rng);
  for (auto& v : s.right.values()) v = noisy(v, o.noise, rng);
  return s;
}

std::vector<StereoSample> make_synthetic_suite(int count, const SyntheticOptions& options,
                                               std::uint64_t seed) {
  std::vector<StereoSample> out;
  Rng rng(seed);
  for (int i = 0; i < count; ++i) out.push_back(make_synthetic_pair(options, rng.next()));
  return out;
}

StereoSample make_shifted_pair(int height, int width, int shift, int ndisp, std::uint64_t seed) {
  if (shift < 0 || shift >= ndisp || shift >= width) throw ArgumentError("shift outside the disparity range");
  Rng rng(seed);
  const Texture t(height, width, shift + 1, false, 0.0f, rng);
  StereoSample s;
  s.name = "shift_" + std::to_string(shift);
  s.left = Tensor(height, width, 1);
  s.right = Tensor(height, width, 1);
  s.gt = DisparityMap(height, width, static_cast<float>(shift));
  s.nonoccluded.assign(static_cast<std::size_t>(height) * width, 0);
  s.ndisp = ndisp;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      s.left(y, x) = noisy(t(y, x), 0.0, rng);
      s.right(y, x) = noisy(t(y, x + shift), 0.0, rng);
      s.nonoccluded[static_cast<std::size_t>(y) * width + x] = x >= shift;
    }
  }
  return s;
}

std::vector<std::uint8_t> interior_mask(const StereoSample& s, int margin) {
  if (!s.gt) throw ArgumentError(s.name + ": interior mask needs ground truth");
  const DisparityMap& g = *s.gt;
  const int h = g.height();
  const int w = g.width();
  std::vector<std::uint8_t> m(static_cast<std::size_t>(h) * w, 0);
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const float c = g(y, x);
      if (!DisparityMap::is_valid(c) || (!s.nonoccluded.empty() && !s.nonoccluded[i])) continue;
      if (x - static_cast<int>(std::ceil(c)) < margin) continue;
      bool flat = true;
      for (int yy = y - margin; yy <= y + margin && flat; ++yy) {
        for (int xx = x - margin; xx <= x + margin; ++xx) {
          if (g(yy, xx) != c) {
            flat = false;
            break;
          }
        }
      }
      m[i] = flat;
    }
  }
  return m;
}

}  // namespace stereo4p
