#include "stereo4p/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "stereo4p/error.hpp"
#include "stereo4p/file_util.hpp"

namespace stereo4p {
namespace {

void check_same(const DisparityMap& a, const DisparityMap& b, std::span<const std::uint8_t> mask) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("disparity " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                     " vs ground truth " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
  }
  if (!mask.empty() && mask.size() != a.size()) throw ShapeError("evaluation mask size mismatch");
}

enum class Verdict { unevaluated, good, bad };

Verdict judge(float d, float g, double threshold, bool masked_out) {
  if (masked_out || !DisparityMap::is_valid(g)) return Verdict::unevaluated;
  if (!DisparityMap::is_valid(d)) return Verdict::bad;
  return std::abs(static_cast<double>(d) - g) > threshold ? Verdict::bad : Verdict::good;
}

}  // namespace

BadPixelStats bad_pixel_stats(const DisparityMap& disparity, const DisparityMap& gt,
                              double threshold, std::span<const std::uint8_t> mask) {
  check_same(disparity, gt, mask);
  BadPixelStats s;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const Verdict v = judge(disparity.values()[i], gt.values()[i], threshold, !mask.empty() && mask[i] == 0);
    if (v == Verdict::unevaluated) continue;
    ++s.evaluated;
    s.bad += v == Verdict::bad;
  }
  return s;
}

double weighted_average(std::span<const double> errors, std::span<const double> weights) {
  if (errors.size() != weights.size()) {
    throw ArgumentError(std::to_string(errors.size()) + " errors but " + std::to_string(weights.size()) +
                        " weights");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw ArgumentError("sample weights must be nonnegative");
    num += weights[i] * errors[i];
    den += weights[i];
  }
  if (den == 0.0) throw ArgumentError("sample weights are all zero");
  return num / den;
}

std::map<std::string, double> parse_sample_weights(const std::string& text, const std::string& origin) {
  std::map<std::string, double> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string name;
    if (!(ls >> name)) continue;
    double w = 0.0;
    std::string extra;
    if (!(ls >> w) || (ls >> extra) || !(w >= 0.0)) {
      throw FormatError(origin + ":" + std::to_string(line_no) + ": expected `name weight` with weight >= 0");
    }
    out[name] = w;
  }
  return out;
}

std::map<std::string, double> read_sample_weights(const std::filesystem::path& path) {
  return parse_sample_weights(read_file_bytes(path), path.string());
}

std::string metrics_csv(std::span<const MetricRow> rows) {
  std::string out = "sample,error,weight\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", r.error, r.weight);
    out += r.sample + buf;
  }
  return out;
}

Gray8 render_disparity(const DisparityMap& disparity, int ndisp) {
  if (ndisp < 1) throw ArgumentError("render needs ndisp >= 1");
  Gray8 out(disparity.height(), disparity.width());
  for (std::size_t i = 0; i < disparity.size(); ++i) {
    const float d = disparity.values()[i];
    if (!DisparityMap::is_valid(d)) continue;
    const double g = std::floor(256.0 * d / ndisp);
    out.pixels[i] = static_cast<std::uint8_t>(std::clamp(g, 0.0, 255.0));
  }
  return out;
}

Gray8 render_error(const DisparityMap& disparity, const DisparityMap& gt, double threshold,
                   std::span<const std::uint8_t> mask) {
  check_same(disparity, gt, mask);
  Gray8 out(gt.height(), gt.width());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    switch (judge(disparity.values()[i], gt.values()[i], threshold, !mask.empty() && mask[i] == 0)) {
      case Verdict::unevaluated: out.pixels[i] = kRenderUnevaluated; break;
      case Verdict::good: out.pixels[i] = kRenderCorrect; break;
      case Verdict::bad: out.pixels[i] = kRenderBad; break;
    }
  }
  return out;
}

}  // namespace stereo4p
