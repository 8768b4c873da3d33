#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stereo4p/cost_volume.hpp"
#include "stereo4p/io.hpp"

namespace stereo4p {

inline constexpr double kBadPixelThreshold = 2.0;

struct BadPixelStats {
  std::size_t evaluated = 0;
  std::size_t bad = 0;
  /// 100 * bad / evaluated; 0 when nothing is evaluated.
  double percent() const {
    return evaluated == 0 ? 0.0 : 100.0 * static_cast<double>(bad) / static_cast<double>(evaluated);
  }
};

/// Pixels with invalid ground truth or a zero mask entry are skipped; an
/// invalid estimate counts as bad. An empty mask evaluates everything.
BadPixelStats bad_pixel_stats(const DisparityMap& disparity, const DisparityMap& gt,
                              double threshold = kBadPixelThreshold,
                              std::span<const std::uint8_t> mask = {});

inline double bad_pixel_error(const DisparityMap& disparity, const DisparityMap& gt,
                              double threshold = kBadPixelThreshold,
                              std::span<const std::uint8_t> mask = {}) {
  return bad_pixel_stats(disparity, gt, threshold, mask).percent();
}

/// sum(w_i e_i) / sum(w_i). Throws ArgumentError for length mismatch,
/// negative weights or all-zero weights.
double weighted_average(std::span<const double> errors, std::span<const double> weights);

/// `name weight` lines, `#` comments.
std::map<std::string, double> parse_sample_weights(const std::string& text,
                                                   const std::string& origin = "<weights>");
std::map<std::string, double> read_sample_weights(const std::filesystem::path& path);

struct MetricRow {
  std::string sample;
  double error = 0.0;
  double weight = 1.0;
};

/// "sample,error,weight" header then one row per sample.
std::string metrics_csv(std::span<const MetricRow> rows);

/// Grey level floor(256 d / ndisp), clamped; invalid pixels black.
Gray8 render_disparity(const DisparityMap& disparity, int ndisp);

inline constexpr std::uint8_t kRenderCorrect = 255;
inline constexpr std::uint8_t kRenderBad = 0;
inline constexpr std::uint8_t kRenderUnevaluated = 128;

/// White where |d - gt| <= threshold, black where bad, grey where the
/// pixel is not evaluated (same rules as bad_pixel_stats).
Gray8 render_error(const DisparityMap& disparity, const DisparityMap& gt,
                   double threshold = kBadPixelThreshold, std::span<const std::uint8_t> mask = {});

}  // namespace stereo4p
