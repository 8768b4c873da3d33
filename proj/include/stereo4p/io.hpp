#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stereo4p/cost_volume.hpp"
#include "stereo4p/tensor.hpp"

namespace stereo4p {

/// Single-channel PFM ("Pf"). The sign of the scale field selects the
/// byte order (negative: little-endian); rows are stored bottom-up.
/// Non-finite values decode to DisparityMap::kInvalid.
DisparityMap decode_pfm(const std::string& bytes, const std::string& origin = "<pfm>");
DisparityMap read_pfm(const std::filesystem::path& path);
/// Little-endian, scale -1; invalid pixels are written as +inf.
std::string encode_pfm(const DisparityMap& map);
void write_pfm(const DisparityMap& map, const std::filesystem::path& path);

/// 8-bit grayscale raster, row-major.
struct Gray8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  Gray8() = default;
  Gray8(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}
  std::uint8_t& operator()(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t operator()(int y, int x) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  bool operator==(const Gray8&) const = default;
};

/// Decodes binary PGM (P5, 8 or 16 bit) or PNG (any bit depth and colour
/// type) to a unit-range grayscale tensor. Colour uses BT.601 luma
/// weights 0.299, 0.587, 0.114.
Tensor decode_image(const std::string& bytes, const std::string& origin = "<image>");
Tensor read_image(const std::filesystem::path& path);

std::string encode_pgm(const Gray8& image);
std::string encode_png(const Gray8& image);
/// Format picked from the extension (.png or .pgm); atomic.
void write_gray8(const Gray8& image, const std::filesystem::path& path);

/// Rounds unit-range intensities to 8 bits.
Gray8 to_gray8(const Tensor& image);

/// Middlebury calib.txt: `key=value` lines.
struct Calibration {
  std::map<std::string, std::string> entries;
  int ndisp = 0;

  bool has(const std::string& key) const { return entries.count(key) != 0; }
  /// Throws FormatError when absent.
  const std::string& get(const std::string& key) const;
};

/// Throws FormatError when ndisp is missing or not a positive integer.
Calibration parse_calib(const std::string& text, const std::string& origin = "<calib>");
Calibration read_calib(const std::filesystem::path& path);

/// 2x2 box average.
Tensor downsample_half(const Tensor& image);
/// Top-left sample of each 2x2 block, disparity halved.
DisparityMap downsample_half(const DisparityMap& map);
std::vector<std::uint8_t> downsample_half(const std::vector<std::uint8_t>& mask, int height,
                                          int width);

}  // namespace stereo4p
