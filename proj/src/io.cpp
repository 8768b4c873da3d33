#include "stereo4p/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <csetjmp>
#include <cstring>

#include "stereo4p/error.hpp"
#include "stereo4p/file_util.hpp"

namespace stereo4p {
namespace {

// Whitespace-separated header tokens of PFM/PGM, with '#' comments.
class HeaderScanner {
 public:
  HeaderScanner(const std::string& data, const std::string& origin) : d_(data), origin_(origin) {}

  std::string token() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < d_.size() && !std::isspace(static_cast<unsigned char>(d_[pos_]))) ++pos_;
    if (start == pos_) throw FormatError(origin_ + ": truncated header at byte offset " + std::to_string(pos_));
    return d_.substr(start, pos_ - start);
  }

  template <class N>
  N number(const char* what) {
    const std::size_t at = pos_;
    const std::string t = token();
    N v{};
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size()) {
      throw FormatError(origin_ + ": bad " + what + " '" + t + "' at byte offset " + std::to_string(at));
    }
    return v;
  }

  // Exactly one whitespace byte ends the header.
  std::size_t end_of_header() {
    if (pos_ >= d_.size() || !std::isspace(static_cast<unsigned char>(d_[pos_]))) {
      throw FormatError(origin_ + ": missing header terminator at byte offset " + std::to_string(pos_));
    }
    return pos_ + 1;
  }

  std::size_t pos() const { return pos_; }

 private:
  void skip_space() {
    while (pos_ < d_.size()) {
      if (d_[pos_] == '#') {
        while (pos_ < d_.size() && d_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(d_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& d_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

void need_payload(const std::string& data, std::size_t offset, std::size_t bytes,
                  const std::string& origin) {
  if (data.size() < offset || data.size() - offset < bytes) {
    throw FormatError(origin + ": truncated payload at byte offset " + std::to_string(data.size()) +
                      " (expected " + std::to_string(offset + bytes) + " bytes)");
  }
}

void check_dims(long long w, long long h, const std::string& origin) {
  if (w <= 0 || h <= 0 || w > (1 << 20) || h > (1 << 20)) {
    throw FormatError(origin + ": unsupported image size " + std::to_string(w) + "x" + std::to_string(h));
  }
}

Tensor decode_pgm(const std::string& data, const std::string& origin) {
  HeaderScanner s(data, origin);
  if (s.token() != "P5") throw FormatError(origin + ": not a binary PGM (P5)");
  const long long w = s.number<long long>("width");
  const long long h = s.number<long long>("height");
  const int maxval = s.number<int>("maxval");
  check_dims(w, h, origin);
  if (maxval < 1 || maxval > 65535) {
    throw FormatError(origin + ": PGM maxval " + std::to_string(maxval) + " out of range");
  }
  const std::size_t off = s.end_of_header();
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  const std::size_t n = static_cast<std::size_t>(w * h);
  need_payload(data, off, n * bpp, origin);
  Tensor out(static_cast<int>(h), static_cast<int>(w), 1);
  const auto* p = reinterpret_cast<const unsigned char*>(data.data() + off);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned v = bpp == 1 ? p[i] : (static_cast<unsigned>(p[2 * i]) << 8) | p[2 * i + 1];
    out.data()[i] = static_cast<float>(static_cast<double>(std::min<unsigned>(v, maxval)) / maxval);
  }
  return out;
}

struct MemoryReader {
  const std::string* data;
  std::size_t pos;
};

void png_read_memory(png_structp png, png_bytep out, png_size_t n) {
  auto* r = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (r->data->size() - r->pos < n) png_error(png, "truncated PNG stream");
  std::memcpy(out, r->data->data() + r->pos, n);
  r->pos += n;
}

void png_throwing_error(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  *text = msg;
  png_longjmp(png, 1);
}

void png_silent_warning(png_structp, png_const_charp) {}

Tensor decode_png(const std::string& data, const std::string& origin) {
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_throwing_error,
                                           png_silent_warning);
  if (!png) throw IoError(origin + ": cannot initialise PNG decoder");
  png_infop info = png_create_info_struct(png);
  MemoryReader reader{&data, 0};
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  png_uint_32 w = 0, h = 0;
  int channels = 0, depth = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(origin + ": PNG decode failed: " + message);
  }
  png_set_read_fn(png, &reader, png_read_memory);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  channels = png_get_channels(png, info);
  depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  check_dims(w, h, origin);
  const double maxval = depth == 16 ? 65535.0 : 255.0;
  Tensor out(static_cast<int>(h), static_cast<int>(w), 1);
  for (png_uint_32 y = 0; y < h; ++y) {
    const png_byte* row = rows[y];
    for (png_uint_32 x = 0; x < w; ++x) {
      auto sample = [&](int c) -> double {
        const std::size_t i = static_cast<std::size_t>(x) * channels + c;
        return depth == 16 ? (row[2 * i] << 8 | row[2 * i + 1]) : row[i];
      };
      const double v = channels >= 3 ? 0.299 * sample(0) + 0.587 * sample(1) + 0.114 * sample(2)
                                     : sample(0);
      out(static_cast<int>(y), static_cast<int>(x)) = static_cast<float>(v / maxval);
    }
  }
  return out;
}

constexpr unsigned char kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void png_write_memory(png_structp png, png_bytep in, png_size_t n) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(in), n);
}

void png_flush_memory(png_structp) {}

}  // namespace

DisparityMap decode_pfm(const std::string& data, const std::string& origin) {
  HeaderScanner s(data, origin);
  const std::string magic = s.token();
  if (magic == "PF") throw FormatError(origin + ": colour PFM not supported, expected 'Pf'");
  if (magic != "Pf") throw FormatError(origin + ": not a PFM file (bad magic at byte offset 0)");
  const long long w = s.number<long long>("width");
  const long long h = s.number<long long>("height");
  check_dims(w, h, origin);
  const std::size_t scale_at = s.pos();
  const std::string scale_text = s.token();
  double scale = 0.0;
  try {
    std::size_t used = 0;
    scale = std::stod(scale_text, &used);
    if (used != scale_text.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw FormatError(origin + ": bad scale '" + scale_text + "' at byte offset " + std::to_string(scale_at));
  }
  if (scale == 0.0 || !std::isfinite(scale)) {
    throw FormatError(origin + ": scale must be nonzero at byte offset " + std::to_string(scale_at));
  }
  const bool little = scale < 0.0;
  const std::size_t off = s.end_of_header();
  const std::size_t n = static_cast<std::size_t>(w * h);
  need_payload(data, off, 4 * n, origin);
  DisparityMap out(static_cast<int>(h), static_cast<int>(w));
  const auto* p = reinterpret_cast<const unsigned char*>(data.data() + off);
  for (long long row = 0; row < h; ++row) {
    const int y = static_cast<int>(h - 1 - row);
    for (long long x = 0; x < w; ++x) {
      const unsigned char* b = p + 4 * (row * w + x);
      const std::uint32_t bits =
          little ? (std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 |
                    std::uint32_t{b[3]} << 24)
                 : (std::uint32_t{b[3]} | std::uint32_t{b[2]} << 8 | std::uint32_t{b[1]} << 16 |
                    std::uint32_t{b[0]} << 24);
      const float v = std::bit_cast<float>(bits);
      out(y, static_cast<int>(x)) = std::isfinite(v) ? v : DisparityMap::kInvalid;
    }
  }
  return out;
}

DisparityMap read_pfm(const std::filesystem::path& path) {
  return decode_pfm(read_file_bytes(path), path.string());
}

std::string encode_pfm(const DisparityMap& map) {
  std::string out = "Pf\n" + std::to_string(map.width()) + " " + std::to_string(map.height()) + "\n-1\n";
  out.reserve(out.size() + 4 * map.size());
  for (int y = map.height() - 1; y >= 0; --y) {
    for (int x = 0; x < map.width(); ++x) {
      const float v = DisparityMap::is_valid(map(y, x)) ? map(y, x) : DisparityMap::kInvalid;
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
  }
  return out;
}

void write_pfm(const DisparityMap& map, const std::filesystem::path& path) {
  write_file_atomic(path, encode_pfm(map));
}

Tensor decode_image(const std::string& bytes, const std::string& origin) {
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngMagic, 8) == 0) return decode_png(bytes, origin);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes, origin);
  throw FormatError(origin + ": unrecognised image format (expected PNG or binary PGM)");
}

Tensor read_image(const std::filesystem::path& path) {
  return decode_image(read_file_bytes(path), path.string());
}

std::string encode_pgm(const Gray8& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

std::string encode_png(const Gray8& image) {
  std::string out;
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_throwing_error,
                                            png_silent_warning);
  if (!png) throw IoError("cannot initialise PNG encoder");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode failed: " + message);
  }
  png_set_write_fn(png, &out, png_write_memory, png_flush_memory);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height),
               8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, image.pixels.data() + static_cast<std::size_t>(y) * image.width);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_gray8(const Gray8& image, const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".png") {
    write_file_atomic(path, encode_png(image));
  } else if (ext == ".pgm") {
    write_file_atomic(path, encode_pgm(image));
  } else {
    throw ArgumentError(path.string() + ": image output must end in .png or .pgm");
  }
}

Gray8 to_gray8(const Tensor& image) {
  if (image.channels() != 1) throw ShapeError("expected a grayscale image, got " + image.shape().str());
  Gray8 out(image.height(), image.width());
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const double v = std::clamp(static_cast<double>(image.data()[i]), 0.0, 1.0);
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

const std::string& Calibration::get(const std::string& key) const {
  const auto it = entries.find(key);
  if (it == entries.end()) throw FormatError("calibration has no '" + key + "' entry");
  return it->second;
}

Calibration parse_calib(const std::string& text, const std::string& origin) {
  Calibration c;
  std::size_t start = 0;
  int line_no = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(origin + ":" + std::to_string(line_no) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    c.entries[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  const auto it = c.entries.find("ndisp");
  if (it == c.entries.end()) throw FormatError(origin + ": missing ndisp");
  int n = 0;
  const auto& v = it->second;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
  if (ec != std::errc() || p != v.data() + v.size() || n < 1) {
    throw FormatError(origin + ": ndisp must be a positive integer, got '" + v + "'");
  }
  c.ndisp = n;
  return c;
}

Calibration read_calib(const std::filesystem::path& path) {
  return parse_calib(read_file_bytes(path), path.string());
}

Tensor downsample_half(const Tensor& image) {
  const int h = image.height() / 2;
  const int w = image.width() / 2;
  if (h < 1 || w < 1) throw ShapeError("image too small to halve: " + image.shape().str());
  Tensor out(h, w, image.channels());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < image.channels(); ++c) {
        const double s = static_cast<double>(image(2 * y, 2 * x, c)) + image(2 * y, 2 * x + 1, c) +
                         image(2 * y + 1, 2 * x, c) + image(2 * y + 1, 2 * x + 1, c);
        out(y, x, c) = static_cast<float>(0.25 * s);
      }
    }
  }
  return out;
}

DisparityMap downsample_half(const DisparityMap& map) {
  const int h = map.height() / 2;
  const int w = map.width() / 2;
  DisparityMap out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float v = map(2 * y, 2 * x);
      out(y, x) = DisparityMap::is_valid(v) ? 0.5f * v : DisparityMap::kInvalid;
    }
  }
  return out;
}

std::vector<std::uint8_t> downsample_half(const std::vector<std::uint8_t>& mask, int height,
                                          int width) {
  if (mask.size() != static_cast<std::size_t>(height) * width) throw ShapeError("mask size mismatch");
  const int h = height / 2;
  const int w = width / 2;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out[static_cast<std::size_t>(y) * w + x] = mask[static_cast<std::size_t>(2 * y) * width + 2 * x];
  }
  return out;
}

}  // namespace stereo4p
