#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "oracles.hpp"
#include "stereo4p/dataset.hpp"
#include "stereo4p/eval.hpp"
#include "stereo4p/file_util.hpp"
#include "stereo4p/io.hpp"

using namespace stereo4p;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = STEREO4P_FIXTURES;

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "stereo4p_test_io";
  fs::create_directories(dir);
  return dir / name;
}

std::string le32(float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  std::string s(4, '\0');
  for (int i = 0; i < 4; ++i) s[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  return s;
}

std::string be32(float v) {
  std::string s = le32(v);
  return std::string(s.rbegin(), s.rend());
}

DisparityMap map_of(int h, int w, std::initializer_list<float> v) {
  DisparityMap m(h, w);
  m.values().assign(v);
  return m;
}

}  // namespace

TEST_CASE("PFM hand-built fixtures") {
  // Rows are stored bottom-up.
  const std::string le = "Pf\n2 2\n-1\n" + le32(3) + le32(4) + le32(1) + le32(2);
  const DisparityMap a = decode_pfm(le);
  CHECK(a == map_of(2, 2, {1, 2, 3, 4}));
  const std::string be = "Pf\n2 2\n1.0\n" + be32(3) + be32(INFINITY) + be32(1) + be32(2.5f);
  const DisparityMap b = decode_pfm(be);
  CHECK(b(0, 0) == 1.0f);
  CHECK(b(0, 1) == 2.5f);
  CHECK(b(1, 0) == 3.0f);
  CHECK(!DisparityMap::is_valid(b(1, 1)));
  CHECK(encode_pfm(map_of(2, 2, {1, 2, 3, 4})) == le);
}

TEST_CASE("PFM round trip and errors") {
  Rng rng(1);
  DisparityMap m(7, 5);
  for (auto& v : m.values()) v = static_cast<float>(rng.uniform(-100, 100));
  m(3, 2) = DisparityMap::kInvalid;
  const fs::path p = temp_path("m.pfm");
  write_pfm(m, p);
  CHECK(read_pfm(p) == m);

  const std::string good = encode_pfm(m);
  CHECK_THROWS_AS(decode_pfm("PF\n1 1\n-1\n" + le32(0) + le32(0) + le32(0)), FormatError);
  CHECK_THROWS_AS(decode_pfm("P5\n1 1\n-1\n"), FormatError);
  CHECK_THROWS_AS(decode_pfm("Pf\n2 x\n-1\n"), FormatError);
  CHECK_THROWS_AS(decode_pfm("Pf\n1 1\n0\n" + le32(1)), FormatError);
  try {
    decode_pfm(good.substr(0, good.size() - 3));
    FAIL("truncated payload accepted");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }
}

TEST_CASE("PGM decoding") {
  const std::string black = "P5\n4 2\n255\n" + std::string(8, '\0');
  const Tensor tb = decode_image(black);
  CHECK(tb.shape() == Shape{2, 4, 1});
  for (float v : tb.values()) CHECK(v == 0.0f);
  const std::string sixteen = std::string("P5\n1 1\n65535\n") + "\xff\xff";
  CHECK(decode_image(sixteen)(0, 0) == 1.0f);
  // 3x3 fixture with comment, 8 bit.
  const char payload[] = "\x00\x33\x66\x99\xcc\xff\x01\x80\xfe";
  const std::string fx = "P5\n# fixture\n3 3\n255\n" + std::string(payload, 9);
  const Tensor t = decode_image(fx);
  const int expect[] = {0, 51, 102, 153, 204, 255, 1, 128, 254};
  for (int i = 0; i < 9; ++i) CHECK(t.data()[i] == static_cast<float>(expect[i] / 255.0));
  // 16-bit big-endian sample 0x0100.
  CHECK(decode_image(std::string("P5\n1 1\n65535\n") + std::string("\x01\x00", 2))(0, 0) ==
        static_cast<float>(256.0 / 65535.0));
  CHECK_THROWS_AS(decode_image("P5\n3 3\n255\n\x01"), FormatError);
  CHECK_THROWS_AS(decode_image("garbage"), FormatError);
}

TEST_CASE("PNG round trip") {
  Gray8 g(5, 7);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] = static_cast<std::uint8_t>(i * 7);
  const std::string png = encode_png(g);
  CHECK(png == encode_png(g));
  CHECK(to_gray8(decode_image(png)) == g);
  const fs::path p = temp_path("g.png");
  write_gray8(g, p);
  CHECK(to_gray8(read_image(p)) == g);
  CHECK_THROWS_AS(write_gray8(g, temp_path("g.bmp")), ArgumentError);
}

TEST_CASE("calibration") {
  CHECK(parse_calib("ndisp=70\n").ndisp == 70);
  CHECK_THROWS_AS(parse_calib("width=10\n"), FormatError);
  CHECK_THROWS_AS(parse_calib("ndisp=-3\n"), FormatError);
  const Calibration c = read_calib(kFixtures / "calib.txt");
  CHECK(c.ndisp == 280);
  for (const char* key : {"cam0", "cam1", "doffs", "baseline", "width", "height", "ndisp", "isint",
                          "vmin", "vmax", "dyavg", "dymax"})
    CHECK(c.has(key));
  CHECK(c.get("baseline") == "176.252");
  CHECK(c.get("cam0") == "[4161.221 0 1445.577; 0 4161.221 984.686; 0 0 1]");
  CHECK_THROWS_AS(c.get("focal"), FormatError);
}

TEST_CASE("bad-pixel error") {
  Rng rng(2);
  DisparityMap gt(10, 10);
  for (auto& v : gt.values()) v = static_cast<float>(rng.uniform(0, 30));
  CHECK(bad_pixel_error(gt, gt) == 0.0);
  DisparityMap off = gt;
  for (auto& v : off.values()) v += 3.0f;
  CHECK(bad_pixel_error(off, gt) == 100.0);
  DisparityMap half = gt;
  for (std::size_t i = 0; i < half.size(); i += 2) half.values()[i] += 5.0f;
  CHECK(bad_pixel_error(half, gt) == 50.0);
  // Shifting both maps by a constant changes nothing.
  DisparityMap gt2 = gt, half2 = half;
  for (auto& v : gt2.values()) v += 4.0f;
  for (auto& v : half2.values()) v += 4.0f;
  CHECK(bad_pixel_error(half2, gt2) == 50.0);

  const DisparityMap d = read_pfm(kFixtures / "disp.pfm");
  const DisparityMap g = read_pfm(kFixtures / "gt.pfm");
  const BadPixelStats s = bad_pixel_stats(d, g);
  CHECK(s.evaluated == 11);
  CHECK(s.bad == 4);
  CHECK(s.percent() == 400.0 / 11.0);
  // Exactly 2.0 off is not bad.
  CHECK(bad_pixel_error(map_of(1, 2, {2, 0}), map_of(1, 2, {0, 0})) == 0.0);
  const std::vector<std::uint8_t> mask{0, 255};
  CHECK(bad_pixel_error(map_of(1, 2, {9, 0}), map_of(1, 2, {0, 0}), 2.0, mask) == 0.0);
  CHECK_THROWS_AS(bad_pixel_error(DisparityMap(2, 3), DisparityMap(3, 2)), ShapeError);
}

TEST_CASE("weighted average") {
  const double e[] = {10, 40};
  const double w[] = {2, 1};
  CHECK(weighted_average(e, w) == 20.0);
  const double e4[] = {1.5, 2.25, 7.0, 3.125};
  const double u[] = {1, 1, 1, 1};
  CHECK(std::abs(weighted_average(e4, u) - (1.5 + 2.25 + 7.0 + 3.125) / 4) < 1e-12);
  const double one[] = {0, 0, 1, 0};
  CHECK(weighted_average(e4, one) == 7.0);
  const double zero[] = {0, 0, 0, 0};
  CHECK_THROWS_AS(weighted_average(e4, zero), ArgumentError);
  const double neg[] = {1, -1};
  CHECK_THROWS_AS(weighted_average(e, neg), ArgumentError);
  CHECK_THROWS_AS(weighted_average(e, u), ArgumentError);
}

TEST_CASE("sample weights and metrics CSV") {
  const auto w = parse_sample_weights("# comment\nAdirondack 1\nJadeplant 0.5\n\n");
  CHECK(w.at("Adirondack") == 1.0);
  CHECK(w.at("Jadeplant") == 0.5);
  CHECK_THROWS_AS(parse_sample_weights("Adirondack\n"), FormatError);
  const MetricRow rows[] = {{"a", 12.5, 1.0}, {"b", 0.0, 2.0}};
  CHECK(metrics_csv(rows) == "sample,error,weight\na,12.5,1\nb,0,2\n");
}

TEST_CASE("renders") {
  const DisparityMap d = read_pfm(kFixtures / "disp.pfm");
  const DisparityMap g = read_pfm(kFixtures / "gt.pfm");
  CHECK(encode_pgm(render_disparity(d, 8)) == read_file_bytes(kFixtures / "render_disparity.pgm"));
  CHECK(encode_pgm(render_error(d, g)) == read_file_bytes(kFixtures / "render_error.pgm"));
  CHECK(encode_png(render_disparity(d, 8)) == encode_png(render_disparity(d, 8)));

  const Gray8 none = render_error(d, DisparityMap(3, 4));
  for (auto v : none.pixels) CHECK(v == kRenderUnevaluated);
  DisparityMap ramp(1, 16);
  for (int x = 0; x < 16; ++x) ramp(0, x) = static_cast<float>(x);
  const Gray8 r = render_disparity(ramp, 16);
  for (int x = 0; x < 16; ++x) CHECK(r(0, x) == 16 * x);
}

TEST_CASE("half resolution") {
  Tensor t(4, 4, 1);
  for (int i = 0; i < 16; ++i) t.data()[i] = static_cast<float>(i);
  const Tensor h = downsample_half(t);
  CHECK(h.shape() == Shape{2, 2, 1});
  CHECK(h(0, 0) == 2.5f);
  CHECK(h(1, 1) == 12.5f);
  DisparityMap m(4, 4, 8.0f);
  m(2, 2) = DisparityMap::kInvalid;
  const DisparityMap mh = downsample_half(m);
  CHECK(mh(0, 0) == 4.0f);
  CHECK(!DisparityMap::is_valid(mh(1, 1)));
}

TEST_CASE("middlebury directory layout") {
  const fs::path dir = temp_path("scene");
  fs::create_directories(dir);
  const StereoSample s = make_synthetic_pair(SyntheticOptions{}, 5);
  write_gray8(to_gray8(s.left), dir / "im0.png");
  write_gray8(to_gray8(s.right), dir / "im1.png");
  write_file_atomic(dir / "calib.txt", "ndisp=" + std::to_string(s.ndisp) + "\n");
  write_pfm(*s.gt, dir / "disp0GT.pfm");
  const StereoSample full = load_middlebury(dir, false);
  CHECK(full.ndisp == s.ndisp);
  CHECK(full.left.shape() == s.left.shape());
  CHECK(*full.gt == *s.gt);
  const StereoSample half = load_middlebury(dir, true);
  CHECK(half.left.height() == s.left.height() / 2);
  CHECK(half.ndisp == (s.ndisp + 1) / 2);
  CHECK_THROWS_AS(load_middlebury(temp_path("nowhere")), IoError);
}
