#include <doctest.h>

#include <filesystem>

#include "stereo4p/config.hpp"
#include "stereo4p/error.hpp"
#include "stereo4p/file_util.hpp"
#include "stereo4p/trainer.hpp"

using namespace stereo4p;

TEST_CASE("key = value parsing") {
  const auto c = KeyValueConfig::parse(
      "# header\n"
      "\n"
      "  alpha = 1   \n"
      "beta=two words # trailing comment\n"
      "alpha = 3\n"
      "flag = Yes\n"
      "ratio = 0.25\n");
  CHECK(c.get_int("alpha", 0) == 3);
  CHECK(c.get_string("beta", "") == "two words");
  CHECK(c.get_bool("flag", false));
  CHECK(c.get_double("ratio", 0.0) == 0.25);
  CHECK(c.get_int("missing", 7) == 7);
  CHECK(!c.find("missing"));
  CHECK(c.keys() == std::vector<std::string>{"alpha", "beta", "flag", "ratio"});
  CHECK(KeyValueConfig::parse(c.str()).entries() == c.entries());
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse(" = 3\n"), ConfigError);
  const auto c = KeyValueConfig::parse("n = 3x\nb = maybe\nd = .\n", "cfg");
  CHECK_THROWS_AS(c.get_int("n", 0), ConfigError);
  CHECK_THROWS_AS(c.get_bool("b", false), ConfigError);
  CHECK_THROWS_AS(c.get_double("d", 0.0), ConfigError);
  CHECK_THROWS_AS(c.require_string("absent"), ConfigError);
  try {
    c.require_int("absent");
    FAIL("missing key accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("absent") != std::string::npos);
  }
  CHECK_THROWS_AS(KeyValueConfig::load("/nonexistent/stereo4p.cfg"), IoError);
}

TEST_CASE("config file load") {
  const auto p = std::filesystem::temp_directory_path() / "stereo4p_test_config.cfg";
  write_file_atomic(p, "epochs = 2\n");
  const auto c = KeyValueConfig::load(p);
  CHECK(c.require_int("epochs") == 2);
  CHECK(c.origin() == p.string());
}

TEST_CASE("training schedule config") {
  const TrainSchedule d;
  CHECK(d.epochs == 4);
  CHECK(d.lr_at(1) == 0.003);
  CHECK(d.lr_at(2) == 0.003);
  CHECK(d.lr_at(3) == 0.0003);
  CHECK(d.lr_at(4) == 0.0003);

  TrainSchedule s;
  s.epochs = 6;
  s.lr_initial = 0.01;
  s.lr_final = 0.001;
  s.lr_drop_epoch = 5;
  s.batch_size = 17;
  s.seed = 99;
  s.loss = LossKind::hinge;
  s.hinge_margin = 0.5;
  s.dampening = 0.0;
  const TrainSchedule r = TrainSchedule::from_config(s.to_config());
  CHECK(r.to_config().str() == s.to_config().str());
  CHECK(r.loss == LossKind::hinge);
  CHECK(r.lr_initial == 0.01);
  CHECK(r.dampening == 0.0);

  CHECK_THROWS_AS(TrainSchedule::from_config(KeyValueConfig::parse("loss = l2\n")), ConfigError);
  CHECK_THROWS_AS(TrainSchedule::from_config(KeyValueConfig::parse("epochs = 0\n")), ConfigError);
  CHECK_THROWS_AS(TrainSchedule::from_config(KeyValueConfig::parse("lr_final = 0.1\n")), ConfigError);
  CHECK_THROWS_AS(TrainSchedule::from_config(KeyValueConfig::parse("momentum = 1\n")), ConfigError);
  CHECK_THROWS_AS(TrainSchedule::from_config(KeyValueConfig::parse("batch_size = 0\n")), ConfigError);
  CHECK_THROWS_AS(TrainSchedule::from_config(KeyValueConfig::parse("dampening = 1.5\n")), ConfigError);
}
