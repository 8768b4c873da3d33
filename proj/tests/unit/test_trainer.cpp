#include <doctest.h>

#include <cmath>

#include "stereo4p/eval.hpp"
#include "stereo4p/parallel.hpp"
#include "stereo4p/postproc.hpp"
#include "stereo4p/trainer.hpp"

using namespace stereo4p;

namespace {

constexpr int kBaselineSamples = 50000;

SyntheticOptions textured() {
  SyntheticOptions o;
  o.weak_regions = false;
  return o;
}

const std::vector<StereoSample>& train_set() {
  static const auto s = make_synthetic_suite(24, textured(), 100);
  return s;
}

const std::vector<StereoSample>& test_set() {
  static const auto s = make_synthetic_suite(2, textured(), 200);
  return s;
}

// One pretrained baseline shared by the cases below. Pretraining runs
// longer and at a higher rate than the fine-tuning schedule.
const TrainResult& trained_baseline() {
  static const TrainResult r = [] {
    const auto samples = sample_patches(train_set(), kBaselineSamples, 3);
    TrainSchedule s;
    s.epochs = 8;
    s.lr_drop_epoch = 7;
    s.lr_initial = 0.1;
    s.lr_final = 0.01;
    return train(NetworkSpec::tiny_baseline(), train_set(), samples, s);
  }();
  return r;
}

TrainSchedule short_schedule() {
  TrainSchedule s;
  s.epochs = 1;
  s.batch_size = 8;
  return s;
}

}  // namespace

TEST_CASE("patch sampling") {
  const auto a = sample_patches(train_set(), 501, 5);
  CHECK(a.size() == 502);
  CHECK(a == sample_patches(train_set(), 501, 5));
  CHECK(a != sample_patches(train_set(), 501, 6));
  const SamplingOptions o;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& s = a[i];
    CHECK(s.positive == (i % 2 == 0));
    if (s.positive) {
      CHECK(std::abs(s.offset) <= o.jitter);
    } else {
      CHECK(std::abs(s.offset) >= o.neg_min);
      CHECK(std::abs(s.offset) <= o.neg_max);
    }
    const auto& img = train_set()[static_cast<std::size_t>(s.image)];
    CHECK(s.disparity == std::lround((*img.gt)(s.y, s.x)));
    // Both patches fit.
    const int r = o.patch / 2;
    CHECK(s.y - r >= 0);
    CHECK(s.y + r < img.left.height());
    CHECK(s.x - r >= 0);
    CHECK(s.right_x() - r >= 0);
    CHECK(s.x + r < img.left.width());
    CHECK(s.right_x() + r < img.left.width());
  }

  SyntheticOptions small;
  small.height = 30;
  small.width = 40;
  small.max_disparity = 8;
  const std::vector<StereoSample> tiny{make_synthetic_pair(small, 1)};
  try {
    sample_patches(tiny, 10, 1);
    FAIL("undersized dataset accepted");
  } catch (const ArgumentError& e) {
    CHECK(std::string(e.what()).find("46x37") != std::string::npos);
  }
  SamplingOptions bad;
  bad.neg_min = 1;
  CHECK_THROWS_AS(sample_patches(train_set(), 10, 1, bad), ArgumentError);
}

TEST_CASE("learning-rate schedule and loss trace") {
  const auto samples = sample_patches(train_set(), 1000, 3);
  TrainSchedule s;
  s.batch_size = 8;
  const TrainResult r = train(NetworkSpec::tiny_baseline(), train_set(), samples, s);
  CHECK(r.epoch_lr == std::vector<double>{0.003, 0.003, 0.0003, 0.0003});
  CHECK(r.epoch_loss.size() == 4);
  CHECK(r.trace.size() == 4 * 125);
  CHECK(r.trace.front().lr == 0.003);
  CHECK(r.trace.back().lr == 0.0003);
  CHECK(r.trace.back().step == 500);
  CHECK(loss_trace_csv(r.trace).rfind("epoch,step,lr,loss\n1,1,0.0030000000000000001,", 0) == 0);
  CHECK(r.weights.metadata.count("provenance") == 1);
}

TEST_CASE("zero learning rate leaves the weights alone") {
  const auto samples = sample_patches(train_set(), 16, 9);
  TrainSchedule s = short_schedule();
  s.lr_initial = s.lr_final = 0.0;
  const NetworkSpec spec = NetworkSpec::tiny_baseline();
  const TrainResult r = train(spec, train_set(), samples, s);
  const Weights start = Weights::random(spec, s.seed);
  CHECK(r.weights.trunk == start.trunk);
  CHECK(r.weights.head == start.head);
}

TEST_CASE("a duplicated batch matches a single sample") {
  const auto samples = sample_patches(train_set(), 2, 9);
  const std::vector<PatchSample> one{samples[1]}, two{samples[1], samples[1]};
  TrainSchedule s = short_schedule();
  s.batch_size = 1;
  const TrainResult a = train(NetworkSpec::tiny_baseline(), train_set(), one, s);
  s.batch_size = 2;
  const TrainResult b = train(NetworkSpec::tiny_baseline(), train_set(), two, s);
  CHECK(a.trace.front().loss == b.trace.front().loss);
  CHECK(a.weights.trunk == b.weights.trunk);
  CHECK(a.weights.head == b.weights.head);
}

TEST_CASE("training does not depend on the thread count") {
  const auto samples = sample_patches(train_set(), 64, 9);
  const int before = thread_count();
  set_thread_count(1);
  const TrainResult a = train(NetworkSpec::tiny_baseline(), train_set(), samples, short_schedule());
  const TrainResult fa = finetune_head(a.weights, NetworkSpec::tiny_proposed(), train_set(), samples,
                                       short_schedule());
  set_thread_count(4);
  const TrainResult b = train(NetworkSpec::tiny_baseline(), train_set(), samples, short_schedule());
  const TrainResult fb = finetune_head(b.weights, NetworkSpec::tiny_proposed(), train_set(), samples,
                                       short_schedule());
  set_thread_count(before);
  CHECK(a.weights == b.weights);
  CHECK(fa.weights == fb.weights);
}

TEST_CASE("the trained baseline discriminates") {
  const auto& r = trained_baseline();
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
  const MatchNet net(NetworkSpec::tiny_baseline(), r.weights);
  const auto held = sample_patches(test_set(), 2000, 11);
  const double a = auc(score_samples(net, test_set(), held), held);
  CAPTURE(a);
  CHECK(a > 0.9);
}

// Positives are jittered by one pixel, so a learned cost only separates
// disparities two or more apart.
TEST_CASE("trained costs find a uniform shift and the identity") {
  const MatchNet net(NetworkSpec::tiny_baseline(), trained_baseline().weights);
  const StereoSample s = make_shifted_pair(48, 64, 5, 12, 21);
  const CostVolume v = net.compute_cost_volume(normalize_image(s.left), normalize_image(s.right), s.ndisp);
  const DisparityMap d = wta(v);
  int hits = 0, total = 0;
  for (int y = 0; y < 48; ++y)
    for (int x = s.ndisp; x < 64; ++x) {
      ++total;
      hits += std::abs(d(y, x) - 5.0f) <= 1.0f;
    }
  CAPTURE(hits);
  CHECK(hits >= 0.95 * total);

  const Tensor self = normalize_image(s.left);
  const DisparityMap z = wta(net.compute_cost_volume(self, self, s.ndisp));
  int near_zero = 0;
  for (float v : z.values()) near_zero += v <= 1.0f;
  CAPTURE(near_zero);
  CHECK(near_zero >= 0.95 * static_cast<double>(z.size()));
}

TEST_CASE("fine-tuning trains the head only") {
  const Weights& base = trained_baseline().weights;
  const NetworkSpec spec = NetworkSpec::tiny_proposed();
  const auto samples = sample_patches(train_set(), 4000, 13);
  const TrainResult r = finetune_head(base, spec, train_set(), samples, TrainSchedule{});
  CHECK(r.weights.trunk == base.trunk);
  const Weights start = initial_finetune_weights(base, spec, HeadInit::warm_start, 1);
  for (std::size_t j = 0; j < r.weights.head.size(); ++j) CHECK(!(r.weights.head[j] == start.head[j]));
  CHECK(r.epoch_lr == std::vector<double>{0.003, 0.003, 0.0003, 0.0003});

  // Warm start reproduces the baseline's decisions exactly.
  const auto held = sample_patches(test_set(), 1000, 17);
  const auto sb = score_samples(MatchNet(NetworkSpec::tiny_baseline(), base), test_set(), held);
  const auto sw = score_samples(MatchNet(spec, start), test_set(), held);
  for (std::size_t i = 0; i < held.size(); ++i) CHECK(sw[i] == doctest::Approx(sb[i]).epsilon(1e-5));

  const Weights frozen = initial_finetune_weights(base, spec, HeadInit::random, 1);
  const double tuned = auc(score_samples(MatchNet(spec, r.weights), test_set(), held), held);
  const double untrained = auc(score_samples(MatchNet(spec, frozen), test_set(), held), held);
  CAPTURE(tuned);
  CAPTURE(untrained);
  CHECK(tuned > untrained);
  CHECK(tuned > 0.9);
}

TEST_CASE("fine-tuning rejects a foreign trunk") {
  NetworkSpec other = NetworkSpec::tiny_baseline();
  other.trunk_channels = 8;
  const Weights w = Weights::random(other, 1);
  const auto samples = sample_patches(train_set(), 8, 1);
  CHECK_THROWS_AS(finetune_head(w, NetworkSpec::tiny_proposed(), train_set(), samples, short_schedule()),
                  SpecMismatchError);
}

TEST_CASE("divergence is reported") {
  const auto samples = sample_patches(train_set(), 64, 9);
  TrainSchedule s = short_schedule();
  s.lr_initial = s.lr_final = 1e30;
  CHECK_THROWS_AS(train(NetworkSpec::tiny_baseline(), train_set(), samples, s), DivergenceError);
}

TEST_CASE("hinge loss also trains") {
  const auto samples = sample_patches(train_set(), 2000, 19);
  TrainSchedule s;
  s.loss = LossKind::hinge;
  s.epochs = 2;
  const TrainResult r = train(NetworkSpec::tiny_baseline(), train_set(), samples, s);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
}
