#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dancegen/datapipe.hpp"
#include "dancegen/metrics.hpp"
#include "dancegen/rng.hpp"

using namespace dancegen;

namespace {

// 60-clip synthetic corpus shared by the classifier tests.
DanceDataset classifier_corpus() {
  CorpusSpec spec;
  spec.styles = 3;
  spec.clips_per_style = 20;
  spec.frames = 120;
  spec.seed = 2024;
  auto ds = synth_corpus(spec);
  assign_split(ds, 0.8, 9);
  return ds;
}

ClassifierConfig small_classifier() {
  ClassifierConfig cfg;
  cfg.embed_dim = 16;
  cfg.hidden_dim = 32;
  cfg.epochs = 200;
  cfg.lr = 1e-3;
  return cfg;
}

void split_views(const DanceDataset& ds, const std::string& split,
                 std::vector<const PoseSequence*>& poses, std::vector<int>& labels) {
  poses.clear();
  labels.clear();
  for (const auto& clip : ds.clips) {
    if (clip.split != split) continue;
    poses.push_back(&clip.pose);
    labels.push_back(clip.style);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Beat detection
// ---------------------------------------------------------------------------

TEST_CASE("constant pose sequence has no kinematic beats") {
  Matrix poses(30, 4);
  for (auto& v : poses.v) v = 2.5;
  CHECK(kinematic_beats(poses).empty());
}

TEST_CASE("too-short sequences are rejected") {
  Matrix poses(4, 2);
  CHECK_THROWS_AS(kinematic_beats(poses, 5, 0.1), Error);
  CHECK_THROWS_AS(kinematic_beats(Matrix(30, 2), 2, 0.1), Error);
}

TEST_CASE("triangle speed envelope: beats land on the direction reversals") {
  // one joint whose speed ramps up and back to zero over each half-swing, so
  // movement comes to rest exactly where the direction flips
  const int period = 12, n = 8 * period;
  Matrix poses(n, 2);
  std::vector<int> reversals;
  double x = 0.0;
  int dir = 1;
  for (int t = 0; t < n; ++t) {
    poses.at(t, 0) = x + 5.0;
    poses.at(t, 1) = 6.0;
    const int phase = t % period;
    if (phase == 0 && t > 0) {
      dir = -dir;
      reversals.push_back(t);
    }
    const double u = static_cast<double>(phase) / period;
    const double speed = 1.0 - std::fabs(2.0 * u - 1.0);  // 0 at reversals, 1 mid-swing
    x += dir * speed;
  }
  const auto beats = kinematic_beats(poses, 5, 0.1);
  REQUIRE_FALSE(beats.empty());
  for (int r : reversals) {
    double best = 1e9;
    for (double b : beats) best = std::min(best, std::fabs(b - r));
    CAPTURE(r);
    CHECK(best <= 1.0);
  }
}

TEST_CASE("kinematic beats are translation invariant") {
  CorpusSpec spec;
  spec.styles = 1;
  spec.clips_per_style = 1;
  spec.frames = 100;
  spec.seed = 77;
  auto ds = synth_corpus(spec);
  Matrix shifted = ds.clips[0].pose.frames;
  for (int t = 0; t < shifted.rows; ++t)
    for (int c = 0; c < shifted.cols; ++c) shifted.at(t, c) += (c % 2 == 0) ? 17.0 : -4.0;
  CHECK(kinematic_beats(ds.clips[0].pose.frames) == kinematic_beats(shifted));
}

TEST_CASE("one-hot channel maps directly to beat frames") {
  CHECK(beats_from_onehot({0, 1, 0, 0, 1}) == BeatList{1, 4});
  CHECK(beats_from_onehot({0, 0, 0}).empty());
  CHECK(beats_from_onehot({0.99, 0.5, 0}).empty());  // only exact ones count
}

TEST_CASE("flat onset curve yields no beats; bumps yield their peaks") {
  CHECK(beats_from_onset(std::vector<double>(50, 0.3), 0.5).empty());
  std::vector<double> curve(40, 0.0);
  for (int center : {5, 15, 25, 35})
    for (int t = 0; t < 40; ++t) curve[t] += std::exp(-(t - center) * (t - center) / 4.0);
  CHECK(beats_from_onset(curve, 0.5) == BeatList{5, 15, 25, 35});
}

TEST_CASE("coverage and hit rate match the hand-matched example") {
  const auto [coverage, hit] = beat_coverage_hit({10, 20, 30}, {10, 21, 40, 50}, 1.0);
  CHECK(coverage == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(hit == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("coverage/hit degenerate cases") {
  const BeatList beats = {3, 9, 14};
  const auto [cov_same, hit_same] = beat_coverage_hit(beats, beats, 0.0);
  CHECK(cov_same == 1.0);
  CHECK(hit_same == 1.0);

  const auto [cov_empty, hit_empty] = beat_coverage_hit({}, beats, 1.0);
  CHECK(cov_empty == 0.0);
  CHECK(hit_empty == 0.0);

  CHECK_THROWS_AS(beat_coverage_hit(beats, {}, 1.0), Error);
}

TEST_CASE("hit rate is 1 whenever every kinematic beat has a distinct musical beat in range") {
  Rng rng(83);
  for (int trial = 0; trial < 30; ++trial) {
    BeatList kin, mus;
    double t = 0.0;
    const int count = 1 + static_cast<int>(rng.below(12));
    for (int i = 0; i < count; ++i) {
      t += 3.0 + rng.uniform() * 5.0;
      kin.push_back(t);
      mus.push_back(t + rng.uniform(-1.0, 1.0));  // within dt=1 of its own beat
    }
    std::sort(mus.begin(), mus.end());
    const auto [coverage, hit] = beat_coverage_hit(kin, mus, 1.0);
    CHECK(hit == 1.0);
    CHECK(coverage == 1.0);
  }
}

TEST_CASE("beat alignment ratio") {
  const BeatList a = {2, 8, 19};
  for (double dt : {0.0, 0.5, 2.0}) CHECK(beat_alignment_ratio(a, a, dt) == 1.0);
  CHECK(beat_alignment_ratio({0, 10}, {5}, 0.1) == 0.0);
  CHECK_THROWS_AS(beat_alignment_ratio({}, a, 1.0), Error);
}

// ---------------------------------------------------------------------------
// Style classifier
// ---------------------------------------------------------------------------

TEST_CASE("style classifier separates the synthetic corpus") {
  auto ds = classifier_corpus();
  std::vector<const PoseSequence*> train_poses, test_poses;
  std::vector<int> train_labels, test_labels;
  split_views(ds, "train", train_poses, train_labels);
  split_views(ds, "test", test_poses, test_labels);
  REQUIRE(train_poses.size() + test_poses.size() == 60);

  auto clf = train_style_classifier(train_poses, train_labels, small_classifier(), 31337);
  CHECK(classifier_accuracy(clf, train_poses, train_labels) >= 0.95);
  CHECK(classifier_accuracy(clf, test_poses, test_labels) >= 0.8);

  // determinism: identical weights from the same seed
  auto clf2 = train_style_classifier(train_poses, train_labels, small_classifier(), 31337);
  CHECK(clf.w_embed.values() == clf2.w_embed.values());
  CHECK(clf.w_out.values() == clf2.w_out.values());

  // label permutation control: near-chance held-out accuracy on average
  // (a single permutation can leave a class plurality intact by luck, so the
  // control is the mean over several fixed permutations)
  double perm_acc_sum = 0.0;
  for (std::uint64_t perm_seed : {91u, 92u, 93u, 94u, 95u}) {
    std::vector<int> permuted = train_labels;
    Rng rng(perm_seed);
    for (std::size_t i = permuted.size(); i > 1; --i)
      std::swap(permuted[i - 1], permuted[rng.below(i)]);
    auto clf_perm = train_style_classifier(train_poses, permuted, small_classifier(), 31337);
    perm_acc_sum += classifier_accuracy(clf_perm, test_poses, test_labels);
  }
  CHECK(perm_acc_sum / 5.0 <= 0.5);
}

TEST_CASE("classifier rejects single-class data") {
  auto ds = classifier_corpus();
  std::vector<const PoseSequence*> poses;
  std::vector<int> labels;
  for (const auto& clip : ds.clips)
    if (clip.style == 1) {
      poses.push_back(&clip.pose);
      labels.push_back(clip.style);
    }
  CHECK_THROWS_AS(train_style_classifier(poses, labels, small_classifier(), 1), Error);
}

TEST_CASE("extracted features: fixed width, deterministic, class-separated") {
  auto ds = classifier_corpus();
  std::vector<const PoseSequence*> train_poses;
  std::vector<int> train_labels;
  split_views(ds, "train", train_poses, train_labels);
  auto cfg = small_classifier();
  auto clf = train_style_classifier(train_poses, train_labels, cfg, 404);

  auto f = clf.features(ds.clips[0].pose.frames);
  CHECK(static_cast<int>(f.size()) == cfg.hidden_dim);
  CHECK(f == clf.features(ds.clips[0].pose.frames));

  // mean within-class distance < mean between-class distance
  std::vector<std::vector<double>> features;
  for (const auto* p : train_poses) features.push_back(clf.features(p->frames));
  double within = 0.0, between = 0.0;
  int n_within = 0, n_between = 0;
  for (std::size_t i = 0; i < features.size(); ++i)
    for (std::size_t j = i + 1; j < features.size(); ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < features[i].size(); ++c) {
        const double d = features[i][c] - features[j][c];
        d2 += d * d;
      }
      if (train_labels[i] == train_labels[j]) {
        within += std::sqrt(d2);
        ++n_within;
      } else {
        between += std::sqrt(d2);
        ++n_between;
      }
    }
  CHECK(between / n_between > within / n_within);
}

// ---------------------------------------------------------------------------
// FID and distribution metrics
// ---------------------------------------------------------------------------

TEST_CASE("fid of a set against itself is zero") {
  Rng rng(101);
  FeatureSet set;
  for (int i = 0; i < 40; ++i) {
    std::vector<double> f(6);
    for (auto& x : f) x = rng.normal(0.0, 2.0);
    set.push_back(f);
  }
  CHECK(std::fabs(fid(set, set)) <= 1e-6);
  CHECK(fid(set, set) >= -1e-6);
}

TEST_CASE("fid matches the 1-D Gaussian closed forms at 10^4 samples") {
  Rng rng(103);
  auto sample = [&](double mean, double stddev) {
    FeatureSet set;
    for (int i = 0; i < 10000; ++i) set.push_back({rng.normal(mean, stddev)});
    return set;
  };
  // (0,1) vs (1,1): (mu diff)^2 = 1 ; (0,4) vs (0,1): (2-1)^2 = 1
  CHECK(std::fabs(fid(sample(0.0, 1.0), sample(1.0, 1.0)) - 1.0) < 0.1);
  CHECK(std::fabs(fid(sample(0.0, 2.0), sample(0.0, 1.0)) - 1.0) < 0.1);
}

TEST_CASE("fid is symmetric and needs dim+1 samples") {
  Rng rng(107);
  auto draw = [&](int count, int dim, double spread) {
    FeatureSet set;
    for (int i = 0; i < count; ++i) {
      std::vector<double> f(dim);
      for (auto& x : f) x = rng.normal(0.0, spread);
      set.push_back(f);
    }
    return set;
  };
  auto a = draw(30, 4, 1.0);
  auto b = draw(25, 4, 1.7);
  CHECK(std::fabs(fid(a, b) - fid(b, a)) <= 1e-8);
  CHECK(fid(a, b) >= -1e-6);
  CHECK_THROWS_AS(fid(draw(4, 4, 1.0), b), Error);
}

TEST_CASE("diversity: degenerate values and the exhaustive case") {
  FeatureSet identical(10, {1.0, 2.0});
  CHECK(diversity(identical, 500, 1) == 0.0);

  FeatureSet two = {{0.0, 0.0}, {3.0, 0.0}};
  CHECK(diversity(two, 500, 1) == 3.0);

  Rng rng(109);
  FeatureSet many;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> f(3);
    for (auto& x : f) x = rng.uniform(-1, 1);
    many.push_back(f);
  }
  double exhaustive = 0.0;
  for (int i = 0; i < 100; ++i)
    for (int j = i + 1; j < 100; ++j) {
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = many[i][c] - many[j][c];
        d2 += d * d;
      }
      exhaustive += std::sqrt(d2);
    }
  exhaustive /= 4950.0;
  CHECK(std::fabs(diversity(many, 4950, 7) - exhaustive) <= 1e-9);
  CHECK(std::fabs(diversity(many, 100000, 7) - exhaustive) <= 1e-9);
  CHECK_THROWS_AS(diversity({{1.0}}, 10, 1), Error);
}

TEST_CASE("multimodality: degenerate values and brute force") {
  std::vector<FeatureSet> identical_groups(3, FeatureSet(5, {0.5, 0.5}));
  CHECK(multimodality(identical_groups) == 0.0);

  std::vector<FeatureSet> one_pair = {{{0.0, 0.0}, {0.0, 4.0}}};
  CHECK(multimodality(one_pair) == 4.0);

  Rng rng(113);
  std::vector<FeatureSet> groups;
  double expected = 0.0;
  for (int g = 0; g < 4; ++g) {
    FeatureSet group;
    for (int m = 0; m < 5; ++m) {
      std::vector<double> f(2);
      for (auto& x : f) x = rng.uniform(-2, 2);
      group.push_back(f);
    }
    double sum = 0.0;
    int pairs = 0;
    for (int i = 0; i < 5; ++i)
      for (int j = i + 1; j < 5; ++j) {
        const double dx = group[i][0] - group[j][0];
        const double dy = group[i][1] - group[j][1];
        sum += std::sqrt(dx * dx + dy * dy);
        ++pairs;
      }
    expected += sum / pairs;
    groups.push_back(std::move(group));
  }
  expected /= 4.0;
  CHECK(std::fabs(multimodality(groups) - expected) <= 1e-12);
  CHECK_THROWS_AS(multimodality({FeatureSet{{1.0}}}), Error);
}

// ---------------------------------------------------------------------------
// FID over time
// ---------------------------------------------------------------------------

TEST_CASE("fid over time: identical sets give a zero series with the right length") {
  CorpusSpec spec;
  spec.styles = 3;
  spec.clips_per_style = 12;
  spec.frames = 900;  // 60 s at 15 fps
  spec.seed = 2028;
  auto ds = synth_corpus(spec);
  std::vector<const PoseSequence*> poses;
  std::vector<int> labels;
  for (const auto& clip : ds.clips) {
    poses.push_back(&clip.pose);
    labels.push_back(clip.style);
  }
  ClassifierConfig cfg = small_classifier();
  cfg.hidden_dim = 8;  // 36 samples per window >= 8 + 1
  auto clf = train_style_classifier(poses, labels, cfg, 55);

  std::vector<const Matrix*> set;
  for (const auto& clip : ds.clips) set.push_back(&clip.pose.frames);
  const auto series = fid_over_time(set, set, clf, 4.0, 15.0);
  REQUIRE(series.size() == 15);  // 60 s in 4 s windows
  for (double v : series) CHECK(std::fabs(v) <= 1e-6);

  CHECK_THROWS_AS(fid_over_time(set, set, clf, 90.0, 15.0), Error);
}

TEST_CASE("progressively frozen tails produce a strictly increasing series") {
  CorpusSpec spec;
  spec.styles = 3;
  spec.clips_per_style = 10;
  spec.frames = 600;
  spec.seed = 2030;
  auto ds = synth_corpus(spec);
  std::vector<const PoseSequence*> poses;
  std::vector<int> labels;
  for (const auto& clip : ds.clips) {
    poses.push_back(&clip.pose);
    labels.push_back(clip.style);
  }
  ClassifierConfig cfg = small_classifier();
  cfg.hidden_dim = 8;
  auto clf = train_style_classifier(poses, labels, cfg, 56);

  // "generated": the real clips with motion damped toward a frozen pose and a
  // posture deformation that grows with time (translation-invariant features
  // ignore plain drift, so the shape itself must degrade)
  std::vector<Matrix> degraded;
  for (const auto& clip : ds.clips) {
    Matrix m = clip.pose.frames;
    const int n = m.rows;
    for (int t = 0; t < n; ++t) {
      const double progress = static_cast<double>(t) / n;
      for (int c = 0; c < m.cols; ++c) {
        const double frozen = m.at(0, c);
        double v = frozen + (m.at(t, c) - frozen) * (1.0 - progress);
        v += 0.8 * progress * progress * std::sin(0.7 * c + 1.0);
        m.at(t, c) = v;
      }
    }
    degraded.push_back(std::move(m));
  }
  std::vector<const Matrix*> gen, real;
  for (const auto& m : degraded) gen.push_back(&m);
  for (const auto& clip : ds.clips) real.push_back(&clip.pose.frames);
  const auto series = fid_over_time(gen, real, clf, 4.0, 15.0);
  REQUIRE(series.size() == 10);
  for (std::size_t w = 1; w < series.size(); ++w) CHECK(series[w] > series[w - 1]);
}

TEST_CASE("mean frame displacement measures tail freezing") {
  Matrix moving(100, 2);
  for (int t = 0; t < 100; ++t) {
    moving.at(t, 0) = (t < 50) ? 0.5 * t : 25.0;  // freezes halfway
    moving.at(t, 1) = 1.0;
  }
  const double head = mean_frame_displacement(moving, 0, 50);
  const double tail = mean_frame_displacement(moving, 75, 100);
  CHECK(head > 0.4);
  CHECK(tail == 0.0);
  CHECK_THROWS_AS(mean_frame_displacement(moving, 99, 100), Error);
}

TEST_CASE("metrics report serializes every table field") {
  MetricsReport report;
  report.fid = 1.5;
  report.style_acc = 0.75;
  report.beat_coverage = 0.5;
  report.beat_hit_rate = 0.25;
  report.diversity = 3.5;
  report.multimodality = 2.25;
  report.fid_over_time = {0.5, 1.0};
  auto j = report.to_json();
  for (const char* key :
       {"fid", "style_acc", "beat_coverage", "beat_hit_rate", "diversity", "multimodality"})
    CHECK(j.contains(key));
  CHECK(j["fid_over_time"].size() == 2);
  CHECK(report.to_csv().find("1.5,0.75,0.5,0.25,3.5,2.25") != std::string::npos);
  CHECK(report.fid_over_time_csv() == "window,fid\n0,0.5\n1,1\n");
}
