#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "dancegen/config.hpp"
#include "dancegen/datapipe.hpp"
#include "dancegen/metrics.hpp"
#include "dancegen/model.hpp"

// End-to-end evaluation: train the style classifier on the train split,
// generate a dance for every test clip, then score FID, style accuracy,
// pooled beat coverage/hit rate, diversity, multimodality and FID over time.

namespace dancegen {

struct EvaluationResult {
  MetricsReport report;
  StyleClassifier classifier;
  std::vector<Matrix> generated;  // one pose matrix per test clip
};

inline StyleClassifier train_split_classifier(const DanceDataset& dataset,
                                              const ClassifierConfig& cfg, std::uint64_t seed) {
  std::vector<const PoseSequence*> poses;
  std::vector<int> labels;
  for (const auto& clip : dataset.clips) {
    if (clip.split != "train") continue;
    poses.push_back(&clip.pose);
    labels.push_back(clip.style);
  }
  if (poses.empty()) throw Error("evaluate: dataset has no train split to fit the classifier");
  return train_style_classifier(poses, labels, cfg, seed);
}

inline EvaluationResult evaluate_model(const Model& model, const DanceDataset& dataset,
                                       const MetricsConfig& mc, const ClassifierConfig& clf_cfg) {
  auto test_clips = dataset.split_clips("test");
  if (test_clips.empty()) throw Error("evaluate: dataset has no test split");

  EvaluationResult result;
  result.classifier = train_split_classifier(dataset, clf_cfg, mc.seed);
  const StyleClassifier& clf = result.classifier;

  // one generation per test clip, seeded per clip
  result.generated.reserve(test_clips.size());
  for (std::size_t i = 0; i < test_clips.size(); ++i)
    result.generated.push_back(model.generate_poses(
        test_clips[i]->music.frames, derive_seed(mc.seed, 0x9e4e, static_cast<std::uint64_t>(i))));

  FeatureSet gen_features, real_features;
  for (std::size_t i = 0; i < test_clips.size(); ++i) {
    gen_features.push_back(clf.features(result.generated[i]));
    real_features.push_back(clf.features(test_clips[i]->pose.frames));
  }

  MetricsReport& report = result.report;
  report.fid = fid(gen_features, real_features);

  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_clips.size(); ++i)
    if (clf.predict(result.generated[i]) == test_clips[i]->style) ++correct;
  report.style_acc = static_cast<double>(correct) / static_cast<double>(test_clips.size());

  // pooled beat counts over the test split
  const double dt_frames = mc.dt * dataset.fps;
  std::size_t total_kin = 0, total_mus = 0, total_aligned = 0;
  for (std::size_t i = 0; i < test_clips.size(); ++i) {
    const auto kin = kinematic_beats(result.generated[i], mc.window, mc.prominence);
    const auto mus = beats_from_onehot(test_clips[i]->music.channel("beat_onehot"));
    const auto match = match_beats(kin, mus, dt_frames);
    total_kin += match.count_a;
    total_mus += match.count_b;
    total_aligned += match.matched;
  }
  if (total_mus == 0) throw Error("evaluate: no musical beats in the test split");
  report.beat_coverage = static_cast<double>(total_kin) / static_cast<double>(total_mus);
  report.beat_hit_rate =
      total_kin == 0 ? 0.0 : static_cast<double>(total_aligned) / static_cast<double>(total_kin);

  report.diversity = diversity(gen_features, mc.num_pairs, derive_seed(mc.seed, 0xd1e));

  const std::size_t groups_wanted =
      std::min<std::size_t>(test_clips.size(), static_cast<std::size_t>(mc.multimodal_clips));
  std::vector<FeatureSet> groups;
  for (std::size_t i = 0; i < groups_wanted; ++i) {
    FeatureSet group;
    for (int s = 0; s < mc.multimodal_samples; ++s) {
      const Matrix poses = model.generate_poses(
          test_clips[i]->music.frames,
          derive_seed(mc.seed, 0x3d3, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(s)));
      group.push_back(clf.features(poses));
    }
    groups.push_back(std::move(group));
  }
  report.multimodality = multimodality(groups);

  std::vector<const Matrix*> gen_ptrs, real_ptrs;
  for (const auto& m : result.generated) gen_ptrs.push_back(&m);
  for (const auto* clip : test_clips) real_ptrs.push_back(&clip->pose.frames);
  report.fid_over_time = fid_over_time(gen_ptrs, real_ptrs, clf, mc.fid_window_s, dataset.fps);

  return result;
}

}  // namespace dancegen
