#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dancegen/adam.hpp"
#include "dancegen/datapipe.hpp"
#include "dancegen/errors.hpp"
#include "dancegen/linalg.hpp"
#include "dancegen/matrix.hpp"
#include "dancegen/rng.hpp"
#include "dancegen/tensor.hpp"

#include "json.hpp"

// Evaluation suite: kinematic/musical beat detection and alignment, the
// trainable style classifier used as the feature extractor, Frechet distance
// between feature distributions, diversity/multimodality, and the
// FID-over-time diagnostic for long-rollout degradation.

namespace dancegen {

using BeatList = std::vector<double>;  // strictly increasing frame indices

// ---------------------------------------------------------------------------
// Beat detection
// ---------------------------------------------------------------------------

namespace detail {

// Local minima of a curve with plateau handling; keeps minima whose
// prominence (rise to the lowest bounding higher ground) reaches delta.
inline std::vector<int> prominent_minima(const std::vector<double>& s, double delta) {
  const int n = static_cast<int>(s.size());
  std::vector<int> candidates;
  int i = 1;
  while (i < n - 1) {
    if (s[i] < s[i - 1]) {
      int j = i;
      while (j + 1 < n && s[j + 1] == s[i]) ++j;  // plateau
      if (j + 1 < n && s[j + 1] > s[i]) candidates.push_back(i);
      i = j + 1;
    } else {
      ++i;
    }
  }
  std::vector<int> kept;
  for (int c : candidates) {
    double left_max = s[c];
    for (int t = c - 1; t >= 0; --t) {
      if (s[t] < s[c]) break;
      left_max = std::max(left_max, s[t]);
    }
    double right_max = s[c];
    for (int t = c + 1; t < n; ++t) {
      if (s[t] < s[c]) break;
      right_max = std::max(right_max, s[t]);
    }
    if (std::min(left_max, right_max) - s[c] >= delta) kept.push_back(c);
  }
  return kept;
}

}  // namespace detail

// Kinematic beats: frames where movement direction changes, detected as
// prominent local minima of the windowed standard deviation of the per-frame
// motion magnitude ||y_t - y_{t-1}||. `prominence` is a fraction of the SD
// curve's range.
inline BeatList kinematic_beats(const Matrix& poses, int window = 5, double prominence = 0.1) {
  const int n = poses.rows;
  if (window < 3) throw Error("kinematic_beats: window must be >= 3");
  if (n < window + 1)
    throw Error("kinematic_beats: sequence of " + std::to_string(n) +
                " frames is shorter than window " + std::to_string(window) + " + 1");
  std::vector<double> motion(n - 1);
  for (int t = 1; t < n; ++t) {
    double acc = 0.0;
    for (int c = 0; c < poses.cols; ++c) {
      const double d = poses.at(t, c) - poses.at(t - 1, c);
      acc += d * d;
    }
    motion[t - 1] = std::sqrt(acc);
  }
  const int m = static_cast<int>(motion.size());
  const int half = window / 2;
  std::vector<double> sd(m);
  for (int t = 0; t < m; ++t) {
    const int lo = std::max(0, t - half);
    const int hi = std::min(m - 1, t + half);
    const int len = hi - lo + 1;
    double mean = 0.0;
    for (int u = lo; u <= hi; ++u) mean += motion[u];
    mean /= len;
    double var = 0.0;
    for (int u = lo; u <= hi; ++u) {
      const double d = motion[u] - mean;
      var += d * d;
    }
    sd[t] = std::sqrt(var / len);
  }
  const auto [mn, mx] = std::minmax_element(sd.begin(), sd.end());
  const double range = *mx - *mn;
  if (range <= 0.0) return {};
  BeatList beats;
  for (int idx : detail::prominent_minima(sd, prominence * range))
    beats.push_back(static_cast<double>(idx + 1));  // motion[t-1] sits at frame t
  return beats;
}

// Musical beats from the one-hot beat channel: frames whose value is 1.
inline BeatList beats_from_onehot(const std::vector<double>& channel) {
  BeatList beats;
  for (std::size_t t = 0; t < channel.size(); ++t)
    if (channel[t] == 1.0) beats.push_back(static_cast<double>(t));
  return beats;
}

// Musical beats from an onset-strength curve: local maxima above threshold.
inline BeatList beats_from_onset(const std::vector<double>& curve, double threshold) {
  BeatList beats;
  const int n = static_cast<int>(curve.size());
  for (int t = 1; t + 1 < n; ++t)
    if (curve[t] > threshold && curve[t] > curve[t - 1] && curve[t] >= curve[t + 1])
      beats.push_back(static_cast<double>(t));
  return beats;
}

struct BeatMatch {
  std::size_t count_a = 0;
  std::size_t count_b = 0;
  std::size_t matched = 0;  // a-beats with a distinct b-beat within dt
};

// Greedy one-to-one matching in time order: each a-beat takes the earliest
// unused b-beat within dt.
inline BeatMatch match_beats(const BeatList& a, const BeatList& b, double dt) {
  if (dt < 0.0) throw Error("match_beats: dt must be >= 0");
  BeatMatch result;
  result.count_a = a.size();
  result.count_b = b.size();
  std::size_t j = 0;
  for (double beat : a) {
    while (j < b.size() && b[j] < beat - dt) ++j;
    if (j < b.size() && std::fabs(b[j] - beat) <= dt) {
      ++result.matched;
      ++j;
    }
  }
  return result;
}

// Beat coverage B_k/B_m and hit rate B_a/B_k (0 when there are no kinematic
// beats). No musical beats at all leaves coverage undefined -> error.
inline std::pair<double, double> beat_coverage_hit(const BeatList& kinematic,
                                                   const BeatList& musical, double dt) {
  if (musical.empty()) throw Error("beat_coverage_hit: no musical beats, coverage undefined");
  const auto match = match_beats(kinematic, musical, dt);
  const double coverage = static_cast<double>(match.count_a) / static_cast<double>(match.count_b);
  const double hit = match.count_a == 0
                         ? 0.0
                         : static_cast<double>(match.matched) / static_cast<double>(match.count_a);
  return {coverage, hit};
}

// Fraction of beats in `a` that have a beat of `b` within dt (one-to-one).
inline double beat_alignment_ratio(const BeatList& a, const BeatList& b, double dt) {
  if (a.empty()) throw Error("beat_alignment_ratio: empty reference beat list");
  const auto match = match_beats(a, b, dt);
  return static_cast<double>(match.matched) / static_cast<double>(match.count_a);
}

// ---------------------------------------------------------------------------
// Style classifier (the FID feature extractor)
// ---------------------------------------------------------------------------

struct ClassifierConfig {
  int input_dim = kPoseWidth;
  int embed_dim = 64;
  int hidden_dim = 128;
  int n_styles = 3;
  int epochs = 300;
  int batch = 8;
  double lr = 1e-3;
};

// Per-frame linear embedding, temporal mean-pool, one ReLU hidden layer and a
// softmax head. The hidden activations are the dance feature vector. Pooling
// commutes with the linear embedding, so features are computed as
// embed(mean frame) for speed.
struct StyleClassifier {
  ClassifierConfig cfg;
  PoseNormalizer norm;
  Tensor w_embed;   // input_dim x embed_dim
  Tensor w_hidden;  // embed_dim x hidden_dim
  Tensor b_hidden;  // 1 x hidden_dim
  Tensor w_out;     // hidden_dim x n_styles
  Tensor b_out;     // 1 x n_styles

  std::vector<double> mean_frame(const Matrix& poses) const {
    const Matrix normalized = norm.apply(poses);
    std::vector<double> mean(normalized.cols, 0.0);
    for (int t = 0; t < normalized.rows; ++t)
      for (int c = 0; c < normalized.cols; ++c) mean[c] += normalized.at(t, c);
    for (auto& x : mean) x /= normalized.rows;
    return mean;
  }

  Tensor hidden_from_mean(const Tensor& mean_row) const {
    auto pooled = matmul(mean_row, w_embed);
    return relu(add(matmul(pooled, w_hidden), b_hidden));
  }

  std::vector<double> features(const Matrix& poses) const {
    NoGradGuard no_grad;
    return hidden_from_mean(Tensor::row(mean_frame(poses))).values();
  }

  std::vector<double> probabilities(const Matrix& poses) const {
    NoGradGuard no_grad;
    auto hidden = hidden_from_mean(Tensor::row(mean_frame(poses)));
    return softmax_rows(add(matmul(hidden, w_out), b_out)).values();
  }

  int predict(const Matrix& poses) const {
    const auto probs = probabilities(poses);
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  }
};

// Cross-entropy training with Adam on normalized pose sequences.
// Deterministic given the seed.
inline StyleClassifier train_style_classifier(const std::vector<const PoseSequence*>& sequences,
                                              const std::vector<int>& labels,
                                              const ClassifierConfig& cfg, std::uint64_t seed) {
  if (sequences.size() != labels.size() || sequences.empty())
    throw Error("train_style_classifier: need matching non-empty sequences and labels");
  std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2)
    throw Error("train_style_classifier: need at least 2 styles, got " +
                std::to_string(distinct.size()));
  for (int label : labels)
    if (label < 0 || label >= cfg.n_styles)
      throw Error("train_style_classifier: label " + std::to_string(label) + " outside [0, " +
                  std::to_string(cfg.n_styles) + ")");

  StyleClassifier clf;
  clf.cfg = cfg;
  clf.norm = PoseNormalizer::fit(sequences);

  Rng rng(derive_seed(seed, 0xc1a5));
  auto glorot = [&rng](int fan_in, int fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    return Tensor::rand_uniform({fan_in, fan_out}, rng, -bound, bound, true);
  };
  clf.w_embed = glorot(cfg.input_dim, cfg.embed_dim);
  clf.w_hidden = glorot(cfg.embed_dim, cfg.hidden_dim);
  // slightly positive bias keeps narrow hidden layers out of the all-dead
  // ReLU regime early in training
  clf.b_hidden = Tensor::from({1, cfg.hidden_dim}, std::vector<double>(cfg.hidden_dim, 0.1), true);
  clf.w_out = glorot(cfg.hidden_dim, cfg.n_styles);
  clf.b_out = Tensor::zeros({1, cfg.n_styles}, true);

  ParamSet params;
  params.add("w_embed", clf.w_embed);
  params.add("w_hidden", clf.w_hidden);
  params.add("b_hidden", clf.b_hidden);
  params.add("w_out", clf.w_out);
  params.add("b_out", clf.b_out);
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  auto state = AdamState::init(params, adam_cfg);

  std::vector<Tensor> means;
  means.reserve(sequences.size());
  for (const auto* seq : sequences) means.push_back(Tensor::row(clf.mean_frame(seq->frames)));

  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, 0xe9, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      params.zero_grad();
      Tensor loss;
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t idx = order[k];
        auto logits = add(matmul(clf.hidden_from_mean(means[idx]), clf.w_out), clf.b_out);
        auto nll = scale(log_op(slice_cols(softmax_rows(logits), labels[idx], 1)), -1.0);
        loss = loss.defined() ? add(loss, nll) : nll;
      }
      loss = scale(loss, 1.0 / static_cast<double>(stop - start));
      backward(loss);
      adam_step(params, state);
    }
  }
  return clf;
}

inline double classifier_accuracy(const StyleClassifier& clf,
                                  const std::vector<const PoseSequence*>& sequences,
                                  const std::vector<int>& labels) {
  if (sequences.empty()) throw Error("classifier_accuracy: empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < sequences.size(); ++i)
    if (clf.predict(sequences[i]->frames) == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(sequences.size());
}

// ---------------------------------------------------------------------------
// Distribution metrics
// ---------------------------------------------------------------------------

using FeatureSet = std::vector<std::vector<double>>;

namespace detail {

inline std::vector<double> feature_mean(const FeatureSet& set) {
  std::vector<double> mean(set[0].size(), 0.0);
  for (const auto& f : set)
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += f[i];
  for (auto& x : mean) x /= static_cast<double>(set.size());
  return mean;
}

inline Matrix feature_covariance(const FeatureSet& set, const std::vector<double>& mean) {
  const int d = static_cast<int>(mean.size());
  Matrix cov(d, d);
  for (const auto& f : set)
    for (int i = 0; i < d; ++i) {
      const double di = f[i] - mean[i];
      for (int j = i; j < d; ++j) cov.at(i, j) += di * (f[j] - mean[j]);
    }
  const double denom = static_cast<double>(set.size() - 1);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      cov.at(i, j) /= denom;
      cov.at(j, i) = cov.at(i, j);
    }
  return cov;
}

}  // namespace detail

// Frechet distance between Gaussians fit to two feature sets:
// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), covariances regularized
// by +1e-6 I, the matrix square root taken through the symmetric form
// Sa^{1/2} Sb Sa^{1/2} with negative eigenvalues clamped to zero.
inline double fid(const FeatureSet& a, const FeatureSet& b, double reg = 1e-6) {
  if (a.empty() || b.empty()) throw Error("fid: empty feature set");
  const std::size_t dim = a[0].size();
  for (const auto& f : a)
    if (f.size() != dim) throw ShapeError("fid: inconsistent feature widths in set a");
  for (const auto& f : b)
    if (f.size() != dim) throw ShapeError("fid: inconsistent feature widths in set b");
  if (a.size() < dim + 1 || b.size() < dim + 1)
    throw Error("fid: need at least dim+1 = " + std::to_string(dim + 1) +
                " samples per set, got " + std::to_string(a.size()) + " and " +
                std::to_string(b.size()));

  const auto mean_a = detail::feature_mean(a);
  const auto mean_b = detail::feature_mean(b);
  Matrix cov_a = detail::feature_covariance(a, mean_a);
  Matrix cov_b = detail::feature_covariance(b, mean_b);
  const int d = static_cast<int>(dim);
  for (int i = 0; i < d; ++i) {
    cov_a.at(i, i) += reg;
    cov_b.at(i, i) += reg;
  }

  double delta = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double diff = mean_a[i] - mean_b[i];
    delta += diff * diff;
  }
  const Matrix root_a = psd_sqrt(cov_a);
  const Matrix inner = mat_mul(mat_mul(root_a, cov_b), root_a);
  auto eig = symmetric_eigen(inner);
  double tr_sqrt = 0.0;
  for (double lam : eig.values) tr_sqrt += std::sqrt(std::max(0.0, lam));
  double trace_a = 0.0, trace_b = 0.0;
  for (int i = 0; i < d; ++i) {
    trace_a += cov_a.at(i, i);
    trace_b += cov_b.at(i, i);
  }
  return delta + trace_a + trace_b - 2.0 * tr_sqrt;
}

// Mean Euclidean distance over `num_pairs` seeded distinct pairs; exhausts
// all pairs exactly when num_pairs covers them.
inline double diversity(const FeatureSet& features, int num_pairs, std::uint64_t seed) {
  const std::size_t m = features.size();
  if (m < 2) throw Error("diversity: need at least 2 feature vectors");
  if (num_pairs < 1) throw Error("diversity: num_pairs must be >= 1");
  auto distance = [&](std::size_t i, std::size_t j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < features[i].size(); ++c) {
      const double d = features[i][c] - features[j][c];
      acc += d * d;
    }
    return std::sqrt(acc);
  };
  const std::size_t total = m * (m - 1) / 2;
  double sum = 0.0;
  if (static_cast<std::size_t>(num_pairs) >= total) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j) sum += distance(i, j);
    return sum / static_cast<double>(total);
  }
  Rng rng(derive_seed(seed, 0xd1f));
  std::set<std::uint64_t> chosen;
  while (chosen.size() < static_cast<std::size_t>(num_pairs)) {
    std::size_t i = rng.below(m);
    std::size_t j = rng.below(m);
    if (i == j) continue;
    if (i > j) std::swap(i, j);
    if (chosen.insert(static_cast<std::uint64_t>(i) * m + j).second) sum += distance(i, j);
  }
  return sum / static_cast<double>(num_pairs);
}

// Mean pairwise distance within each group (generations for the same music),
// averaged over groups.
inline double multimodality(const std::vector<FeatureSet>& groups) {
  if (groups.empty()) throw Error("multimodality: no groups");
  double group_sum = 0.0;
  for (const auto& group : groups) {
    if (group.size() < 2)
      throw Error("multimodality: every group needs >= 2 members, got " +
                  std::to_string(group.size()));
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < group.size(); ++i)
      for (std::size_t j = i + 1; j < group.size(); ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < group[i].size(); ++c) {
          const double d = group[i][c] - group[j][c];
          acc += d * d;
        }
        sum += std::sqrt(acc);
        ++pairs;
      }
    group_sum += sum / static_cast<double>(pairs);
  }
  return group_sum / static_cast<double>(groups.size());
}

// FID of matching 4-second windows of generated vs real sequences: window w
// compares the features of every generated slice [w*len, (w+1)*len) against
// the real slices at the same index.
inline std::vector<double> fid_over_time(const std::vector<const Matrix*>& generated,
                                         const std::vector<const Matrix*>& real,
                                         const StyleClassifier& clf, double window_seconds,
                                         double fps) {
  if (generated.empty() || real.empty()) throw Error("fid_over_time: empty set");
  const int win = static_cast<int>(std::lround(window_seconds * fps));
  if (win < 1) throw Error("fid_over_time: window shorter than one frame");
  int windows_gen = generated[0]->rows / win;
  for (const auto* m : generated) windows_gen = std::min(windows_gen, m->rows / win);
  int windows_real = real[0]->rows / win;
  for (const auto* m : real) windows_real = std::min(windows_real, m->rows / win);
  const int windows = std::min(windows_gen, windows_real);
  if (windows < 1)
    throw Error("fid_over_time: window of " + std::to_string(win) +
                " frames is longer than a sequence");

  auto slice_features = [&](const std::vector<const Matrix*>& set, int w) {
    FeatureSet features;
    features.reserve(set.size());
    for (const auto* m : set) {
      Matrix slice(win, m->cols);
      for (int t = 0; t < win; ++t)
        for (int c = 0; c < m->cols; ++c) slice.at(t, c) = m->at(w * win + t, c);
      features.push_back(clf.features(slice));
    }
    return features;
  };

  std::vector<double> series;
  series.reserve(windows);
  for (int w = 0; w < windows; ++w)
    series.push_back(fid(slice_features(generated, w), slice_features(real, w)));
  return series;
}

// Mean frame-to-frame displacement over frames (from, to]; the freeze
// diagnostic looks at the final quarter of long rollouts.
inline double mean_frame_displacement(const Matrix& poses, int from, int to) {
  if (from < 0 || to > poses.rows || to - from < 2)
    throw Error("mean_frame_displacement: bad range");
  double acc = 0.0;
  int count = 0;
  for (int t = from + 1; t < to; ++t) {
    double d2 = 0.0;
    for (int c = 0; c < poses.cols; ++c) {
      const double d = poses.at(t, c) - poses.at(t - 1, c);
      d2 += d * d;
    }
    acc += std::sqrt(d2);
    ++count;
  }
  return acc / count;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct MetricsReport {
  double fid = 0.0;
  double style_acc = 0.0;
  double beat_coverage = 0.0;
  double beat_hit_rate = 0.0;
  double diversity = 0.0;
  double multimodality = 0.0;
  std::vector<double> fid_over_time;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["fid"] = fid;
    j["style_acc"] = style_acc;
    j["beat_coverage"] = beat_coverage;
    j["beat_hit_rate"] = beat_hit_rate;
    j["diversity"] = diversity;
    j["multimodality"] = multimodality;
    j["fid_over_time"] = nlohmann::json::array();
    for (std::size_t w = 0; w < fid_over_time.size(); ++w)
      j["fid_over_time"].push_back({{"window", w}, {"fid", fid_over_time[w]}});
    return j;
  }

  std::string to_csv() const {
    std::string csv = "fid,style_acc,beat_coverage,beat_hit_rate,diversity,multimodality\n";
    csv += format_g17(fid) + "," + format_g17(style_acc) + "," + format_g17(beat_coverage) + "," +
           format_g17(beat_hit_rate) + "," + format_g17(diversity) + "," +
           format_g17(multimodality) + "\n";
    return csv;
  }

  std::string fid_over_time_csv() const {
    std::string csv = "window,fid\n";
    for (std::size_t w = 0; w < fid_over_time.size(); ++w)
      csv += std::to_string(w) + "," + format_g17(fid_over_time[w]) + "\n";
    return csv;
  }
};

}  // namespace dancegen
