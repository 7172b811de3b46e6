#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dancegen/errors.hpp"
#include "dancegen/matrix.hpp"
#include "dancegen/rng.hpp"
#include "dancegen/textio.hpp"

#include "json.hpp"

// Dataset handling: the per-frame acoustic feature layout, pose sequences
// with the (0,0)-means-missing marker convention, linear interpolation of
// missing keyjoints, pose normalization, synthetic corpus generation and
// clip/manifest file I/O.

namespace dancegen {

struct FeatureGroup {
  std::string name;
  int width = 0;
};
using FeatureLayout = std::vector<FeatureGroup>;

// 20 + 20 + 12 + 384 + 1 + 1 = 438 channels per frame.
inline FeatureLayout default_feature_layout() {
  return {{"mfcc", 20},     {"mfcc_delta", 20}, {"chroma", 12},
          {"tempogram", 384}, {"onset", 1},       {"beat_onehot", 1}};
}

inline int layout_width(const FeatureLayout& layout) {
  int w = 0;
  for (const auto& g : layout) w += g.width;
  return w;
}

inline int layout_offset(const FeatureLayout& layout, const std::string& name) {
  int off = 0;
  for (const auto& g : layout) {
    if (g.name == name) return off;
    off += g.width;
  }
  throw Error("feature layout has no group named '" + name + "'");
}

struct MusicFeatureSequence {
  Matrix frames;  // n x d_x
  FeatureLayout layout = default_feature_layout();
  double fps = 15.0;

  int length() const { return frames.rows; }
  int width() const { return frames.cols; }

  std::vector<double> channel(const std::string& name) const {
    const int off = layout_offset(layout, name);
    std::vector<double> out(frames.rows);
    for (int r = 0; r < frames.rows; ++r) out[r] = frames.at(r, off);
    return out;
  }
};

// 25 keyjoints x 2 coordinates per frame; a joint with both coordinates
// exactly 0 is missing (pose-extractor convention).
struct PoseSequence {
  Matrix frames;  // n x d_y
  double fps = 15.0;

  int length() const { return frames.rows; }
  int joints() const { return frames.cols / 2; }

  bool joint_missing(int frame, int joint) const {
    return frames.at(frame, 2 * joint) == 0.0 && frames.at(frame, 2 * joint + 1) == 0.0;
  }
};

constexpr int kPoseJoints = 25;
constexpr int kPoseWidth = 2 * kPoseJoints;
constexpr int kHipJoint = 8;   // mid-hip in the 25-joint body layout
constexpr int kNeckJoint = 1;  // neck

struct DatasetClip {
  MusicFeatureSequence music;
  PoseSequence pose;
  int style = 0;
  std::string split = "train";
};

struct DanceDataset {
  std::vector<DatasetClip> clips;
  FeatureLayout layout = default_feature_layout();
  double fps = 15.0;

  std::vector<const DatasetClip*> split_clips(const std::string& split) const {
    std::vector<const DatasetClip*> out;
    for (const auto& c : clips)
      if (c.split == split) out.push_back(&c);
    return out;
  }

  void validate() const {
    for (std::size_t i = 0; i < clips.size(); ++i)
      if (clips[i].music.length() != clips[i].pose.length())
        throw Error("dataset clip " + std::to_string(i) + ": music has " +
                    std::to_string(clips[i].music.length()) + " frames, pose has " +
                    std::to_string(clips[i].pose.length()));
  }
};

// ---------------------------------------------------------------------------
// Pose cleaning and normalization
// ---------------------------------------------------------------------------

// Replaces each missing joint coordinate by linear interpolation between the
// nearest preceding and following frames where that joint is present;
// leading/trailing gaps copy the nearest present frame. Present values are
// untouched. A joint missing in every frame is an error.
inline PoseSequence interpolate_missing(const PoseSequence& poses) {
  PoseSequence out = poses;
  const int n = poses.length();
  const int joints = poses.joints();
  for (int j = 0; j < joints; ++j) {
    std::vector<int> present;
    for (int t = 0; t < n; ++t)
      if (!poses.joint_missing(t, j)) present.push_back(t);
    if (present.empty())
      throw Error("interpolate_missing: joint " + std::to_string(j) + " is missing in every frame");
    if (static_cast<int>(present.size()) == n) continue;
    std::size_t next = 0;
    for (int t = 0; t < n; ++t) {
      if (!poses.joint_missing(t, j)) continue;
      while (next < present.size() && present[next] < t) ++next;
      const int after = next < present.size() ? present[next] : -1;
      const int before = next > 0 ? present[next - 1] : -1;
      for (int c = 0; c < 2; ++c) {
        double value;
        if (before < 0) {
          value = poses.frames.at(after, 2 * j + c);
        } else if (after < 0) {
          value = poses.frames.at(before, 2 * j + c);
        } else {
          const double w = static_cast<double>(t - before) / (after - before);
          value = poses.frames.at(before, 2 * j + c) * (1.0 - w) +
                  poses.frames.at(after, 2 * j + c) * w;
        }
        out.frames.at(t, 2 * j + c) = value;
      }
    }
  }
  return out;
}

// Dataset-level pose normalization: center on the mean hip position and scale
// by the mean neck-to-hip (torso) length. The three numbers are stored with
// the model checkpoint so generated poses can be mapped back.
struct PoseNormalizer {
  double offset_x = 0.0;
  double offset_y = 0.0;
  double scale = 1.0;

  static PoseNormalizer fit(const std::vector<const PoseSequence*>& sequences) {
    double sx = 0.0, sy = 0.0, storso = 0.0;
    std::size_t frames = 0;
    for (const auto* seq : sequences) {
      for (int t = 0; t < seq->length(); ++t) {
        const double hx = seq->frames.at(t, 2 * kHipJoint);
        const double hy = seq->frames.at(t, 2 * kHipJoint + 1);
        const double nx = seq->frames.at(t, 2 * kNeckJoint);
        const double ny = seq->frames.at(t, 2 * kNeckJoint + 1);
        sx += hx;
        sy += hy;
        storso += std::hypot(nx - hx, ny - hy);
        ++frames;
      }
    }
    if (frames == 0) throw Error("PoseNormalizer::fit: no frames");
    PoseNormalizer norm;
    norm.offset_x = sx / frames;
    norm.offset_y = sy / frames;
    norm.scale = storso / frames;
    if (norm.scale <= 0.0) norm.scale = 1.0;
    return norm;
  }

  Matrix apply(const Matrix& frames) const {
    Matrix out = frames;
    for (int t = 0; t < out.rows; ++t)
      for (int j = 0; j < out.cols / 2; ++j) {
        out.at(t, 2 * j) = (out.at(t, 2 * j) - offset_x) / scale;
        out.at(t, 2 * j + 1) = (out.at(t, 2 * j + 1) - offset_y) / scale;
      }
    return out;
  }

  Matrix invert(const Matrix& frames) const {
    Matrix out = frames;
    for (int t = 0; t < out.rows; ++t)
      for (int j = 0; j < out.cols / 2; ++j) {
        out.at(t, 2 * j) = out.at(t, 2 * j) * scale + offset_x;
        out.at(t, 2 * j + 1) = out.at(t, 2 * j + 1) * scale + offset_y;
      }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Feature assembly
// ---------------------------------------------------------------------------

// Horizontal concatenation of named channel groups in layout order, with
// widths and frame counts validated against the layout.
inline MusicFeatureSequence assemble_features(
    const std::vector<std::pair<std::string, Matrix>>& groups, const FeatureLayout& layout,
    double fps) {
  if (layout.empty()) throw Error("assemble_features: empty layout");
  std::vector<Matrix> ordered;
  ordered.reserve(layout.size());
  int frames = -1;
  for (const auto& entry : layout) {
    const Matrix* found = nullptr;
    for (const auto& [name, m] : groups)
      if (name == entry.name) {
        found = &m;
        break;
      }
    if (!found) throw Error("assemble_features: missing group '" + entry.name + "'");
    if (found->cols != entry.width)
      throw ShapeError("assemble_features: group '" + entry.name + "' has width " +
                       std::to_string(found->cols) + ", layout declares " +
                       std::to_string(entry.width));
    if (frames < 0) frames = found->rows;
    if (found->rows != frames)
      throw ShapeError("assemble_features: group '" + entry.name + "' has " +
                       std::to_string(found->rows) + " frames, expected " +
                       std::to_string(frames));
    ordered.push_back(*found);
  }
  MusicFeatureSequence seq;
  seq.frames = hconcat(ordered);
  seq.layout = layout;
  seq.fps = fps;
  return seq;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

struct CorpusSpec {
  int styles = 3;
  int clips_per_style = 10;
  int frames = 240;
  double fps = 15.0;
  std::uint64_t seed = 1;
};

namespace detail {

// Standing 25-joint figure, image-style coordinates (y grows downward),
// shifted away from the origin so no legitimate joint hits (0,0).
inline const std::vector<std::pair<double, double>>& base_skeleton() {
  static const std::vector<std::pair<double, double>> joints = {
      {4.00, 2.00},  // 0 nose
      {4.00, 2.60},  // 1 neck
      {3.55, 2.65},  // 2 right shoulder
      {3.35, 3.45},  // 3 right elbow
      {3.25, 4.20},  // 4 right wrist
      {4.45, 2.65},  // 5 left shoulder
      {4.65, 3.45},  // 6 left elbow
      {4.75, 4.20},  // 7 left wrist
      {4.00, 4.10},  // 8 mid hip
      {3.72, 4.12},  // 9 right hip
      {3.68, 5.15},  // 10 right knee
      {3.66, 6.10},  // 11 right ankle
      {4.28, 4.12},  // 12 left hip
      {4.32, 5.15},  // 13 left knee
      {4.34, 6.10},  // 14 left ankle
      {3.90, 1.90},  // 15 right eye
      {4.10, 1.90},  // 16 left eye
      {3.80, 1.98},  // 17 right ear
      {4.20, 1.98},  // 18 left ear
      {4.46, 6.28},  // 19 left big toe
      {4.52, 6.30},  // 20 left small toe
      {4.30, 6.32},  // 21 left heel
      {3.54, 6.28},  // 22 right big toe
      {3.48, 6.30},  // 23 right small toe
      {3.70, 6.32},  // 24 right heel
  };
  return joints;
}

// Per-style motion signature: beat period in frames, posture shift applied to
// the base skeleton, and which joints carry the oscillation.
struct StyleProfile {
  int period;
  double posture_arm_dy;   // arm joints shifted up/down
  double posture_leg_dx;   // stance width change
  double arm_amp;
  double leg_amp;
  double head_amp;
};

inline StyleProfile style_profile(int style) {
  switch (style % 3) {
    case 0: return {10, -1.15, 0.00, 1.05, 0.20, 0.40};  // arms-up, fast, arm-dominant
    case 1: return {14, 0.40, 0.50, 0.25, 0.95, 0.15};   // wide stance, leg-dominant
    default: return {18, 0.10, -0.30, 0.55, 0.55, 0.65};  // slow, full-body sway
  }
}

inline double smootherstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * u * (u * (6.0 * u - 15.0) + 10.0);
}


}  // namespace detail

// Beat frames planted by the corpus generator for a clip of the given style.
// The grid keeps half a period of travel inside the clip on both ends so the
// kinematic detector sees motion walls around every planted beat.
inline std::vector<int> planted_beat_grid(int frames, int style) {
  const int period = detail::style_profile(style).period;
  std::vector<int> grid;
  for (int b = 2 + period / 2; b + period / 2 < frames; b += period) grid.push_back(b);
  return grid;
}

namespace detail {

inline Matrix synth_pose_clip(int frames, int style, Rng& rng) {
  const auto profile = style_profile(style);
  const auto& base = base_skeleton();
  const auto grid = planted_beat_grid(frames, style);

  // style posture: arms raised/lowered, stance widened
  std::vector<std::pair<double, double>> posture(base);
  for (int j : {3, 4, 6, 7}) posture[j].second += profile.posture_arm_dy;
  for (int j : {10, 11, 22, 23, 24}) posture[j].first -= profile.posture_leg_dx;
  for (int j : {13, 14, 19, 20, 21}) posture[j].first += profile.posture_leg_dx;

  // per-joint oscillation amplitudes and directions
  std::vector<std::pair<double, double>> swing(kPoseJoints, {0.0, 0.0});
  auto set_swing = [&](std::initializer_list<int> joints, double amp) {
    for (int j : joints) {
      const double angle = rng.uniform(0.0, 6.283185307179586);
      swing[j] = {amp * std::cos(angle), amp * std::sin(angle)};
    }
  };
  set_swing({2, 3, 4, 5, 6, 7}, profile.arm_amp);
  set_swing({9, 10, 11, 12, 13, 14, 19, 20, 21, 22, 23, 24}, profile.leg_amp);
  set_swing({0, 15, 16, 17, 18}, profile.head_amp);

  // key pose per beat: four phases per joint (swing, its perpendicular and
  // their negatives); each beat turns the phase wheel one step in a random
  // per-clip direction. Movement direction changes on every beat frame, and
  // the upcoming turn is carried by the poses alone -- the music marks beats
  // but never which way the dance turns next. A small per-key jitter varies
  // the choreography between clips.
  const int keys = static_cast<int>(grid.size()) + 2;
  std::vector<std::vector<double>> key_pose(keys, std::vector<double>(kPoseWidth));
  int phase = static_cast<int>(rng.below(4));
  for (int kidx = 0; kidx < keys; ++kidx) {
    for (int j = 0; j < kPoseJoints; ++j) {
      double dx = 0.0, dy = 0.0;
      switch (phase) {
        case 0: dx = swing[j].first; dy = swing[j].second; break;
        case 1: dx = -swing[j].second; dy = swing[j].first; break;
        case 2: dx = -swing[j].first; dy = -swing[j].second; break;
        case 3: dx = swing[j].second; dy = -swing[j].first; break;
      }
      key_pose[kidx][2 * j] = posture[j].first + dx + rng.normal(0.0, 0.01);
      key_pose[kidx][2 * j + 1] = posture[j].second + dy + rng.normal(0.0, 0.01);
    }
    phase = (phase + (rng.uniform() < 0.5 ? 1 : 3)) % 4;
  }

  // trajectory: hold each key for 3 frames centered on its beat, smootherstep
  // travel in between, so speed pins near zero through every planted beat.
  // Virtual beats one period outside the clip keep the lead-in/tail smooth.
  const int n_beats = static_cast<int>(grid.size());
  auto beat_at = [&](int idx) {
    if (idx < 0) return grid.front() + profile.period * idx;
    if (idx >= n_beats) return grid.back() + profile.period * (idx - n_beats + 1);
    return grid[idx];
  };
  Matrix out(frames, kPoseWidth);
  auto write_frame = [&](int t, const std::vector<double>& a, const std::vector<double>& b,
                         double u) {
    const double w = smootherstep(u);
    for (int c = 0; c < kPoseWidth; ++c) out.at(t, c) = a[c] * (1.0 - w) + b[c] * w;
  };
  for (int t = 0; t < frames; ++t) {
    int kidx = 0;  // first beat index strictly after t
    while (kidx < n_beats && grid[kidx] <= t) ++kidx;
    const int prev_beat = beat_at(kidx - 1);
    const int next_beat = beat_at(kidx);
    const auto& prev_key = key_pose[kidx];      // key held at prev_beat
    const auto& next_key = key_pose[kidx + 1];  // key held at next_beat
    if (t == prev_beat + 1) {
      // anticipation lean: the trailing dwell frame tips two percent toward
      // the next key, telegraphing the upcoming turn direction
      for (int c = 0; c < kPoseWidth; ++c)
        out.at(t, c) = prev_key[c] + 0.02 * (next_key[c] - prev_key[c]);
    } else if (t <= prev_beat) {
      write_frame(t, prev_key, prev_key, 0.0);
    } else if (t >= next_beat - 1) {
      write_frame(t, next_key, next_key, 0.0);
    } else {
      const double span = static_cast<double>((next_beat - 1) - (prev_beat + 1));
      const double u = static_cast<double>(t - (prev_beat + 1)) / span;
      write_frame(t, prev_key, next_key, u);
    }
  }
  for (int t = 0; t < frames; ++t)
    for (int c = 0; c < kPoseWidth; ++c) out.at(t, c) += rng.normal(0.0, 0.002);
  return out;
}

inline Matrix synth_music_clip(int frames, int style, const FeatureLayout& layout, Rng& rng) {
  const auto grid = planted_beat_grid(frames, style);
  Matrix out(frames, layout_width(layout));

  const int onset_off = layout_offset(layout, "onset");
  const int beat_off = layout_offset(layout, "beat_onehot");
  for (int b : grid) out.at(b, beat_off) = 1.0;
  for (int t = 0; t < frames; ++t) {
    double onset = 0.015 * std::fabs(rng.normal());
    for (int b : grid) {
      const double d = t - b;
      onset += std::exp(-d * d / (2.0 * 1.2 * 1.2));
    }
    out.at(t, onset_off) = onset;
  }

  // remaining groups: style-colored band-limited noise (EMA-smoothed white
  // noise with a style-specific smoothing constant, gain and offset)
  const double alpha = 0.15 + 0.3 * (style % 3);
  for (const auto& group : layout) {
    if (group.name == "onset" || group.name == "beat_onehot") continue;
    const int off = layout_offset(layout, group.name);
    for (int c = 0; c < group.width; ++c) {
      const double gain = 0.3 + 0.7 * rng.uniform();
      const double offset = 0.2 * (style % 3) + 0.1 * rng.normal();
      double state = rng.normal();
      for (int t = 0; t < frames; ++t) {
        state = (1.0 - alpha) * state + alpha * rng.normal();
        out.at(t, off + c) = offset + gain * state;
      }
    }
  }
  return out;
}

}  // namespace detail

// Generates aligned (music, pose) pairs per style with planted beat grids:
// beat_onehot marks the grid, onset bumps peak on it, and the pose trajectory
// reverses direction (through a short hold) on every grid frame, so kinematic
// beats coincide with planted beats by construction.
inline DanceDataset synth_corpus(const CorpusSpec& spec) {
  if (spec.styles < 1 || spec.styles > 3)
    throw ConfigError("synth_corpus: styles must be in [1, 3]");
  if (spec.clips_per_style < 1) throw ConfigError("synth_corpus: clips_per_style must be >= 1");
  for (int s = 0; s < spec.styles; ++s) {
    const int period = detail::style_profile(s).period;
    if (spec.frames < 2 * period)
      throw ConfigError("synth_corpus: frames must be >= twice the beat period (" +
                        std::to_string(2 * period) + " for style " + std::to_string(s) + ")");
  }
  DanceDataset ds;
  ds.fps = spec.fps;
  ds.layout = default_feature_layout();
  for (int s = 0; s < spec.styles; ++s) {
    for (int c = 0; c < spec.clips_per_style; ++c) {
      Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(c)));
      DatasetClip clip;
      clip.style = s;
      clip.split = "train";
      clip.pose.fps = spec.fps;
      clip.pose.frames = detail::synth_pose_clip(spec.frames, s, rng);
      clip.music.fps = spec.fps;
      clip.music.layout = ds.layout;
      clip.music.frames = detail::synth_music_clip(spec.frames, s, ds.layout, rng);
      ds.clips.push_back(std::move(clip));
    }
  }
  return ds;
}

// Seeded shuffled split: the first train_fraction of clips become "train",
// the rest "test".
inline void assign_split(DanceDataset& ds, double train_fraction, std::uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction > 1.0)
    throw ConfigError("assign_split: train_fraction must be in (0, 1]");
  std::vector<std::size_t> order(ds.clips.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x5917));
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.below(i)]);
  const std::size_t train_count =
      static_cast<std::size_t>(std::round(train_fraction * static_cast<double>(order.size())));
  for (std::size_t rank = 0; rank < order.size(); ++rank)
    ds.clips[order[rank]].split = rank < train_count ? "train" : "test";
}

// ---------------------------------------------------------------------------
// Dataset file I/O
// ---------------------------------------------------------------------------

inline void save_dataset(const DanceDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["fps"] = ds.fps;
  manifest["layout"] = nlohmann::json::array();
  for (const auto& g : ds.layout)
    manifest["layout"].push_back({{"name", g.name}, {"width", g.width}});
  manifest["clips"] = nlohmann::json::array();
  char name[64];
  for (std::size_t i = 0; i < ds.clips.size(); ++i) {
    const auto& clip = ds.clips[i];
    std::snprintf(name, sizeof(name), "clip_%04zu", i);
    const std::string music_file = std::string(name) + "_music.txt";
    const std::string pose_file = std::string(name) + "_pose.txt";
    write_clip_file((fs::path(dir) / music_file).string(), clip.music.frames, clip.music.fps);
    write_clip_file((fs::path(dir) / pose_file).string(), clip.pose.frames, clip.pose.fps);
    manifest["clips"].push_back({{"music_file", music_file},
                                 {"pose_file", pose_file},
                                 {"style", clip.style},
                                 {"split", clip.split}});
  }
  write_text_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

inline DanceDataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(manifest_path + ": " + e.what());
  }
  DanceDataset ds;
  ds.fps = manifest.at("fps").get<double>();
  ds.layout.clear();
  for (const auto& g : manifest.at("layout"))
    ds.layout.push_back({g.at("name").get<std::string>(), g.at("width").get<int>()});
  const int expected_width = layout_width(ds.layout);
  for (const auto& entry : manifest.at("clips")) {
    DatasetClip clip;
    const std::string music_file = entry.at("music_file").get<std::string>();
    const std::string pose_file = entry.at("pose_file").get<std::string>();
    const std::string music_path = (fs::path(dir) / music_file).string();
    const std::string pose_path = (fs::path(dir) / pose_file).string();
    if (!fs::exists(music_path)) throw IoError("manifest references missing clip file '" + music_file + "'");
    if (!fs::exists(pose_path)) throw IoError("manifest references missing clip file '" + pose_file + "'");
    auto music = read_clip_file(music_path);
    auto pose = read_clip_file(pose_path);
    if (music.frames.cols != expected_width)
      throw IoError(music_file + ": width " + std::to_string(music.frames.cols) +
                    " does not match manifest layout width " + std::to_string(expected_width));
    clip.music.frames = std::move(music.frames);
    clip.music.fps = music.fps;
    clip.music.layout = ds.layout;
    clip.pose.frames = std::move(pose.frames);
    clip.pose.fps = pose.fps;
    clip.style = entry.at("style").get<int>();
    clip.split = entry.at("split").get<std::string>();
    if (clip.music.length() != clip.pose.length())
      throw IoError(music_file + "/" + pose_file + ": music has " +
                    std::to_string(clip.music.length()) + " frames, pose has " +
                    std::to_string(clip.pose.length()));
    ds.clips.push_back(std::move(clip));
  }
  return ds;
}

}  // namespace dancegen
