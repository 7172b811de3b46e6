// dancegen: synthesize corpora, train the music-to-dance model, generate
// pose sequences and run the evaluation suite from the command line.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dancegen/checkpoint.hpp"
#include "dancegen/config.hpp"
#include "dancegen/datapipe.hpp"
#include "dancegen/evaluate.hpp"
#include "dancegen/metrics.hpp"
#include "dancegen/model.hpp"
#include "dancegen/textio.hpp"
#include "dancegen/training.hpp"

namespace fs = std::filesystem;
using namespace dancegen;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

RunConfig load_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  if (!config_path.empty()) {
    try {
      doc = nlohmann::json::parse(read_text_file(config_path));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(config_path + ": " + e.what());
    }
  }
  for (const auto& assignment : overrides) apply_override(doc, assignment);
  return parse_run_config(doc);
}

void echo_config(const RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  write_text_file((fs::path(out_dir) / "config.json").string(), to_json(cfg).dump(2) + "\n");
}

int cmd_synth_data(const RunConfig& cfg, const std::string& out_dir) {
  CorpusSpec spec;
  spec.styles = cfg.data.styles;
  spec.clips_per_style = cfg.data.clips_per_style;
  spec.frames = cfg.data.frames;
  spec.fps = cfg.data.fps;
  spec.seed = cfg.data.seed;
  auto dataset = synth_corpus(spec);
  assign_split(dataset, cfg.data.train_fraction, cfg.data.seed);
  save_dataset(dataset, out_dir);
  echo_config(cfg, out_dir);

  int train = 0, test = 0;
  for (const auto& clip : dataset.clips) (clip.split == "train" ? train : test)++;
  std::cout << "wrote " << dataset.clips.size() << " clips (" << cfg.data.styles << " styles, "
            << cfg.data.frames << " frames @ " << cfg.data.fps << " fps) to " << out_dir << "\n"
            << "split: " << train << " train / " << test << " test\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir,
              const std::string& resume) {
  auto dataset = load_dataset(data_dir);
  TrainConfig train_cfg = cfg.train_config();
  fs::create_directories(out_dir);
  train_cfg.checkpoint_dir = (fs::path(out_dir) / "checkpoint").string();
  echo_config(cfg, out_dir);

  auto result = train(dataset, train_cfg, resume);
  write_text_file((fs::path(out_dir) / "trainlog.csv").string(), result.log.to_csv());

  const auto& last = result.log.records.back();
  std::cout << "trained " << result.log.records.size() << " epochs; final loss " << last.loss
            << " (" << last.loss_per_elem << " per element), p=" << last.p << "\n"
            << "checkpoint: " << train_cfg.checkpoint_dir << "\n";
  return kExitOk;
}

int cmd_generate(const std::string& checkpoint_dir, const std::string& music_file,
                 std::uint64_t seed, const std::string& out_file) {
  auto loaded = load_model_checkpoint(checkpoint_dir);
  auto music = read_clip_file(music_file);
  const Matrix poses = loaded.model.generate_poses(music.frames, seed);
  write_clip_file(out_file, poses, music.fps, {"seed=" + std::to_string(seed)});
  std::cout << "generated " << poses.rows << " poses to " << out_file << "\n";
  return kExitOk;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint_dir,
                 const std::string& data_dir, const std::string& out_file) {
  auto loaded = load_model_checkpoint(checkpoint_dir);
  auto dataset = load_dataset(data_dir);
  auto result = evaluate_model(loaded.model, dataset, cfg.metrics, cfg.classifier_config());

  const fs::path out_path(out_file);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_text_file(out_file, result.report.to_json().dump(2) + "\n");
  fs::path base = out_path;
  base.replace_extension();
  write_text_file(base.string() + ".csv", result.report.to_csv());
  write_text_file(base.string() + "_fid_over_time.csv", result.report.fid_over_time_csv());

  std::cout << "fid=" << result.report.fid << " style_acc=" << result.report.style_acc
            << " beat_coverage=" << result.report.beat_coverage
            << " beat_hit_rate=" << result.report.beat_hit_rate
            << " diversity=" << result.report.diversity
            << " multimodality=" << result.report.multimodality << "\n"
            << "report: " << out_file << "\n";
  return kExitOk;
}

int cmd_beats(const RunConfig& cfg, const std::string& music_file, const std::string& pose_file,
              bool use_onset, double onset_threshold) {
  auto music = read_clip_file(music_file);
  auto pose = read_clip_file(pose_file);

  const auto layout = default_feature_layout();
  if (music.frames.cols != layout_width(layout))
    throw IoError("beats: music clip has " + std::to_string(music.frames.cols) +
                  " channels, expected the default layout width " +
                  std::to_string(layout_width(layout)));
  MusicFeatureSequence seq;
  seq.frames = music.frames;
  seq.layout = layout;
  seq.fps = music.fps;

  const BeatList musical = use_onset ? beats_from_onset(seq.channel("onset"), onset_threshold)
                                     : beats_from_onehot(seq.channel("beat_onehot"));
  const BeatList kinematic =
      kinematic_beats(pose.frames, cfg.metrics.window, cfg.metrics.prominence);
  const double dt_frames = cfg.metrics.dt * music.fps;

  nlohmann::json out;
  out["kinematic_beats"] = kinematic;
  out["musical_beats"] = musical;
  if (!musical.empty()) {
    const auto [coverage, hit] = beat_coverage_hit(kinematic, musical, dt_frames);
    out["beat_coverage"] = coverage;
    out["beat_hit_rate"] = hit;
  }
  if (!kinematic.empty())
    out["alignment_ratio"] = beat_alignment_ratio(kinematic, musical, dt_frames);
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"music-conditioned dance generation toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "override a config value: section.key=value");

  auto* synth = app.add_subcommand("synth-data", "generate a synthetic music/dance corpus");
  std::string synth_out;
  synth->add_option("out_dir", synth_out, "output dataset directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train a model on a dataset");
  std::string train_data, train_out, train_resume;
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();
  train_cmd->add_option("--resume", train_resume, "checkpoint directory to resume from");

  auto* gen = app.add_subcommand("generate", "synthesize a dance for a music clip");
  std::string gen_ckpt, gen_music, gen_out;
  std::uint64_t gen_seed = 1;
  gen->add_option("--checkpoint", gen_ckpt, "model checkpoint directory")->required();
  gen->add_option("--music", gen_music, "music feature clip file")->required();
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--out", gen_out, "output pose clip file")->required();

  auto* eval = app.add_subcommand("evaluate", "run the metric suite on a trained model");
  std::string eval_ckpt, eval_data, eval_out;
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint directory")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--out", eval_out, "metrics report JSON path")->required();

  auto* beats = app.add_subcommand("beats", "beat lists and coverage/hit for one music/pose pair");
  std::string beats_music, beats_pose;
  bool beats_onset = false;
  double beats_threshold = 0.5;
  beats->add_option("--music", beats_music, "music feature clip file")->required();
  beats->add_option("--pose", beats_pose, "pose clip file")->required();
  beats->add_flag("--onset", beats_onset, "detect musical beats from onset strength");
  beats->add_option("--onset-threshold", beats_threshold, "onset peak threshold");

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig cfg = load_config(config_path, overrides);
    if (*synth) return cmd_synth_data(cfg, synth_out);
    if (*train_cmd) return cmd_train(cfg, train_data, train_out, train_resume);
    if (*gen) return cmd_generate(gen_ckpt, gen_music, gen_seed, gen_out);
    if (*eval) return cmd_evaluate(cfg, eval_ckpt, eval_data, eval_out);
    if (*beats) return cmd_beats(cfg, beats_music, beats_pose, beats_onset, beats_threshold);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}
