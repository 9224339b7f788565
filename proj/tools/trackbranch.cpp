// trackbranch: simulate | train | calibrate | track | eval

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "trackbranch/cli.hpp"
#include "trackbranch/core.hpp"

namespace {

using nlohmann::json;
namespace cli = tb::cli;

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream is(path);
  if (!is) throw tb::ConfigError("cannot open config '" + path + "'");
  try {
    json j = json::parse(is);
    if (!j.is_object()) throw tb::ConfigError("config '" + path + "' must hold a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw tb::ConfigError("config '" + path + "': " + e.what());
  }
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (const auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw tb::ConfigError(std::string("config field '") + key + "': " + e.what());
    }
  }
}

template <typename T>
void override(const std::optional<T>& flag, T& out) {
  if (flag) out = *flag;
}

tb::LabelSource parse_labels(const std::string& s) {
  if (s == "iou") return tb::LabelSource::kIouAssignment;
  if (s == "detection") return tb::LabelSource::kDetectionLabels;
  throw tb::ConfigError("labels must be 'iou' or 'detection'");
}

struct PairingFlags {
  std::optional<double> iou_min, image_width, score_threshold;
  std::optional<std::string> labels;

  void add(CLI::App* app) {
    app->add_option("--iou-min", iou_min, "IoU a detection must exceed to take a ground-truth identity");
    app->add_option("--image-width", image_width, "Minimum slot width used when concatenating frames");
    app->add_option("--score-threshold", score_threshold, "Detections below this confidence are ignored (p)");
    app->add_option("--labels", labels, "Identity source: iou (assignment) or detection (gt_id passthrough)");
  }

  void apply(const json& cfg, cli::PairingOptions& p) const {
    take(cfg, "iou_min", p.iou_min);
    take(cfg, "image_width", p.image_width);
    take(cfg, "score_threshold", p.score_threshold);
    std::string l;
    take(cfg, "labels", l);
    if (!l.empty()) p.labels = parse_labels(l);
    override(iou_min, p.iou_min);
    override(image_width, p.image_width);
    override(score_threshold, p.score_threshold);
    if (labels) p.labels = parse_labels(*labels);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Embedding-based tracking-by-detection: simulate, train, calibrate, track, evaluate"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cli::kToolVersion);

  // simulate ---------------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic labelled sequence");
  std::string sim_config, sim_out;
  std::optional<std::uint64_t> sim_seed, sim_sequence_seed;
  std::optional<int> identities, frames, feature_dim, camera_id, dev_frames, holdout_frames;
  std::optional<double> separation, noise_sigma, dropout, image_width, image_height, speed_min, speed_max, box_jitter,
      confidence_min;
  std::optional<std::int64_t> start_frame;
  sim->add_option("--config", sim_config, "JSON config with simulation fields");
  sim->add_option("--out", sim_out, "Output directory")->required();
  sim->add_option("--seed", sim_seed, "Archetype (and default sequence) seed");
  sim->add_option("--sequence-seed", sim_sequence_seed, "Seed of the motion/noise stream");
  sim->add_option("--identities", identities);
  sim->add_option("--frames", frames);
  sim->add_option("--feature-dim", feature_dim);
  sim->add_option("--separation", separation, "Minimum distance between identity archetypes");
  sim->add_option("--noise-sigma", noise_sigma, "RMS norm of the feature noise");
  sim->add_option("--dropout", dropout, "Detection drop probability");
  sim->add_option("--image-width", image_width);
  sim->add_option("--image-height", image_height);
  sim->add_option("--speed-min", speed_min);
  sim->add_option("--speed-max", speed_max);
  sim->add_option("--box-jitter", box_jitter);
  sim->add_option("--confidence-min", confidence_min);
  sim->add_option("--camera-id", camera_id);
  sim->add_option("--start-frame", start_frame);
  sim->add_option("--dev-frames", dev_frames, "Length of an extra dev sequence (0 = none)");
  sim->add_option("--holdout-frames", holdout_frames, "Length of an extra held-out sequence (0 = none)");

  // train ------------------------------------------------------------------
  auto* trn = app.add_subcommand("train", "Train the track head on labelled frames");
  std::string trn_config, trn_out, trn_input;
  std::optional<std::uint64_t> trn_seed;
  std::optional<double> margin, pull_margin, lambda_cls, lambda_reg, lambda_tri, lambda_pull, lr0;
  std::optional<int> epochs, batch_size;
  std::optional<std::size_t> hidden_dim, embedding_dim;
  bool no_shuffle = false;
  PairingFlags trn_pairing;
  trn->add_option("--input", trn_input, "Frame file (JSON lines)")->required();
  trn->add_option("--config", trn_config, "JSON config with loss/training fields");
  trn->add_option("--out", trn_out, "Output directory")->required();
  trn->add_option("--seed", trn_seed);
  trn->add_option("--margin", margin, "Triplet margin m");
  trn->add_option("--pull-margin", pull_margin, "Pull margin m_pull");
  trn->add_option("--lambda-cls", lambda_cls);
  trn->add_option("--lambda-reg", lambda_reg);
  trn->add_option("--lambda-tri", lambda_tri);
  trn->add_option("--lambda-pull", lambda_pull);
  trn->add_option("--lr0", lr0, "Initial learning rate of the cosine schedule");
  trn->add_option("--epochs", epochs);
  trn->add_option("--batch-size", batch_size, "Images averaged per step");
  trn->add_option("--hidden-dim", hidden_dim);
  trn->add_option("--embedding-dim", embedding_dim);
  trn->add_flag("--no-shuffle", no_shuffle);
  trn_pairing.add(trn);

  // calibrate --------------------------------------------------------------
  auto* cal = app.add_subcommand("calibrate", "Choose the distance threshold on a dev sequence");
  std::string cal_config, cal_out, cal_input, cal_params;
  std::optional<std::uint64_t> cal_seed;
  std::optional<int> bins;
  std::optional<std::string> tie_break;
  PairingFlags cal_pairing;
  cal->add_option("--input", cal_input, "Dev frame file")->required();
  cal->add_option("--params", cal_params, "Track head parameter file")->required();
  cal->add_option("--config", cal_config);
  cal->add_option("--out", cal_out, "Output directory")->required();
  cal->add_option("--seed", cal_seed, "Unused; accepted for uniformity");
  cal->add_option("--bins", bins, "Histogram bin count");
  cal->add_option("--tie-break", tie_break, "smallest_h or largest_h");
  cal_pairing.add(cal);

  // track ------------------------------------------------------------------
  auto* trk = app.add_subcommand("track", "Associate detections across frames");
  trk->set_help_flag("--help", "Print this help message and exit");
  std::string trk_config, trk_out, trk_input, trk_params, trk_calibration;
  std::optional<std::uint64_t> trk_seed;
  std::optional<double> trk_h, trk_score;
  trk->add_option("--input", trk_input, "Frame file")->required();
  trk->add_option("--params", trk_params, "Track head parameter file")->required();
  trk->add_option("--config", trk_config);
  trk->add_option("--out", trk_out, "Output directory")->required();
  trk->add_option("--seed", trk_seed, "Unused; accepted for uniformity");
  trk->add_option("--h", trk_h, "Distance threshold");
  trk->add_option("--calibration", trk_calibration, "calibration.json providing h");
  trk->add_option("--score-threshold", trk_score);

  // eval -------------------------------------------------------------------
  auto* evl = app.add_subcommand("eval", "Compute MOTA, pair accuracy and mAP");
  std::string evl_config, evl_out, evl_tracks, evl_gt, evl_counts;
  std::optional<std::uint64_t> evl_seed;
  std::optional<double> evl_iou;
  evl->add_option("--tracks", evl_tracks, "Track file (JSON lines)");
  evl->add_option("--gt", evl_gt, "Ground-truth frame file");
  evl->add_option("--counts", evl_counts, "JSON fixture with mot_counts / pair_counts");
  evl->add_option("--config", evl_config);
  evl->add_option("--out", evl_out, "Output directory")->required();
  evl->add_option("--seed", evl_seed, "Unused; accepted for uniformity");
  evl->add_option("--iou-min", evl_iou);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      const json cfg = read_config(sim_config);
      cli::SimulateOptions opt;
      opt.sim = tb::sim_config_from_json(cfg);
      take(cfg, "dev_frames", opt.dev_frames);
      take(cfg, "holdout_frames", opt.holdout_frames);
      override(sim_seed, opt.sim.seed);
      if (sim_sequence_seed) opt.sim.sequence_seed = *sim_sequence_seed;
      override(identities, opt.sim.identities);
      override(frames, opt.sim.frames);
      override(feature_dim, opt.sim.feature_dim);
      override(separation, opt.sim.separation);
      override(noise_sigma, opt.sim.noise_sigma);
      override(dropout, opt.sim.dropout);
      override(image_width, opt.sim.image_width);
      override(image_height, opt.sim.image_height);
      override(speed_min, opt.sim.speed_min);
      override(speed_max, opt.sim.speed_max);
      override(box_jitter, opt.sim.box_jitter);
      override(confidence_min, opt.sim.confidence_min);
      override(camera_id, opt.sim.camera_id);
      override(start_frame, opt.sim.start_frame);
      override(dev_frames, opt.dev_frames);
      override(holdout_frames, opt.holdout_frames);
      opt.out_dir = sim_out;
      cli::cmd_simulate(opt);
      std::cout << "wrote simulated sequences to " << sim_out << '\n';
    } else if (trn->parsed()) {
      const json cfg = read_config(trn_config);
      cli::TrainOptions opt;
      opt.frames = trn_input;
      opt.out_dir = trn_out;
      opt.loss = tb::loss_config_from_json(cfg);
      take(cfg, "lr0", opt.train.lr0);
      take(cfg, "epochs", opt.train.epochs);
      take(cfg, "batch_size", opt.train.batch_size);
      take(cfg, "shuffle", opt.train.shuffle);
      take(cfg, "seed", opt.train.seed);
      take(cfg, "hidden_dim", opt.train.dims.hidden);
      take(cfg, "embedding_dim", opt.train.dims.embedding);
      override(margin, opt.loss.margin);
      override(pull_margin, opt.loss.pull_margin);
      override(lambda_cls, opt.loss.lambda_cls);
      override(lambda_reg, opt.loss.lambda_reg);
      override(lambda_tri, opt.loss.lambda_tri);
      override(lambda_pull, opt.loss.lambda_pull);
      override(trn_pairing.score_threshold, opt.loss.score_threshold);
      override(lr0, opt.train.lr0);
      override(epochs, opt.train.epochs);
      override(batch_size, opt.train.batch_size);
      override(trn_seed, opt.train.seed);
      override(hidden_dim, opt.train.dims.hidden);
      override(embedding_dim, opt.train.dims.embedding);
      if (no_shuffle) opt.train.shuffle = false;
      trn_pairing.apply(cfg, opt.pairing);
      const auto s = cli::cmd_train(opt);
      std::printf("trained on %zu batches (%zu identities): loss %.6g -> %.6g\n", s.batches, s.identities,
                  s.initial.weighted, s.final.weighted);
    } else if (cal->parsed()) {
      const json cfg = read_config(cal_config);
      cli::CalibrateOptions opt;
      opt.frames = cal_input;
      opt.params = cal_params;
      opt.out_dir = cal_out;
      take(cfg, "bins", opt.bins);
      override(bins, opt.bins);
      std::string tie = "smallest_h";
      take(cfg, "tie_break", tie);
      if (tie_break) tie = *tie_break;
      if (tie != "smallest_h" && tie != "largest_h") throw tb::ConfigError("tie-break must be smallest_h or largest_h");
      opt.tie = tie == "smallest_h" ? tb::TieBreak::kSmallestH : tb::TieBreak::kLargestH;
      cal_pairing.apply(cfg, opt.pairing);
      const auto sweep = cli::cmd_calibrate(opt);
      std::printf("h* = %.17g (objective %.6g)\n", sweep.best_h, sweep.best_objective);
    } else if (trk->parsed()) {
      const json cfg = read_config(trk_config);
      cli::TrackOptions opt;
      opt.frames = trk_input;
      opt.params = trk_params;
      opt.out_dir = trk_out;
      std::optional<double> h;
      if (cfg.contains("h")) h = cfg.at("h").get<double>();
      if (!trk_calibration.empty()) h = read_config(trk_calibration).at("h").get<double>();
      if (trk_h) h = trk_h;
      if (!h) throw tb::ConfigError("track needs --h or --calibration");
      opt.h = *h;
      if (cfg.contains("score_threshold")) opt.score_threshold = cfg.at("score_threshold").get<double>();
      if (trk_score) opt.score_threshold = trk_score;
      const auto records = cli::cmd_track(opt);
      std::printf("wrote %zu track records\n", records.size());
    } else if (evl->parsed()) {
      const json cfg = read_config(evl_config);
      cli::EvalOptions opt;
      opt.tracks = evl_tracks;
      opt.gt_frames = evl_gt;
      opt.counts = evl_counts;
      opt.out_dir = evl_out;
      take(cfg, "iou_min", opt.iou_min);
      override(evl_iou, opt.iou_min);
      if (opt.counts.empty() && (opt.tracks.empty() || opt.gt_frames.empty())) {
        throw tb::ConfigError("eval needs --tracks and --gt, or --counts");
      }
      std::cout << cli::cmd_eval(opt).dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
