#pragma once

// Reproducible workflows behind the `trackbranch` command line tool. Each
// command writes its outputs plus a manifest.json into an output directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trackbranch/calib.hpp"
#include "trackbranch/data.hpp"
#include "trackbranch/metrics.hpp"
#include "trackbranch/trackhead.hpp"

namespace tb::cli {

inline constexpr const char* kToolVersion = "0.1.0";

struct RunManifest {
  std::string subcommand;
  nlohmann::json inputs = nlohmann::json::object();
  std::vector<std::string> outputs;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

void write_manifest(const std::filesystem::path& out_dir, const RunManifest& m);

// Shared pipeline steps ----------------------------------------------------

struct PairingOptions {
  double score_threshold = 0.5;
  double iou_min = 0.5;
  LabelSource labels = LabelSource::kIouAssignment;
  double image_width = 1920.0;
};

/// Concatenates every pair of consecutive same-camera frames and keeps the
/// samples that contain a positive pair.
std::vector<LabeledBatch> training_batches(std::span<const FrameRecord> frames, const PairingOptions& opt);

/// Embedding distances of every cross-frame pair of labelled detections
/// between consecutive frames.
std::vector<LabeledDistance> cross_frame_distances(std::span<const FrameRecord> frames, const TrackHeadParams& params,
                                                   const PairingOptions& opt);

// Subcommands --------------------------------------------------------------

struct SimulateOptions {
  SimConfig sim;
  int dev_frames = 0;      // extra sequence over the same archetypes
  int holdout_frames = 0;  // extra sequence over the same archetypes
  std::filesystem::path out_dir;
};

/// Writes train.jsonl (plus dev.jsonl / holdout.jsonl when requested) and
/// archetypes.json.
void cmd_simulate(const SimulateOptions& opt);

struct TrainOptions {
  std::filesystem::path frames;
  LossConfig loss;
  TrainConfig train;
  PairingOptions pairing;
  std::filesystem::path out_dir;
};

struct TrainSummary {
  std::size_t batches = 0;
  std::size_t identities = 0;
  EpochLoss initial;
  EpochLoss final;
};

/// Writes params.json and loss_trace.csv. Throws DegenerateInputError when
/// the frames carry fewer than two identities.
TrainSummary cmd_train(const TrainOptions& opt);

struct CalibrateOptions {
  std::filesystem::path frames;
  std::filesystem::path params;
  int bins = 50;
  TieBreak tie = TieBreak::kSmallestH;
  PairingOptions pairing;
  std::filesystem::path out_dir;
};

/// Writes calibration.json, sweep.csv and histogram.csv.
SweepResult cmd_calibrate(const CalibrateOptions& opt);

struct TrackOptions {
  std::filesystem::path frames;
  std::filesystem::path params;
  double h = 0.0;
  std::optional<double> score_threshold;  // defaults to the params' loss config
  std::filesystem::path out_dir;
};

/// Writes tracks.jsonl.
std::vector<TrackRecord> cmd_track(const TrackOptions& opt);

struct EvalOptions {
  std::filesystem::path tracks;
  std::filesystem::path gt_frames;
  // Alternative input: a JSON fixture with "mot_counts" and/or "pair_counts".
  std::filesystem::path counts;
  double iou_min = 0.5;
  std::filesystem::path out_dir;
};

/// Writes metrics.json and returns its content.
nlohmann::json cmd_eval(const EvalOptions& opt);

nlohmann::json mot_counts_to_json(const MotCounts& c);
MotCounts mot_counts_from_json(const nlohmann::json& j);
nlohmann::json pair_counts_to_json(const PairCounts& c);
PairCounts pair_counts_from_json(const nlohmann::json& j);

}  // namespace tb::cli
