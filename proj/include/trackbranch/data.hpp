#pragma once

// Dataset construction, synthetic scenarios and file formats.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "trackbranch/assoc.hpp"
#include "trackbranch/core.hpp"
#include "trackbranch/trackhead.hpp"

namespace tb {

/// Two images placed side by side: slot 1 coordinates are shifted right by
/// the width of the slot 0 image.
struct ConcatSample {
  std::vector<DetectionRecord> detections;
  std::vector<GroundTruthBox> gt_boxes;
  double first_width = 0.0;
  // Some identity is present in both slots.
  bool has_positive_pairs = false;
};

/// Requires the same camera and b.frame_index == a.frame_index + 1.
ConcatSample concat_neighbor_frames(const FrameRecord& a, const FrameRecord& b, double width_a);

struct Occurrence {
  int camera_id = 0;
  std::int64_t frame_index = 0;
};

using FramesByCamera = std::map<int, std::vector<FrameRecord>>;
using IdentityIndex = std::map<std::int64_t, std::vector<Occurrence>>;

IdentityIndex build_identity_index(const FramesByCamera& frames);

/// For every identity and every unordered pair of cameras that observed it,
/// one sample built from the identity's first frame in each camera (lower
/// camera id in slot 0). A frame pair shared by several identities is emitted
/// once. Identities seen by a single camera contribute nothing.
std::vector<ConcatSample> build_mtmc_pairs(const FramesByCamera& frames, const IdentityIndex& index, double width);

enum class LabelSource {
  kIouAssignment,    // assign detections to ground truth by IoU
  kDetectionLabels,  // trust DetectionRecord::gt_identity
};

/// Training batch of one sample: features and identities of the detections
/// that received an identity. nullopt when fewer than two detections qualify.
std::optional<LabeledBatch> labeled_batch(const ConcatSample& sample, double p, double iou_min,
                                          LabelSource source = LabelSource::kIouAssignment);

struct SimConfig {
  int identities = 5;
  int frames = 50;
  int feature_dim = 16;
  double separation = 4.0;     // minimum Euclidean distance between archetypes
  double noise_sigma = 0.1;    // RMS norm of the Gaussian feature noise, capped at 2.5x
  double dropout = 0.05;       // per-detection drop probability
  double image_width = 1920.0;
  double image_height = 1080.0;
  double speed_min = 2.0;      // px / frame
  double speed_max = 12.0;
  double box_jitter = 1.0;     // px, uniform per coordinate
  double confidence_min = 0.6;
  int camera_id = 0;
  std::int64_t start_frame = 0;
  std::uint64_t seed = 1;
  // Motion, noise and dropout stream; archetypes always come from `seed`.
  std::optional<std::uint64_t> sequence_seed;

  void validate() const;
};

struct SimResult {
  std::vector<FrameRecord> frames;
  std::vector<std::vector<double>> archetypes;  // indexed by identity
};

std::vector<std::vector<double>> make_archetypes(const SimConfig& cfg);
SimResult simulate(const SimConfig& cfg);
/// A sequence over existing archetypes, e.g. a held-out split.
std::vector<FrameRecord> simulate_sequence(const SimConfig& cfg, std::span<const std::vector<double>> archetypes);

// JSON-lines frame files ---------------------------------------------------

nlohmann::json frame_to_json(const FrameRecord& frame);
FrameRecord frame_from_json(const nlohmann::json& j, std::size_t line);

void write_frames(std::ostream& os, std::span<const FrameRecord> frames);
/// Validates every record; all features must share one dimension.
std::vector<FrameRecord> read_frames(std::istream& is);
void save_frames(const std::filesystem::path& path, std::span<const FrameRecord> frames);
std::vector<FrameRecord> load_frames(const std::filesystem::path& path);

// JSON-lines track files ---------------------------------------------------

void write_tracks(std::ostream& os, std::span<const TrackRecord> tracks);
std::vector<TrackRecord> read_tracks(std::istream& is);
void save_tracks(const std::filesystem::path& path, std::span<const TrackRecord> tracks);
std::vector<TrackRecord> load_tracks(const std::filesystem::path& path);

// Track head parameter files -----------------------------------------------

inline constexpr int kParamsFormatVersion = 1;

struct ParamsFile {
  TrackHeadParams params;
  std::uint64_t seed = 0;
  LossConfig loss;
};

nlohmann::json params_to_json(const ParamsFile& file);
ParamsFile params_from_json(const nlohmann::json& j);
void save_params(const std::filesystem::path& path, const ParamsFile& file);
ParamsFile load_params(const std::filesystem::path& path);

nlohmann::json loss_config_to_json(const LossConfig& cfg);
LossConfig loss_config_from_json(const nlohmann::json& j, LossConfig base = {});
nlohmann::json sim_config_to_json(const SimConfig& cfg);
SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig base = {});

}  // namespace tb
