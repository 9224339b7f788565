#pragma once

// Frame-to-frame association: a current-frame detection links to a former
// frame detection only when each is the other's nearest neighbour and their
// embedding distance is below the threshold h.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "trackbranch/core.hpp"
#include "trackbranch/matrix.hpp"
#include "trackbranch/trackhead.hpp"

namespace tb {

/// Rows index current-frame detections, columns former-frame detections.
using DistanceMatrix = Matrix;

DistanceMatrix distance_matrix(std::span<const Embedding> current, std::span<const Embedding> former);

/// Per row: the matched column, or nullopt. Ties in row and column minima go
/// to the lowest index.
std::vector<std::optional<std::size_t>> match_frames(const DistanceMatrix& d, double h);

class TrackState {
 public:
  TrackState() = default;

  std::span<const Embedding> former_embeddings() const { return former_; }
  std::span<const std::int64_t> former_ids() const { return ids_; }
  std::int64_t next_id() const { return next_id_; }

  /// Matched detections inherit the former track ID; the rest get fresh IDs.
  /// The current frame then becomes the former frame. Throws std::logic_error
  /// if a match references a column outside the former frame.
  std::vector<std::int64_t> update(std::vector<Embedding> current,
                                   std::span<const std::optional<std::size_t>> matches);

 private:
  std::vector<Embedding> former_;
  std::vector<std::int64_t> ids_;
  std::int64_t next_id_ = 0;
};

struct TrackAssignment {
  std::size_t detection_index;
  std::int64_t track_id;
};

struct FrameTracks {
  std::int64_t frame_index = 0;
  std::vector<TrackAssignment> assignments;
};

/// Runs forward -> distance_matrix -> match_frames -> update over a single
/// camera sequence. Detections with confidence below min_confidence are
/// skipped and receive no track ID.
std::vector<FrameTracks> track_sequence(std::span<const FrameRecord> frames, const TrackHeadParams& params, double h,
                                        double min_confidence = 0.5);

/// One output record per tracked detection.
struct TrackRecord {
  std::int64_t frame_index = 0;
  std::int64_t track_id = 0;
  BoundingBox box;
  double confidence = 0.0;

  friend bool operator==(const TrackRecord&, const TrackRecord&) = default;
};

std::vector<TrackRecord> to_track_records(std::span<const FrameRecord> frames, std::span<const FrameTracks> tracks);

}  // namespace tb
