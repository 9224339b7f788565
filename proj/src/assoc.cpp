#include "trackbranch/assoc.hpp"

#include <stdexcept>
#include <string>

#include "trackbranch/simd.hpp"

namespace tb {

DistanceMatrix distance_matrix(std::span<const Embedding> current, std::span<const Embedding> former) {
  DistanceMatrix d(current.size(), former.size());
  if (d.empty()) return d;
  const std::size_t dim = current.front().size();
  for (const auto& e : current) {
    if (e.size() != dim) throw ConfigError("embeddings differ in dimension");
  }
  for (const auto& e : former) {
    if (e.size() != dim) throw ConfigError("embeddings differ in dimension");
  }
  const auto& k = simd::active();
  for (std::size_t i = 0; i < current.size(); ++i) {
    for (std::size_t j = 0; j < former.size(); ++j) {
      d(i, j) = k.squared_distance(current[i].data(), former[j].data(), dim);
    }
  }
  return d;
}

std::vector<std::optional<std::size_t>> match_frames(const DistanceMatrix& d, double h) {
  if (!(h > 0.0)) throw ConfigError("distance threshold must be positive");
  std::vector<std::optional<std::size_t>> out(d.rows());
  if (d.empty()) return out;

  std::vector<std::size_t> col_argmin(d.cols(), 0);
  for (std::size_t j = 0; j < d.cols(); ++j) {
    for (std::size_t i = 1; i < d.rows(); ++i) {
      if (d(i, j) < d(col_argmin[j], j)) col_argmin[j] = i;
    }
  }
  for (std::size_t i = 0; i < d.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < d.cols(); ++j) {
      if (d(i, j) < d(i, best)) best = j;
    }
    if (col_argmin[best] == i && d(i, best) < h) out[i] = best;
  }
  return out;
}

std::vector<std::int64_t> TrackState::update(std::vector<Embedding> current,
                                             std::span<const std::optional<std::size_t>> matches) {
  if (matches.size() != current.size()) {
    throw std::logic_error("match list length differs from the current detection count");
  }
  std::vector<std::int64_t> ids(current.size());
  std::vector<bool> taken(former_.size(), false);
  for (std::size_t i = 0; i < current.size(); ++i) {
    if (matches[i].has_value()) {
      const std::size_t col = *matches[i];
      if (col >= former_.size()) {
        throw std::logic_error("match references former column " + std::to_string(col) + " of " +
                               std::to_string(former_.size()));
      }
      if (taken[col]) throw std::logic_error("former column " + std::to_string(col) + " matched twice");
      taken[col] = true;
      ids[i] = ids_[col];
    } else {
      ids[i] = next_id_++;
    }
  }
  former_ = std::move(current);
  ids_ = ids;
  return ids;
}

std::vector<FrameTracks> track_sequence(std::span<const FrameRecord> frames, const TrackHeadParams& params, double h,
                                        double min_confidence) {
  if (!(h > 0.0)) throw ConfigError("distance threshold must be positive");
  std::vector<FrameTracks> out;
  out.reserve(frames.size());
  TrackState state;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& frame = frames[f];
    if (f > 0 && frame.frame_index <= frames[f - 1].frame_index) {
      throw ConfigError("frames must be ordered by strictly increasing frame_index");
    }
    std::vector<std::size_t> kept;
    std::vector<Embedding> current;
    for (std::size_t k = 0; k < frame.detections.size(); ++k) {
      const auto& det = frame.detections[k];
      if (det.confidence < min_confidence) continue;
      kept.push_back(k);
      current.push_back(forward(params, det.feature));
    }
    const DistanceMatrix d = distance_matrix(current, state.former_embeddings());
    const auto matches = match_frames(d, h);
    const auto ids = state.update(std::move(current), matches);

    FrameTracks ft;
    ft.frame_index = frame.frame_index;
    for (std::size_t k = 0; k < kept.size(); ++k) ft.assignments.push_back({kept[k], ids[k]});
    out.push_back(std::move(ft));
  }
  return out;
}

std::vector<TrackRecord> to_track_records(std::span<const FrameRecord> frames, std::span<const FrameTracks> tracks) {
  if (frames.size() != tracks.size()) throw ConfigError("frame and track lists differ in length");
  std::vector<TrackRecord> out;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (const auto& a : tracks[f].assignments) {
      const auto& det = frames[f].detections.at(a.detection_index);
      out.push_back({frames[f].frame_index, a.track_id, det.box, det.confidence});
    }
  }
  return out;
}

}  // namespace tb
