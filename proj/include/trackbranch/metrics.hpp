#pragma once

// Evaluation: prediction-to-ground-truth assignment, detection AP/mAP,
// MOTA and pair accuracy.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "trackbranch/assoc.hpp"
#include "trackbranch/calib.hpp"
#include "trackbranch/core.hpp"

namespace tb {

struct ScoredBox {
  BoundingBox box;
  double confidence = 1.0;
};

struct Assignment {
  std::int64_t identity = 0;
  int image_slot = 0;
  std::size_t gt_index = 0;
  double iou = 0.0;
};

/// One entry per input prediction; nullopt means abandoned (filtered by
/// score, no ground truth above the IoU bar, or out-claimed by a better
/// prediction).
using AssignmentResult = std::vector<std::optional<Assignment>>;

/// Predictions with confidence < p are dropped. Each survivor claims its
/// highest-IoU ground truth when that IoU exceeds iou_min; a ground truth
/// claimed by several predictions stays with the highest-IoU one (earliest
/// prediction on ties) and the others are abandoned.
AssignmentResult assign_predictions(std::span<const ScoredBox> preds, std::span<const GroundTruthBox> gts,
                                    double p = 0.5, double iou_min = 0.5);

struct ImageDetections {
  std::vector<ScoredBox> preds;
  std::vector<BoundingBox> gts;
};

enum class ApInterpolation {
  kAllPoint,    // exact area under the precision envelope
  kElevenPoint, // mean envelope precision at recall 0, 0.1, ..., 1
};

/// Score-ranked greedy matching at IoU >= iou_threshold, then the
/// interpolated precision-recall area. Equal confidences keep input order.
/// Throws DegenerateInputError when there is no ground truth at all.
double average_precision(std::span<const ImageDetections> images, double iou_threshold,
                         ApInterpolation interp = ApInterpolation::kAllPoint);

/// Mean of average_precision over IoU thresholds 0.50, 0.55, ..., 0.95.
double mean_ap(std::span<const ImageDetections> images, ApInterpolation interp = ApInterpolation::kAllPoint);

struct MotCounts {
  std::int64_t fp = 0;
  std::int64_t miss = 0;
  std::int64_t mismatch = 0;
  std::int64_t gt_total = 0;

  friend bool operator==(const MotCounts&, const MotCounts&) = default;
};

/// 1 - (miss + fp + mismatch) / gt_total. May be negative.
double mota(const MotCounts& c);

/// Per frame: tracker boxes are matched to ground truth by the
/// assign_predictions rule (no score filter). Unmatched tracker boxes count
/// as false positives and unmatched ground truths as misses. A mismatch is
/// counted whenever a ground-truth identity is matched to a track ID different
/// from the one it was last matched to. Tracker records whose frame has no
/// ground-truth frame count as false positives.
MotCounts mot_counts(std::span<const TrackRecord> tracks, std::span<const FrameRecord> gt_frames,
                     double iou_min = 0.5);

/// A tracked detection that was matched to a labelled vehicle.
struct LinkedDetection {
  std::int64_t identity = 0;
  std::int64_t track_id = 0;
};

/// Every pair (a, b) with a from `first` and b from `second`: ground-truth
/// positive iff identities agree, predicted positive iff track IDs agree.
PairCounts cross_pair_counts(std::span<const LinkedDetection> first, std::span<const LinkedDetection> second);

/// Tracker boxes of each frame are matched to ground truth first; then every
/// cross-frame pair between consecutive frames is tallied.
PairCounts pair_counts(std::span<const TrackRecord> tracks, std::span<const FrameRecord> gt_frames,
                       double iou_min = 0.5);

/// (tp + tn) / (tp + tn + fp + fn).
double pair_accuracy(const PairCounts& c);

/// Tracker output grouped as detection images for AP, one per ground-truth frame.
std::vector<ImageDetections> detection_images(std::span<const TrackRecord> tracks,
                                              std::span<const FrameRecord> gt_frames);

}  // namespace tb
