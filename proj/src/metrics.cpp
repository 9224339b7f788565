#include "trackbranch/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace tb {

namespace {

// Groups tracker records by frame index, preserving input order.
std::map<std::int64_t, std::vector<const TrackRecord*>> by_frame(std::span<const TrackRecord> tracks) {
  std::map<std::int64_t, std::vector<const TrackRecord*>> out;
  for (const auto& t : tracks) out[t.frame_index].push_back(&t);
  return out;
}

std::vector<LinkedDetection> link_frame(const std::vector<const TrackRecord*>& recs, const FrameRecord& gt,
                                        double iou_min) {
  std::vector<ScoredBox> preds;
  preds.reserve(recs.size());
  for (const auto* r : recs) preds.push_back({r->box, r->confidence});
  const auto assigned = assign_predictions(preds, gt.gt_boxes, 0.0, iou_min);
  std::vector<LinkedDetection> out;
  for (std::size_t k = 0; k < recs.size(); ++k) {
    if (assigned[k]) out.push_back({assigned[k]->identity, recs[k]->track_id});
  }
  return out;
}

}  // namespace

AssignmentResult assign_predictions(std::span<const ScoredBox> preds, std::span<const GroundTruthBox> gts, double p,
                                    double iou_min) {
  AssignmentResult out(preds.size());
  std::vector<std::optional<std::size_t>> owner(gts.size());
  for (std::size_t k = 0; k < preds.size(); ++k) {
    if (preds[k].confidence < p || gts.empty()) continue;
    std::size_t best = 0;
    double best_iou = iou(preds[k].box, gts[0].box);
    for (std::size_t g = 1; g < gts.size(); ++g) {
      const double v = iou(preds[k].box, gts[g].box);
      if (v > best_iou) {
        best = g;
        best_iou = v;
      }
    }
    if (!(best_iou > iou_min)) continue;
    if (owner[best]) {
      const std::size_t rival = *owner[best];
      if (!(best_iou > out[rival]->iou)) continue;
      out[rival].reset();
    }
    owner[best] = k;
    out[k] = Assignment{gts[best].identity, gts[best].image_slot, best, best_iou};
  }
  return out;
}

double average_precision(std::span<const ImageDetections> images, double iou_threshold, ApInterpolation interp) {
  struct Ranked {
    std::size_t image, pred;
    double confidence;
  };
  std::vector<Ranked> ranked;
  std::size_t total_gt = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    total_gt += images[i].gts.size();
    for (std::size_t k = 0; k < images[i].preds.size(); ++k) {
      ranked.push_back({i, k, images[i].preds[k].confidence});
    }
  }
  if (total_gt == 0) throw DegenerateInputError("average precision is undefined without ground truth");
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Ranked& a, const Ranked& b) { return a.confidence > b.confidence; });

  std::vector<std::vector<bool>> used(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) used[i].assign(images[i].gts.size(), false);

  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const auto& img = images[ranked[r].image];
    const auto& box = img.preds[ranked[r].pred].box;
    std::optional<std::size_t> hit;
    double hit_iou = -1.0;
    for (std::size_t g = 0; g < img.gts.size(); ++g) {
      if (used[ranked[r].image][g]) continue;
      const double v = iou(box, img.gts[g]);
      if (v >= iou_threshold && v > hit_iou) {
        hit = g;
        hit_iou = v;
      }
    }
    if (hit) {
      used[ranked[r].image][*hit] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(r + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
  }

  // Precision envelope from the right, then area under the step curve.
  for (std::size_t r = precision.size(); r-- > 1;) precision[r - 1] = std::max(precision[r - 1], precision[r]);
  if (interp == ApInterpolation::kElevenPoint) {
    double sum = 0.0;
    for (int k = 0; k <= 10; ++k) {
      const double level = k / 10.0;
      const auto it = std::lower_bound(recall.begin(), recall.end(), level - 1e-12);
      if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
    }
    return sum / 11.0;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t r = 0; r < precision.size(); ++r) {
    ap += (recall[r] - prev_recall) * precision[r];
    prev_recall = recall[r];
  }
  return ap;
}

double mean_ap(std::span<const ImageDetections> images, ApInterpolation interp) {
  double sum = 0.0;
  for (int k = 0; k < 10; ++k) sum += average_precision(images, 0.5 + 0.05 * k, interp);
  return sum / 10.0;
}

double mota(const MotCounts& c) {
  if (c.gt_total <= 0) throw DegenerateInputError("MOTA is undefined without ground-truth objects");
  return 1.0 - static_cast<double>(c.miss + c.fp + c.mismatch) / static_cast<double>(c.gt_total);
}

MotCounts mot_counts(std::span<const TrackRecord> tracks, std::span<const FrameRecord> gt_frames, double iou_min) {
  auto grouped = by_frame(tracks);
  MotCounts c;
  std::map<std::int64_t, std::int64_t> last_track;
  const std::vector<const TrackRecord*> none;
  for (const auto& gt : gt_frames) {
    c.gt_total += static_cast<std::int64_t>(gt.gt_boxes.size());
    const auto it = grouped.find(gt.frame_index);
    const auto& recs = it == grouped.end() ? none : it->second;
    const auto links = link_frame(recs, gt, iou_min);
    c.fp += static_cast<std::int64_t>(recs.size() - links.size());
    c.miss += static_cast<std::int64_t>(gt.gt_boxes.size() - links.size());
    for (const auto& l : links) {
      const auto prev = last_track.find(l.identity);
      if (prev != last_track.end() && prev->second != l.track_id) ++c.mismatch;
      last_track[l.identity] = l.track_id;
    }
    if (it != grouped.end()) grouped.erase(it);
  }
  for (const auto& [frame, recs] : grouped) c.fp += static_cast<std::int64_t>(recs.size());
  return c;
}

PairCounts cross_pair_counts(std::span<const LinkedDetection> first, std::span<const LinkedDetection> second) {
  PairCounts c;
  for (const auto& a : first) {
    for (const auto& b : second) {
      const bool same = a.identity == b.identity;
      const bool linked = a.track_id == b.track_id;
      if (same) {
        ++c.gp;
        linked ? ++c.tp : ++c.fn;
      } else {
        ++c.gn;
        linked ? ++c.fp : ++c.tn;
      }
    }
  }
  return c;
}

PairCounts pair_counts(std::span<const TrackRecord> tracks, std::span<const FrameRecord> gt_frames, double iou_min) {
  const auto grouped = by_frame(tracks);
  const std::vector<const TrackRecord*> none;
  PairCounts total;
  std::vector<LinkedDetection> previous;
  for (std::size_t f = 0; f < gt_frames.size(); ++f) {
    const auto it = grouped.find(gt_frames[f].frame_index);
    auto current = link_frame(it == grouped.end() ? none : it->second, gt_frames[f], iou_min);
    if (f > 0) total += cross_pair_counts(previous, current);
    previous = std::move(current);
  }
  return total;
}

double pair_accuracy(const PairCounts& c) {
  const std::int64_t n = c.tp + c.tn + c.fp + c.fn;
  if (n <= 0) throw DegenerateInputError("pair accuracy is undefined without pairs");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(n);
}

std::vector<ImageDetections> detection_images(std::span<const TrackRecord> tracks,
                                              std::span<const FrameRecord> gt_frames) {
  const auto grouped = by_frame(tracks);
  std::vector<ImageDetections> out;
  out.reserve(gt_frames.size());
  for (const auto& gt : gt_frames) {
    ImageDetections img;
    if (const auto it = grouped.find(gt.frame_index); it != grouped.end()) {
      for (const auto* r : it->second) img.preds.push_back({r->box, r->confidence});
    }
    for (const auto& g : gt.gt_boxes) img.gts.push_back(g.box);
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace tb
