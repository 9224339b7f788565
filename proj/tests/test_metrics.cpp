#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "trackbranch/data.hpp"
#include "trackbranch/metrics.hpp"

namespace tb {
namespace {

const BoundingBox kGt(0, 0, 10, 10);

TEST(Assign, ExactPredictionTakesIdentity) {
  const std::vector<ScoredBox> preds{{kGt, 0.9}};
  const std::vector<GroundTruthBox> gts{{kGt, 42, 1}};
  const auto r = assign_predictions(preds, gts);
  ASSERT_TRUE(r[0].has_value());
  EXPECT_EQ(r[0]->identity, 42);
  EXPECT_EQ(r[0]->image_slot, 1);
}

TEST(Assign, HighestIouPredictionKeepsGroundTruth) {
  const ScoredBox good{{0, 0, 10, 8}, 0.9};  // IoU 0.8
  const ScoredBox weak{{0, 0, 10, 6}, 0.9};  // IoU 0.6
  const std::vector<GroundTruthBox> gts{{kGt, 7, 0}};
  for (const auto& preds : {std::vector<ScoredBox>{good, weak}, std::vector<ScoredBox>{weak, good}}) {
    const auto r = assign_predictions(preds, gts);
    const std::size_t g = preds[0].box == good.box ? 0 : 1;
    ASSERT_TRUE(r[g].has_value());
    EXPECT_NEAR(r[g]->iou, 0.8, 1e-12);
    EXPECT_FALSE(r[1 - g].has_value());
  }
}

TEST(Assign, LowIouAbandoned) {
  const std::vector<ScoredBox> preds{{{0, 0, 10, 4}, 0.9}, {{0, 0, 10, 5}, 0.9}};  // IoU 0.4 and exactly 0.5
  const std::vector<GroundTruthBox> gts{{kGt, 1, 0}};
  const auto r = assign_predictions(preds, gts);
  EXPECT_FALSE(r[0].has_value());
  EXPECT_FALSE(r[1].has_value());
}

TEST(Assign, ScoreFilterApplies) {
  const std::vector<ScoredBox> preds{{kGt, 0.49}};
  const std::vector<GroundTruthBox> gts{{kGt, 1, 0}};
  EXPECT_FALSE(assign_predictions(preds, gts, 0.5)[0].has_value());
  EXPECT_TRUE(assign_predictions(preds, gts, 0.4)[0].has_value());
}

TEST(Assign, EachGroundTruthAtMostOnce) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(0.0, 40.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<GroundTruthBox> gts;
    std::vector<ScoredBox> preds;
    for (int k = 0; k < 4; ++k) {
      const double x = pos(rng), y = pos(rng);
      gts.push_back({{x, y, x + 10, y + 10}, k, 0});
    }
    for (int k = 0; k < 8; ++k) {
      const double x = pos(rng), y = pos(rng);
      preds.push_back({{x, y, x + 10, y + 10}, 0.9});
    }
    const auto r = assign_predictions(preds, gts);
    std::vector<int> claims(gts.size(), 0);
    for (const auto& a : r) {
      if (a) {
        ASSERT_GT(a->iou, 0.5);
        ++claims[a->gt_index];
      }
    }
    for (int c : claims) ASSERT_LE(c, 1);
  }
}

// ---------------------------------------------------------------------------

TEST(AveragePrecision, SingleExactPrediction) {
  const std::vector<ImageDetections> imgs{{{{kGt, 0.9}}, {kGt}}};
  EXPECT_EQ(average_precision(imgs, 0.5), 1.0);
}

TEST(AveragePrecision, FalsePositiveRankedFirst) {
  const std::vector<ImageDetections> imgs{{{{{50, 50, 60, 60}, 0.9}, {kGt, 0.8}}, {kGt}}};
  EXPECT_DOUBLE_EQ(average_precision(imgs, 0.5), 0.5);
}

TEST(AveragePrecision, ExactPredictionsAtEveryThreshold) {
  const std::vector<ImageDetections> imgs{
      {{{kGt, 0.3}, {{20, 20, 30, 35}, 0.6}}, {kGt, {20, 20, 30, 35}}},
      {{{{5, 5, 9, 9}, 0.9}}, {{5, 5, 9, 9}}},
  };
  for (int k = 0; k < 10; ++k) EXPECT_EQ(average_precision(imgs, 0.5 + 0.05 * k), 1.0);
  EXPECT_EQ(mean_ap(imgs), 1.0);
}

TEST(AveragePrecision, NoPredictionsAndNoGroundTruth) {
  const std::vector<ImageDetections> none{{{}, {kGt}}};
  EXPECT_EQ(mean_ap(none), 0.0);
  const std::vector<ImageDetections> empty{{{{kGt, 0.5}}, {}}};
  EXPECT_THROW(average_precision(empty, 0.5), DegenerateInputError);
}

TEST(AveragePrecision, ElevenPointInterpolation) {
  // Ranking FP, TP, TP over two ground truths: envelope precision is 2/3 for
  // every recall level, so both interpolations agree.
  const BoundingBox other(30, 30, 40, 40);
  const std::vector<ImageDetections> imgs{{{{{50, 50, 60, 60}, 0.9}, {kGt, 0.8}, {other, 0.7}}, {kGt, other}}};
  EXPECT_DOUBLE_EQ(average_precision(imgs, 0.5, ApInterpolation::kAllPoint), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(average_precision(imgs, 0.5, ApInterpolation::kElevenPoint), 2.0 / 3.0);
  // TP then FP with one of two ground truths found: recall tops out at 0.5.
  const std::vector<ImageDetections> half{{{{kGt, 0.9}, {{50, 50, 60, 60}, 0.8}}, {kGt, other}}};
  EXPECT_DOUBLE_EQ(average_precision(half, 0.5, ApInterpolation::kAllPoint), 0.5);
  EXPECT_DOUBLE_EQ(average_precision(half, 0.5, ApInterpolation::kElevenPoint), 6.0 / 11.0);
}

TEST(AveragePrecision, ThresholdMatters) {
  // IoU 0.8 counts at 0.75 but not at 0.85.
  const std::vector<ImageDetections> imgs{{{{{0, 0, 10, 8}, 0.9}}, {kGt}}};
  EXPECT_EQ(average_precision(imgs, 0.75), 1.0);
  EXPECT_EQ(average_precision(imgs, 0.85), 0.0);
}

TEST(AveragePrecision, RankingOnlyDependence) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> pos(0.0, 30.0), conf(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ImageDetections> imgs(3);
    for (auto& img : imgs) {
      for (int k = 0; k < 3; ++k) {
        const double x = pos(rng), y = pos(rng);
        img.gts.push_back({x, y, x + 8, y + 8});
      }
      for (int k = 0; k < 4; ++k) {
        const double x = pos(rng), y = pos(rng);
        img.preds.push_back({{x, y, x + 8, y + 8}, conf(rng)});
      }
    }
    auto transformed = imgs;
    for (auto& img : transformed) {
      for (auto& p : img.preds) p.confidence = std::exp(3.0 * p.confidence) - 7.0;
    }
    ASSERT_EQ(mean_ap(imgs), mean_ap(transformed));
  }
}

// ---------------------------------------------------------------------------

TEST(Mota, ReportedTableRows) {
  EXPECT_NEAR(100.0 * mota({604, 8, 1, 667}), 8.10, 0.005);
  EXPECT_NEAR(100.0 * mota({585, 8, 1, 667}), 10.94, 0.005);
  EXPECT_NEAR(100.0 * mota({671, 7, 1, 667}), -1.80, 0.005);
}

TEST(Mota, PerfectAndMonotone) {
  EXPECT_EQ(mota({0, 0, 0, 10}), 1.0);
  const MotCounts base{3, 2, 1, 50};
  EXPECT_LT(mota({4, 2, 1, 50}), mota(base));
  EXPECT_LT(mota({3, 3, 1, 50}), mota(base));
  EXPECT_LT(mota({3, 2, 2, 50}), mota(base));
  EXPECT_THROW(mota({0, 0, 0, 0}), DegenerateInputError);
}

FrameRecord gt_frame(std::int64_t index, std::vector<GroundTruthBox> gts) {
  FrameRecord f;
  f.frame_index = index;
  f.gt_boxes = std::move(gts);
  return f;
}

const BoundingBox kCarA(0, 0, 50, 50);
const BoundingBox kCarB(200, 0, 250, 50);

TEST(MotCounts, PerfectTracking) {
  SimConfig cfg;
  cfg.frames = 8;
  cfg.dropout = 0.0;
  const auto frames = simulate(cfg).frames;
  std::vector<TrackRecord> tracks;
  for (const auto& f : frames) {
    for (const auto& g : f.gt_boxes) tracks.push_back({f.frame_index, 100 + g.identity, g.box, 1.0});
  }
  const auto c = mot_counts(tracks, frames);
  EXPECT_EQ(c, (MotCounts{0, 0, 0, 8 * cfg.identities}));
  EXPECT_EQ(mota(c), 1.0);
}

TEST(MotCounts, SingleIdSwitch) {
  std::vector<FrameRecord> frames;
  for (int t = 0; t < 3; ++t) frames.push_back(gt_frame(t, {{kCarA, 0, 0}}));
  const std::vector<TrackRecord> tracks{{0, 5, kCarA, 1.0}, {1, 6, kCarA, 1.0}, {2, 6, kCarA, 1.0}};
  const auto c = mot_counts(tracks, frames);
  EXPECT_EQ(c.mismatch, 1);
  EXPECT_EQ(c.fp, 0);
  EXPECT_EQ(c.miss, 0);
  EXPECT_EQ(c.gt_total, 3);
}

TEST(MotCounts, SwitchAcrossGapCounts) {
  std::vector<FrameRecord> frames;
  for (int t = 0; t < 3; ++t) frames.push_back(gt_frame(t, {{kCarA, 0, 0}}));
  const std::vector<TrackRecord> tracks{{0, 5, kCarA, 1.0}, {2, 6, kCarA, 1.0}};
  const auto c = mot_counts(tracks, frames);
  EXPECT_EQ(c.miss, 1);
  EXPECT_EQ(c.mismatch, 1);
}

TEST(MotCounts, ExtraBoxPerFrame) {
  std::vector<FrameRecord> frames;
  std::vector<TrackRecord> tracks;
  for (int t = 0; t < 10; ++t) {
    frames.push_back(gt_frame(t, {{kCarA, 0, 0}}));
    tracks.push_back({t, 0, kCarA, 1.0});
    tracks.push_back({t, 99, kCarB, 1.0});
  }
  const auto c = mot_counts(tracks, frames);
  EXPECT_EQ(c.fp, 10);
  EXPECT_EQ(c.miss, 0);
  EXPECT_EQ(c.mismatch, 0);
}

// ---------------------------------------------------------------------------

TEST(PairCounts, TwoVehiclesTrackedPerfectly) {
  const std::vector<FrameRecord> frames{gt_frame(0, {{kCarA, 1, 0}, {kCarB, 2, 0}}),
                                        gt_frame(1, {{kCarA, 1, 0}, {kCarB, 2, 0}})};
  const std::vector<TrackRecord> tracks{
      {0, 10, kCarA, 1.0}, {0, 11, kCarB, 1.0}, {1, 10, kCarA, 1.0}, {1, 11, kCarB, 1.0}};
  EXPECT_EQ(pair_counts(tracks, frames), (PairCounts{2, 2, 0, 0, 2, 2}));
}

TEST(PairCounts, FreshIdsEveryFrame) {
  const std::vector<FrameRecord> frames{gt_frame(0, {{kCarA, 1, 0}, {kCarB, 2, 0}}),
                                        gt_frame(1, {{kCarA, 1, 0}, {kCarB, 2, 0}}),
                                        gt_frame(2, {{kCarA, 1, 0}, {kCarB, 2, 0}})};
  std::vector<TrackRecord> tracks;
  std::int64_t next = 0;
  for (int t = 0; t < 3; ++t) {
    tracks.push_back({t, next++, kCarA, 1.0});
    tracks.push_back({t, next++, kCarB, 1.0});
  }
  const auto c = pair_counts(tracks, frames);
  EXPECT_EQ(c.tp, 0);
  EXPECT_EQ(c.fn, c.gp);
  EXPECT_EQ(c.gp, 4);
}

TEST(PairCounts, SingleVehicleLinked) {
  const std::vector<FrameRecord> frames{gt_frame(0, {{kCarA, 1, 0}}), gt_frame(1, {{kCarA, 1, 0}})};
  const std::vector<TrackRecord> tracks{{0, 3, kCarA, 1.0}, {1, 3, kCarA, 1.0}};
  const auto c = pair_counts(tracks, frames);
  EXPECT_EQ(c.tp, 1);
  EXPECT_EQ(c.gp, 1);
  EXPECT_EQ(c.gn, 0);
}

TEST(PairCounts, UnmatchedDetectionsAreIgnored) {
  const std::vector<FrameRecord> frames{gt_frame(0, {{kCarA, 1, 0}}), gt_frame(1, {{kCarA, 1, 0}})};
  const std::vector<TrackRecord> tracks{{0, 3, kCarA, 1.0}, {1, 3, kCarA, 1.0}, {1, 3, kCarB, 1.0}};
  EXPECT_EQ(pair_counts(tracks, frames), (PairCounts{1, 0, 0, 0, 1, 0}));
}

TEST(PairAccuracy, ReportedTableRows) {
  struct Row {
    PairCounts c;
    double percent;
  };
  const Row rows[] = {
      {{5176, 6098, 2, 16, 5335, 6615}, 99.84},  {{4989, 5700, 27, 34, 5335, 6615}, 99.43},
      {{5196, 6088, 1, 0, 5335, 6115}, 99.99},   {{645, 4729, 1036, 432, 1093, 5953}, 78.54},
      {{575, 4350, 1496, 495, 1093, 5953}, 71.21}, {{701, 4667, 1149, 366, 1093, 5953}, 77.99},
  };
  for (const auto& r : rows) EXPECT_NEAR(100.0 * pair_accuracy(r.c), r.percent, 0.005);
  EXPECT_DOUBLE_EQ(pair_accuracy({5176, 6098, 2, 16, 0, 0}), 11274.0 / 11292.0);
  EXPECT_DOUBLE_EQ(pair_accuracy({645, 4729, 1036, 432, 0, 0}), 5374.0 / 6842.0);
  EXPECT_DOUBLE_EQ(pair_accuracy({575, 4350, 1496, 495, 0, 0}), 4925.0 / 6916.0);
  EXPECT_THROW(pair_accuracy({}), DegenerateInputError);
}

}  // namespace
}  // namespace tb
