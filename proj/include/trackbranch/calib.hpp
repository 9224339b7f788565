#pragma once

// Distance-threshold calibration on a labelled dev set.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace tb {

struct LabeledDistance {
  double distance = 0.0;
  bool is_same = false;
};

/// Pair-level confusion counts. gp/gn are stored independently of tp+fn and
/// tn+fp; counts_at always produces consistent counts.
struct PairCounts {
  std::int64_t tp = 0, tn = 0, fp = 0, fn = 0, gp = 0, gn = 0;

  bool consistent() const { return tp + fn == gp && tn + fp == gn; }

  PairCounts& operator+=(const PairCounts& o);
  friend bool operator==(const PairCounts&, const PairCounts&) = default;
};

/// fp / gn + fn / gp. Throws DegenerateInputError when gp or gn is 0.
double objective(const PairCounts& c);

/// A pair is predicted "same" iff distance < h.
PairCounts counts_at(std::span<const LabeledDistance> pairs, double h);

struct SweepRow {
  double h = 0.0;
  PairCounts counts;
  double objective = 0.0;
};

enum class TieBreak { kSmallestH, kLargestH };

struct SweepResult {
  double best_h = 0.0;
  double best_objective = 0.0;
  std::vector<SweepRow> table;  // ascending h
};

/// Exact minimisation of the objective over h. Candidates are one value below
/// the smallest distance, the midpoints between consecutive distinct
/// distances, and one value above the largest. Requires at least one same and
/// one different pair.
SweepResult sweep_threshold(std::span<const LabeledDistance> pairs, TieBreak tie = TieBreak::kSmallestH);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::int64_t same_count = 0;
  std::int64_t diff_count = 0;
};

/// Equal-width bins spanning [0, max distance]; the maximum lands in the last bin.
std::vector<HistogramBin> distance_histogram(std::span<const LabeledDistance> pairs, int bin_count);

void write_sweep_csv(std::ostream& os, const SweepResult& sweep);
void write_histogram_csv(std::ostream& os, std::span<const HistogramBin> bins);

}  // namespace tb
