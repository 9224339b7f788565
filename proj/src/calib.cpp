#include "trackbranch/calib.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "trackbranch/core.hpp"

namespace tb {

PairCounts& PairCounts::operator+=(const PairCounts& o) {
  tp += o.tp;
  tn += o.tn;
  fp += o.fp;
  fn += o.fn;
  gp += o.gp;
  gn += o.gn;
  return *this;
}

double objective(const PairCounts& c) {
  if (c.gp <= 0 || c.gn <= 0) {
    throw DegenerateInputError("threshold objective needs at least one positive and one negative pair");
  }
  return static_cast<double>(c.fp) / static_cast<double>(c.gn) + static_cast<double>(c.fn) / static_cast<double>(c.gp);
}

PairCounts counts_at(std::span<const LabeledDistance> pairs, double h) {
  PairCounts c;
  for (const auto& p : pairs) {
    const bool predicted_same = p.distance < h;
    if (p.is_same) {
      ++c.gp;
      predicted_same ? ++c.tp : ++c.fn;
    } else {
      ++c.gn;
      predicted_same ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

SweepResult sweep_threshold(std::span<const LabeledDistance> pairs, TieBreak tie) {
  std::vector<LabeledDistance> sorted(pairs.begin(), pairs.end());
  for (const auto& p : sorted) {
    if (!std::isfinite(p.distance) || p.distance < 0.0) throw ConfigError("distances must be finite and non-negative");
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const LabeledDistance& a, const LabeledDistance& b) { return a.distance < b.distance; });

  PairCounts c;
  for (const auto& p : sorted) p.is_same ? ++c.gp : ++c.gn;
  if (c.gp == 0 || c.gn == 0) {
    throw DegenerateInputError("calibration set needs both same-identity and different-identity pairs");
  }
  // Below every distance nothing is predicted same.
  c.fn = c.gp;
  c.tn = c.gn;

  SweepResult result;
  const double lowest = sorted.front().distance;
  result.table.push_back({0.5 * lowest, c, objective(c)});

  std::size_t k = 0;
  while (k < sorted.size()) {
    const double value = sorted[k].distance;
    // Move every pair at this distance to predicted-same.
    for (; k < sorted.size() && sorted[k].distance == value; ++k) {
      if (sorted[k].is_same) {
        ++c.tp;
        --c.fn;
      } else {
        ++c.fp;
        --c.tn;
      }
    }
    double h = value + std::max(1.0, value);
    if (k < sorted.size()) {
      h = 0.5 * (value + sorted[k].distance);
      // Adjacent doubles: the upper value itself separates the classes under "<".
      if (!(h > value)) h = sorted[k].distance;
    }
    result.table.push_back({h, c, objective(c)});
  }

  const SweepRow* best = &result.table.front();
  for (const auto& row : result.table) {
    const bool better = tie == TieBreak::kSmallestH ? row.objective < best->objective : row.objective <= best->objective;
    if (better) best = &row;
  }
  result.best_h = best->h;
  result.best_objective = best->objective;
  return result;
}

std::vector<HistogramBin> distance_histogram(std::span<const LabeledDistance> pairs, int bin_count) {
  if (bin_count < 1) throw ConfigError("histogram needs at least one bin");
  double top = 0.0;
  for (const auto& p : pairs) top = std::max(top, p.distance);
  const double width = top / bin_count;
  std::vector<HistogramBin> bins(static_cast<std::size_t>(bin_count));
  for (int b = 0; b < bin_count; ++b) {
    bins[b].lo = width * b;
    bins[b].hi = b + 1 == bin_count ? top : width * (b + 1);
  }
  for (const auto& p : pairs) {
    std::size_t b = 0;
    if (width > 0.0) {
      b = std::min(static_cast<std::size_t>(p.distance / width), bins.size() - 1);
    }
    p.is_same ? ++bins[b].same_count : ++bins[b].diff_count;
  }
  return bins;
}

void write_sweep_csv(std::ostream& os, const SweepResult& sweep) {
  const auto old = os.precision(17);
  os << "h,fp,fn,tp,tn,objective\n";
  for (const auto& r : sweep.table) {
    os << r.h << ',' << r.counts.fp << ',' << r.counts.fn << ',' << r.counts.tp << ',' << r.counts.tn << ','
       << r.objective << '\n';
  }
  os.precision(old);
}

void write_histogram_csv(std::ostream& os, std::span<const HistogramBin> bins) {
  const auto old = os.precision(17);
  os << "bin_lo,bin_hi,same_count,diff_count\n";
  for (const auto& b : bins) os << b.lo << ',' << b.hi << ',' << b.same_count << ',' << b.diff_count << '\n';
  os.precision(old);
}

}  // namespace tb
