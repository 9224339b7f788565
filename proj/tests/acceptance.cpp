// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "oracles.hpp"
#include "trackbranch/assoc.hpp"
#include "trackbranch/calib.hpp"
#include "trackbranch/cli.hpp"
#include "trackbranch/data.hpp"
#include "trackbranch/metrics.hpp"
#include "trackbranch/simd.hpp"
#include "trackbranch/trackhead.hpp"

namespace {

using namespace tb;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::string detail;
};

void require(Outcome& o, bool ok, const std::string& what) {
  if (!ok) {
    if (o.pass) o.detail = what;
    o.pass = false;
  }
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("trackbranch_acceptance_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// 1 ---------------------------------------------------------------------------
Outcome reported_arithmetic() {
  Outcome o;
  constexpr double tol = 0.005;  // percentage points
  const std::pair<MotCounts, double> mot_rows[] = {
      {{604, 8, 1, 667}, 8.10},
      {{585, 8, 1, 667}, 10.94},
      {{671, 7, 1, 667}, -1.80},
  };
  for (const auto& [c, pct] : mot_rows) {
    const double got = 100.0 * mota(c);
    require(o, std::abs(got - pct) <= tol, "mota " + fmt("%.4f", got) + " vs " + fmt("%.2f", pct));
  }
  const std::pair<PairCounts, double> pair_rows[] = {
      {{5176, 6098, 2, 16, 5335, 6615}, 99.84},   {{4989, 5700, 27, 34, 5335, 6615}, 99.43},
      {{5196, 6088, 1, 0, 5335, 6115}, 99.99},    {{645, 4729, 1036, 432, 1093, 5953}, 78.54},
      {{575, 4350, 1496, 495, 1093, 5953}, 71.21}, {{701, 4667, 1149, 366, 1093, 5953}, 77.99},
  };
  for (const auto& [c, pct] : pair_rows) {
    const double got = 100.0 * pair_accuracy(c);
    require(o, std::abs(got - pct) <= tol, "pair accuracy " + fmt("%.4f", got) + " vs " + fmt("%.2f", pct));
  }
  if (o.pass) o.detail = "3 MOTA rows, 6 pair-accuracy rows";
  return o;
}

// 2 ---------------------------------------------------------------------------
Outcome gradient_check() {
  Outcome o;
  const LossConfig cfg;
  const HeadDims dims{8, 16, 8};
  std::mt19937_64 rng(20240601);
  int configs = 0;
  double worst = 0.0;
  while (configs < 25) {
    const auto params = init_params(dims, rng());
    const auto batch = oracle::random_batch(rng, 6, 8, 1 + static_cast<int>(rng() % 3), 1.5);
    if (oracle::kink_clearance(params, batch, cfg) <= 1e-3) continue;
    const auto g = gradient(params, batch, cfg);
    const auto fd = finite_diff_gradient(params, batch, cfg, 1e-5);
    const double err = oracle::max_relative_error(g, fd);
    worst = std::max(worst, err);
    require(o, err < 1e-4, "config " + std::to_string(configs) + " relative error " + fmt("%.3g", err));
    ++configs;
  }
  if (o.pass) o.detail = std::to_string(configs) + " configs, max relative error " + fmt("%.2e", worst);
  return o;
}

// 3 ---------------------------------------------------------------------------
Outcome matcher_oracle() {
  Outcome o;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> cont(0.0, 10.0);
  std::uniform_int_distribution<int> coarse(0, 5);
  std::size_t checked = 0;
  for (std::size_t rows = 1; rows <= 4; ++rows) {
    for (std::size_t cols = 1; cols <= 4; ++cols) {
      for (int trial = 0; trial < 1000; ++trial) {
        // Odd trials use a coarse integer grid (ties).
        const bool ties = trial % 2 == 1;
        Matrix d(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) d(r, c) = ties ? coarse(rng) : cont(rng);
        }
        const double h = ties ? 0.5 + coarse(rng) : 0.01 + cont(rng);
        if (match_frames(d, h) != oracle::match(d, h)) {
          require(o, false, std::to_string(rows) + "x" + std::to_string(cols) + " trial " + std::to_string(trial));
        }
        ++checked;
      }
    }
  }
  if (o.pass) o.detail = std::to_string(checked) + " matrices over 16 shapes";
  return o;
}

// 4 ---------------------------------------------------------------------------
Outcome calibration_optimality() {
  Outcome o;
  std::mt19937_64 rng(4242);
  for (int set = 0; set < 50; ++set) {
    std::vector<LabeledDistance> pairs;
    const int n = 4 + static_cast<int>(rng() % 60);
    std::normal_distribution<double> same(2.0, 1.0), diff(5.0, 1.5);
    for (int k = 0; k < n; ++k) {
      const bool s = k < 2 ? k == 0 : rng() % 2 == 0;
      double d = s ? same(rng) : diff(rng);
      if (set % 5 == 0) d = std::round(d);  // duplicated distances
      pairs.push_back({std::max(d, 0.0), s});
    }
    const auto sweep = sweep_threshold(pairs);
    const double exhaustive = oracle::best_objective(pairs);
    require(o, sweep.best_objective == exhaustive,
            "set " + std::to_string(set) + ": sweep " + fmt("%.17g", sweep.best_objective) + " vs exhaustive " +
                fmt("%.17g", exhaustive));
    require(o, objective(counts_at(pairs, sweep.best_h)) == sweep.best_objective,
            "set " + std::to_string(set) + ": best_h does not reproduce its objective");
    std::uniform_real_distribution<double> h(-1.0, 12.0);
    for (int k = 0; k < 1000; ++k) {
      const double v = h(rng);
      require(o, sweep.best_objective <= objective(counts_at(pairs, v)),
              "set " + std::to_string(set) + " beaten at h=" + fmt("%.6g", v));
    }
  }
  if (o.pass) o.detail = "50 sets x 1000 thresholds, exact match with exhaustive search";
  return o;
}

// 5 ---------------------------------------------------------------------------

// Identity of the ground-truth box each track record covers (IoU > iou_min).
std::map<std::int64_t, std::set<std::int64_t>> identities_per_track(std::span<const TrackRecord> tracks,
                                                                    std::span<const FrameRecord> gt) {
  std::map<std::int64_t, const FrameRecord*> by_frame;
  for (const auto& f : gt) by_frame[f.frame_index] = &f;
  std::map<std::int64_t, std::set<std::int64_t>> out;
  for (const auto& t : tracks) {
    const auto it = by_frame.find(t.frame_index);
    if (it == by_frame.end()) continue;
    double best = 0.5;
    std::optional<std::int64_t> id;
    for (const auto& g : it->second->gt_boxes) {
      const double v = iou(t.box, g.box);
      if (v > best) {
        best = v;
        id = g.identity;
      }
    }
    if (id) out[t.track_id].insert(*id);
  }
  return out;
}

Outcome end_to_end() {
  Outcome o;
  const auto dir = fresh_dir("e2e");

  cli::SimulateOptions sim;
  sim.sim.identities = 5;
  sim.sim.frames = 50;
  sim.sim.feature_dim = 16;
  sim.sim.separation = 4.0;
  sim.sim.noise_sigma = 0.2;
  sim.sim.dropout = 0.05;
  sim.sim.seed = 2019;
  sim.dev_frames = 20;
  sim.holdout_frames = 20;
  sim.out_dir = dir / "data";
  cli::cmd_simulate(sim);

  // Same archetypes, no dropout: every identity is visible in every frame.
  SimConfig clean = sim.sim;
  clean.frames = 20;
  clean.dropout = 0.0;
  clean.sequence_seed = sim.sim.seed + 3;
  const auto archetypes = make_archetypes(sim.sim);
  save_frames(dir / "data" / "holdout_clean.jsonl", simulate_sequence(clean, archetypes));

  cli::TrainOptions train;
  train.frames = dir / "data" / "train.jsonl";
  train.train.epochs = 50;
  train.train.dims = {16, 64, 32};
  train.train.lr0 = 1e-3;
  train.train.seed = 2019;
  train.out_dir = dir / "train";
  const auto summary = cli::cmd_train(train);

  cli::CalibrateOptions cal;
  cal.frames = dir / "data" / "dev.jsonl";
  cal.params = dir / "train" / "params.json";
  cal.out_dir = dir / "calibrate";
  const auto sweep = cli::cmd_calibrate(cal);

  auto run = [&](const std::string& name) {
    cli::TrackOptions trk;
    trk.frames = dir / "data" / (name + ".jsonl");
    trk.params = cal.params;
    trk.h = sweep.best_h;
    trk.out_dir = dir / ("track_" + name);
    cli::cmd_track(trk);
    cli::EvalOptions ev;
    ev.tracks = trk.out_dir / "tracks.jsonl";
    ev.gt_frames = trk.frames;
    ev.out_dir = dir / ("eval_" + name);
    return std::make_pair(cli::cmd_eval(ev), load_tracks(ev.tracks));
  };
  const auto [noisy, noisy_tracks] = run("holdout");
  const auto [still, still_tracks] = run("holdout_clean");

  const double acc = noisy.at("pair_accuracy").get<double>();
  const double acc_clean = still.at("pair_accuracy").get<double>();
  const auto mm_clean = still.at("mot_counts").at("mismatch").get<std::int64_t>();
  const auto mm_noisy = noisy.at("mot_counts").at("mismatch").get<std::int64_t>();

  std::size_t impure = 0;
  for (const auto& [id, ids] : identities_per_track(noisy_tracks, load_frames(dir / "data" / "holdout.jsonl"))) {
    impure += ids.size() > 1;
  }

  require(o, summary.final.weighted < summary.initial.weighted, "training did not lower the loss");
  require(o, acc >= 0.99, "pair accuracy " + fmt("%.5f", acc) + " on the 5% dropout held-out sequence");
  require(o, acc_clean >= 0.99, "pair accuracy " + fmt("%.5f", acc_clean) + " on the clean held-out sequence");
  require(o, mm_clean == 0, "mismatches " + std::to_string(mm_clean) + " on the clean held-out sequence");
  require(o, impure == 0, std::to_string(impure) + " tracks cover more than one identity");

  std::ostringstream d;
  d << "loss " << fmt("%.4g", summary.initial.weighted) << " -> " << fmt("%.4g", summary.final.weighted) << ", h "
    << fmt("%.4g", sweep.best_h) << ", pair accuracy " << fmt("%.4f", acc) << " (dropout) / "
    << fmt("%.4f", acc_clean) << " (clean), mismatches " << mm_clean << " (clean), " << mm_noisy
    << " re-entries after dropout, identity-mixing tracks " << impure;
  if (o.pass) {
    o.detail = d.str();
  } else {
    o.detail += "; " + d.str();
  }
  return o;
}

// 6 ---------------------------------------------------------------------------
Outcome loss_invariants() {
  Outcome o;
  std::mt19937_64 rng(606);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng() % 10;
    const auto b = oracle::random_batch(rng, n, 4, 1 + static_cast<int>(rng() % 5), 2.0);
    const auto d = pairwise_distances(b.features);
    const double tri = triplet_loss(d, b.identities, 5.0);
    const double pull = pull_loss(d, b.identities, 1.0);
    const std::string at = "batch " + std::to_string(trial);
    require(o, tri >= 0.0 && pull >= 0.0, at + ": negative loss");

    std::vector<std::int64_t> renamed(b.identities);
    for (auto& id : renamed) id = 7919 - 13 * id;
    require(o, std::abs(triplet_loss(d, renamed, 5.0) - tri) <= 1e-12 * (1.0 + tri), at + ": triplet renaming");
    require(o, std::abs(pull_loss(d, renamed, 1.0) - pull) <= 1e-12 * (1.0 + pull), at + ": pull renaming");

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    LabeledBatch s;
    for (auto k : perm) {
      s.features.push_back(b.features[k]);
      s.identities.push_back(b.identities[k]);
    }
    const auto ds = pairwise_distances(s.features);
    require(o, std::abs(triplet_loss(ds, s.identities, 5.0) - tri) <= 1e-12 * (1.0 + tri), at + ": triplet order");
    require(o, std::abs(pull_loss(ds, s.identities, 1.0) - pull) <= 1e-12 * (1.0 + pull), at + ": pull order");
  }
  if (o.pass) o.detail = "1000 batches";
  return o;
}

// 7 ---------------------------------------------------------------------------
Outcome determinism() {
  Outcome o;
  const auto dir = fresh_dir("determinism");
  std::size_t files = 0;
  auto compare = [&](const fs::path& a, const fs::path& b) {
    for (const auto& entry : fs::directory_iterator(a)) {
      const auto name = entry.path().filename();
      require(o, fs::exists(b / name), name.string() + " missing from second run");
      require(o, slurp(entry.path()) == slurp(b / name), name.string() + " differs between runs");
      ++files;
    }
  };

  for (const char* run : {"sim_a", "sim_b"}) {
    cli::SimulateOptions sim;
    sim.sim.seed = 77;
    sim.sim.frames = 30;
    sim.dev_frames = 10;
    sim.holdout_frames = 10;
    sim.out_dir = dir / run;
    cli::cmd_simulate(sim);
  }
  compare(dir / "sim_a", dir / "sim_b");

  for (const char* run : {"train_a", "train_b"}) {
    cli::TrainOptions train;
    train.frames = dir / "sim_a" / "train.jsonl";
    train.train.epochs = 5;
    train.train.seed = 77;
    train.train.dims = {16, 32, 16};
    train.out_dir = dir / run;
    cli::cmd_train(train);
  }
  compare(dir / "train_a", dir / "train_b");
  if (o.pass) o.detail = std::to_string(files) + " files byte-identical";
  return o;
}

// 8 ---------------------------------------------------------------------------
Outcome ap_sanity() {
  Outcome o;
  const BoundingBox gt(0, 0, 10, 10);
  const std::vector<ImageDetections> exact{{{{gt, 0.9}}, {gt}}};
  require(o, average_precision(exact, 0.5) == 1.0, "single exact prediction");
  const std::vector<ImageDetections> fp_first{{{{{50, 50, 60, 60}, 0.9}, {gt, 0.8}}, {gt}}};
  require(o, average_precision(fp_first, 0.5) == 0.5, "false positive ranked first");
  const std::vector<ImageDetections> all{
      {{{gt, 0.3}, {{20, 20, 30, 35}, 0.6}}, {gt, {20, 20, 30, 35}}},
      {{{{5, 5, 9, 9}, 0.9}}, {{5, 5, 9, 9}}},
  };
  for (int k = 0; k < 10; ++k) {
    require(o, average_precision(all, 0.5 + 0.05 * k) == 1.0, "exact predictions at threshold " + std::to_string(k));
  }
  require(o, mean_ap(all) == 1.0, "mean_ap on exact predictions");
  if (o.pass) o.detail = "AP 1.0 / 0.5 / 1.0, mAP 1.0";
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "metric arithmetic vs reported tables", 1.0, reported_arithmetic},
      {2, "analytic gradient vs finite differences", 10.0, gradient_check},
      {3, "matcher equals brute-force oracle", 5.0, matcher_oracle},
      {4, "threshold sweep optimality", 10.0, calibration_optimality},
      {5, "end-to-end synthetic tracking", 60.0, end_to_end},
      {6, "loss invariants", 5.0, loss_invariants},
      {7, "determinism of simulate and train", 60.0, determinism},
      {8, "average precision sanity", 1.0, ap_sanity},
  };
  std::printf("kernels: %s\n", std::string(simd::isa_name(simd::active().isa)).c_str());
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      if (out.pass) out.detail = "over time budget";
      out.pass = false;
    }
    failures += !out.pass;
    std::printf("[%s] %d. %s (%.3f s / %.0f s): %s\n", out.pass ? "PASS" : "FAIL", c.id, c.name, secs, c.budget_s,
                out.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
