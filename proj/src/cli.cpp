#include "trackbranch/cli.hpp"

#include <fstream>
#include <set>

#include "trackbranch/assoc.hpp"
#include "trackbranch/simd.hpp"

namespace tb::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) throw ConfigError("an output directory is required (--out)");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  return os;
}

double slot_width(const FrameRecord& f, double image_width) {
  double w = image_width;
  for (const auto& d : f.detections) w = std::max(w, d.box.x2());
  for (const auto& g : f.gt_boxes) w = std::max(w, g.box.x2());
  return w;
}

bool neighbours(const FrameRecord& a, const FrameRecord& b) {
  return a.camera_id == b.camera_id && b.frame_index == a.frame_index + 1;
}

// Labelled detections of one frame: (feature, identity).
std::vector<std::pair<const std::vector<double>*, std::int64_t>> labelled(const FrameRecord& f,
                                                                          const PairingOptions& opt) {
  std::vector<std::pair<const std::vector<double>*, std::int64_t>> out;
  if (opt.labels == LabelSource::kDetectionLabels) {
    for (const auto& d : f.detections) {
      if (d.confidence >= opt.score_threshold && d.gt_identity) out.emplace_back(&d.feature, *d.gt_identity);
    }
    return out;
  }
  std::vector<ScoredBox> preds;
  for (const auto& d : f.detections) preds.push_back({d.box, d.confidence});
  const auto assigned = assign_predictions(preds, f.gt_boxes, opt.score_threshold, opt.iou_min);
  for (std::size_t k = 0; k < assigned.size(); ++k) {
    if (assigned[k]) out.emplace_back(&f.detections[k].feature, assigned[k]->identity);
  }
  return out;
}

json pairing_to_json(const PairingOptions& p) {
  return {{"score_threshold", p.score_threshold},
          {"iou_min", p.iou_min},
          {"labels", p.labels == LabelSource::kIouAssignment ? "iou" : "detection"},
          {"image_width", p.image_width}};
}

}  // namespace

json RunManifest::to_json() const {
  return {{"tool", "trackbranch"},
          {"tool_version", kToolVersion},
          {"subcommand", subcommand},
          {"inputs", inputs},
          {"outputs", outputs},
          {"config", config},
          {"seed", seed},
          {"kernels", std::string(simd::isa_name(simd::active().isa))}};
}

void write_manifest(const fs::path& out_dir, const RunManifest& m) {
  auto os = open_out(out_dir / "manifest.json");
  os << m.to_json().dump(2) << '\n';
}

std::vector<LabeledBatch> training_batches(std::span<const FrameRecord> frames, const PairingOptions& opt) {
  std::vector<LabeledBatch> out;
  for (std::size_t f = 1; f < frames.size(); ++f) {
    if (!neighbours(frames[f - 1], frames[f])) continue;
    const auto sample = concat_neighbor_frames(frames[f - 1], frames[f], slot_width(frames[f - 1], opt.image_width));
    if (!sample.has_positive_pairs) continue;
    if (auto batch = labeled_batch(sample, opt.score_threshold, opt.iou_min, opt.labels)) {
      out.push_back(std::move(*batch));
    }
  }
  return out;
}

std::vector<LabeledDistance> cross_frame_distances(std::span<const FrameRecord> frames, const TrackHeadParams& params,
                                                   const PairingOptions& opt) {
  std::vector<LabeledDistance> out;
  std::vector<std::pair<Embedding, std::int64_t>> previous;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    std::vector<std::pair<Embedding, std::int64_t>> current;
    for (const auto& [feature, id] : labelled(frames[f], opt)) current.emplace_back(forward(params, *feature), id);
    if (f > 0 && neighbours(frames[f - 1], frames[f])) {
      for (const auto& [ea, ia] : previous) {
        for (const auto& [eb, ib] : current) out.push_back({simd::squared_distance(ea, eb), ia == ib});
      }
    }
    previous = std::move(current);
  }
  return out;
}

void cmd_simulate(const SimulateOptions& opt) {
  opt.sim.validate();
  if (opt.dev_frames < 0 || opt.holdout_frames < 0) throw ConfigError("split lengths must be non-negative");
  ensure_dir(opt.out_dir);

  RunManifest m;
  m.subcommand = "simulate";
  m.seed = opt.sim.seed;
  m.config = sim_config_to_json(opt.sim);
  m.config["dev_frames"] = opt.dev_frames;
  m.config["holdout_frames"] = opt.holdout_frames;

  const SimResult sim = simulate(opt.sim);
  save_frames(opt.out_dir / "train.jsonl", sim.frames);
  m.outputs.push_back("train.jsonl");

  const std::uint64_t base = opt.sim.sequence_seed.value_or(opt.sim.seed);
  auto split = [&](const char* name, int length, std::uint64_t offset) {
    if (length == 0) return;
    SimConfig c = opt.sim;
    c.frames = length;
    c.sequence_seed = base + offset;
    save_frames(opt.out_dir / name, simulate_sequence(c, sim.archetypes));
    m.outputs.push_back(name);
  };
  split("dev.jsonl", opt.dev_frames, 1);
  split("holdout.jsonl", opt.holdout_frames, 2);

  {
    auto os = open_out(opt.out_dir / "archetypes.json");
    os << json(sim.archetypes).dump() << '\n';
  }
  m.outputs.push_back("archetypes.json");
  write_manifest(opt.out_dir, m);
}

TrainSummary cmd_train(const TrainOptions& opt) {
  opt.loss.validate();
  opt.train.validate();
  const auto frames = load_frames(opt.frames);

  std::set<std::int64_t> identities;
  for (const auto& f : frames) {
    for (const auto& g : f.gt_boxes) identities.insert(g.identity);
    for (const auto& d : f.detections) {
      if (d.gt_identity) identities.insert(*d.gt_identity);
    }
  }
  if (identities.size() < 2) {
    throw DegenerateInputError("training needs at least two identities; the triplet loss is undefined otherwise");
  }
  PairingOptions pairing = opt.pairing;
  pairing.score_threshold = opt.loss.score_threshold;
  const auto batches = training_batches(frames, pairing);
  if (batches.empty()) throw DegenerateInputError("no consecutive frame pair yields a labelled positive pair");

  ensure_dir(opt.out_dir);
  const TrainResult result = train(batches, opt.loss, opt.train);
  save_params(opt.out_dir / "params.json", {result.params, opt.train.seed, opt.loss});
  {
    auto os = open_out(opt.out_dir / "loss_trace.csv");
    os.precision(17);
    os << "epoch,triplet,pull,weighted\n";
    os << 0 << ',' << result.initial.triplet << ',' << result.initial.pull << ',' << result.initial.weighted << '\n';
    for (std::size_t e = 0; e < result.trace.size(); ++e) {
      const auto& t = result.trace[e];
      os << e + 1 << ',' << t.triplet << ',' << t.pull << ',' << t.weighted << '\n';
    }
  }

  RunManifest m;
  m.subcommand = "train";
  m.seed = opt.train.seed;
  m.inputs = {{"frames", opt.frames.string()}};
  m.outputs = {"params.json", "loss_trace.csv"};
  const auto dims = result.params.dims();
  m.config = {{"loss", loss_config_to_json(opt.loss)},
              {"lr0", opt.train.lr0},
              {"epochs", opt.train.epochs},
              {"batch_size", opt.train.batch_size},
              {"shuffle", opt.train.shuffle},
              {"hidden_dim", dims.hidden},
              {"embedding_dim", dims.embedding},
              {"pairing", pairing_to_json(pairing)}};
  write_manifest(opt.out_dir, m);

  return {batches.size(), identities.size(), result.initial,
          result.trace.empty() ? result.initial : result.trace.back()};
}

SweepResult cmd_calibrate(const CalibrateOptions& opt) {
  const auto frames = load_frames(opt.frames);
  const auto params = load_params(opt.params);
  PairingOptions pairing = opt.pairing;
  const auto pairs = cross_frame_distances(frames, params.params, pairing);
  const SweepResult sweep = sweep_threshold(pairs, opt.tie);
  const auto bins = distance_histogram(pairs, opt.bins);

  ensure_dir(opt.out_dir);
  {
    auto os = open_out(opt.out_dir / "sweep.csv");
    write_sweep_csv(os, sweep);
  }
  {
    auto os = open_out(opt.out_dir / "histogram.csv");
    write_histogram_csv(os, bins);
  }
  const PairCounts best = counts_at(pairs, sweep.best_h);
  {
    auto os = open_out(opt.out_dir / "calibration.json");
    os << json{{"h", sweep.best_h}, {"objective", sweep.best_objective}, {"counts", pair_counts_to_json(best)},
               {"pairs", pairs.size()}}
              .dump(2)
       << '\n';
  }

  RunManifest m;
  m.subcommand = "calibrate";
  m.seed = params.seed;
  m.inputs = {{"frames", opt.frames.string()}, {"params", opt.params.string()}};
  m.outputs = {"calibration.json", "sweep.csv", "histogram.csv"};
  m.config = {{"bins", opt.bins},
              {"tie_break", opt.tie == TieBreak::kSmallestH ? "smallest_h" : "largest_h"},
              {"pairing", pairing_to_json(pairing)}};
  write_manifest(opt.out_dir, m);
  return sweep;
}

std::vector<TrackRecord> cmd_track(const TrackOptions& opt) {
  const auto frames = load_frames(opt.frames);
  const auto params = load_params(opt.params);
  const double p = opt.score_threshold.value_or(params.loss.score_threshold);
  for (const auto& f : frames) {
    for (const auto& d : f.detections) {
      if (d.feature.size() != params.params.dims().input) {
        throw ConfigError("frame " + std::to_string(f.frame_index) + " has feature dimension " +
                          std::to_string(d.feature.size()) + " but the track head expects " +
                          std::to_string(params.params.dims().input));
      }
    }
  }
  std::set<int> cameras;
  for (const auto& f : frames) cameras.insert(f.camera_id);
  if (cameras.size() > 1) throw ConfigError("track expects a single-camera sequence");

  const auto tracks = track_sequence(frames, params.params, opt.h, p);
  const auto records = to_track_records(frames, tracks);

  ensure_dir(opt.out_dir);
  save_tracks(opt.out_dir / "tracks.jsonl", records);
  RunManifest m;
  m.subcommand = "track";
  m.seed = params.seed;
  m.inputs = {{"frames", opt.frames.string()}, {"params", opt.params.string()}};
  m.outputs = {"tracks.jsonl"};
  m.config = {{"h", opt.h}, {"score_threshold", p}};
  write_manifest(opt.out_dir, m);
  return records;
}

json mot_counts_to_json(const MotCounts& c) {
  return {{"fp", c.fp}, {"miss", c.miss}, {"mismatch", c.mismatch}, {"gt_total", c.gt_total}};
}

MotCounts mot_counts_from_json(const json& j) {
  return {j.at("fp").get<std::int64_t>(), j.at("miss").get<std::int64_t>(), j.at("mismatch").get<std::int64_t>(),
          j.at("gt_total").get<std::int64_t>()};
}

json pair_counts_to_json(const PairCounts& c) {
  return {{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}, {"gp", c.gp}, {"gn", c.gn}};
}

PairCounts pair_counts_from_json(const json& j) {
  PairCounts c;
  c.tp = j.at("tp").get<std::int64_t>();
  c.tn = j.at("tn").get<std::int64_t>();
  c.fp = j.at("fp").get<std::int64_t>();
  c.fn = j.at("fn").get<std::int64_t>();
  c.gp = j.value("gp", c.tp + c.fn);
  c.gn = j.value("gn", c.tn + c.fp);
  return c;
}

json cmd_eval(const EvalOptions& opt) {
  json report;
  RunManifest m;
  m.subcommand = "eval";
  m.config = {{"iou_min", opt.iou_min}};

  if (!opt.counts.empty()) {
    std::ifstream is(opt.counts);
    if (!is) throw Error("cannot open '" + opt.counts.string() + "' for reading");
    json fixture;
    try {
      fixture = json::parse(is);
      if (fixture.contains("mot_counts")) {
        const auto c = mot_counts_from_json(fixture.at("mot_counts"));
        report["mot_counts"] = mot_counts_to_json(c);
        report["mota"] = mota(c);
      }
      if (fixture.contains("pair_counts")) {
        const auto c = pair_counts_from_json(fixture.at("pair_counts"));
        report["pair_counts"] = pair_counts_to_json(c);
        report["pair_accuracy"] = pair_accuracy(c);
      }
    } catch (const json::exception& e) {
      throw ConfigError("malformed counts fixture: " + std::string(e.what()));
    }
    if (report.empty()) throw ConfigError("counts fixture holds neither mot_counts nor pair_counts");
    m.inputs = {{"counts", opt.counts.string()}};
  } else {
    const auto tracks = load_tracks(opt.tracks);
    const auto gt = load_frames(opt.gt_frames);
    const MotCounts mc = mot_counts(tracks, gt, opt.iou_min);
    const PairCounts pc = pair_counts(tracks, gt, opt.iou_min);
    report["mot_counts"] = mot_counts_to_json(mc);
    report["mota"] = mota(mc);
    report["pair_counts"] = pair_counts_to_json(pc);
    report["pair_accuracy"] = pc.tp + pc.tn + pc.fp + pc.fn > 0 ? json(pair_accuracy(pc)) : json(nullptr);
    report["map"] = mean_ap(detection_images(tracks, gt));
    m.inputs = {{"tracks", opt.tracks.string()}, {"gt", opt.gt_frames.string()}};
  }
  report["config"] = m.config;

  ensure_dir(opt.out_dir);
  {
    auto os = open_out(opt.out_dir / "metrics.json");
    os << report.dump(2) << '\n';
  }
  m.outputs = {"metrics.json"};
  write_manifest(opt.out_dir, m);
  return report;
}

}  // namespace tb::cli
