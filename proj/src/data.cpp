#include "trackbranch/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>

#include "trackbranch/metrics.hpp"
#include "trackbranch/simd.hpp"

namespace tb {

using nlohmann::json;

namespace {

void append_slot(ConcatSample& s, const FrameRecord& f, int slot, double dx) {
  for (auto det : f.detections) {
    det.box = det.box.translated(dx, 0.0);
    det.image_slot = slot;
    s.detections.push_back(std::move(det));
  }
  for (auto g : f.gt_boxes) {
    g.box = g.box.translated(dx, 0.0);
    g.image_slot = slot;
    s.gt_boxes.push_back(g);
  }
}

ConcatSample concat(const FrameRecord& a, const FrameRecord& b, double width_a) {
  if (!(width_a > 0.0) || !std::isfinite(width_a)) throw ConfigError("image width must be positive");
  ConcatSample s;
  s.first_width = width_a;
  append_slot(s, a, 0, 0.0);
  append_slot(s, b, 1, width_a);
  std::set<std::int64_t> first;
  for (const auto& g : a.gt_boxes) first.insert(g.identity);
  s.has_positive_pairs =
      std::any_of(b.gt_boxes.begin(), b.gt_boxes.end(), [&](const GroundTruthBox& g) { return first.count(g.identity); });
  return s;
}

}  // namespace

ConcatSample concat_neighbor_frames(const FrameRecord& a, const FrameRecord& b, double width_a) {
  if (a.camera_id != b.camera_id) throw ConfigError("neighbouring frames must come from the same camera");
  if (b.frame_index != a.frame_index + 1) {
    throw ConfigError("frames " + std::to_string(a.frame_index) + " and " + std::to_string(b.frame_index) +
                      " are not consecutive");
  }
  return concat(a, b, width_a);
}

IdentityIndex build_identity_index(const FramesByCamera& frames) {
  IdentityIndex index;
  for (const auto& [camera, seq] : frames) {
    for (const auto& f : seq) {
      for (const auto& g : f.gt_boxes) index[g.identity].push_back({camera, f.frame_index});
    }
  }
  return index;
}

std::vector<ConcatSample> build_mtmc_pairs(const FramesByCamera& frames, const IdentityIndex& index, double width) {
  auto find_frame = [&frames](const Occurrence& o) -> const FrameRecord* {
    const auto cam = frames.find(o.camera_id);
    if (cam == frames.end()) return nullptr;
    for (const auto& f : cam->second) {
      if (f.frame_index == o.frame_index) return &f;
    }
    return nullptr;
  };

  std::vector<ConcatSample> out;
  std::set<std::tuple<int, std::int64_t, int, std::int64_t>> emitted;
  for (const auto& [identity, occurrences] : index) {
    // First occurrence per camera.
    std::map<int, Occurrence> first;
    for (const auto& o : occurrences) {
      auto [it, inserted] = first.emplace(o.camera_id, o);
      if (!inserted && o.frame_index < it->second.frame_index) it->second = o;
    }
    for (auto a = first.begin(); a != first.end(); ++a) {
      for (auto b = std::next(a); b != first.end(); ++b) {
        const auto key = std::make_tuple(a->second.camera_id, a->second.frame_index, b->second.camera_id,
                                         b->second.frame_index);
        if (!emitted.insert(key).second) continue;
        const FrameRecord* fa = find_frame(a->second);
        const FrameRecord* fb = find_frame(b->second);
        if (fa == nullptr || fb == nullptr) throw ConfigError("identity index references a missing frame");
        out.push_back(concat(*fa, *fb, width));
      }
    }
  }
  return out;
}

std::optional<LabeledBatch> labeled_batch(const ConcatSample& sample, double p, double iou_min, LabelSource source) {
  LabeledBatch batch;
  if (source == LabelSource::kDetectionLabels) {
    for (const auto& det : sample.detections) {
      if (det.confidence < p || !det.gt_identity) continue;
      batch.features.push_back(det.feature);
      batch.identities.push_back(*det.gt_identity);
    }
  } else {
    std::vector<ScoredBox> preds;
    preds.reserve(sample.detections.size());
    for (const auto& det : sample.detections) preds.push_back({det.box, det.confidence});
    const auto assigned = assign_predictions(preds, sample.gt_boxes, p, iou_min);
    for (std::size_t k = 0; k < assigned.size(); ++k) {
      if (!assigned[k]) continue;
      batch.features.push_back(sample.detections[k].feature);
      batch.identities.push_back(assigned[k]->identity);
    }
  }
  if (batch.features.size() < 2) return std::nullopt;
  return batch;
}

// ---------------------------------------------------------------------------
// Simulation

void SimConfig::validate() const {
  if (identities < 1) throw ConfigError("identities must be at least 1");
  if (frames < 1) throw ConfigError("frames must be at least 1");
  if (feature_dim < 1) throw ConfigError("feature_dim must be at least 1");
  if (!(separation > 0.0)) throw ConfigError("separation must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise_sigma must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(image_width > 0.0) || !(image_height > 0.0)) throw ConfigError("image size must be positive");
  if (!(speed_min >= 0.0) || speed_max < speed_min) throw ConfigError("speed range is invalid");
  if (!(box_jitter >= 0.0)) throw ConfigError("box_jitter must be non-negative");
  if (!(confidence_min >= 0.0 && confidence_min <= 1.0)) throw ConfigError("confidence_min must lie in [0, 1]");
}

std::vector<std::vector<double>> make_archetypes(const SimConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(cfg.identities);
  const auto dim = static_cast<std::size_t>(cfg.feature_dim);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::vector<double>> out(n, std::vector<double>(dim, 0.0));
  if (n <= dim) {
    // Scaled basis vectors on randomly chosen axes: every pair is exactly
    // `separation` apart.
    std::vector<std::size_t> axes(dim);
    std::iota(axes.begin(), axes.end(), 0);
    std::shuffle(axes.begin(), axes.end(), rng);
    const double scale = cfg.separation / std::sqrt(2.0);
    for (std::size_t k = 0; k < n; ++k) out[k][axes[k]] = scale;
    return out;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& a : out) {
    for (double& x : a) x = normal(rng);
  }
  double closest = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      closest = std::min(closest, std::sqrt(simd::scalar_kernels().squared_distance(out[i].data(), out[j].data(), dim)));
    }
  }
  const double scale = cfg.separation / closest;
  for (auto& a : out) {
    for (double& x : a) x *= scale;
  }
  return out;
}

std::vector<FrameRecord> simulate_sequence(const SimConfig& cfg, std::span<const std::vector<double>> archetypes) {
  cfg.validate();
  if (archetypes.size() != static_cast<std::size_t>(cfg.identities)) {
    throw ConfigError("archetype table does not match the identity count");
  }
  for (const auto& a : archetypes) {
    if (a.size() != static_cast<std::size_t>(cfg.feature_dim)) throw ConfigError("archetype dimension mismatch");
  }

  std::mt19937_64 rng(cfg.sequence_seed.value_or(cfg.seed) ^ 0x5851f42d4c957f2dULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  // Noise vectors: RMS norm sigma, norm capped at 2.5 sigma.
  const double noise_scale = cfg.noise_sigma / std::sqrt(static_cast<double>(cfg.feature_dim));
  const double noise_radius = 2.5 * cfg.noise_sigma;

  // One horizontal lane per identity; ground-truth boxes never overlap.
  struct Mover {
    double x1, y1, w, h, vx;
  };
  const double lane = cfg.image_height / cfg.identities;
  std::vector<Mover> movers;
  for (int k = 0; k < cfg.identities; ++k) {
    Mover m{};
    m.h = 0.6 * lane;
    m.w = std::min(m.h * (1.2 + 0.8 * unit(rng)), 0.5 * cfg.image_width);
    m.y1 = k * lane + 0.2 * lane;
    m.x1 = unit(rng) * (cfg.image_width - m.w);
    const double speed = cfg.speed_min + (cfg.speed_max - cfg.speed_min) * unit(rng);
    m.vx = unit(rng) < 0.5 ? -speed : speed;
    movers.push_back(m);
  }

  std::vector<FrameRecord> frames;
  frames.reserve(static_cast<std::size_t>(cfg.frames));
  for (int t = 0; t < cfg.frames; ++t) {
    FrameRecord frame;
    frame.frame_index = cfg.start_frame + t;
    frame.camera_id = cfg.camera_id;
    for (int k = 0; k < cfg.identities; ++k) {
      auto& m = movers[k];
      if (t > 0) {
        m.x1 += m.vx;
        const double right = cfg.image_width - m.w;
        if (m.x1 < 0.0) {
          m.x1 = -m.x1;
          m.vx = -m.vx;
        } else if (m.x1 > right) {
          m.x1 = 2.0 * right - m.x1;
          m.vx = -m.vx;
        }
        m.x1 = std::clamp(m.x1, 0.0, right);
      }
      const BoundingBox truth(m.x1, m.y1, m.x1 + m.w, m.y1 + m.h);
      frame.gt_boxes.push_back({truth, k, 0});

      // All variates are drawn, dropped or not.
      const bool dropped = unit(rng) < cfg.dropout;
      double jitter[4];
      for (double& j : jitter) j = cfg.box_jitter * (2.0 * unit(rng) - 1.0);
      const double confidence = cfg.confidence_min + (1.0 - cfg.confidence_min) * unit(rng);
      std::vector<double> offset(archetypes[k].size());
      for (double& x : offset) x = noise_scale * noise(rng);
      const double norm = std::sqrt(std::inner_product(offset.begin(), offset.end(), offset.begin(), 0.0));
      const double shrink = norm > noise_radius ? noise_radius / norm : 1.0;
      std::vector<double> feature(archetypes[k]);
      for (std::size_t i = 0; i < feature.size(); ++i) feature[i] += shrink * offset[i];
      if (dropped) continue;

      DetectionRecord det{BoundingBox(truth.x1() + jitter[0], truth.y1() + jitter[1], truth.x2() + jitter[2],
                                      truth.y2() + jitter[3]),
                          confidence, std::move(feature), k, 0};
      frame.detections.push_back(std::move(det));
    }
    std::shuffle(frame.detections.begin(), frame.detections.end(), rng);
    frames.push_back(std::move(frame));
  }
  return frames;
}

SimResult simulate(const SimConfig& cfg) {
  SimResult r;
  r.archetypes = make_archetypes(cfg);
  r.frames = simulate_sequence(cfg, r.archetypes);
  return r;
}

// ---------------------------------------------------------------------------
// JSON helpers

namespace {

json box_to_json(const BoundingBox& b) { return json::array({b.x1(), b.y1(), b.x2(), b.y2()}); }

const json& require(const json& j, const char* field, std::size_t line) {
  if (!j.is_object()) throw ParseError(line, field, "record is not a JSON object");
  const auto it = j.find(field);
  if (it == j.end()) throw ParseError(line, field, "missing field");
  return *it;
}

double number_field(const json& v, const std::string& field, std::size_t line) {
  if (!v.is_number()) throw ParseError(line, field, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ParseError(line, field, "expected a finite number");
  return x;
}

std::int64_t integer_field(const json& v, const std::string& field, std::size_t line) {
  if (!v.is_number_integer()) throw ParseError(line, field, "expected an integer");
  return v.get<std::int64_t>();
}

BoundingBox box_from_json(const json& v, const std::string& field, std::size_t line) {
  if (!v.is_array() || v.size() != 4) throw ParseError(line, field, "expected [x1, y1, x2, y2]");
  double c[4];
  for (std::size_t i = 0; i < 4; ++i) c[i] = number_field(v[i], field, line);
  try {
    return {c[0], c[1], c[2], c[3]};
  } catch (const ConfigError& e) {
    throw ParseError(line, field, e.what());
  }
}

template <typename Fn>
void for_each_line(std::istream& is, Fn&& fn) {
  std::string text;
  std::size_t line = 0;
  while (std::getline(is, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(line, "<record>", e.what());
    }
    fn(j, line);
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path.string() + "' for reading");
  return is;
}

}  // namespace

json frame_to_json(const FrameRecord& frame) {
  json dets = json::array();
  for (const auto& d : frame.detections) {
    json jd = {{"box", box_to_json(d.box)}, {"confidence", d.confidence}, {"feature", d.feature}};
    if (d.gt_identity) jd["gt_id"] = *d.gt_identity;
    dets.push_back(std::move(jd));
  }
  json gts = json::array();
  for (const auto& g : frame.gt_boxes) gts.push_back({{"box", box_to_json(g.box)}, {"id", g.identity}});
  return {{"frame_index", frame.frame_index},
          {"camera_id", frame.camera_id},
          {"detections", std::move(dets)},
          {"gt_boxes", std::move(gts)}};
}

FrameRecord frame_from_json(const json& j, std::size_t line) {
  FrameRecord f;
  f.frame_index = integer_field(require(j, "frame_index", line), "frame_index", line);
  if (f.frame_index < 0) throw ParseError(line, "frame_index", "must be non-negative");
  f.camera_id = static_cast<int>(integer_field(require(j, "camera_id", line), "camera_id", line));

  const json& dets = require(j, "detections", line);
  if (!dets.is_array()) throw ParseError(line, "detections", "expected an array");
  for (const auto& jd : dets) {
    DetectionRecord d{box_from_json(require(jd, "box", line), "detections.box", line), 0.0, {}, std::nullopt, 0};
    d.confidence = number_field(require(jd, "confidence", line), "detections.confidence", line);
    if (d.confidence < 0.0 || d.confidence > 1.0) throw ParseError(line, "detections.confidence", "outside [0, 1]");
    const json& feat = require(jd, "feature", line);
    if (!feat.is_array()) throw ParseError(line, "detections.feature", "expected an array");
    d.feature.reserve(feat.size());
    for (const auto& x : feat) d.feature.push_back(number_field(x, "detections.feature", line));
    if (const auto it = jd.find("gt_id"); it != jd.end() && !it->is_null()) {
      const auto id = integer_field(*it, "detections.gt_id", line);
      if (id < 0) throw ParseError(line, "detections.gt_id", "must be non-negative");
      d.gt_identity = id;
    }
    f.detections.push_back(std::move(d));
  }

  const json& gts = require(j, "gt_boxes", line);
  if (!gts.is_array()) throw ParseError(line, "gt_boxes", "expected an array");
  for (const auto& jg : gts) {
    GroundTruthBox g{box_from_json(require(jg, "box", line), "gt_boxes.box", line), 0, 0};
    g.identity = integer_field(require(jg, "id", line), "gt_boxes.id", line);
    if (g.identity < 0) throw ParseError(line, "gt_boxes.id", "must be non-negative");
    f.gt_boxes.push_back(g);
  }
  return f;
}

void write_frames(std::ostream& os, std::span<const FrameRecord> frames) {
  for (const auto& f : frames) os << frame_to_json(f).dump() << '\n';
}

std::vector<FrameRecord> read_frames(std::istream& is) {
  std::vector<FrameRecord> out;
  std::optional<std::size_t> dim;
  for_each_line(is, [&](const json& j, std::size_t line) {
    FrameRecord f = frame_from_json(j, line);
    for (const auto& d : f.detections) {
      if (!dim) dim = d.feature.size();
      if (d.feature.size() != *dim) {
        throw ParseError(line, "detections.feature",
                         "dimension " + std::to_string(d.feature.size()) + " differs from " + std::to_string(*dim));
      }
    }
    out.push_back(std::move(f));
  });
  return out;
}

void save_frames(const std::filesystem::path& path, std::span<const FrameRecord> frames) {
  auto os = open_out(path);
  write_frames(os, frames);
}

std::vector<FrameRecord> load_frames(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_frames(is);
}

void write_tracks(std::ostream& os, std::span<const TrackRecord> tracks) {
  for (const auto& t : tracks) {
    const json j = {{"frame_index", t.frame_index},
                    {"track_id", t.track_id},
                    {"box", box_to_json(t.box)},
                    {"confidence", t.confidence}};
    os << j.dump() << '\n';
  }
}

std::vector<TrackRecord> read_tracks(std::istream& is) {
  std::vector<TrackRecord> out;
  for_each_line(is, [&](const json& j, std::size_t line) {
    out.push_back({integer_field(require(j, "frame_index", line), "frame_index", line),
                   integer_field(require(j, "track_id", line), "track_id", line),
                   box_from_json(require(j, "box", line), "box", line),
                   number_field(require(j, "confidence", line), "confidence", line)});
  });
  return out;
}

void save_tracks(const std::filesystem::path& path, std::span<const TrackRecord> tracks) {
  auto os = open_out(path);
  write_tracks(os, tracks);
}

std::vector<TrackRecord> load_tracks(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_tracks(is);
}

// ---------------------------------------------------------------------------
// Parameters and configs

json loss_config_to_json(const LossConfig& c) {
  return {{"margin", c.margin},
          {"pull_margin", c.pull_margin},
          {"lambda_cls", c.lambda_cls},
          {"lambda_reg", c.lambda_reg},
          {"lambda_tri", c.lambda_tri},
          {"lambda_pull", c.lambda_pull},
          {"score_threshold", c.score_threshold}};
}

namespace {

template <typename T>
void maybe_read(const json& j, const char* key, T& out) {
  if (const auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
  }
}

}  // namespace

LossConfig loss_config_from_json(const json& j, LossConfig c) {
  maybe_read(j, "margin", c.margin);
  maybe_read(j, "pull_margin", c.pull_margin);
  maybe_read(j, "lambda_cls", c.lambda_cls);
  maybe_read(j, "lambda_reg", c.lambda_reg);
  maybe_read(j, "lambda_tri", c.lambda_tri);
  maybe_read(j, "lambda_pull", c.lambda_pull);
  maybe_read(j, "score_threshold", c.score_threshold);
  return c;
}

json sim_config_to_json(const SimConfig& c) {
  json j = {{"identities", c.identities},   {"frames", c.frames},
            {"feature_dim", c.feature_dim}, {"separation", c.separation},
            {"noise_sigma", c.noise_sigma}, {"dropout", c.dropout},
            {"image_width", c.image_width}, {"image_height", c.image_height},
            {"speed_min", c.speed_min},     {"speed_max", c.speed_max},
            {"box_jitter", c.box_jitter},   {"confidence_min", c.confidence_min},
            {"camera_id", c.camera_id},     {"start_frame", c.start_frame},
            {"seed", c.seed}};
  if (c.sequence_seed) j["sequence_seed"] = *c.sequence_seed;
  return j;
}

SimConfig sim_config_from_json(const json& j, SimConfig c) {
  if (!j.is_object()) throw ConfigError("simulation config must be a JSON object");
  maybe_read(j, "identities", c.identities);
  maybe_read(j, "frames", c.frames);
  maybe_read(j, "feature_dim", c.feature_dim);
  maybe_read(j, "separation", c.separation);
  maybe_read(j, "noise_sigma", c.noise_sigma);
  maybe_read(j, "dropout", c.dropout);
  maybe_read(j, "image_width", c.image_width);
  maybe_read(j, "image_height", c.image_height);
  maybe_read(j, "speed_min", c.speed_min);
  maybe_read(j, "speed_max", c.speed_max);
  maybe_read(j, "box_jitter", c.box_jitter);
  maybe_read(j, "confidence_min", c.confidence_min);
  maybe_read(j, "camera_id", c.camera_id);
  maybe_read(j, "start_frame", c.start_frame);
  maybe_read(j, "seed", c.seed);
  if (const auto it = j.find("sequence_seed"); it != j.end() && !it->is_null()) {
    std::uint64_t s = 0;
    maybe_read(j, "sequence_seed", s);
    c.sequence_seed = s;
  }
  return c;
}

json params_to_json(const ParamsFile& file) {
  const auto dims = file.params.dims();
  auto values = [](std::span<const double> xs) { return json(std::vector<double>(xs.begin(), xs.end())); };
  return {{"format", "trackbranch-params"},
          {"version", kParamsFormatVersion},
          {"dims", {{"input", dims.input}, {"hidden", dims.hidden}, {"embedding", dims.embedding}}},
          {"w1", values(file.params.w1.values())},
          {"b1", values(file.params.b1)},
          {"w2", values(file.params.w2.values())},
          {"b2", values(file.params.b2)},
          {"seed", file.seed},
          {"loss_config", loss_config_to_json(file.loss)}};
}

ParamsFile params_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "trackbranch-params") throw ConfigError("not a track head parameter file");
    if (j.at("version").get<int>() != kParamsFormatVersion) {
      throw ConfigError("unsupported parameter file version " + j.at("version").dump());
    }
    HeadDims dims{j.at("dims").at("input").get<std::size_t>(), j.at("dims").at("hidden").get<std::size_t>(),
                  j.at("dims").at("embedding").get<std::size_t>()};
    ParamsFile f;
    f.params = TrackHeadParams::zeros(dims);
    auto fill = [&j](const char* key, std::span<double> dst) {
      const auto src = j.at(key).get<std::vector<double>>();
      if (src.size() != dst.size()) {
        throw ConfigError(std::string("parameter array '") + key + "' has " + std::to_string(src.size()) +
                          " entries, expected " + std::to_string(dst.size()));
      }
      std::copy(src.begin(), src.end(), dst.begin());
    };
    fill("w1", f.params.w1.values());
    fill("b1", f.params.b1);
    fill("w2", f.params.w2.values());
    fill("b2", f.params.b2);
    f.seed = j.at("seed").get<std::uint64_t>();
    f.loss = loss_config_from_json(j.at("loss_config"));
    f.params.validate();
    f.loss.validate();
    return f;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed parameter file: ") + e.what());
  }
}

void save_params(const std::filesystem::path& path, const ParamsFile& file) {
  auto os = open_out(path);
  os << params_to_json(file).dump(2) << '\n';
}

ParamsFile load_params(const std::filesystem::path& path) {
  auto is = open_in(path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed parameter file '" + path.string() + "': " + e.what());
  }
  return params_from_json(j);
}

}  // namespace tb
