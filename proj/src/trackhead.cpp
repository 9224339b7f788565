#include "trackbranch/trackhead.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "trackbranch/core.hpp"
#include "trackbranch/simd.hpp"

namespace tb {

namespace {

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

// One hardest-pair term of a loss: d(i, j) enters the loss with slope `coef`.
struct DistanceSlope {
  std::size_t i;
  std::size_t j;
  double coef;
};

double triplet_terms(const Matrix& d, std::span<const std::int64_t> ids, double margin,
                     std::vector<DistanceSlope>* slopes) {
  const std::size_t n = ids.size();
  double total = 0.0;
  std::size_t anchors = 0;
  struct Active {
    std::size_t anchor, pos, neg;
  };
  std::vector<Active> active;
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t pos = n, neg = n;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == a) continue;
      if (ids[k] == ids[a]) {
        if (pos == n || d(a, k) > d(a, pos)) pos = k;
      } else {
        if (neg == n || d(a, k) < d(a, neg)) neg = k;
      }
    }
    if (pos == n || neg == n) continue;
    ++anchors;
    const double hinge = d(a, pos) - d(a, neg) + margin;
    if (hinge > 0.0) {
      total += hinge;
      active.push_back({a, pos, neg});
    }
  }
  if (anchors == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(anchors);
  if (slopes != nullptr) {
    for (const auto& t : active) {
      slopes->push_back({t.anchor, t.pos, inv});
      slopes->push_back({t.anchor, t.neg, -inv});
    }
  }
  return total * inv;
}

double pull_terms(const Matrix& d, std::span<const std::int64_t> ids, double pull_margin,
                  std::vector<DistanceSlope>* slopes) {
  std::map<std::int64_t, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < ids.size(); ++k) groups[ids[k]].push_back(k);

  double total = 0.0;
  std::size_t count = 0;
  std::vector<DistanceSlope> local;
  for (const auto& [id, members] : groups) {
    if (members.size() < 2) continue;
    ++count;
    std::size_t bi = members[0], bj = members[1];
    for (std::size_t x = 0; x < members.size(); ++x) {
      for (std::size_t y = x + 1; y < members.size(); ++y) {
        if (d(members[x], members[y]) > d(bi, bj)) {
          bi = members[x];
          bj = members[y];
        }
      }
    }
    const double dev = d(bi, bj) - pull_margin;
    total += std::abs(dev);
    const double sign = dev > 0.0 ? 1.0 : (dev < 0.0 ? -1.0 : 0.0);
    if (sign != 0.0) local.push_back({bi, bj, sign});
  }
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  if (slopes != nullptr) {
    for (auto s : local) {
      s.coef *= inv;
      slopes->push_back(s);
    }
  }
  return total * inv;
}

struct ForwardCache {
  std::vector<double> pre;  // w1 x + b1
  std::vector<double> act;  // relu(pre)
  Embedding out;
};

ForwardCache forward_cached(const TrackHeadParams& p, std::span<const double> feature) {
  const auto& k = simd::active();
  const std::size_t h = p.w1.rows();
  const std::size_t e = p.w2.rows();
  ForwardCache c;
  c.pre.resize(h);
  c.act.resize(h);
  for (std::size_t r = 0; r < h; ++r) {
    c.pre[r] = k.dot(p.w1.row(r).data(), feature.data(), feature.size()) + p.b1[r];
    c.act[r] = c.pre[r] > 0.0 ? c.pre[r] : 0.0;
  }
  c.out.resize(e);
  for (std::size_t r = 0; r < e; ++r) {
    c.out[r] = k.dot(p.w2.row(r).data(), c.act.data(), h) + p.b2[r];
  }
  return c;
}

void check_feature(const TrackHeadParams& p, std::span<const double> feature) {
  if (feature.size() != p.w1.cols()) {
    throw ConfigError("feature dimension " + std::to_string(feature.size()) + " does not match track head input " +
                      std::to_string(p.w1.cols()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameters and configuration

TrackHeadParams TrackHeadParams::zeros(const HeadDims& dims) {
  TrackHeadParams p;
  p.w1 = Matrix(dims.hidden, dims.input);
  p.b1.assign(dims.hidden, 0.0);
  p.w2 = Matrix(dims.embedding, dims.hidden);
  p.b2.assign(dims.embedding, 0.0);
  return p;
}

std::size_t TrackHeadParams::parameter_count() const {
  return w1.values().size() + b1.size() + w2.values().size() + b2.size();
}

void TrackHeadParams::validate() const {
  if (w1.empty() || w2.empty()) throw ConfigError("track head has an empty layer");
  if (b1.size() != w1.rows() || w2.cols() != w1.rows() || b2.size() != w2.rows()) {
    throw ConfigError("track head layer shapes are inconsistent");
  }
  for (auto block : blocks()) {
    if (!all_finite(block)) throw ConfigError("track head contains non-finite parameters");
  }
}

std::vector<std::span<double>> TrackHeadParams::blocks() {
  return {w1.values(), std::span<double>(b1), w2.values(), std::span<double>(b2)};
}

std::vector<std::span<const double>> TrackHeadParams::blocks() const {
  return {w1.values(), std::span<const double>(b1), w2.values(), std::span<const double>(b2)};
}

TrackHeadParams init_params(const HeadDims& dims, std::uint64_t seed) {
  if (dims.input == 0 || dims.hidden == 0 || dims.embedding == 0) {
    throw ConfigError("track head dimensions must be positive");
  }
  TrackHeadParams p = TrackHeadParams::zeros(dims);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](std::span<double> xs, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& x : xs) x = dist(rng);
  };
  fill(p.w1.values(), dims.input);
  fill(p.b1, dims.input);
  fill(p.w2.values(), dims.hidden);
  fill(p.b2, dims.hidden);
  return p;
}

void LossConfig::validate() const {
  if (!(margin > 0.0)) throw ConfigError("triplet margin must be positive");
  if (!(pull_margin >= 0.0)) throw ConfigError("pull margin must be non-negative");
  for (double l : {lambda_cls, lambda_reg, lambda_tri, lambda_pull}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("loss weights must be finite and non-negative");
  }
  if (!(score_threshold >= 0.0 && score_threshold <= 1.0)) {
    throw ConfigError("score threshold must lie in [0, 1]");
  }
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ConfigError("initial learning rate must be positive");
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (batch_size <= 0) throw ConfigError("batch size must be positive");
  if (dims.hidden == 0 || dims.embedding == 0) throw ConfigError("hidden and embedding dimensions must be positive");
}

void LabeledBatch::validate() const {
  if (features.size() != identities.size()) throw ConfigError("batch features and identities differ in length");
  if (features.size() < 2) throw ConfigError("a labeled batch needs at least two entries");
  for (const auto& f : features) {
    if (f.size() != features.front().size()) throw ConfigError("batch features differ in dimension");
  }
}

// ---------------------------------------------------------------------------
// Forward pass and losses

Embedding forward(const TrackHeadParams& params, std::span<const double> feature) {
  check_feature(params, feature);
  return forward_cached(params, feature).out;
}

std::vector<Embedding> embed_all(const TrackHeadParams& params, std::span<const std::vector<double>> features) {
  std::vector<Embedding> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(forward(params, f));
  return out;
}

Matrix pairwise_distances(std::span<const Embedding> embeddings) {
  const std::size_t n = embeddings.size();
  Matrix d(n, n);
  const auto& k = simd::active();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = k.squared_distance(embeddings[i].data(), embeddings[j].data(), embeddings[i].size());
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

double triplet_loss(const Matrix& distances, std::span<const std::int64_t> identities, double margin) {
  return triplet_terms(distances, identities, margin, nullptr);
}

double pull_loss(const Matrix& distances, std::span<const std::int64_t> identities, double pull_margin) {
  return pull_terms(distances, identities, pull_margin, nullptr);
}

double joint_loss(double l_cls, double l_reg, double l_tri, double l_pull, const LossConfig& cfg) {
  return cfg.lambda_cls * l_cls + cfg.lambda_reg * l_reg + cfg.lambda_tri * l_tri + cfg.lambda_pull * l_pull;
}

TrackLoss track_loss(const TrackHeadParams& params, const LabeledBatch& batch, const LossConfig& cfg) {
  const auto emb = embed_all(params, batch.features);
  const Matrix d = pairwise_distances(emb);
  TrackLoss loss;
  loss.triplet = triplet_loss(d, batch.identities, cfg.margin);
  loss.pull = pull_loss(d, batch.identities, cfg.pull_margin);
  loss.weighted = joint_loss(0.0, 0.0, loss.triplet, loss.pull, cfg);
  return loss;
}

// ---------------------------------------------------------------------------
// Gradients

TrackHeadParams gradient(const TrackHeadParams& params, const LabeledBatch& batch, const LossConfig& cfg,
                         TrackLoss* loss_out) {
  batch.validate();
  const std::size_t n = batch.features.size();
  std::vector<ForwardCache> caches;
  caches.reserve(n);
  std::vector<Embedding> emb;
  emb.reserve(n);
  for (const auto& f : batch.features) {
    check_feature(params, f);
    caches.push_back(forward_cached(params, f));
    emb.push_back(caches.back().out);
  }
  const Matrix d = pairwise_distances(emb);

  std::vector<DistanceSlope> tri_slopes, pull_slopes;
  TrackLoss loss;
  loss.triplet = triplet_terms(d, batch.identities, cfg.margin, &tri_slopes);
  loss.pull = pull_terms(d, batch.identities, cfg.pull_margin, &pull_slopes);
  loss.weighted = joint_loss(0.0, 0.0, loss.triplet, loss.pull, cfg);
  if (loss_out != nullptr) *loss_out = loss;

  const auto& k = simd::active();
  const std::size_t e = params.w2.rows();
  const std::size_t h = params.w1.rows();

  // dL/d(embedding) for every batch element.
  Matrix grad_emb(n, e);
  auto scatter = [&](const std::vector<DistanceSlope>& slopes, double weight) {
    if (weight == 0.0) return;
    std::vector<double> diff(e);
    for (const auto& s : slopes) {
      for (std::size_t c = 0; c < e; ++c) diff[c] = emb[s.i][c] - emb[s.j][c];
      const double scale = 2.0 * weight * s.coef;
      k.axpy(scale, diff.data(), grad_emb.row(s.i).data(), e);
      k.axpy(-scale, diff.data(), grad_emb.row(s.j).data(), e);
    }
  };
  scatter(tri_slopes, cfg.lambda_tri);
  scatter(pull_slopes, cfg.lambda_pull);

  TrackHeadParams g = TrackHeadParams::zeros(params.dims());
  std::vector<double> grad_act(h);
  for (std::size_t s = 0; s < n; ++s) {
    const auto ge = grad_emb.row(s);
    if (std::all_of(ge.begin(), ge.end(), [](double v) { return v == 0.0; })) continue;
    const auto& c = caches[s];
    std::fill(grad_act.begin(), grad_act.end(), 0.0);
    for (std::size_t r = 0; r < e; ++r) {
      if (ge[r] == 0.0) continue;
      k.axpy(ge[r], c.act.data(), g.w2.row(r).data(), h);
      g.b2[r] += ge[r];
      k.axpy(ge[r], params.w2.row(r).data(), grad_act.data(), h);
    }
    const auto& f = batch.features[s];
    for (std::size_t r = 0; r < h; ++r) {
      if (!(c.pre[r] > 0.0)) continue;
      k.axpy(grad_act[r], f.data(), g.w1.row(r).data(), f.size());
      g.b1[r] += grad_act[r];
    }
  }
  return g;
}

TrackHeadParams finite_diff_gradient(const TrackHeadParams& params, const LabeledBatch& batch, const LossConfig& cfg,
                                     double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite-difference step must be positive");
  TrackHeadParams probe = params;
  TrackHeadParams g = TrackHeadParams::zeros(params.dims());
  auto probe_blocks = probe.blocks();
  auto grad_blocks = g.blocks();
  for (std::size_t b = 0; b < probe_blocks.size(); ++b) {
    for (std::size_t i = 0; i < probe_blocks[b].size(); ++i) {
      const double saved = probe_blocks[b][i];
      probe_blocks[b][i] = saved + eps;
      const double up = track_loss(probe, batch, cfg).weighted;
      probe_blocks[b][i] = saved - eps;
      const double down = track_loss(probe, batch, cfg).weighted;
      probe_blocks[b][i] = saved;
      grad_blocks[b][i] = (up - down) / (2.0 * eps);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Training

double lr_at(long step, long total_steps, double lr0) {
  if (total_steps <= 0) throw ConfigError("total_steps must be positive");
  if (step < 0 || step > total_steps) throw ConfigError("step outside [0, total_steps]");
  if (step == total_steps) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * frac));
}

TrainResult train(std::span<const LabeledBatch> dataset, const LossConfig& cfg, const TrainConfig& tcfg) {
  if (dataset.empty()) throw ConfigError("training dataset is empty");
  HeadDims dims = tcfg.dims;
  dims.input = dataset.front().features.front().size();
  return train(dataset, cfg, tcfg, init_params(dims, tcfg.seed));
}

TrainResult train(std::span<const LabeledBatch> dataset, const LossConfig& cfg, const TrainConfig& tcfg,
                  TrackHeadParams initial) {
  cfg.validate();
  tcfg.validate();
  if (dataset.empty()) throw ConfigError("training dataset is empty");
  for (const auto& b : dataset) b.validate();
  initial.validate();

  TrainResult result;
  result.params = std::move(initial);

  auto accumulate = [](EpochLoss& acc, const TrackLoss& l) {
    acc.triplet += l.triplet;
    acc.pull += l.pull;
    acc.weighted += l.weighted;
  };
  auto average = [](EpochLoss acc, std::size_t n) {
    const double inv = 1.0 / static_cast<double>(n);
    return EpochLoss{acc.triplet * inv, acc.pull * inv, acc.weighted * inv};
  };

  for (const auto& b : dataset) accumulate(result.initial, track_loss(result.params, b, cfg));
  result.initial = average(result.initial, dataset.size());

  const std::size_t per_step = static_cast<std::size_t>(tcfg.batch_size);
  const long steps_per_epoch = static_cast<long>((dataset.size() + per_step - 1) / per_step);
  const long total_steps = steps_per_epoch * tcfg.epochs;

  std::mt19937_64 rng(tcfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  long step = 0;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    if (tcfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    EpochLoss epoch_loss;
    for (std::size_t start = 0; start < order.size(); start += per_step, ++step) {
      const std::size_t stop = std::min(order.size(), start + per_step);
      TrackHeadParams step_grad = TrackHeadParams::zeros(result.params.dims());
      auto acc_blocks = step_grad.blocks();
      for (std::size_t k = start; k < stop; ++k) {
        TrackLoss loss;
        const TrackHeadParams g = gradient(result.params, dataset[order[k]], cfg, &loss);
        if (!std::isfinite(loss.weighted)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step) + ", batch " + std::to_string(order[k]));
        }
        accumulate(epoch_loss, loss);
        const auto gb = g.blocks();
        for (std::size_t b = 0; b < gb.size(); ++b) simd::axpy(1.0, gb[b], acc_blocks[b]);
      }
      const double lr = lr_at(step, total_steps, tcfg.lr0);
      const double scale = -lr / static_cast<double>(stop - start);
      auto param_blocks = result.params.blocks();
      for (std::size_t b = 0; b < param_blocks.size(); ++b) simd::axpy(scale, acc_blocks[b], param_blocks[b]);
    }
    result.trace.push_back(average(epoch_loss, dataset.size()));
    for (auto block : std::as_const(result.params).blocks()) {
      if (!all_finite(block)) {
        throw TrainingError("parameters diverged to non-finite values after epoch " + std::to_string(epoch));
      }
    }
  }
  return result;
}

}  // namespace tb
