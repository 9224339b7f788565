#pragma once

// The track branch: a two-layer fully connected head mapping a detector ROI
// feature vector to a metric embedding, plus the batch-hard triplet and pull
// losses used to train it.

#include <cstdint>
#include <span>
#include <vector>

#include "trackbranch/matrix.hpp"

namespace tb {

struct HeadDims {
  std::size_t input = 0;      // F
  std::size_t hidden = 64;    // H
  std::size_t embedding = 32; // E

  friend bool operator==(const HeadDims&, const HeadDims&) = default;
};

/// embedding = w2 * relu(w1 * feature + b1) + b2
struct TrackHeadParams {
  Matrix w1;  // hidden x input
  std::vector<double> b1;
  Matrix w2;  // embedding x hidden
  std::vector<double> b2;

  static TrackHeadParams zeros(const HeadDims& dims);

  HeadDims dims() const { return {w1.cols(), w1.rows(), w2.rows()}; }
  std::size_t parameter_count() const;

  // Throws ConfigError when shapes disagree or an entry is non-finite.
  void validate() const;

  // The four parameter arrays in a fixed order: w1, b1, w2, b2.
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;

  friend bool operator==(const TrackHeadParams&, const TrackHeadParams&) = default;
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
TrackHeadParams init_params(const HeadDims& dims, std::uint64_t seed);

struct LossConfig {
  double margin = 5.0;       // triplet margin m
  double pull_margin = 1.0;  // m_pull
  double lambda_cls = 1.0;
  double lambda_reg = 1.0;
  double lambda_tri = 0.2;
  double lambda_pull = 0.2;
  double score_threshold = 0.5;  // p

  void validate() const;

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

struct TrainConfig {
  double lr0 = 1e-3;
  int epochs = 40;
  // Images (labeled batches) averaged per gradient step.
  int batch_size = 2;
  bool shuffle = true;
  std::uint64_t seed = 0;
  HeadDims dims{};

  void validate() const;
};

/// Features of the assigned detections of one (concatenated) image with their
/// identities.
struct LabeledBatch {
  std::vector<std::vector<double>> features;
  std::vector<std::int64_t> identities;

  void validate() const;
};

Embedding forward(const TrackHeadParams& params, std::span<const double> feature);
std::vector<Embedding> embed_all(const TrackHeadParams& params,
                                 std::span<const std::vector<double>> features);

/// Squared Euclidean distance between every pair of embeddings.
Matrix pairwise_distances(std::span<const Embedding> embeddings);

/// Batch-hard triplet loss averaged over anchors that have both a positive
/// and a negative partner; 0 when no anchor qualifies.
double triplet_loss(const Matrix& distances, std::span<const std::int64_t> identities, double margin);

/// |max intra-identity distance - pull_margin| averaged over identities with
/// at least two members; 0 when none.
double pull_loss(const Matrix& distances, std::span<const std::int64_t> identities, double pull_margin);

double joint_loss(double l_cls, double l_reg, double l_tri, double l_pull, const LossConfig& cfg);

struct TrackLoss {
  double triplet = 0.0;
  double pull = 0.0;
  double weighted = 0.0;  // lambda_tri * triplet + lambda_pull * pull
};

TrackLoss track_loss(const TrackHeadParams& params, const LabeledBatch& batch, const LossConfig& cfg);

/// Exact gradient of lambda_tri * L_tri + lambda_pull * L_pull with respect
/// to every parameter. Ties in the hardest-pair selection resolve to the
/// lowest index; hinge and absolute value use a zero subgradient at the kink.
TrackHeadParams gradient(const TrackHeadParams& params, const LabeledBatch& batch, const LossConfig& cfg,
                         TrackLoss* loss_out = nullptr);

/// Central-difference estimate of the same gradient.
TrackHeadParams finite_diff_gradient(const TrackHeadParams& params, const LabeledBatch& batch,
                                     const LossConfig& cfg, double eps);

/// Cosine learning-rate schedule: 0.5 * lr0 * (1 + cos(pi * step / total)).
double lr_at(long step, long total_steps, double lr0);

struct EpochLoss {
  double triplet = 0.0;
  double pull = 0.0;
  double weighted = 0.0;
};

struct TrainResult {
  TrackHeadParams params;
  EpochLoss initial;            // dataset mean before the first update
  std::vector<EpochLoss> trace; // per epoch, mean over the batches seen
};

TrainResult train(std::span<const LabeledBatch> dataset, const LossConfig& cfg, const TrainConfig& tcfg);
TrainResult train(std::span<const LabeledBatch> dataset, const LossConfig& cfg, const TrainConfig& tcfg,
                  TrackHeadParams initial);

}  // namespace tb
