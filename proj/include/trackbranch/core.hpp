#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tb {

// Error hierarchy shared by every module.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or mismatched dimensions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input whose label structure makes a statistic undefined (no positives, no
// ground truth, ...).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::string field, const std::string& what);

  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Axis-aligned rectangle in pixel coordinates, corner form.
/// Construction rejects non-finite coordinates and zero or negative extent.
class BoundingBox {
 public:
  BoundingBox(double x1, double y1, double x2, double y2);

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }
  double width() const { return x2_ - x1_; }
  double height() const { return y2_ - y1_; }
  double area() const { return width() * height(); }

  BoundingBox translated(double dx, double dy) const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

 private:
  double x1_, y1_, x2_, y2_;
};

/// Intersection over union; 0 for disjoint boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

struct DetectionRecord {
  BoundingBox box;
  double confidence = 1.0;
  std::vector<double> feature;
  std::optional<std::int64_t> gt_identity;
  // 0 for the first image of a concatenated pair, 1 for the second.
  int image_slot = 0;

  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

struct GroundTruthBox {
  BoundingBox box;
  std::int64_t identity = 0;
  int image_slot = 0;

  friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

struct FrameRecord {
  std::int64_t frame_index = 0;
  int camera_id = 0;
  std::vector<DetectionRecord> detections;
  std::vector<GroundTruthBox> gt_boxes;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

}  // namespace tb
