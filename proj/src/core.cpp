#include "trackbranch/core.hpp"

#include <algorithm>
#include <cmath>

namespace tb {

ParseError::ParseError(std::size_t line, std::string field, const std::string& what)
    : Error("line " + std::to_string(line) + ", field '" + field + "': " + what),
      line_(line),
      field_(std::move(field)) {}

BoundingBox::BoundingBox(double x1, double y1, double x2, double y2)
    : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
  if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) || !std::isfinite(y2)) {
    throw ConfigError("bounding box has non-finite coordinates");
  }
  if (!(x1 < x2) || !(y1 < y2)) {
    throw ConfigError("bounding box must satisfy x1 < x2 and y1 < y2");
  }
}

BoundingBox BoundingBox::translated(double dx, double dy) const {
  return {x1_ + dx, y1_ + dy, x2_ + dx, y2_ + dy};
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  if (a == b) return 1.0;
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

}  // namespace tb
