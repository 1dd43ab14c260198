#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "vrd/error.hpp"

namespace vrd {

/// Axis-aligned box in continuous pixel coordinates. Width is x_max - x_min;
/// zero-area boxes are legal, negative extents are not.
class BoundingBox {
 public:
  constexpr BoundingBox() = default;

  BoundingBox(double x_min, double y_min, double x_max, double y_max)
      : x_min_(x_min), y_min_(y_min), x_max_(x_max), y_max_(y_max) {
    if (!std::isfinite(x_min) || !std::isfinite(y_min) ||
        !std::isfinite(x_max) || !std::isfinite(y_max)) {
      throw InvalidArgument("bounding box has non-finite coordinate");
    }
    if (x_max < x_min || y_max < y_min) {
      throw InvalidArgument("bounding box has negative extent");
    }
  }

  double x_min() const noexcept { return x_min_; }
  double y_min() const noexcept { return y_min_; }
  double x_max() const noexcept { return x_max_; }
  double y_max() const noexcept { return y_max_; }

  double width() const noexcept { return x_max_ - x_min_; }
  double height() const noexcept { return y_max_ - y_min_; }
  double area() const noexcept { return width() * height(); }
  double center_x() const noexcept { return 0.5 * (x_min_ + x_max_); }
  double center_y() const noexcept { return 0.5 * (y_min_ + y_max_); }

  BoundingBox scaled(double c) const {
    return {x_min_ * c, y_min_ * c, x_max_ * c, y_max_ * c};
  }

  std::array<double, 4> coords() const noexcept {
    return {x_min_, y_min_, x_max_, y_max_};
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

  friend std::ostream& operator<<(std::ostream& os, const BoundingBox& b) {
    return os << '(' << b.x_min_ << ',' << b.y_min_ << ',' << b.x_max_ << ','
              << b.y_max_ << ')';
  }

 private:
  double x_min_ = 0.0;
  double y_min_ = 0.0;
  double x_max_ = 0.0;
  double y_max_ = 0.0;
};

class ImageDims {
 public:
  ImageDims(double width, double height) : width_(width), height_(height) {
    if (!(std::isfinite(width) && std::isfinite(height) && width > 0.0 &&
          height > 0.0)) {
      throw InvalidArgument("image dimensions must be finite and positive");
    }
  }

  double width() const noexcept { return width_; }
  double height() const noexcept { return height_; }
  double area() const noexcept { return width_ * height_; }

  ImageDims scaled(double c) const { return {width_ * c, height_ * c}; }

  friend bool operator==(const ImageDims&, const ImageDims&) = default;

 private:
  double width_;
  double height_;
};

inline double intersection_area(const BoundingBox& a, const BoundingBox& b) noexcept {
  const double w = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
  const double h = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

/// Intersection over union; 0 when the union has no area.
inline double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

inline BoundingBox union_box(const BoundingBox& a, const BoundingBox& b) {
  return {std::min(a.x_min(), b.x_min()), std::min(a.y_min(), b.y_min()),
          std::max(a.x_max(), b.x_max()), std::max(a.y_max(), b.y_max())};
}

/// Non-strict: every box contains itself.
inline bool contains(const BoundingBox& outer, const BoundingBox& inner) noexcept {
  return outer.x_min() <= inner.x_min() && outer.y_min() <= inner.y_min() &&
         outer.x_max() >= inner.x_max() && outer.y_max() >= inner.y_max();
}

// Relative geometry of a subject/object pair:
//   [iou, dx, dy, area_subj/area_img, area_obj/area_img, cflag_subj, cflag_obj]
// dx/dy are the object center minus the subject center, divided by the image
// width/height. cflag_subj is 1 when the subject box contains the object box.
struct SpatialVector {
  static constexpr std::size_t kSize = 7;

  double iou = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  double s_subj = 0.0;
  double s_obj = 0.0;
  double cflag_subj = 0.0;
  double cflag_obj = 0.0;

  std::array<double, kSize> to_array() const noexcept {
    return {iou, dx, dy, s_subj, s_obj, cflag_subj, cflag_obj};
  }

  friend bool operator==(const SpatialVector&, const SpatialVector&) = default;
};

inline SpatialVector spatial_vector(const BoundingBox& subj, const BoundingBox& obj,
                                    const ImageDims& img) noexcept {
  SpatialVector v;
  v.iou = iou(subj, obj);
  v.dx = (obj.center_x() - subj.center_x()) / img.width();
  v.dy = (obj.center_y() - subj.center_y()) / img.height();
  v.s_subj = subj.area() / img.area();
  v.s_obj = obj.area() / img.area();
  v.cflag_subj = contains(subj, obj) ? 1.0 : 0.0;
  v.cflag_obj = contains(obj, subj) ? 1.0 : 0.0;
  return v;
}

// Baseline encoding: each box's normalized location and size, subject first.
//   [x_min/W, y_min/H, x_max/W, y_max/H, area/(W*H)] x {subject, object}
struct SfVector {
  static constexpr std::size_t kSize = 10;
  std::array<double, kSize> values{};

  friend bool operator==(const SfVector&, const SfVector&) = default;
};

inline SfVector sf_vector(const BoundingBox& subj, const BoundingBox& obj,
                          const ImageDims& img) noexcept {
  SfVector v;
  auto fill = [&](const BoundingBox& b, std::size_t offset) {
    v.values[offset + 0] = b.x_min() / img.width();
    v.values[offset + 1] = b.y_min() / img.height();
    v.values[offset + 2] = b.x_max() / img.width();
    v.values[offset + 3] = b.y_max() / img.height();
    v.values[offset + 4] = b.area() / img.area();
  };
  fill(subj, 0);
  fill(obj, 5);
  return v;
}

/// Which spatial encoding feeds the "S" inputs of a model.
enum class SpatialEncoding { proposed, sf };

inline std::size_t spatial_width(SpatialEncoding enc) noexcept {
  return enc == SpatialEncoding::proposed ? SpatialVector::kSize : SfVector::kSize;
}

inline std::vector<double> encode_spatial(SpatialEncoding enc, const BoundingBox& subj,
                                          const BoundingBox& obj, const ImageDims& img) {
  if (enc == SpatialEncoding::proposed) {
    const auto a = spatial_vector(subj, obj, img).to_array();
    return {a.begin(), a.end()};
  }
  const auto a = sf_vector(subj, obj, img).values;
  return {a.begin(), a.end()};
}

inline std::string_view to_string(SpatialEncoding enc) noexcept {
  return enc == SpatialEncoding::proposed ? "proposed" : "sf";
}

inline SpatialEncoding parse_spatial_encoding(std::string_view s) {
  if (s == "proposed") return SpatialEncoding::proposed;
  if (s == "sf") return SpatialEncoding::sf;
  throw InvalidArgument("unknown spatial encoding '" + std::string(s) +
                        "' (expected proposed|sf)");
}

}  // namespace vrd
