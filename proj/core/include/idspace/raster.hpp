#pragma once

#include <variant>
#include <vector>

namespace idspace::raster {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Ellipse {
  Point center;
  double rx = 1.0;
  double ry = 1.0;
  double angle = 0.0;
};

/// Segment with a round cap of radius `radius` (fingers, pens).
struct Capsule {
  Point a;
  Point b;
  double radius = 1.0;
};

struct Box {
  Point center;
  double width = 1.0;
  double height = 1.0;
  double angle = 0.0;
};

struct Ring {
  Point center;
  double outer = 2.0;
  double inner = 1.0;
};

struct Triangle {
  Point a;
  Point b;
  Point c;
};

using Primitive = std::variant<Ellipse, Capsule, Box, Ring, Triangle>;

bool contains(const Primitive& primitive, Point p);

/// Union of primitives.
class Shape {
 public:
  Shape& add(Primitive primitive) {
    parts_.push_back(std::move(primitive));
    return *this;
  }
  bool contains(Point p) const;
  bool empty() const { return parts_.empty(); }
  const std::vector<Primitive>& parts() const { return parts_; }

 private:
  std::vector<Primitive> parts_;
};

/// Similarity transform canonical -> canvas: p' = origin + R(angle) * (scale * p).
struct Placement {
  Point origin;
  double scale = 1.0;
  double angle = 0.0;

  Point apply(Point p) const;
  Point invert(Point p) const;
};

/// Binary mask of `shape` sampled at pixel centers of a height x width canvas.
std::vector<float> rasterize(const Shape& shape, const Placement& placement, std::size_t height, std::size_t width);

}  // namespace idspace::raster
