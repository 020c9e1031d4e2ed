#include "idspace/raster.hpp"

#include <cmath>

namespace idspace::raster {

namespace {

Point rotate(Point p, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

struct Contains {
  Point p;

  bool operator()(const Ellipse& e) const {
    const Point q = rotate({p.x - e.center.x, p.y - e.center.y}, -e.angle);
    return (q.x * q.x) / (e.rx * e.rx) + (q.y * q.y) / (e.ry * e.ry) <= 1.0;
  }
  bool operator()(const Capsule& c) const {
    const double dx = c.b.x - c.a.x;
    const double dy = c.b.y - c.a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((p.x - c.a.x) * dx + (p.y - c.a.y) * dy) / len2 : 0.0;
    t = std::fmin(1.0, std::fmax(0.0, t));
    const double ex = p.x - (c.a.x + t * dx);
    const double ey = p.y - (c.a.y + t * dy);
    return ex * ex + ey * ey <= c.radius * c.radius;
  }
  bool operator()(const Box& b) const {
    const Point q = rotate({p.x - b.center.x, p.y - b.center.y}, -b.angle);
    return std::fabs(q.x) <= 0.5 * b.width && std::fabs(q.y) <= 0.5 * b.height;
  }
  bool operator()(const Ring& r) const {
    const double d2 = (p.x - r.center.x) * (p.x - r.center.x) + (p.y - r.center.y) * (p.y - r.center.y);
    return d2 <= r.outer * r.outer && d2 >= r.inner * r.inner;
  }
  bool operator()(const Triangle& t) const {
    const double d1 = cross(t.a, t.b, p);
    const double d2 = cross(t.b, t.c, p);
    const double d3 = cross(t.c, t.a, p);
    const bool neg = d1 < 0 || d2 < 0 || d3 < 0;
    const bool pos = d1 > 0 || d2 > 0 || d3 > 0;
    return !(neg && pos);
  }
};

}  // namespace

bool contains(const Primitive& primitive, Point p) { return std::visit(Contains{p}, primitive); }

bool Shape::contains(Point p) const {
  for (const auto& part : parts_) {
    if (raster::contains(part, p)) return true;
  }
  return false;
}

Point Placement::apply(Point p) const {
  const Point r = rotate({p.x * scale, p.y * scale}, angle);
  return {origin.x + r.x, origin.y + r.y};
}

Point Placement::invert(Point p) const {
  const Point r = rotate({p.x - origin.x, p.y - origin.y}, -angle);
  return {r.x / scale, r.y / scale};
}

std::vector<float> rasterize(const Shape& shape, const Placement& placement, std::size_t height, std::size_t width) {
  std::vector<float> mask(height * width, 0.0f);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const Point canonical = placement.invert({static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5});
      if (shape.contains(canonical)) mask[y * width + x] = 1.0f;
    }
  }
  return mask;
}

}  // namespace idspace::raster
