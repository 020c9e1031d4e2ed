#include "idspace/interaction_data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "idspace/errors.hpp"
#include "idspace/random.hpp"
#include "idspace/raster.hpp"

namespace idspace {

namespace {

using raster::Box;
using raster::Capsule;
using raster::Ellipse;
using raster::Point;
using raster::Ring;
using raster::Shape;
using raster::Triangle;

constexpr double kDeg = std::numbers::pi / 180.0;

struct CanonicalBox {
  const char* name;
  double x0, y0, x1, y1;
};

struct PrototypeGeometry {
  Shape object;
  Shape hand;
  std::vector<CanonicalBox> regions;
};

Capsule finger(double ax, double ay, double bx, double by, double r = 1.8) { return Capsule{{ax, ay}, {bx, by}, r}; }

// Canonical frame: origin at the canvas center, x right, y down, pixels of a
// 64 x 64 canvas. `v` draws mild per-sample shape variation.
PrototypeGeometry prototype_geometry(int id, Rng& v) {
  PrototypeGeometry g;
  switch (id) {
    case 0:    // cup gripped by the handle
    case 1: {  // cup supported from the bottom
      const double h = 24.0 * v.uniform(0.92, 1.08);
      const double top = 12.0 - h;
      g.object.add(Box{{-6.0, 0.5 * (top + 12.0)}, 20.0 * v.uniform(0.92, 1.08), h, 0.0});
      g.object.add(Ring{{6.5, 0.0}, 7.0, 4.0});
      g.regions = {{"handle", 4.0, -7.5, 14.0, 7.5}, {"bottom", -16.0, 6.0, 4.0, 14.0}};
      if (id == 0) {
        g.hand.add(Ellipse{{18.0, 1.0}, 5.0, 8.0, 0.0});
        g.hand.add(finger(18.0, -3.0, 6.0, -2.0, 1.7));
        g.hand.add(finger(18.0, 1.0, 6.0, 1.5, 1.7));
        g.hand.add(finger(18.0, 5.0, 8.0, 5.5, 1.7));
        g.hand.add(finger(16.0, -7.0, 7.0, -8.5, 2.0));
      } else {
        g.hand.add(Ellipse{{-6.0, 17.0}, 11.0, 4.5, 0.0});
        g.hand.add(finger(-16.5, 15.0, -17.5, 4.0));
        g.hand.add(finger(-13.0, 16.0, -17.0, 8.0));
        g.hand.add(finger(3.0, 16.0, 4.5, 7.0, 2.0));
      }
      break;
    }
    case 2:    // cutter held in a power grasp
    case 3: {  // cutter pressed with the index finger
      const double tip = 27.0 * v.uniform(0.92, 1.05);
      g.object.add(Box{{-10.0, 0.0}, 26.0, 7.0 * v.uniform(0.9, 1.1), 0.0});
      g.object.add(Triangle{{3.0, -2.5}, {tip, -0.5}, {3.0, 1.5}});
      g.regions = {{"grip", -23.0, -3.5, 3.0, 3.5}, {"blade", 3.0, -2.5, tip, 1.5}};
      if (id == 2) {
        g.hand.add(Ellipse{{-10.0, -6.5}, 9.0, 4.0, 0.0});
        for (double x : {-17.0, -13.0, -9.0, -5.0}) g.hand.add(finger(x, -4.0, x, 5.5));
        g.hand.add(finger(-2.0, -5.0, 3.0, -4.0));
      } else {
        g.hand.add(Ellipse{{-16.0, -8.0}, 8.0, 4.5, 0.0});
        g.hand.add(finger(-10.0, -5.0, 2.0, -4.0, 1.7));
        for (double x : {-20.0, -16.0, -12.0}) g.hand.add(finger(x, -4.0, x, 5.5));
        g.hand.add(finger(-22.0, -6.0, -24.0, 2.0, 2.0));
      }
      break;
    }
    case 4: {  // scissors, thumb and fingers through the rings
      const double tip = 28.0 * v.uniform(0.92, 1.04);
      g.object.add(Ring{{-13.0, -5.0}, 5.5, 3.0});
      g.object.add(Ring{{-13.0, 6.0}, 6.0, 3.3});
      g.object.add(Box{{-4.0, -2.5}, 9.0, 2.5, 0.2});
      g.object.add(Box{{-4.0, 3.0}, 9.0, 2.5, -0.25});
      g.object.add(Ellipse{{1.0, 0.0}, 2.2, 2.2, 0.0});
      g.object.add(Triangle{{1.0, -2.5}, {tip, -4.5}, {1.0, 0.5}});
      g.object.add(Triangle{{1.0, -0.5}, {tip, 4.5}, {1.0, 2.5}});
      g.regions = {{"grip", -19.5, -11.0, -6.5, 12.5}, {"blade", 3.0, -4.5, tip, 4.5}};
      g.hand.add(Ellipse{{-25.0, 2.0}, 4.5, 8.0, 0.0});
      g.hand.add(finger(-24.0, -8.0, -13.0, -5.0, 2.2));
      g.hand.add(finger(-25.0, 4.0, -12.0, 6.0, 1.9));
      g.hand.add(finger(-25.0, 8.0, -13.0, 9.5, 1.9));
      break;
    }
    case 5: {  // pen, precision pinch near the lower end
      g.object.add(Capsule{{-22.0, 12.0}, {22.0 * v.uniform(0.9, 1.05), -12.0}, 2.0});
      g.hand.add(Ellipse{{-19.0, 10.0}, 5.0, 5.5, 0.0});
      g.hand.add(finger(-14.0, 14.0, -7.5, 7.5, 2.0));
      g.hand.add(finger(-17.0, -2.0, -10.0, 2.5));
      g.regions = {{"grip", -14.0, -1.0, -4.0, 10.0}};
      break;
    }
    case 6: {  // small disc pinched from the side
      const double r = 6.0 * v.uniform(0.9, 1.1);
      g.object.add(Ellipse{{4.0, 0.0}, r, r, 0.0});
      g.hand.add(Ellipse{{-15.0, 0.0}, 5.0, 7.0, 0.0});
      g.hand.add(finger(-10.0, 7.0, -1.0, 4.0, 2.0));
      g.hand.add(finger(-10.0, -7.0, -1.0, -4.0));
      g.regions = {{"grip", -2.0, -6.0, 10.0, 6.0}};
      break;
    }
    case 7: {  // large ball cradled from below
      const double r = 13.0 * v.uniform(0.92, 1.05);
      g.object.add(Ellipse{{2.0, -4.0}, r, r, 0.0});
      g.hand.add(Ellipse{{2.0, 14.0}, 11.0, 4.5, 0.0});
      g.hand.add(finger(-9.0, 13.0, -13.0, 1.0, 2.0));
      g.hand.add(finger(-5.0, 15.0, -11.0, 6.0, 1.8));
      g.hand.add(finger(13.0, 13.0, 16.0, 1.0, 2.0));
      g.regions = {{"grip", -12.0, 4.0, 16.0, 10.0}};
      break;
    }
    case 8: {  // bottle wrapped at mid height
      g.object.add(Box{{0.0, 4.0}, 14.0 * v.uniform(0.9, 1.1), 34.0, 0.0});
      g.object.add(Box{{0.0, -17.0}, 6.0, 8.0, 0.0});
      g.object.add(Box{{0.0, -22.0}, 7.0, 3.0, 0.0});
      g.hand.add(Ellipse{{13.0, 4.0}, 4.5, 8.0, 0.0});
      for (double y : {-1.0, 3.0, 7.0}) g.hand.add(finger(13.0, y, -6.0, y + 0.5));
      g.hand.add(finger(12.0, -6.0, 4.0, -8.0, 2.0));
      g.regions = {{"grip", -7.0, -5.0, 7.0, 12.0}};
      break;
    }
    case 9: {  // hammer held at the lower handle
      g.object.add(Box{{0.0, 8.0}, 5.0, 30.0, 0.0});
      g.object.add(Box{{0.0, -11.0}, 26.0 * v.uniform(0.9, 1.1), 9.0, 0.0});
      g.hand.add(Ellipse{{-8.0, 15.0}, 4.5, 7.0, 0.0});
      for (double y : {10.0, 14.0, 18.0}) g.hand.add(finger(-8.0, y, 3.0, y + 0.3));
      g.hand.add(finger(-6.0, 7.0, 2.0, 6.0, 2.0));
      g.regions = {{"grip", -3.0, 7.0, 3.0, 23.0}, {"head", -13.0, -15.5, 13.0, -6.5}};
      break;
    }
    case 10: {  // flat card pinched at its left edge
      g.object.add(Box{{5.0, 0.0}, 28.0, 18.0 * v.uniform(0.9, 1.1), 0.2});
      g.hand.add(Ellipse{{-20.0, 0.0}, 4.5, 7.0, 0.0});
      g.hand.add(finger(-16.0, 6.0, -8.0, 2.0, 2.0));
      g.hand.add(finger(-16.0, -6.0, -8.0, -2.0));
      g.regions = {{"grip", -11.0, -4.0, -5.0, 4.0}};
      break;
    }
    case 11: {  // knob turned from above
      const double r = 7.0 * v.uniform(0.9, 1.1);
      g.object.add(Ellipse{{0.0, 4.0}, r, r, 0.0});
      g.object.add(Box{{0.0, 16.0}, 26.0, 6.0, 0.0});
      g.hand.add(Ellipse{{0.0, -12.0}, 9.0, 4.5, 0.0});
      for (double x : {-5.0, 0.0, 5.0}) g.hand.add(finger(x, -9.0, x, 0.5));
      g.hand.add(finger(-9.0, -8.0, -8.0, 3.0, 2.0));
      g.regions = {{"grip", -7.0, -3.0, 7.0, 11.0}};
      break;
    }
    default:
      throw ConfigError("prototype id " + std::to_string(id) + " outside 0.." + std::to_string(kPrototypeCount - 1));
  }
  return g;
}

/// Bilinear value noise in [-1, 1] with lattice spacing `cell`.
class ValueNoise {
 public:
  ValueNoise(Rng& rng, std::size_t height, std::size_t width, double cell)
      : cols_(static_cast<std::size_t>(std::ceil(static_cast<double>(width) / cell)) + 2),
        rows_(static_cast<std::size_t>(std::ceil(static_cast<double>(height) / cell)) + 2),
        cell_(cell),
        lattice_(rows_ * cols_) {
    for (double& v : lattice_) v = rng.uniform(-1.0, 1.0);
  }

  double operator()(double x, double y) const {
    const double gx = x / cell_;
    const double gy = y / cell_;
    const auto ix = static_cast<std::size_t>(gx);
    const auto iy = static_cast<std::size_t>(gy);
    const double fx = gx - static_cast<double>(ix);
    const double fy = gy - static_cast<double>(iy);
    auto at = [this](std::size_t r, std::size_t c) { return lattice_[r * cols_ + c]; };
    const double top = at(iy, ix) * (1 - fx) + at(iy, ix + 1) * fx;
    const double bottom = at(iy + 1, ix) * (1 - fx) + at(iy + 1, ix + 1) * fx;
    return top * (1 - fy) + bottom * fy;
  }

 private:
  std::size_t cols_;
  std::size_t rows_;
  double cell_;
  std::vector<double> lattice_;
};

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

std::vector<float> background_texture(Rng& rng, std::size_t height, std::size_t width) {
  const double base = rng.uniform(0.04, 0.14);
  ValueNoise coarse(rng, height, width, 8.0);
  std::vector<float> out(height * width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      out[y * width + x] = clamp01(base + 0.04 * coarse(x, y) + 0.02 * rng.uniform(-1.0, 1.0));
    }
  }
  return out;
}

}  // namespace

std::string_view prototype_name(int prototype) {
  static constexpr std::array<std::string_view, kPrototypeCount> kNames = {
      "cup-handle", "cup-bottom", "cutter-grip", "cutter-press", "scissors",  "pen-pinch",
      "disc-pinch", "ball-cradle", "bottle-wrap", "hammer-grip", "card-pinch", "knob-turn"};
  if (prototype < 0 || prototype >= kPrototypeCount) throw ConfigError("unknown prototype id");
  return kNames[static_cast<std::size_t>(prototype)];
}

const RegionBox* Scene::region(std::string_view name) const {
  for (const auto& r : regions) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

Scene generate_scene(int prototype, std::uint64_t seed, const SceneOptions& options) {
  if (prototype < 0 || prototype >= kPrototypeCount) {
    throw ConfigError("prototype id " + std::to_string(prototype) + " outside 0.." +
                      std::to_string(kPrototypeCount - 1));
  }
  if (options.height < kImageSide || options.width < kImageSide) {
    throw ConfigError("scene must be at least 32x32");
  }
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(prototype)));
  Rng shape_rng(rng.next());
  const PrototypeGeometry geometry = prototype_geometry(prototype, shape_rng);

  Scene scene;
  scene.height = options.height;
  scene.width = options.width;
  scene.prototype = prototype;
  scene.seed = seed;
  if (options.jitter) {
    scene.scale = rng.uniform(0.85, 1.15);
    scene.rotation = rng.uniform(-10.0, 10.0) * kDeg;
    scene.tx = rng.uniform(-2.0, 2.0);
    scene.ty = rng.uniform(-2.0, 2.0);
  }
  const raster::Placement placement{{0.5 * static_cast<double>(options.width) + scene.tx,
                                     0.5 * static_cast<double>(options.height) + scene.ty},
                                    scene.scale, scene.rotation};

  const std::size_t h = options.height;
  const std::size_t w = options.width;
  scene.object_silhouette = raster::rasterize(geometry.object, placement, h, w);
  scene.hand_mask = raster::rasterize(geometry.hand, placement, h, w);
  scene.object_mask.resize(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    scene.object_mask[i] = scene.object_silhouette[i] > 0.5f && scene.hand_mask[i] < 0.5f ? 1.0f : 0.0f;
  }

  const std::vector<float> background = background_texture(rng, h, w);
  const double object_tone = rng.uniform(0.55, 0.9);
  const double hand_tone = rng.uniform(0.3, 0.4);
  ValueNoise object_noise(rng, h, w, 6.0);
  scene.appearance.resize(h * w);
  scene.object_appearance.resize(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      float value = background[i];
      if (scene.object_silhouette[i] > 0.5f) {
        value = clamp01(object_tone + 0.08 * object_noise(x, y) + 0.03 * rng.uniform(-1.0, 1.0));
      }
      scene.object_appearance[i] = value;
      scene.appearance[i] =
          scene.hand_mask[i] > 0.5f ? clamp01(hand_tone + 0.02 * rng.uniform(-1.0, 1.0)) : value;
    }
  }

  for (const CanonicalBox& box : geometry.regions) {
    RegionBox out{box.name, 1e9, 1e9, -1e9, -1e9};
    for (Point corner : {Point{box.x0, box.y0}, Point{box.x1, box.y0}, Point{box.x0, box.y1}, Point{box.x1, box.y1}}) {
      const Point p = placement.apply(corner);
      out.x0 = std::min(out.x0, p.x);
      out.y0 = std::min(out.y0, p.y);
      out.x1 = std::max(out.x1, p.x);
      out.y1 = std::max(out.y1, p.y);
    }
    scene.regions.push_back(out);
  }
  return scene;
}

Scene background_scene(std::uint64_t seed, const SceneOptions& options) {
  if (options.height < kImageSide || options.width < kImageSide) throw ConfigError("scene must be at least 32x32");
  Rng rng(mix_seed(seed, 0xB6000000ULL));
  Scene scene;
  scene.height = options.height;
  scene.width = options.width;
  scene.prototype = -1;
  scene.seed = seed;
  scene.appearance = background_texture(rng, scene.height, scene.width);
  scene.object_appearance = scene.appearance;
  scene.hand_mask.assign(scene.height * scene.width, 0.0f);
  scene.object_mask = scene.hand_mask;
  scene.object_silhouette = scene.hand_mask;
  return scene;
}

InteractionImage crop_scene(const Scene& scene, std::size_t x0, std::size_t y0, bool object_only) {
  if (x0 + kImageSide > scene.width || y0 + kImageSide > scene.height) {
    throw ConfigError("crop window outside the scene");
  }
  InteractionImage image;
  image.label = scene.prototype;
  image.pose = {static_cast<float>(scene.rotation), static_cast<float>(x0), static_cast<float>(y0)};
  const auto& appearance = object_only ? scene.object_appearance : scene.appearance;
  const auto& object = object_only ? scene.object_silhouette : scene.object_mask;
  for (std::size_t y = 0; y < kImageSide; ++y) {
    for (std::size_t x = 0; x < kImageSide; ++x) {
      const std::size_t src = (y0 + y) * scene.width + (x0 + x);
      image.at(Channel::Appearance, y, x) = appearance[src];
      image.at(Channel::HandMask, y, x) = object_only ? 0.0f : scene.hand_mask[src];
      image.at(Channel::ObjectMask, y, x) = object[src];
    }
  }
  return image;
}

double hand_fraction(const InteractionImage& image) {
  double total = 0.0;
  for (float v : image.channel(Channel::HandMask)) total += v;
  return total / static_cast<double>(kChannelPixels);
}

std::array<double, 2> hand_centroid(const Scene& scene) {
  double sx = 0.0;
  double sy = 0.0;
  double n = 0.0;
  for (std::size_t y = 0; y < scene.height; ++y) {
    for (std::size_t x = 0; x < scene.width; ++x) {
      const double m = scene.hand_mask[y * scene.width + x];
      sx += m * (static_cast<double>(x) + 0.5);
      sy += m * (static_cast<double>(y) + 0.5);
      n += m;
    }
  }
  if (n <= 0.0) return {0.5 * static_cast<double>(scene.width), 0.5 * static_cast<double>(scene.height)};
  return {sx / n, sy / n};
}

namespace {

// Origin range [lo, hi] of crops whose center is within max_offset of c.
std::pair<std::size_t, std::size_t> origin_range(double c, std::size_t max_offset, std::size_t extent) {
  const long last = static_cast<long>(extent - kImageSide);
  const long center = std::lround(c - 0.5 * static_cast<double>(kImageSide));
  const long lo = std::clamp(center - static_cast<long>(max_offset), 0L, last);
  const long hi = std::clamp(center + static_cast<long>(max_offset), 0L, last);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

InteractionImage canonical_crop(const Scene& scene) {
  if (scene.height < kImageSide || scene.width < kImageSide) throw ConfigError("scene smaller than 32x32");
  const auto [cx, cy] = hand_centroid(scene);
  return crop_scene(scene, origin_range(cx, 0, scene.width).first, origin_range(cy, 0, scene.height).first);
}

std::vector<InteractionImage> extract_subimages(const Scene& scene, std::size_t count, double min_hand_fraction,
                                                std::uint64_t seed, std::size_t max_offset) {
  if (scene.height < kImageSide || scene.width < kImageSide) throw ConfigError("scene smaller than 32x32");
  if (min_hand_fraction < 0.0 || min_hand_fraction >= 1.0) {
    throw ConfigError("min_hand_fraction must lie in [0, 1)");
  }
  // Prefix sums of the hand mask make each candidate O(1).
  const std::size_t w = scene.width;
  std::vector<double> integral((scene.height + 1) * (w + 1), 0.0);
  for (std::size_t y = 0; y < scene.height; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      integral[(y + 1) * (w + 1) + x + 1] = scene.hand_mask[y * w + x] + integral[y * (w + 1) + x + 1] +
                                            integral[(y + 1) * (w + 1) + x] - integral[y * (w + 1) + x];
    }
  }
  auto hand_pixels = [&](std::size_t x0, std::size_t y0) {
    const std::size_t x1 = x0 + kImageSide;
    const std::size_t y1 = y0 + kImageSide;
    return integral[y1 * (w + 1) + x1] - integral[y0 * (w + 1) + x1] - integral[y1 * (w + 1) + x0] +
           integral[y0 * (w + 1) + x0];
  };

  Rng rng(mix_seed(seed, 0xC40Bu));
  const auto [cx, cy] = hand_centroid(scene);
  const auto [x_lo, x_hi] = origin_range(cx, max_offset, scene.width);
  const auto [y_lo, y_hi] = origin_range(cy, max_offset, scene.height);
  const double needed = min_hand_fraction * static_cast<double>(kChannelPixels);
  std::vector<InteractionImage> crops;
  crops.reserve(count);
  std::size_t rejections = 0;
  while (crops.size() < count) {
    const std::size_t x0 = x_lo + rng.index(x_hi - x_lo + 1);
    const std::size_t y0 = y_lo + rng.index(y_hi - y_lo + 1);
    if (hand_pixels(x0, y0) + 1e-9 >= needed) {
      crops.push_back(crop_scene(scene, x0, y0));
      rejections = 0;
    } else if (++rejections >= 10000) {
      throw GenerationError("scene (prototype " + std::to_string(scene.prototype) + ", seed " +
                            std::to_string(scene.seed) + ") yields no crop with hand fraction >= " +
                            std::to_string(min_hand_fraction));
    }
  }
  return crops;
}

InteractionImage object_view(const Scene& scene, const InteractionImage& crop) {
  return crop_scene(scene, static_cast<std::size_t>(crop.pose.tx), static_cast<std::size_t>(crop.pose.ty), true);
}

InteractionImage normalize_pose(const InteractionImage& image, double rotation, double tx, double ty) {
  InteractionImage out;
  out.label = image.label;
  out.pose = {static_cast<float>(image.pose.rotation + rotation), static_cast<float>(image.pose.tx + tx),
              static_cast<float>(image.pose.ty + ty)};
  const double c = std::cos(rotation);
  const double s = std::sin(rotation);
  const double center = 0.5 * static_cast<double>(kImageSide);
  for (std::size_t y = 0; y < kImageSide; ++y) {
    for (std::size_t x = 0; x < kImageSide; ++x) {
      // Inverse map the output pixel center into the source image.
      const double qx = static_cast<double>(x) + 0.5 - center - tx;
      const double qy = static_cast<double>(y) + 0.5 - center - ty;
      const double px = c * qx + s * qy + center;
      const double py = -s * qx + c * qy + center;
      const double sx = std::floor(px);
      const double sy = std::floor(py);
      if (sx < 0 || sy < 0 || sx >= static_cast<double>(kImageSide) || sy >= static_cast<double>(kImageSide)) continue;
      const auto ix = static_cast<std::size_t>(sx);
      const auto iy = static_cast<std::size_t>(sy);
      out.at(Channel::Appearance, y, x) = image.at(Channel::Appearance, iy, ix);
      out.at(Channel::HandMask, y, x) = image.at(Channel::HandMask, iy, ix) >= 0.5f ? 1.0f : 0.0f;
      out.at(Channel::ObjectMask, y, x) = image.at(Channel::ObjectMask, iy, ix) >= 0.5f ? 1.0f : 0.0f;
    }
  }
  return out;
}

std::vector<InteractionImage> make_negative_images(std::uint64_t seed, std::size_t count) {
  if (count == 0) throw ConfigError("negative image count must be positive");
  std::vector<InteractionImage> images;
  images.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    Rng rng(mix_seed(seed, 0x4E47000000ULL + n));
    InteractionImage image;
    const std::vector<float> background = background_texture(rng, kImageSide, kImageSide);
    Shape distractors;
    // 15% pure background, otherwise 1-3 generic shapes.
    const std::size_t shapes = rng.uniform() < 0.15 ? 0 : 1 + rng.index(3);
    for (std::size_t k = 0; k < shapes; ++k) {
      const Point c{rng.uniform(2.0, 30.0), rng.uniform(2.0, 30.0)};
      switch (rng.index(5)) {
        case 0: {  // sliver / wedge
          const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
          const double len = rng.uniform(10.0, 28.0);
          const double base = rng.uniform(1.5, 5.0);
          const Point dir{std::cos(angle), std::sin(angle)};
          const Point nrm{-dir.y, dir.x};
          distractors.add(Triangle{{c.x - nrm.x * base, c.y - nrm.y * base},
                                   {c.x + dir.x * len, c.y + dir.y * len},
                                   {c.x + nrm.x * base, c.y + nrm.y * base}});
          break;
        }
        case 1:
          distractors.add(Triangle{c,
                                   {c.x + rng.uniform(-14.0, 14.0), c.y + rng.uniform(-14.0, 14.0)},
                                   {c.x + rng.uniform(-14.0, 14.0), c.y + rng.uniform(-14.0, 14.0)}});
          break;
        case 2:
          distractors.add(Box{c, rng.uniform(3.0, 22.0), rng.uniform(3.0, 22.0), rng.uniform(0.0, std::numbers::pi)});
          break;
        case 3:
          distractors.add(Ellipse{c, rng.uniform(2.0, 11.0), rng.uniform(2.0, 11.0), rng.uniform(0.0, std::numbers::pi)});
          break;
        default: {
          const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
          const double len = rng.uniform(6.0, 24.0);
          distractors.add(Capsule{c, {c.x + std::cos(angle) * len, c.y + std::sin(angle) * len}, rng.uniform(1.0, 4.0)});
          break;
        }
      }
    }
    const std::vector<float> mask =
        distractors.empty() ? std::vector<float>(kChannelPixels, 0.0f)
                            : raster::rasterize(distractors, raster::Placement{{0.0, 0.0}, 1.0, 0.0}, kImageSide, kImageSide);
    const double tone = rng.uniform(0.45, 0.95);
    ValueNoise noise(rng, kImageSide, kImageSide, 6.0);
    for (std::size_t y = 0; y < kImageSide; ++y) {
      for (std::size_t x = 0; x < kImageSide; ++x) {
        const std::size_t i = y * kImageSide + x;
        const bool inside = mask[i] > 0.5f;
        image.at(Channel::Appearance, y, x) =
            inside ? clamp01(tone + 0.08 * noise(x, y) + 0.03 * rng.uniform(-1.0, 1.0)) : background[i];
        image.at(Channel::ObjectMask, y, x) = inside ? 1.0f : 0.0f;
      }
    }
    images.push_back(std::move(image));
  }
  return images;
}

std::array<float, kChannelPixels> object_input(const InteractionImage& object_image) {
  std::array<float, kChannelPixels> out{};
  const auto appearance = object_image.channel(Channel::Appearance);
  const auto mask = object_image.channel(Channel::ObjectMask);
  for (std::size_t i = 0; i < kChannelPixels; ++i) out[i] = appearance[i] * mask[i];
  return out;
}

}  // namespace idspace
