#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace idspace {

inline constexpr std::size_t kImageSide = 32;
inline constexpr std::size_t kChannelPixels = kImageSide * kImageSide;
inline constexpr std::size_t kImageChannels = 3;
inline constexpr std::size_t kImageValues = kImageChannels * kChannelPixels;
inline constexpr int kPrototypeCount = 12;

enum class Channel : std::size_t { Appearance = 0, HandMask = 1, ObjectMask = 2 };

struct Pose {
  float rotation = 0.0f;  // radians
  float tx = 0.0f;        // pixels
  float ty = 0.0f;

  friend bool operator==(const Pose&, const Pose&) = default;
};

/// 3 x 32 x 32 image: total appearance, hand mask, object mask (channel-major).
struct InteractionImage {
  std::vector<float> pixels = std::vector<float>(kImageValues, 0.0f);
  std::int32_t label = -1;  // interaction type, -1 when unknown / negative
  Pose pose;

  std::span<float> channel(Channel c) {
    return std::span<float>(pixels).subspan(static_cast<std::size_t>(c) * kChannelPixels, kChannelPixels);
  }
  std::span<const float> channel(Channel c) const {
    return std::span<const float>(pixels).subspan(static_cast<std::size_t>(c) * kChannelPixels, kChannelPixels);
  }
  float& at(Channel c, std::size_t y, std::size_t x) {
    return pixels[static_cast<std::size_t>(c) * kChannelPixels + y * kImageSide + x];
  }
  float at(Channel c, std::size_t y, std::size_t x) const {
    return pixels[static_cast<std::size_t>(c) * kChannelPixels + y * kImageSide + x];
  }

  friend bool operator==(const InteractionImage&, const InteractionImage&) = default;
};

/// Axis-aligned box in canvas pixel coordinates (x right, y down).
struct RegionBox {
  std::string name;
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

struct SceneOptions {
  std::size_t height = 64;
  std::size_t width = 64;
  bool jitter = true;
};

struct Scene {
  std::size_t height = 0;
  std::size_t width = 0;
  int prototype = 0;
  std::uint64_t seed = 0;
  // Placement jitter actually applied.
  double rotation = 0.0;
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;

  std::vector<float> appearance;         // hand + object + background
  std::vector<float> object_appearance;  // same scene without the hand
  std::vector<float> hand_mask;          // binary
  std::vector<float> object_mask;        // visible object pixels (occluded by the hand removed)
  std::vector<float> object_silhouette;  // full object footprint
  std::vector<RegionBox> regions;        // named functional parts, e.g. "grip", "blade"

  const RegionBox* region(std::string_view name) const;
};

enum class Split : std::uint8_t { Train = 0, Test = 1 };

struct Dataset {
  std::vector<InteractionImage> items;
  Split split = Split::Train;
  std::uint64_t seed = 0;
};

std::string_view prototype_name(int prototype);

/// Deterministic synthetic scene of one interaction prototype (0..11).
Scene generate_scene(int prototype, std::uint64_t seed, const SceneOptions& options = {});

/// Background texture only: empty masks, no regions, prototype -1.
Scene background_scene(std::uint64_t seed, const SceneOptions& options = {});

/// 32x32 crop at (x0, y0); object_only selects the hand-free rendering with
/// the full object silhouette as object mask and an empty hand mask.
InteractionImage crop_scene(const Scene& scene, std::size_t x0, std::size_t y0, bool object_only = false);

inline constexpr std::size_t kDefaultCropOffset = 6;

/// Hand-mask centroid in canvas pixels (x, y); the canvas center when the
/// mask is empty.
std::array<double, 2> hand_centroid(const Scene& scene);

/// Random 32x32 crops whose hand-mask fraction is at least `min_hand_fraction`
/// and whose center lies within `max_offset` pixels (per axis) of the hand
/// centroid. Crop origin is recorded in pose.tx / pose.ty, scene rotation in
/// pose.rotation.
std::vector<InteractionImage> extract_subimages(const Scene& scene, std::size_t count, double min_hand_fraction,
                                                std::uint64_t seed, std::size_t max_offset = kDefaultCropOffset);

/// The crop centered on the hand centroid (clamped to the canvas).
InteractionImage canonical_crop(const Scene& scene);

/// Object-only companion of a crop produced by extract_subimages.
InteractionImage object_view(const Scene& scene, const InteractionImage& crop);

/// Rigid transform about the image center, nearest-neighbour resampling with
/// zero fill; mask channels re-binarised at 0.5.
InteractionImage normalize_pose(const InteractionImage& image, double rotation, double tx, double ty);

/// Hand-free images of background texture and non-prototype distractor shapes.
std::vector<InteractionImage> make_negative_images(std::uint64_t seed, std::size_t count);

/// Inference-model input: appearance restricted to the object mask.
std::array<float, kChannelPixels> object_input(const InteractionImage& object_image);

double hand_fraction(const InteractionImage& image);

// Dataset file (little-endian): "IIDS" | version u32 | count u32 | per item:
// label i32, pose 3 x f32, 3 x 32 x 32 f32.
inline constexpr std::uint32_t kDatasetFormatVersion = 1;
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Inspection exports. Values in [0,1] are scaled to 0..255.
void write_pgm(const std::filesystem::path& path, std::span<const float> values, std::size_t width, std::size_t height);
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> values;  // row-major, scaled to [0,1]
};
/// Binary (P5) PGM with maxval <= 255.
GrayImage read_pgm(const std::filesystem::path& path);
/// Channel composite: red = appearance, green = hand mask, blue = object mask.
void write_ppm(const std::filesystem::path& path, const InteractionImage& image);

}  // namespace idspace
