#include <cmath>
#include <fstream>
#include <limits>

#include "idspace/binary_io.hpp"
#include "idspace/errors.hpp"
#include "idspace/interaction_data.hpp"

namespace idspace {

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  if (dataset.items.size() > std::numeric_limits<std::uint32_t>::max()) throw ConfigError("dataset too large");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write("IIDS", 4);
  binary::write_u32(os, kDatasetFormatVersion);
  binary::write_u32(os, static_cast<std::uint32_t>(dataset.items.size()));
  for (const auto& item : dataset.items) {
    if (item.pixels.size() != kImageValues) throw ConfigError("interaction image must hold 3x32x32 values");
    binary::write_i32(os, item.label);
    binary::write_f32(os, item.pose.rotation);
    binary::write_f32(os, item.pose.tx);
    binary::write_f32(os, item.pose.ty);
    for (float v : item.pixels) binary::write_f32(os, v);
  }
  if (!os) throw IoError("failed writing " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  binary::expect_magic(is, "IIDS");
  const std::uint32_t version = binary::read_u32(is, "version");
  if (version != kDatasetFormatVersion) {
    throw FormatError("unsupported dataset format version " + std::to_string(version) + " in " + path.string());
  }
  const std::uint32_t count = binary::read_u32(is, "item count");
  Dataset dataset;
  // Guard the reservation against corrupt counts; the read loop detects truncation.
  dataset.items.reserve(std::min<std::uint32_t>(count, 1u << 16));
  for (std::uint32_t n = 0; n < count; ++n) {
    InteractionImage item;
    item.label = binary::read_i32(is, "label");
    item.pose.rotation = binary::read_f32(is, "pose");
    item.pose.tx = binary::read_f32(is, "pose");
    item.pose.ty = binary::read_f32(is, "pose");
    for (float& v : item.pixels) v = binary::read_f32(is, "pixels");
    dataset.items.push_back(std::move(item));
  }
  return dataset;
}

namespace {

unsigned char to_byte(float v) {
  const float clamped = std::fmin(1.0f, std::fmax(0.0f, std::isfinite(v) ? v : 0.0f));
  return static_cast<unsigned char>(std::lround(clamped * 255.0f));
}

}  // namespace

void write_pgm(const std::filesystem::path& path, std::span<const float> values, std::size_t width, std::size_t height) {
  if (values.size() != width * height) throw ConfigError("PGM payload does not match dimensions");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "P5\n" << width << ' ' << height << "\n255\n";
  for (float v : values) os.put(static_cast<char>(to_byte(v)));
  if (!os) throw IoError("failed writing " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string magic;
  is >> magic;
  if (magic != "P5") throw FormatError(path.string() + " is not a binary PGM");
  // Header tokens may be separated by comments.
  auto next_number = [&]() {
    is >> std::ws;
    while (is.peek() == '#') {
      std::string comment;
      std::getline(is, comment);
      is >> std::ws;
    }
    long v = -1;
    is >> v;
    if (!is || v <= 0) throw FormatError("malformed PGM header in " + path.string());
    return static_cast<std::size_t>(v);
  };
  GrayImage image;
  image.width = next_number();
  image.height = next_number();
  const std::size_t maxval = next_number();
  if (maxval > 255) throw FormatError("16-bit PGM is not supported: " + path.string());
  is.get();
  std::vector<unsigned char> bytes(image.width * image.height);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(is.gcount()) != bytes.size()) throw FormatError("truncated PGM " + path.string());
  image.values.reserve(bytes.size());
  for (unsigned char b : bytes) image.values.push_back(static_cast<float>(b) / static_cast<float>(maxval));
  return image;
}

void write_ppm(const std::filesystem::path& path, const InteractionImage& image) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "P6\n" << kImageSide << ' ' << kImageSide << "\n255\n";
  for (std::size_t i = 0; i < kChannelPixels; ++i) {
    for (std::size_t c = 0; c < kImageChannels; ++c) os.put(static_cast<char>(to_byte(image.pixels[c * kChannelPixels + i])));
  }
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace idspace
