#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "idspace/network.hpp"

namespace idspace {

inline constexpr std::uint32_t kModelFormatVersion = 1;

enum class ModelRole : std::uint8_t { Generic = 0, Encoder = 1, Decoder = 2, Inference = 3 };

struct ModelFile {
  ModelRole role = ModelRole::Generic;
  Network<float> network;
};

// Layout (little-endian):
//   "IDSM" | version u32 | role u8 | layer count u32 | layers...
// per layer: kind u8, then
//   convolution: in_channels, in_height, in_width, out_channels, kernel, stride, padding (u32 each)
//   activation:  activation u8, width u32
//   dense:       nothing
// then for parameterised layers: weights (rank u32, dims u32..., f32 values)
// and bias in the same encoding.
void write_model(std::ostream& os, const Network<float>& network, ModelRole role);
ModelFile read_model(std::istream& is);

void save_model(const std::filesystem::path& path, const Network<float>& network, ModelRole role);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace idspace
