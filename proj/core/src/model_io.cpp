#include "idspace/model_io.hpp"

#include <fstream>
#include <limits>

#include "idspace/binary_io.hpp"
#include "idspace/errors.hpp"

namespace idspace {

namespace {

std::uint32_t narrow(std::size_t v) {
  if (v > std::numeric_limits<std::uint32_t>::max()) throw ConfigError("dimension exceeds u32");
  return static_cast<std::uint32_t>(v);
}

void write_tensor(std::ostream& os, const Tensor<float>& t) {
  binary::write_u32(os, narrow(t.rank()));
  for (std::size_t d : t.shape()) binary::write_u32(os, narrow(d));
  for (float v : t.values()) binary::write_f32(os, v);
}

Tensor<float> read_tensor(std::istream& is) {
  const std::uint32_t rank = binary::read_u32(is, "tensor rank");
  if (rank == 0 || rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  std::size_t count = 1;
  for (auto& d : shape) {
    d = binary::read_u32(is, "tensor dimension");
    if (d == 0 || d > (1u << 26)) throw FormatError("implausible tensor dimension");
    count *= d;
    if (count > (1u << 28)) throw FormatError("tensor too large");
  }
  std::vector<float> data(count);
  for (float& v : data) v = binary::read_f32(is, "tensor values");
  return Tensor<float>(std::move(shape), std::move(data));
}

}  // namespace

void write_model(std::ostream& os, const Network<float>& network, ModelRole role) {
  os.write("IDSM", 4);
  binary::write_u32(os, kModelFormatVersion);
  binary::write_u8(os, static_cast<std::uint8_t>(role));
  binary::write_u32(os, narrow(network.layers().size()));
  for (const auto& layer : network.layers()) {
    binary::write_u8(os, static_cast<std::uint8_t>(layer.kind));
    switch (layer.kind) {
      case LayerKind::Convolution: {
        const ConvGeometry& g = layer.conv;
        for (std::size_t v : {g.in_channels, g.in_height, g.in_width, g.out_channels, g.kernel, g.stride, g.padding}) {
          binary::write_u32(os, narrow(v));
        }
        break;
      }
      case LayerKind::Activation:
        binary::write_u8(os, static_cast<std::uint8_t>(layer.activation));
        binary::write_u32(os, narrow(layer.width));
        break;
      case LayerKind::Dense:
        break;
    }
    if (layer.has_parameters()) {
      write_tensor(os, layer.weights);
      write_tensor(os, layer.bias);
    }
  }
}

ModelFile read_model(std::istream& is) {
  binary::expect_magic(is, "IDSM");
  const std::uint32_t version = binary::read_u32(is, "version");
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model format version " + std::to_string(version));
  }
  ModelFile file;
  const std::uint8_t role = binary::read_u8(is, "role");
  if (role > static_cast<std::uint8_t>(ModelRole::Inference)) throw FormatError("unknown model role");
  file.role = static_cast<ModelRole>(role);
  const std::uint32_t count = binary::read_u32(is, "layer count");
  if (count > 4096) throw FormatError("implausible layer count");
  std::vector<LayerParams<float>> layers;
  layers.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerParams<float> layer;
    const std::uint8_t kind = binary::read_u8(is, "layer kind");
    switch (kind) {
      case static_cast<std::uint8_t>(LayerKind::Convolution): {
        layer.kind = LayerKind::Convolution;
        ConvGeometry& g = layer.conv;
        for (std::size_t* field : {&g.in_channels, &g.in_height, &g.in_width, &g.out_channels, &g.kernel,
                                   &g.stride, &g.padding}) {
          *field = binary::read_u32(is, "convolution geometry");
        }
        break;
      }
      case static_cast<std::uint8_t>(LayerKind::Dense):
        layer.kind = LayerKind::Dense;
        break;
      case static_cast<std::uint8_t>(LayerKind::Activation): {
        layer.kind = LayerKind::Activation;
        const std::uint8_t act = binary::read_u8(is, "activation");
        if (act != static_cast<std::uint8_t>(Activation::Tanh) && act != static_cast<std::uint8_t>(Activation::Sigmoid)) {
          throw FormatError("unknown activation tag");
        }
        layer.activation = static_cast<Activation>(act);
        layer.width = binary::read_u32(is, "activation width");
        break;
      }
      default:
        throw FormatError("unknown layer kind tag " + std::to_string(kind));
    }
    if (layer.has_parameters()) {
      layer.weights = read_tensor(is);
      layer.bias = read_tensor(is);
    }
    try {
      layer.validate();
    } catch (const ConfigError& e) {
      throw FormatError(std::string("inconsistent layer in model file: ") + e.what());
    }
    layers.push_back(std::move(layer));
  }
  try {
    file.network = Network<float>(std::move(layers));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("inconsistent network in model file: ") + e.what());
  }
  return file;
}

void save_model(const std::filesystem::path& path, const Network<float>& network, ModelRole role) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_model(os, network, role);
  if (!os) throw IoError("failed writing " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_model(is);
}

}  // namespace idspace
