#pragma once

// Flat binary model file. All integers are 32-bit little-endian.
//
//   offset 0   : magic "PNN1" (4 bytes)
//   offset 4   : u32 element type (0 fp32, 1 int32, 2 int8)
//   offset 8   : u32 layer count L (>= 3)
//   offset 12  : L x u32 layer sizes
//   next       : (L-1) x u32 activation codes (0 none, 1 sigmoid, 2 relu)
//   next       : weight matrices 0..L-2, each sizes[l] x sizes[l+1],
//                row-major, little-endian elements, no padding

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "pimnn/nn.hpp"

namespace pimnn {

inline constexpr char kModelMagic[4] = {'P', 'N', 'N', '1'};

namespace detail {

static_assert(std::endian::native == std::endian::little, "model I/O assumes a little-endian host");

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  os.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  char b[4];
  if (!is.read(b, 4)) throw Error(ErrorCode::ParseError, "model file truncated");
  std::uint32_t v;
  std::memcpy(&v, b, 4);
  return v;
}

}  // namespace detail

inline void write_model(std::ostream& os, const MlpModel& model) {
  model.validate();
  os.write(kModelMagic, 4);
  detail::put_u32(os, static_cast<std::uint32_t>(model.config.elem_type));
  detail::put_u32(os, static_cast<std::uint32_t>(model.config.layer_sizes.size()));
  for (auto s : model.config.layer_sizes) detail::put_u32(os, s);
  for (auto a : model.config.activations) detail::put_u32(os, static_cast<std::uint32_t>(a));
  const std::size_t es = elem_size(model.config.elem_type);
  for (const auto& w : model.weights)
    for (std::uint32_t r = 0; r < w.rows(); ++r)
      os.write(reinterpret_cast<const char*>(w.storage().data() + w.offset_of(r, 0)),
               static_cast<std::streamsize>(std::size_t(w.cols()) * es));
  if (!os) throw Error(ErrorCode::IoError, "failed writing model");
}

inline MlpModel read_model(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kModelMagic, 4) != 0)
    throw Error(ErrorCode::ParseError, "not a model file (bad magic)");
  const std::uint32_t dtype = detail::get_u32(is);
  if (dtype > 2) throw Error(ErrorCode::ParseError, "unknown element type code " + std::to_string(dtype));
  const std::uint32_t layers = detail::get_u32(is);
  if (layers < 3 || layers > 1024) throw Error(ErrorCode::ParseError, "implausible layer count " + std::to_string(layers));
  MlpConfig cfg;
  cfg.elem_type = static_cast<ElemType>(dtype);
  for (std::uint32_t l = 0; l < layers; ++l) cfg.layer_sizes.push_back(detail::get_u32(is));
  for (std::uint32_t l = 0; l + 1 < layers; ++l) {
    const std::uint32_t code = detail::get_u32(is);
    if (code > 2) throw Error(ErrorCode::ParseError, "unknown activation code " + std::to_string(code));
    cfg.activations.push_back(static_cast<Activation>(code));
  }
  MlpModel model = MlpModel::zeros(cfg);
  const std::size_t es = elem_size(cfg.elem_type);
  for (auto& w : model.weights)
    for (std::uint32_t r = 0; r < w.rows(); ++r)
      if (!is.read(reinterpret_cast<char*>(w.storage().data() + w.offset_of(r, 0)),
                   static_cast<std::streamsize>(std::size_t(w.cols()) * es)))
        throw Error(ErrorCode::ParseError, "model file truncated in weights");
  return model;
}

inline void save_model(const std::string& path, const MlpModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  write_model(os, model);
}

inline MlpModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open " + path);
  return read_model(is);
}

}  // namespace pimnn
