#pragma once

// Iris ingestion and split, network presets, seeded random operands.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pimnn/error.hpp"
#include "pimnn/matrix.hpp"
#include "pimnn/rng.hpp"

namespace pimnn {

enum class Species : std::uint8_t { Setosa, Versicolor, Virginica };

struct IrisRecord {
  std::array<float, 4> features{};
  Species species = Species::Setosa;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i)
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  return out;
}

inline bool parse_float(std::string_view s, float& out) {
  if (s.empty()) return false;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc{} && r.ptr == s.data() + s.size();
}

inline bool parse_species(std::string_view s, Species& out) {
  if (s.starts_with("Iris-")) s.remove_prefix(5);
  if (s == "setosa") out = Species::Setosa;
  else if (s == "versicolor") out = Species::Versicolor;
  else if (s == "virginica") out = Species::Virginica;
  else return false;
  return true;
}

}  // namespace detail

/// Parses Iris CSV text: four numeric features then the species name
/// (`Iris-setosa` or `setosa`, etc.). A first line whose first field is not
/// numeric is treated as a header. Blank lines are skipped.
inline std::vector<IrisRecord> parse_iris(std::string_view text) {
  std::vector<IrisRecord> out;
  std::size_t line_no = 0, pos = 0;
  bool first_content = true;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto fields = detail::split_csv(line);
    float probe;
    if (first_content && !detail::parse_float(fields.front(), probe)) {
      first_content = false;
      continue;
    }
    first_content = false;
    if (fields.size() != 5)
      throw Error(ErrorCode::ParseError, "row " + std::to_string(line_no) + ": expected 5 fields, got " +
                                             std::to_string(fields.size()));
    IrisRecord rec;
    for (std::size_t f = 0; f < 4; ++f)
      if (!detail::parse_float(fields[f], rec.features[f]))
        throw Error(ErrorCode::ParseError, "row " + std::to_string(line_no) + ": bad number '" + std::string(fields[f]) + "'");
    if (!detail::parse_species(fields[4], rec.species))
      throw Error(ErrorCode::ParseError, "row " + std::to_string(line_no) + ": unknown species '" + std::string(fields[4]) + "'");
    out.push_back(rec);
  }
  if (out.empty()) throw Error(ErrorCode::ParseError, "no records");
  return out;
}

inline std::vector<IrisRecord> load_iris(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_iris(ss.str());
}

/// Binary setosa / non-setosa task with a class-stratified test split.
struct Dataset {
  MatrixBuf train_x, test_x;  // FP32 samples x 4
  MatrixBuf train_y, test_y;  // FP32 samples x 1, setosa = 0
  std::vector<std::uint32_t> train_indices, test_indices;
};

/// Test-split composition per species (setosa, versicolor, virginica).
inline constexpr std::array<std::uint32_t, 3> kIrisTestComposition{8, 10, 10};

inline Dataset split_iris(const std::vector<IrisRecord>& records, std::uint64_t seed) {
  std::array<std::vector<std::uint32_t>, 3> by_class;
  for (std::uint32_t i = 0; i < records.size(); ++i) by_class[static_cast<int>(records[i].species)].push_back(i);
  Rng rng(seed);
  std::vector<bool> in_test(records.size(), false);
  for (int c = 0; c < 3; ++c) {
    if (by_class[c].size() < kIrisTestComposition[c])
      throw Error(ErrorCode::InvalidArgument, "not enough samples of a species for the test split");
    rng.shuffle(by_class[c].begin(), by_class[c].end());
    for (std::uint32_t k = 0; k < kIrisTestComposition[c]; ++k) in_test[by_class[c][k]] = true;
  }
  Dataset ds;
  for (std::uint32_t i = 0; i < records.size(); ++i) (in_test[i] ? ds.test_indices : ds.train_indices).push_back(i);

  auto build = [&](const std::vector<std::uint32_t>& idx, MatrixBuf& x, MatrixBuf& y) {
    x = MatrixBuf(ElemType::FP32, static_cast<std::uint32_t>(idx.size()), 4);
    y = MatrixBuf(ElemType::FP32, static_cast<std::uint32_t>(idx.size()), 1);
    for (std::uint32_t r = 0; r < idx.size(); ++r) {
      const IrisRecord& rec = records[idx[r]];
      for (std::uint32_t f = 0; f < 4; ++f) x.set<float>(r, f, rec.features[f]);
      y.set<float>(r, 0, rec.species == Species::Setosa ? 0.0f : 1.0f);
    }
  };
  build(ds.train_indices, ds.train_x, ds.train_y);
  build(ds.test_indices, ds.test_x, ds.test_y);
  return ds;
}

struct NetPreset {
  std::string name;
  std::vector<std::uint32_t> batch_sizes;
  std::vector<std::uint32_t> layer_sizes;  // input, hidden..., output
};

inline const std::vector<NetPreset>& all_presets() {
  static const std::vector<NetPreset> presets = {
      {"Net1", {9984}, {512, 128, 64, 1}},
      {"Net2", {16384}, {16384, 4096, 4096, 1}},
      {"Net3", {2556, 5112, 7668, 10224, 15336}, {112, 96, 64, 1}},
      {"Net4", {2556, 5112, 7668}, {176, 64, 64, 1}},
  };
  return presets;
}

inline const NetPreset& preset(std::string_view name) {
  for (const auto& p : all_presets())
    if (p.name == name) return p;
  throw Error(ErrorCode::InvalidArgument, "unknown preset '" + std::string(name) + "'");
}

/// Value ranges drawn by random_matrix.
struct RandomRange {
  static constexpr double kFp32Lo = -1.0, kFp32Hi = 1.0;  // [lo, hi)
  static constexpr std::int64_t kInt32Lo = -128, kInt32Hi = 127;  // inclusive
  static constexpr std::int64_t kInt8Lo = -8, kInt8Hi = 7;        // inclusive
};

/// Seeded row-major matrix: FP32 uniform in [-1, 1), INT32 in [-128, 127],
/// INT8 in [-8, 7].
inline MatrixBuf random_matrix(std::uint32_t rows, std::uint32_t cols, ElemType type, std::uint64_t seed) {
  if (rows == 0 || cols == 0) throw Error(ErrorCode::DimError, "random_matrix needs a non-empty shape");
  Rng rng(seed);
  MatrixBuf m(type, rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) {
      switch (type) {
        case ElemType::FP32:
        {
          float v = static_cast<float>(rng.uniform(RandomRange::kFp32Lo, RandomRange::kFp32Hi));
          if (v >= static_cast<float>(RandomRange::kFp32Hi)) v = std::nextafter(static_cast<float>(RandomRange::kFp32Hi), 0.0f);
          m.set<float>(r, c, v);
          break;
        }
        case ElemType::INT32:
          m.set<std::int32_t>(r, c, static_cast<std::int32_t>(rng.uniform_int(RandomRange::kInt32Lo, RandomRange::kInt32Hi)));
          break;
        case ElemType::INT8:
          m.set<std::int8_t>(r, c, static_cast<std::int8_t>(rng.uniform_int(RandomRange::kInt8Lo, RandomRange::kInt8Hi)));
          break;
      }
    }
  return m;
}

}  // namespace pimnn
