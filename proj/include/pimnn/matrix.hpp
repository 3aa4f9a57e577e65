#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "pimnn/error.hpp"

namespace pimnn {

enum class ElemType : std::uint32_t { FP32 = 0, INT32 = 1, INT8 = 2 };
enum class Layout { RowMajor, ColMajor };

/// Transfers and DMA lengths must be a multiple of this many bytes.
inline constexpr std::size_t kTransferAlignment = 8;

constexpr std::size_t elem_size(ElemType t) {
  switch (t) {
    case ElemType::FP32: return 4;
    case ElemType::INT32: return 4;
    case ElemType::INT8: return 1;
  }
  return 0;
}

constexpr std::string_view to_string(ElemType t) {
  switch (t) {
    case ElemType::FP32: return "fp32";
    case ElemType::INT32: return "int32";
    case ElemType::INT8: return "int8";
  }
  return "?";
}

inline ElemType parse_elem_type(std::string_view s) {
  if (s == "fp32" || s == "FP32") return ElemType::FP32;
  if (s == "int32" || s == "INT32") return ElemType::INT32;
  if (s == "int8" || s == "INT8") return ElemType::INT8;
  throw Error(ErrorCode::InvalidArgument, "unknown element type '" + std::string(s) + "'");
}

template <ElemType E> struct elem_traits;
template <> struct elem_traits<ElemType::FP32> { using type = float; };
template <> struct elem_traits<ElemType::INT32> { using type = std::int32_t; };
template <> struct elem_traits<ElemType::INT8> { using type = std::int8_t; };

/// Calls `f(std::type_identity<T>{})` with the C++ type backing `t`.
template <class F>
decltype(auto) dispatch(ElemType t, F&& f) {
  switch (t) {
    case ElemType::FP32: return f(std::type_identity<float>{});
    case ElemType::INT32: return f(std::type_identity<std::int32_t>{});
    case ElemType::INT8: return f(std::type_identity<std::int8_t>{});
  }
  throw Error(ErrorCode::InvalidArgument, "bad element type");
}

template <class T>
constexpr ElemType elem_type_of() {
  if constexpr (std::is_same_v<T, float>) return ElemType::FP32;
  else if constexpr (std::is_same_v<T, std::int32_t>) return ElemType::INT32;
  else {
    static_assert(std::is_same_v<T, std::int8_t>);
    return ElemType::INT8;
  }
}

constexpr std::uint64_t round_up(std::uint64_t v, std::uint64_t multiple) {
  return (v + multiple - 1) / multiple * multiple;
}

constexpr std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

/// Smallest element count >= `n` whose byte length is a multiple of 8.
constexpr std::uint64_t aligned_line_length(std::uint64_t n, ElemType t) {
  return round_up(n, kTransferAlignment / elem_size(t));
}

template <class T>
T load(const std::byte* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <class T>
void store(std::byte* p, T v) {
  std::memcpy(p, &v, sizeof(T));
}

/// Dense 2-D buffer with a logical shape and a zero-filled padded shape.
///
/// Storage is a sequence of contiguous "lines": rows for row-major, columns
/// for column-major. The line length is always padded so each line is a
/// multiple of 8 bytes, which makes any whole-line range DMA-transferable.
class MatrixBuf {
 public:
  MatrixBuf() = default;

  MatrixBuf(ElemType type, std::uint32_t rows, std::uint32_t cols, Layout layout = Layout::RowMajor)
      : MatrixBuf(type, rows, cols, layout, rows, cols) {}

  /// Explicit padded shape; padded dims are raised to satisfy the alignment rule.
  MatrixBuf(ElemType type, std::uint32_t rows, std::uint32_t cols, Layout layout,
            std::uint32_t padded_rows, std::uint32_t padded_cols)
      : type_(type), layout_(layout), rows_(rows), cols_(cols) {
    if (padded_rows < rows || padded_cols < cols) {
      throw Error(ErrorCode::DimError, "padded shape smaller than logical shape");
    }
    if (layout == Layout::RowMajor) {
      padded_cols = static_cast<std::uint32_t>(aligned_line_length(padded_cols, type));
    } else {
      padded_rows = static_cast<std::uint32_t>(aligned_line_length(padded_rows, type));
    }
    padded_rows_ = padded_rows;
    padded_cols_ = padded_cols;
    data_.assign(static_cast<std::size_t>(padded_rows_) * padded_cols_ * elem_size(type), std::byte{0});
  }

  template <class T>
  static MatrixBuf from_values(std::uint32_t rows, std::uint32_t cols, std::span<const T> row_major,
                               Layout layout = Layout::RowMajor) {
    if (row_major.size() != static_cast<std::size_t>(rows) * cols) {
      throw Error(ErrorCode::DimError, "value count does not match shape");
    }
    MatrixBuf m(elem_type_of<T>(), rows, cols, layout);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) m.set<T>(r, c, row_major[std::size_t(r) * cols + c]);
    return m;
  }

  template <class T>
  static MatrixBuf from_values(std::uint32_t rows, std::uint32_t cols, std::initializer_list<T> values,
                               Layout layout = Layout::RowMajor) {
    return from_values<T>(rows, cols, std::span<const T>(values.begin(), values.size()), layout);
  }

  ElemType elem_type() const noexcept { return type_; }
  Layout layout() const noexcept { return layout_; }
  std::uint32_t rows() const noexcept { return rows_; }
  std::uint32_t cols() const noexcept { return cols_; }
  std::uint32_t padded_rows() const noexcept { return padded_rows_; }
  std::uint32_t padded_cols() const noexcept { return padded_cols_; }
  std::size_t elem_bytes() const noexcept { return elem_size(type_); }

  std::uint32_t line_count() const noexcept { return layout_ == Layout::RowMajor ? padded_rows_ : padded_cols_; }
  std::uint32_t line_length() const noexcept { return layout_ == Layout::RowMajor ? padded_cols_ : padded_rows_; }
  std::size_t line_bytes() const noexcept { return std::size_t(line_length()) * elem_bytes(); }

  std::span<const std::byte> storage() const noexcept { return data_; }
  std::span<std::byte> storage() noexcept { return data_; }

  /// Bytes of lines [first, first + count).
  std::span<const std::byte> lines(std::uint32_t first, std::uint32_t count) const {
    if (std::uint64_t(first) + count > line_count()) throw Error(ErrorCode::DimError, "line range out of bounds");
    return std::span<const std::byte>(data_).subspan(first * line_bytes(), count * line_bytes());
  }

  std::size_t offset_of(std::uint32_t r, std::uint32_t c) const noexcept {
    const std::size_t idx = layout_ == Layout::RowMajor ? std::size_t(r) * padded_cols_ + c
                                                        : std::size_t(c) * padded_rows_ + r;
    return idx * elem_bytes();
  }

  template <class T>
  T get(std::uint32_t r, std::uint32_t c) const {
    return load<T>(data_.data() + offset_of(r, c));
  }

  template <class T>
  void set(std::uint32_t r, std::uint32_t c, T v) {
    store<T>(data_.data() + offset_of(r, c), v);
  }

  double get_as_double(std::uint32_t r, std::uint32_t c) const {
    return dispatch(type_, [&]<class T>(std::type_identity<T>) { return static_cast<double>(get<T>(r, c)); });
  }

  /// True when every cell outside the logical region is zero.
  bool padding_is_zero() const {
    for (std::uint32_t r = 0; r < padded_rows_; ++r)
      for (std::uint32_t c = 0; c < padded_cols_; ++c) {
        if (r < rows_ && c < cols_) continue;
        const std::byte* p = data_.data() + offset_of(r, c);
        for (std::size_t b = 0; b < elem_bytes(); ++b)
          if (p[b] != std::byte{0}) return false;
      }
    return true;
  }

  /// Equal logical shape, type and logical contents (layout and padding ignored).
  bool same_values(const MatrixBuf& o) const {
    if (type_ != o.type_ || rows_ != o.rows_ || cols_ != o.cols_) return false;
    for (std::uint32_t r = 0; r < rows_; ++r)
      for (std::uint32_t c = 0; c < cols_; ++c)
        if (std::memcmp(data_.data() + offset_of(r, c), o.data_.data() + o.offset_of(r, c), elem_bytes()) != 0)
          return false;
    return true;
  }

  friend bool operator==(const MatrixBuf&, const MatrixBuf&) = default;

 private:
  ElemType type_ = ElemType::FP32;
  Layout layout_ = Layout::RowMajor;
  std::uint32_t rows_ = 0, cols_ = 0;
  std::uint32_t padded_rows_ = 0, padded_cols_ = 0;
  std::vector<std::byte> data_;
};

/// Copy of `m` in the requested storage order, minimally padded for that order.
inline MatrixBuf to_layout(const MatrixBuf& m, Layout layout) {
  MatrixBuf out(m.elem_type(), m.rows(), m.cols(), layout);
  const std::size_t es = m.elem_bytes();
  for (std::uint32_t r = 0; r < m.rows(); ++r)
    for (std::uint32_t c = 0; c < m.cols(); ++c)
      std::memcpy(out.storage().data() + out.offset_of(r, c), m.storage().data() + m.offset_of(r, c), es);
  return out;
}

/// Column-major copy of a row-major matrix; element (r, c) is preserved.
inline MatrixBuf transpose_to_col_major(const MatrixBuf& b) {
  if (b.layout() != Layout::RowMajor) throw Error(ErrorCode::InvalidArgument, "expected a row-major matrix");
  return to_layout(b, Layout::ColMajor);
}

/// Logical transpose, returned row-major.
inline MatrixBuf transpose(const MatrixBuf& m) {
  MatrixBuf out(m.elem_type(), m.cols(), m.rows());
  const std::size_t es = m.elem_bytes();
  for (std::uint32_t r = 0; r < m.rows(); ++r)
    for (std::uint32_t c = 0; c < m.cols(); ++c)
      std::memcpy(out.storage().data() + out.offset_of(c, r), m.storage().data() + m.offset_of(r, c), es);
  return out;
}

/// Copy of the logical region with an explicit padded shape.
inline MatrixBuf pad_to(const MatrixBuf& m, std::uint32_t padded_rows, std::uint32_t padded_cols) {
  MatrixBuf out(m.elem_type(), m.rows(), m.cols(), m.layout(), padded_rows, padded_cols);
  const std::size_t es = m.elem_bytes();
  for (std::uint32_t r = 0; r < m.rows(); ++r)
    for (std::uint32_t c = 0; c < m.cols(); ++c)
      std::memcpy(out.storage().data() + out.offset_of(r, c), m.storage().data() + m.offset_of(r, c), es);
  return out;
}

/// Pads the number of storage lines up to a multiple of `line_multiple`
/// (rows for row-major, columns for column-major). Line length is already
/// 8-byte aligned by construction.
inline MatrixBuf pad_matrix(const MatrixBuf& m, std::uint32_t line_multiple) {
  if (line_multiple == 0) throw Error(ErrorCode::InvalidArgument, "row multiple must be >= 1");
  if (m.layout() == Layout::RowMajor) {
    return pad_to(m, static_cast<std::uint32_t>(round_up(std::max(m.rows(), 1u), line_multiple)), m.cols());
  }
  return pad_to(m, m.rows(), static_cast<std::uint32_t>(round_up(std::max(m.cols(), 1u), line_multiple)));
}

/// Minimally padded row-major copy of the logical region.
inline MatrixBuf crop(const MatrixBuf& m) { return to_layout(m, Layout::RowMajor); }

}  // namespace pimnn
