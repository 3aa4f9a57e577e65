#pragma once

// DPU-side routines. Each kernel sees one DPU through a DpuContext, splits
// its block's rows across tasklets (tasklet t owns rows
// [t*T_rows, (t+1)*T_rows)) and moves data MRAM<->WRAM only by DMA.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>

#include "pimnn/fast_exp.hpp"
#include "pimnn/machine.hpp"
#include "pimnn/matrix.hpp"

namespace pimnn {

namespace kernel_names {
inline constexpr std::string_view kGemmMram = "gemm_mram";
inline constexpr std::string_view kGemmWram = "gemm_wram";
inline constexpr std::string_view kRelu = "relu";
inline constexpr std::string_view kSigmoid = "sigmoid";
inline constexpr std::string_view kSigmoidDeriv = "sigmoid_deriv";
inline constexpr std::string_view kMatSub = "mat_sub";
inline constexpr std::string_view kEwMul = "ew_mul";
}  // namespace kernel_names

/// WRAM kept back for kernel locals and stacks.
inline constexpr std::uint32_t kWramReserveBytes = 8u << 10;
/// Staging granularity of the element-wise kernels.
inline constexpr std::uint32_t kElementwiseChunkBytes = 2048;

inline std::uint32_t wram_usable_bytes(std::uint32_t wram_capacity) {
  return wram_capacity > kWramReserveBytes ? wram_capacity - kWramReserveBytes : 0;
}

/// Accumulator type of the GEMM kernels: products and sums are carried at
/// double / 64-bit width and narrowed once per output element.
template <class T>
using Accum = std::conditional_t<std::is_same_v<T, float>, double, std::uint64_t>;

template <class T>
inline Accum<T> mac(Accum<T> acc, T a, T b) {
  if constexpr (std::is_same_v<T, float>) {
    return acc + static_cast<double>(a) * static_cast<double>(b);
  } else {
    return acc + static_cast<std::uint64_t>(static_cast<std::int64_t>(a) * static_cast<std::int64_t>(b));
  }
}

template <class T>
inline T narrow(Accum<T> acc) {
  if constexpr (std::is_same_v<T, float>) return static_cast<float>(acc);
  else return static_cast<T>(static_cast<std::int64_t>(acc));  // modular
}

/// Bytes per A-row / B-row chunk for the streaming GEMM: the largest
/// multiple of 8 such that an A chunk, a B chunk and one row of 64-bit
/// accumulators fit in usable WRAM. Returns 0 when nothing fits.
inline std::uint32_t stream_chunk_bytes(std::uint32_t wram_usable, std::uint64_t row_bytes, std::uint64_t c_lines) {
  const std::uint64_t acc_bytes = c_lines * 8;
  if (acc_bytes + 16 > wram_usable) return 0;
  std::uint64_t chunk = (wram_usable - acc_bytes) / 2 / kTransferAlignment * kTransferAlignment;
  chunk = std::min(chunk, round_up(row_bytes, kTransferAlignment));
  return static_cast<std::uint32_t>(chunk);
}

inline float sigmoid(float x, ExpMode mode) {
  if (mode == ExpMode::Exact) return static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(x))));
  return 1.0f / (1.0f + fast_exp(-x));
}

template <class T>
inline T activate(T v, Activation act, ExpMode mode) {
  switch (act) {
    case Activation::None: return v;
    case Activation::Relu: return v > T{0} ? v : T{0};
    case Activation::Sigmoid:
      if constexpr (std::is_same_v<T, float>) {
        return sigmoid(v, mode);
      } else {
        // integer paths go through FP32 and round to nearest
        return static_cast<T>(std::lround(sigmoid(static_cast<float>(v), mode)));
      }
  }
  return v;
}

template <class T>
inline T sigmoid_derivative(T a) {
  if constexpr (std::is_same_v<T, float>) return a * (1.0f - a);
  else return static_cast<T>(static_cast<std::int64_t>(a) * (1 - static_cast<std::int64_t>(a)));
}

template <class T>
inline T subtract(T x, T y) {
  if constexpr (std::is_same_v<T, float>) return x - y;
  else return static_cast<T>(static_cast<std::int64_t>(x) - static_cast<std::int64_t>(y));
}

template <class T>
inline T multiply(T x, T y) {
  if constexpr (std::is_same_v<T, float>) return x * y;
  else return static_cast<T>(static_cast<std::int64_t>(x) * static_cast<std::int64_t>(y));
}

struct RowRange {
  std::uint32_t begin = 0, end = 0;
  bool empty() const noexcept { return begin >= end; }
};

/// Rows owned by tasklet `t` when `rows` are split over `tasklets`.
inline RowRange tasklet_row_range(std::uint32_t rows, std::uint32_t tasklets, std::uint32_t t) {
  const auto per = static_cast<std::uint32_t>(ceil_div(rows, tasklets));
  const std::uint32_t begin = std::min<std::uint64_t>(std::uint64_t(t) * per, rows);
  return {begin, std::min<std::uint32_t>(begin + per, rows)};
}

/// Tasklets are simulated one after another, so they share staging buffers.
template <class F>
void for_each_tasklet(const DpuContext& ctx, std::uint32_t rows, F&& f) {
  for (std::uint32_t t = 0; t < ctx.tasklets(); ++t) {
    const RowRange r = tasklet_row_range(rows, ctx.tasklets(), t);
    if (!r.empty()) f(t, r);
  }
}

namespace detail {

template <class T>
void gemm_stream(DpuContext& ctx, const KernelArgs& args) {
  const BlockDesc& a = args.a;
  const BlockDesc& b = args.b;
  const BlockDesc& c = args.c;
  const std::uint64_t k_bytes = a.row_bytes();
  const std::uint32_t lines = c.cols;
  const std::uint64_t c_row_bytes = c.row_bytes();
  const std::uint32_t usable = wram_usable_bytes(ctx.wram_capacity());
  const std::uint32_t chunk = args.chunk_bytes ? args.chunk_bytes : stream_chunk_bytes(usable, k_bytes, lines);
  if (chunk == 0 || 2ull * chunk + 8ull * lines > usable) ctx.fault("streaming buffers exceed usable WRAM", 0);

  const std::uint32_t a_buf = 0, b_buf = chunk, acc_buf = 2 * chunk;
  for_each_tasklet(ctx, a.rows, [&](std::uint32_t, RowRange rows) {
    for (std::uint32_t r = rows.begin; r < rows.end; ++r) {
      auto acc = ctx.wram_as<Accum<T>>(acc_buf, lines);
      std::fill(acc.begin(), acc.end(), Accum<T>{0});
      for (std::uint64_t k0 = 0; k0 < k_bytes; k0 += chunk) {
        const auto n = static_cast<std::uint32_t>(std::min<std::uint64_t>(chunk, k_bytes - k0));
        const std::uint32_t elems = n / sizeof(T);
        ctx.dma_in(a, r * k_bytes + k0, a_buf, n);
        const auto av = ctx.wram_as<T>(a_buf, elems);
        for (std::uint32_t col = 0; col < lines; ++col) {
          ctx.dma_in(b, col * k_bytes + k0, b_buf, n);
          const auto bv = ctx.wram_as<T>(b_buf, elems);
          Accum<T> s = acc[col];
          for (std::uint32_t i = 0; i < elems; ++i) s = mac<T>(s, av[i], bv[i]);
          acc[col] = s;
        }
      }
      // narrow in place: output element i never overlaps accumulator j > i
      std::byte* base = ctx.wram(acc_buf, static_cast<std::uint32_t>(8ull * lines)).data();
      for (std::uint32_t col = 0; col < lines; ++col) {
        const Accum<T> v = load<Accum<T>>(base + 8ull * col);
        store<T>(base + sizeof(T) * col, activate<T>(narrow<T>(v), args.activation, args.exp_mode));
      }
      ctx.dma_out(acc_buf, c, r * c_row_bytes, static_cast<std::uint32_t>(c_row_bytes));
    }
  });
}

template <class T>
void gemm_resident(DpuContext& ctx, const KernelArgs& args) {
  const BlockDesc& a = args.a;
  const BlockDesc& b = args.b;
  const BlockDesc& c = args.c;
  const std::uint32_t k = a.cols;
  const std::uint32_t lines = c.cols;
  const std::uint64_t a_bytes = a.bytes();
  const std::uint64_t b_bytes = std::uint64_t(lines) * k * sizeof(T);
  const std::uint64_t c_bytes = std::uint64_t(a.rows) * lines * sizeof(T);
  if (a_bytes + b_bytes + c_bytes > wram_usable_bytes(ctx.wram_capacity()))
    ctx.fault("resident blocks exceed usable WRAM", 0);
  const auto a_buf = 0u;
  const auto b_buf = static_cast<std::uint32_t>(a_bytes);
  const auto c_buf = static_cast<std::uint32_t>(a_bytes + b_bytes);

  ctx.dma_in(a, 0, a_buf, static_cast<std::uint32_t>(a_bytes));
  ctx.dma_in(b, 0, b_buf, static_cast<std::uint32_t>(b_bytes));
  const auto av = ctx.wram_as<T>(a_buf, a.rows * k);
  const auto bv = ctx.wram_as<T>(b_buf, lines * k);
  const auto cv = ctx.wram_as<T>(c_buf, a.rows * lines);
  for_each_tasklet(ctx, a.rows, [&](std::uint32_t, RowRange rows) {
    for (std::uint32_t r = rows.begin; r < rows.end; ++r)
      for (std::uint32_t col = 0; col < lines; ++col) {
        Accum<T> s{0};
        for (std::uint32_t i = 0; i < k; ++i) s = mac<T>(s, av[std::size_t(r) * k + i], bv[std::size_t(col) * k + i]);
        cv[std::size_t(r) * lines + col] = activate<T>(narrow<T>(s), args.activation, args.exp_mode);
      }
  });
  ctx.dma_out(c_buf, c, 0, static_cast<std::uint32_t>(c_bytes));
}

inline constexpr std::uint32_t x_buf = 0, y_buf = kElementwiseChunkBytes, o_buf = 2 * kElementwiseChunkBytes;

/// Applies `op(x[, y]) -> out` element-wise over the rows of `args.a`
/// (and `args.b`), writing to `args.c`. Each tasklet streams its row range
/// through WRAM in fixed-size chunks.
template <class T, bool Binary, class Op>
void elementwise(DpuContext& ctx, const KernelArgs& args, Op op) {
  const BlockDesc& x = args.a;
  const BlockDesc& y = args.b;
  const BlockDesc& out = args.c;
  const std::uint64_t row_bytes = x.row_bytes();
  for_each_tasklet(ctx, x.rows, [&](std::uint32_t, RowRange rows) {
    const std::uint64_t first = rows.begin * row_bytes, last = rows.end * row_bytes;
    for (std::uint64_t at = first; at < last; at += kElementwiseChunkBytes) {
      const auto n = static_cast<std::uint32_t>(std::min<std::uint64_t>(kElementwiseChunkBytes, last - at));
      const std::uint32_t elems = n / sizeof(T);
      ctx.dma_in(x, at, x_buf, n);
      if constexpr (Binary) ctx.dma_in(y, at, y_buf, n);
      const auto xv = ctx.wram_as<T>(x_buf, elems);
      const auto ov = ctx.wram_as<T>(o_buf, elems);
      if constexpr (Binary) {
        const auto yv = ctx.wram_as<T>(y_buf, elems);
        for (std::uint32_t i = 0; i < elems; ++i) ov[i] = op(xv[i], yv[i]);
      } else {
        for (std::uint32_t i = 0; i < elems; ++i) ov[i] = op(xv[i]);
      }
      ctx.dma_out(o_buf, out, at, n);
    }
  });
}

}  // namespace detail

/// C = act(A * B) with B given as rows of B^T; chunks of A and B^T rows are
/// staged through WRAM and accumulated into a WRAM accumulator row.
inline void k_gemm_mram(DpuContext& ctx, const KernelArgs& args) {
  dispatch(args.a.type, [&]<class T>(std::type_identity<T>) { detail::gemm_stream<T>(ctx, args); });
}

/// C = act(A * B) with A, B^T and C all resident in WRAM.
inline void k_gemm_wram(DpuContext& ctx, const KernelArgs& args) {
  dispatch(args.a.type, [&]<class T>(std::type_identity<T>) { detail::gemm_resident<T>(ctx, args); });
}

/// In place on block a: x <- max(0, x). Block c must equal a for in-place use.
inline void k_relu(DpuContext& ctx, const KernelArgs& args) {
  dispatch(args.a.type, [&]<class T>(std::type_identity<T>) {
    detail::elementwise<T, false>(ctx, args, [](T v) { return activate<T>(v, Activation::Relu, ExpMode::Fast); });
  });
}

inline void k_sigmoid(DpuContext& ctx, const KernelArgs& args) {
  const ExpMode mode = args.exp_mode;
  dispatch(args.a.type, [&]<class T>(std::type_identity<T>) {
    detail::elementwise<T, false>(ctx, args, [mode](T v) { return activate<T>(v, Activation::Sigmoid, mode); });
  });
}

/// c = a * (1 - a) for activations a.
inline void k_sigmoid_derivative(DpuContext& ctx, const KernelArgs& args) {
  dispatch(args.a.type, [&]<class T>(std::type_identity<T>) {
    detail::elementwise<T, false>(ctx, args, [](T v) { return sigmoid_derivative<T>(v); });
  });
}

inline void k_mat_sub(DpuContext& ctx, const KernelArgs& args) {
  dispatch(args.a.type, [&]<class T>(std::type_identity<T>) {
    detail::elementwise<T, true>(ctx, args, [](T x, T y) { return subtract<T>(x, y); });
  });
}

inline void k_elemwise_mul(DpuContext& ctx, const KernelArgs& args) {
  dispatch(args.a.type, [&]<class T>(std::type_identity<T>) {
    detail::elementwise<T, true>(ctx, args, [](T x, T y) { return multiply<T>(x, y); });
  });
}

/// Registers the built-in kernels under their registry names.
inline void register_builtin_kernels(PimSystem& sys) {
  using namespace kernel_names;
  sys.register_kernel({std::string(kGemmMram), 3584, k_gemm_mram});
  sys.register_kernel({std::string(kGemmWram), 2560, k_gemm_wram});
  sys.register_kernel({std::string(kRelu), 768, k_relu});
  sys.register_kernel({std::string(kSigmoid), 2048, k_sigmoid});
  sys.register_kernel({std::string(kSigmoidDeriv), 896, k_sigmoid_derivative});
  sys.register_kernel({std::string(kMatSub), 896, k_mat_sub});
  sys.register_kernel({std::string(kEwMul), 1024, k_elemwise_mul});
}

/// Allocates `n` DPUs with the built-in kernels registered.
inline PimSystem allocate_dpus(std::uint32_t n, const SystemConfig& cfg = {}) {
  PimSystem sys = PimSystem::allocate(n, cfg);
  register_builtin_kernels(sys);
  return sys;
}

}  // namespace pimnn
