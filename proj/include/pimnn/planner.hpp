#pragma once

// Block partitioning of C = A * B across N = N1 * N2 DPUs.
//
// A (C_rows x K, row-major) is cut into N1 row blocks of ceil(C_rows / N1)
// rows; B (K x M) is sent as B^T and cut into N2 blocks of ceil(M / N2)
// B^T rows. DPU d = i * N2 + j receives A block i and B block j, so every
// A block lives on N2 DPUs and every B block on N1 DPUs. Blocks are padded
// to one common size because parallel transfers need equal lengths.

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "pimnn/error.hpp"
#include "pimnn/kernels.hpp"
#include "pimnn/machine.hpp"
#include "pimnn/matrix.hpp"

namespace pimnn {

enum class Placement : std::uint8_t { MramStream, WramResident };

constexpr std::string_view to_string(Placement p) {
  return p == Placement::MramStream ? "mram" : "wram";
}

inline Placement parse_placement(std::string_view s) {
  if (s == "mram" || s == "MRAM_STREAM") return Placement::MramStream;
  if (s == "wram" || s == "WRAM_RESIDENT") return Placement::WramResident;
  throw Error(ErrorCode::InvalidArgument, "unknown placement '" + std::string(s) + "'");
}

/// Logical GEMM shape: (rows x k) * (k x cols).
struct GemmShape {
  std::uint32_t rows = 0;
  std::uint32_t k = 0;
  std::uint32_t cols = 0;
  ElemType type = ElemType::FP32;
};

struct BlockAssignment {
  std::uint32_t a_block = 0;
  std::uint32_t b_block = 0;
};

struct PartitionPlan {
  GemmShape shape;
  Placement placement = Placement::MramStream;
  std::uint32_t n1 = 1, n2 = 1;
  std::uint32_t tasklets = 16;
  std::uint32_t tasklet_rows = 0;  // rows per tasklet

  std::uint32_t a_block_rows = 0;  // padded rows per A block
  std::uint32_t k_padded = 0;      // padded A row / B^T row length
  std::uint32_t b_block_lines = 0; // padded B^T rows per B block (= C block cols)
  std::vector<RowRange> a_blocks;  // logical row ranges of A
  std::vector<RowRange> b_blocks;  // logical row ranges of B^T (column ranges of B)
  std::vector<BlockAssignment> assignment;  // indexed by DPU

  std::uint64_t replication_numerator = 0;    // dim(A)*N2 + dim(B)*N1
  std::uint64_t replication_denominator = 0;  // dim(A) + dim(B)
  double replication_rate_pct = 0;

  std::uint64_t a_block_bytes = 0, b_block_bytes = 0, c_block_bytes = 0;
  std::uint64_t a_offset = 0, b_offset = 0, c_offset = 0;  // MRAM layout per DPU
  std::uint64_t per_dpu_bytes = 0;
  std::uint64_t capacity_bytes = 0;  // budget the footprint was checked against
  std::uint32_t chunk_bytes = 0;     // MRAM streaming chunk

  std::uint32_t dpus() const noexcept { return n1 * n2; }

  std::uint32_t dpu_of(std::uint32_t a_block, std::uint32_t b_block) const noexcept { return a_block * n2 + b_block; }

  KernelArgs kernel_args(Activation act = Activation::None, ExpMode mode = ExpMode::Fast) const {
    KernelArgs args;
    args.a = {MemSpace::Mram, a_offset, a_block_rows, k_padded, shape.type};
    args.b = {MemSpace::Mram, b_offset, b_block_lines, k_padded, shape.type};
    args.c = {MemSpace::Mram, c_offset, a_block_rows, b_block_lines, shape.type};
    args.activation = act;
    args.exp_mode = mode;
    args.chunk_bytes = chunk_bytes;
    return args;
  }

  std::string_view kernel_name() const {
    return placement == Placement::MramStream ? kernel_names::kGemmMram : kernel_names::kGemmWram;
  }
};

/// R(%) = (dim(A) * N2 + dim(B) * N1) / (dim(A) + dim(B)) * 100, evaluated
/// as an exact integer ratio with a single final rounding.
inline double replication_rate(std::uint64_t dim_a, std::uint64_t dim_b, std::uint64_t n1, std::uint64_t n2) {
  if (dim_a == 0 || dim_b == 0 || n1 == 0 || n2 == 0)
    throw Error(ErrorCode::InvalidArgument, "replication_rate inputs must be >= 1");
  const std::uint64_t num = (dim_a * n2 + dim_b * n1) * 100;
  const std::uint64_t den = dim_a + dim_b;
  if (num >= (std::uint64_t{1} << 53) || den >= (std::uint64_t{1} << 53))
    throw Error(ErrorCode::InvalidArgument, "replication_rate operands exceed exact double range");
  return static_cast<double>(num) / static_cast<double>(den);
}

/// Rows each of T tasklets processes: ceil(ceil(C / N1) / T).
inline std::uint32_t tasklet_rows(std::uint32_t c_rows, std::uint32_t n1, std::uint32_t tasklets) {
  if (c_rows == 0 || n1 == 0 || tasklets == 0) throw Error(ErrorCode::InvalidArgument, "tasklet_rows inputs must be >= 1");
  return static_cast<std::uint32_t>(ceil_div(ceil_div(c_rows, n1), tasklets));
}

inline std::vector<RowRange> split_rows(std::uint32_t total, std::uint32_t blocks) {
  const auto per = static_cast<std::uint32_t>(ceil_div(total, blocks));
  std::vector<RowRange> out;
  out.reserve(blocks);
  for (std::uint32_t i = 0; i < blocks; ++i) {
    const std::uint32_t begin = std::min<std::uint64_t>(std::uint64_t(i) * per, total);
    out.push_back({begin, std::min<std::uint32_t>(begin + per, total)});
  }
  return out;
}

/// Validates a split and computes block sizes, MRAM layout and footprint.
/// `allocated_dpus` bounds N1 * N2 (defaults to the whole system).
inline PartitionPlan make_plan(const GemmShape& shape, std::uint32_t n1, std::uint32_t n2, std::uint32_t tasklets,
                               Placement placement, const SystemConfig& config, std::uint32_t allocated_dpus = 0) {
  if (allocated_dpus == 0) allocated_dpus = config.total_dpus;
  if (shape.rows == 0 || shape.k == 0 || shape.cols == 0) throw Error(ErrorCode::DimError, "empty GEMM operand");
  if (n1 == 0 || n2 == 0) throw Error(ErrorCode::InvalidArgument, "N1 and N2 must be >= 1");
  if (n1 > shape.rows)
    throw Error(ErrorCode::InvalidArgument, "N1=" + std::to_string(n1) + " exceeds the " + std::to_string(shape.rows) + " rows of A");
  if (n2 > shape.cols)
    throw Error(ErrorCode::InvalidArgument, "N2=" + std::to_string(n2) + " exceeds the " + std::to_string(shape.cols) + " columns of B");
  if (std::uint64_t(n1) * n2 > allocated_dpus)
    throw Error(ErrorCode::OverAllocation, "N1*N2=" + std::to_string(std::uint64_t(n1) * n2) + " exceeds " +
                                               std::to_string(allocated_dpus) + " allocated DPUs");
  if (tasklets == 0 || tasklets > config.max_tasklets)
    throw Error(ErrorCode::InvalidArgument, "tasklets must be in [1, " + std::to_string(config.max_tasklets) + "]");
  if (placement == Placement::WramResident && n2 != 1)
    throw Error(ErrorCode::InvalidArgument, "WRAM-resident plans replicate all of B on every DPU (N2 must be 1)");

  PartitionPlan p;
  p.shape = shape;
  p.placement = placement;
  p.n1 = n1;
  p.n2 = n2;
  p.tasklets = tasklets;
  p.tasklet_rows = tasklet_rows(shape.rows, n1, tasklets);
  p.a_block_rows = static_cast<std::uint32_t>(ceil_div(shape.rows, n1));
  p.k_padded = static_cast<std::uint32_t>(aligned_line_length(shape.k, shape.type));
  p.b_block_lines = static_cast<std::uint32_t>(aligned_line_length(ceil_div(shape.cols, n2), shape.type));
  p.a_blocks = split_rows(shape.rows, n1);
  p.b_blocks = split_rows(shape.cols, n2);
  p.assignment.reserve(std::size_t(n1) * n2);
  for (std::uint32_t i = 0; i < n1; ++i)
    for (std::uint32_t j = 0; j < n2; ++j) p.assignment.push_back({i, j});

  const std::uint64_t dim_a = std::uint64_t(shape.rows) * shape.k;
  const std::uint64_t dim_b = std::uint64_t(shape.k) * shape.cols;
  p.replication_numerator = dim_a * n2 + dim_b * n1;
  p.replication_denominator = dim_a + dim_b;
  p.replication_rate_pct = replication_rate(dim_a, dim_b, n1, n2);

  const std::size_t es = elem_size(shape.type);
  p.a_block_bytes = std::uint64_t(p.a_block_rows) * p.k_padded * es;
  p.b_block_bytes = std::uint64_t(p.b_block_lines) * p.k_padded * es;
  p.c_block_bytes = std::uint64_t(p.a_block_rows) * p.b_block_lines * es;
  p.a_offset = 0;
  p.b_offset = p.a_block_bytes;
  p.c_offset = p.b_offset + p.b_block_bytes;
  p.per_dpu_bytes = p.a_block_bytes + p.b_block_bytes + p.c_block_bytes;

  auto too_large = [&](std::string_view what, std::uint64_t need, std::uint64_t have) {
    std::ostringstream os;
    os << what << " capacity exceeded: plan needs " << need << " bytes per DPU, " << what << " budget is " << have
       << " bytes";
    return Error(ErrorCode::BlockTooLarge, os.str());
  };

  // the WRAM budget binds first for resident plans
  const std::uint32_t usable = wram_usable_bytes(config.wram_capacity);
  if (placement == Placement::WramResident && p.per_dpu_bytes > usable) throw too_large("WRAM", p.per_dpu_bytes, usable);
  if (p.per_dpu_bytes > config.mram_capacity) throw too_large("MRAM", p.per_dpu_bytes, config.mram_capacity);
  if (placement == Placement::WramResident) {
    p.capacity_bytes = usable;
  } else {
    p.capacity_bytes = config.mram_capacity;
    p.chunk_bytes = stream_chunk_bytes(usable, std::uint64_t(p.k_padded) * es, p.b_block_lines);
    if (p.chunk_bytes == 0)
      throw too_large("WRAM", 8ull * p.b_block_lines + 16, usable);
  }
  return p;
}

/// Plan for concrete operands: `a` is C_rows x K, `b` is K x M.
inline PartitionPlan make_plan(const MatrixBuf& a, const MatrixBuf& b, std::uint32_t n1, std::uint32_t n2,
                               std::uint32_t tasklets, Placement placement, const SystemConfig& config,
                               std::uint32_t allocated_dpus = 0) {
  if (a.cols() != b.rows())
    throw Error(ErrorCode::DimMismatch, "A is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " but B is " +
                                            std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  if (a.elem_type() != b.elem_type()) throw Error(ErrorCode::DimMismatch, "A and B element types differ");
  return make_plan(GemmShape{a.rows(), a.cols(), b.cols(), a.elem_type()}, n1, n2, tasklets, placement, config,
                   allocated_dpus);
}

}  // namespace pimnn
