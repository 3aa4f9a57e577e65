#pragma once

// Host side of one distributed GEMM: plan, scatter A and B^T blocks with
// two parallel pushes, launch the GEMM kernel (with the activation fused
// into the resident C block), gather the C blocks and crop padding.

#include <cstdint>
#include <cstring>
#include <vector>

#include "pimnn/kernels.hpp"
#include "pimnn/machine.hpp"
#include "pimnn/matrix.hpp"
#include "pimnn/planner.hpp"

namespace pimnn {

struct GemmOptions {
  std::uint32_t n1 = 1;
  std::uint32_t n2 = 1;
  std::uint32_t tasklets = 16;
  Placement placement = Placement::MramStream;
  Activation activation = Activation::None;
  ExpMode exp_mode = ExpMode::Fast;
  LaunchMode mode = LaunchMode::Sync;
  LaunchOptions launch;
};

struct GemmResult {
  MatrixBuf c;  // logical rows(A) x cols(B), row-major
  PartitionPlan plan;
};

/// A blocks stacked in DPU transfer order: block i is rows [i*ra, (i+1)*ra).
inline MatrixBuf layout_a_blocks(const MatrixBuf& a, const PartitionPlan& plan) {
  const MatrixBuf rm = a.layout() == Layout::RowMajor ? a : to_layout(a, Layout::RowMajor);
  return pad_to(rm, plan.a_block_rows * plan.n1, plan.k_padded);
}

/// B^T lines regrouped so block j occupies lines [j*lines, (j+1)*lines),
/// carrying logical columns b_blocks[j] followed by zero lines.
inline MatrixBuf layout_b_blocks(const MatrixBuf& b, const PartitionPlan& plan) {
  MatrixBuf out(b.elem_type(), plan.k_padded, plan.b_block_lines * plan.n2, Layout::ColMajor);
  const std::size_t es = b.elem_bytes();
  for (std::uint32_t j = 0; j < plan.n2; ++j) {
    const RowRange cols = plan.b_blocks[j];
    for (std::uint32_t col = cols.begin; col < cols.end; ++col) {
      const std::uint32_t line = j * plan.b_block_lines + (col - cols.begin);
      for (std::uint32_t r = 0; r < b.rows(); ++r)
        std::memcpy(out.storage().data() + out.offset_of(r, line), b.storage().data() + b.offset_of(r, col), es);
    }
  }
  return out;
}

/// Scatters operands of `plan` onto the first plan.dpus() DPUs of `sys`.
inline void scatter_operands(PimSystem& sys, const DpuSet& set, const PartitionPlan& plan, const MatrixBuf& a_blocks,
                             const MatrixBuf& b_blocks) {
  std::vector<HostBlock> pa, pb;
  pa.reserve(plan.dpus());
  pb.reserve(plan.dpus());
  for (std::uint32_t d = 0; d < plan.dpus(); ++d) {
    const auto [i, j] = plan.assignment[d];
    pa.push_back({set.dpu_ids[d], plan.a_offset, a_blocks.lines(i * plan.a_block_rows, plan.a_block_rows)});
    pb.push_back({set.dpu_ids[d], plan.b_offset, b_blocks.lines(j * plan.b_block_lines, plan.b_block_lines)});
  }
  sys.push_to_mram(set, pa);
  sys.push_to_mram(set, pb);
}

/// Pulls every C block and assembles the logical product.
inline MatrixBuf gather_result(PimSystem& sys, const DpuSet& set, const PartitionPlan& plan) {
  std::vector<MramRange> ranges;
  ranges.reserve(plan.dpus());
  for (std::uint32_t d = 0; d < plan.dpus(); ++d)
    ranges.push_back({set.dpu_ids[d], plan.c_offset, static_cast<std::uint32_t>(plan.c_block_bytes)});
  const auto blocks = sys.pull_from_mram(set, ranges);

  MatrixBuf c(plan.shape.type, plan.shape.rows, plan.shape.cols);
  const std::size_t es = elem_size(plan.shape.type);
  for (std::uint32_t d = 0; d < plan.dpus(); ++d) {
    const auto [i, j] = plan.assignment[d];
    const RowRange rows = plan.a_blocks[i], cols = plan.b_blocks[j];
    for (std::uint32_t r = rows.begin; r < rows.end; ++r) {
      const std::size_t src = (std::size_t(r - rows.begin) * plan.b_block_lines) * es;
      std::memcpy(c.storage().data() + c.offset_of(r, cols.begin), blocks[d].data() + src,
                  std::size_t(cols.end - cols.begin) * es);
    }
  }
  return c;
}

/// C = act(A * B) executed across N1 * N2 DPUs of `sys`.
inline GemmResult distributed_gemm(PimSystem& sys, const MatrixBuf& a, const MatrixBuf& b, const GemmOptions& opt) {
  PartitionPlan plan = make_plan(a, b, opt.n1, opt.n2, opt.tasklets, opt.placement, sys.config(), sys.size());
  const DpuSet set = sys.first(plan.dpus(), opt.mode);
  scatter_operands(sys, set, plan, layout_a_blocks(a, plan), layout_b_blocks(b, plan));
  sys.set_tasklet_count(set, opt.tasklets);
  const LaunchHandle h = sys.launch(set, plan.kernel_name(), plan.kernel_args(opt.activation, opt.exp_mode), opt.mode, opt.launch);
  sys.wait(h);
  return {gather_result(sys, set, plan), std::move(plan)};
}

}  // namespace pimnn
