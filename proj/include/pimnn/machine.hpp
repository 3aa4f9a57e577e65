#pragma once

// Functional model of a PiM device set: DPU allocation, host<->MRAM parallel
// transfers, MRAM<->WRAM DMA and kernel launches over tasklets. All memory
// traffic is checked against capacity and the DMA alignment rule and is
// recorded in a transfer log.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "pimnn/error.hpp"
#include "pimnn/matrix.hpp"
#include "pimnn/rng.hpp"

namespace pimnn {

struct SystemConfig {
  std::uint32_t total_dpus = 2560;
  std::uint64_t mram_capacity = std::uint64_t{64} << 20;
  std::uint32_t wram_capacity = 64u << 10;
  std::uint32_t iram_capacity = 24u << 10;
  std::uint32_t dma_alignment = 8;
  std::uint32_t max_tasklets = 24;
  double dpu_clock_hz = 350e6;

  void validate() const {
    if (total_dpus == 0 || mram_capacity == 0 || wram_capacity == 0 || iram_capacity == 0)
      throw Error(ErrorCode::InvalidArgument, "system capacities must be positive");
    if (dma_alignment == 0 || (dma_alignment & (dma_alignment - 1)) != 0)
      throw Error(ErrorCode::InvalidArgument, "dma_alignment must be a power of two");
    if (max_tasklets == 0) throw Error(ErrorCode::InvalidArgument, "max_tasklets must be >= 1");
    if (!(dpu_clock_hz > 0)) throw Error(ErrorCode::InvalidArgument, "dpu_clock_hz must be positive");
  }
};

enum class TransferKind : std::uint8_t { HostToMram, MramToHost, MramToWram, WramToMram };
enum class DmaDirection : std::uint8_t { MramToWram, WramToMram };
enum class LaunchMode : std::uint8_t { Sync, Async };
enum class MemSpace : std::uint8_t { Mram, Wram };

constexpr std::string_view to_string(TransferKind k) {
  switch (k) {
    case TransferKind::HostToMram: return "HOST_TO_MRAM";
    case TransferKind::MramToHost: return "MRAM_TO_HOST";
    case TransferKind::MramToWram: return "MRAM_TO_WRAM";
    case TransferKind::WramToMram: return "WRAM_TO_MRAM";
  }
  return "?";
}

struct TransferRecord {
  std::uint64_t batch_id = 0;
  TransferKind kind = TransferKind::HostToMram;
  std::uint32_t dpu_id = 0;
  std::uint64_t offset = 0;  // MRAM offset
  std::uint32_t length = 0;

  friend bool operator==(const TransferRecord&, const TransferRecord&) = default;
};

inline void write_transfer_log_csv(std::ostream& os, std::span<const TransferRecord> log) {
  os << "batch_id,kind,dpu_id,offset,length\n";
  for (const auto& r : log)
    os << r.batch_id << ',' << to_string(r.kind) << ',' << r.dpu_id << ',' << r.offset << ',' << r.length << '\n';
}

struct DpuSet {
  std::vector<std::uint32_t> dpu_ids;
  LaunchMode launch_mode = LaunchMode::Sync;

  std::size_t size() const noexcept { return dpu_ids.size(); }
};

/// One DPU's share of a parallel host->MRAM transfer.
struct HostBlock {
  std::uint32_t dpu_id = 0;
  std::uint64_t offset = 0;
  std::span<const std::byte> data;
};

/// One DPU's share of a parallel MRAM->host transfer.
struct MramRange {
  std::uint32_t dpu_id = 0;
  std::uint64_t offset = 0;
  std::uint32_t length = 0;
};

// ---------------------------------------------------------------------------
// Kernel arguments
// ---------------------------------------------------------------------------

enum class Activation : std::uint8_t { None, Sigmoid, Relu };
enum class ExpMode : std::uint8_t { Fast, Exact };

/// A rows x cols block of elements stored contiguously (row-major) in one
/// DPU memory.
struct BlockDesc {
  MemSpace space = MemSpace::Mram;
  std::uint64_t offset = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  ElemType type = ElemType::FP32;

  std::uint64_t row_bytes() const noexcept { return std::uint64_t(cols) * elem_size(type); }
  std::uint64_t bytes() const noexcept { return std::uint64_t(rows) * row_bytes(); }
};

/// Arguments broadcast to a kernel. They reference DPU memory only.
struct KernelArgs {
  BlockDesc a, b, c;
  Activation activation = Activation::None;
  ExpMode exp_mode = ExpMode::Fast;
  std::uint32_t chunk_bytes = 0;  // MRAM streaming chunk, 0 = kernel default

  /// MRAM regions the kernel may touch.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> mram_regions() const {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
    for (const BlockDesc* d : {&a, &b, &c})
      if (d->space == MemSpace::Mram && d->bytes() > 0) out.emplace_back(d->offset, d->offset + d->bytes());
    return out;
  }
};

class DpuState;
class DpuContext;
class PimSystem;

using KernelFn = std::function<void(DpuContext&, const KernelArgs&)>;

struct KernelInfo {
  std::string name;
  std::uint32_t iram_bytes = 0;  // instruction-footprint estimate
  KernelFn fn;
};

// ---------------------------------------------------------------------------
// DPU state
// ---------------------------------------------------------------------------

/// Memories of one DPU. The host never writes WRAM; DMA and kernels do.
class DpuState {
 public:
  static constexpr std::uint64_t kPageBytes = 64u << 10;

  DpuState(std::uint32_t id, const SystemConfig& cfg, std::uint32_t tasklets)
      : id_(id), mram_capacity_(cfg.mram_capacity), wram_capacity_(cfg.wram_capacity), tasklets_(tasklets) {}

  std::uint32_t id() const noexcept { return id_; }
  std::uint32_t tasklet_count() const noexcept { return tasklets_; }

  /// Host-visible read of MRAM; never-written bytes read as zero.
  std::vector<std::byte> read_mram(std::uint64_t offset, std::uint64_t length) const {
    std::vector<std::byte> out(length, std::byte{0});
    copy_out(offset, out);
    return out;
  }

  /// Inspection-only view of WRAM contents.
  std::vector<std::byte> read_wram(std::uint32_t offset, std::uint32_t length) const {
    std::vector<std::byte> out(length, std::byte{0});
    if (!wram_.empty()) std::copy_n(wram_.begin() + offset, length, out.begin());
    return out;
  }

  bool wram_materialized() const noexcept { return !wram_.empty(); }

  /// Bytes of MRAM currently backed by host memory.
  std::uint64_t mram_resident_bytes() const noexcept {
    return kPageBytes * std::count_if(pages_.begin(), pages_.end(), [](const auto& p) { return p != nullptr; });
  }

 private:
  friend class PimSystem;
  friend class DpuContext;

  void copy_out(std::uint64_t offset, std::span<std::byte> dst) const {
    std::uint64_t done = 0;
    while (done < dst.size()) {
      const std::uint64_t addr = offset + done;
      const std::uint64_t page = addr / kPageBytes, in_page = addr % kPageBytes;
      const std::uint64_t n = std::min<std::uint64_t>(kPageBytes - in_page, dst.size() - done);
      if (page < pages_.size() && pages_[page]) {
        std::copy_n(pages_[page].get() + in_page, n, dst.begin() + done);
      } else {
        std::fill_n(dst.begin() + done, n, std::byte{0});
      }
      done += n;
    }
  }

  void write_mram(std::uint64_t offset, std::span<const std::byte> src) {
    std::uint64_t done = 0;
    while (done < src.size()) {
      const std::uint64_t addr = offset + done;
      const std::uint64_t page = addr / kPageBytes, in_page = addr % kPageBytes;
      const std::uint64_t n = std::min<std::uint64_t>(kPageBytes - in_page, src.size() - done);
      if (page >= pages_.size()) pages_.resize(page + 1);
      if (!pages_[page]) pages_[page] = std::make_unique<std::byte[]>(kPageBytes);  // value-initialized
      std::copy_n(src.begin() + done, n, pages_[page].get() + in_page);
      done += n;
    }
  }

  std::byte* wram_data() {
    if (wram_.empty()) wram_.assign(wram_capacity_, std::byte{0});
    return wram_.data();
  }

  std::uint32_t id_;
  std::uint64_t mram_capacity_;
  std::uint32_t wram_capacity_;
  std::uint32_t tasklets_;
  std::vector<std::unique_ptr<std::byte[]>> pages_;
  std::vector<std::byte> wram_;
};

struct DmaRecord {
  DmaDirection direction;
  std::uint64_t mram_offset;
  std::uint32_t length;
};

/// Kernel-side view of a single DPU for the duration of a launch.
/// MRAM is reachable only through DMA into WRAM, and only inside the MRAM
/// regions declared by the launch arguments.
class DpuContext {
 public:
  std::uint32_t dpu_id() const noexcept { return dpu_.id(); }
  std::uint32_t tasklets() const noexcept { return dpu_.tasklet_count(); }
  std::uint32_t wram_capacity() const noexcept { return dpu_.wram_capacity_; }

  void dma_to_wram(std::uint64_t mram_offset, std::uint32_t wram_offset, std::uint32_t length) {
    check_dma(mram_offset, wram_offset, length);
    dpu_.copy_out(mram_offset, std::span<std::byte>(dpu_.wram_data() + wram_offset, length));
    record(DmaDirection::MramToWram, mram_offset, length);
  }

  void dma_to_mram(std::uint32_t wram_offset, std::uint64_t mram_offset, std::uint32_t length) {
    check_dma(mram_offset, wram_offset, length);
    dpu_.write_mram(mram_offset, std::span<const std::byte>(dpu_.wram_data() + wram_offset, length));
    record(DmaDirection::WramToMram, mram_offset, length);
  }

  /// DMA `length` bytes starting `at` bytes into an MRAM block.
  void dma_in(const BlockDesc& block, std::uint64_t at, std::uint32_t wram_offset, std::uint32_t length) {
    check_in_block(block, at, length);
    dma_to_wram(block.offset + at, wram_offset, length);
  }

  void dma_out(std::uint32_t wram_offset, const BlockDesc& block, std::uint64_t at, std::uint32_t length) {
    check_in_block(block, at, length);
    dma_to_mram(wram_offset, block.offset + at, length);
  }

  std::span<std::byte> wram(std::uint32_t offset, std::uint32_t length) {
    check_wram(offset, length);
    return {dpu_.wram_data() + offset, length};
  }

  template <class T>
  std::span<T> wram_as(std::uint32_t offset, std::uint32_t count) {
    if (offset % alignof(T) != 0) fault("unaligned typed WRAM access", offset);
    auto bytes = wram(offset, static_cast<std::uint32_t>(count * sizeof(T)));
    return {reinterpret_cast<T*>(bytes.data()), count};
  }

  [[noreturn]] void fault(const std::string& what, std::uint64_t offset) const {
    throw Error(ErrorCode::KernelFault, what, dpu_.id(), offset);
  }

 private:
  friend class PimSystem;

  DpuContext(DpuState& dpu, const KernelArgs& args, std::uint32_t alignment, std::vector<DmaRecord>& log)
      : dpu_(dpu), regions_(args.mram_regions()), alignment_(alignment), log_(log) {}

  void check_in_block(const BlockDesc& block, std::uint64_t at, std::uint64_t length) const {
    if (block.space != MemSpace::Mram) fault("block is not in MRAM", block.offset);
    if (at + length > block.bytes()) fault("access past the end of its declared block", block.offset + at);
  }

  void check_wram(std::uint64_t offset, std::uint64_t length) const {
    if (offset + length > dpu_.wram_capacity_) fault("WRAM access out of range", offset);
  }

  void check_dma(std::uint64_t mram_offset, std::uint64_t wram_offset, std::uint64_t length) const {
    if (length == 0 || length % alignment_ != 0 || mram_offset % alignment_ != 0 || wram_offset % alignment_ != 0)
      fault("misaligned DMA of " + std::to_string(length) + " bytes", mram_offset);
    check_wram(wram_offset, length);
    if (mram_offset + length > dpu_.mram_capacity_) fault("MRAM access out of range", mram_offset);
    const bool declared = std::any_of(regions_.begin(), regions_.end(), [&](const auto& r) {
      return mram_offset >= r.first && mram_offset + length <= r.second;
    });
    if (!declared) fault("MRAM access outside declared blocks", mram_offset);
  }

  void record(DmaDirection d, std::uint64_t mram_offset, std::uint32_t length) {
    log_.push_back({d, mram_offset, length});
  }

  DpuState& dpu_;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> regions_;
  std::uint32_t alignment_;
  std::vector<DmaRecord>& log_;
};

// ---------------------------------------------------------------------------
// System
// ---------------------------------------------------------------------------

struct LaunchHandle {
  std::uint64_t id = 0;
};

enum class ExecutionOrder : std::uint8_t { Forward, Reverse, Shuffled };

/// How the simulator schedules DPUs within one launch. Results never depend
/// on these settings.
struct LaunchOptions {
  ExecutionOrder order = ExecutionOrder::Forward;
  std::uint64_t shuffle_seed = 0;
  unsigned threads = 1;
};

struct TransferStats {
  std::uint64_t allocations = 0;  // DPUs allocated
  std::uint64_t launches = 0;
  std::uint64_t host_to_mram_bytes = 0;
  std::uint64_t mram_to_host_bytes = 0;
  std::uint64_t dma_count = 0;
  std::uint64_t dma_bytes = 0;
};

class PimSystem {
 public:
  static constexpr std::uint32_t kDefaultTasklets = 16;

  /// Allocates `n` zero-initialized DPUs. Allocation happens once per system.
  static PimSystem allocate(std::uint32_t n, const SystemConfig& cfg = {}) {
    cfg.validate();
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "must allocate at least one DPU");
    if (n > cfg.total_dpus)
      throw Error(ErrorCode::OverAllocation,
                  "requested " + std::to_string(n) + " DPUs, system has " + std::to_string(cfg.total_dpus));
    return PimSystem(n, cfg);
  }

  PimSystem(PimSystem&&) noexcept = default;
  PimSystem& operator=(PimSystem&&) noexcept = default;
  PimSystem(const PimSystem&) = delete;
  PimSystem& operator=(const PimSystem&) = delete;

  const SystemConfig& config() const noexcept { return cfg_; }
  std::uint32_t size() const noexcept { return static_cast<std::uint32_t>(dpus_.size()); }
  const DpuState& dpu(std::uint32_t id) const { return dpus_.at(id); }

  DpuSet all(LaunchMode mode = LaunchMode::Sync) const { return first(size(), mode); }

  DpuSet first(std::uint32_t n, LaunchMode mode = LaunchMode::Sync) const {
    if (n > size()) throw Error(ErrorCode::OverAllocation, "subset larger than allocation");
    DpuSet s;
    s.dpu_ids.resize(n);
    std::iota(s.dpu_ids.begin(), s.dpu_ids.end(), 0u);
    s.launch_mode = mode;
    return s;
  }

  void register_kernel(KernelInfo info) {
    const std::string key = info.name;
    kernels_.insert_or_assign(key, std::move(info));
  }
  bool has_kernel(std::string_view name) const { return kernels_.find(std::string(name)) != kernels_.end(); }

  void set_tasklet_count(const DpuSet& set, std::uint32_t tasklets) {
    if (tasklets == 0 || tasklets > cfg_.max_tasklets)
      throw Error(ErrorCode::InvalidArgument, "tasklet count must be in [1, " + std::to_string(cfg_.max_tasklets) + "]");
    validate_set(set);
    for (auto id : set.dpu_ids) dpus_[id].tasklets_ = tasklets;
  }

  /// When false, MRAM<->WRAM DMA is counted in stats() but not logged.
  void set_record_dma(bool on) noexcept { record_dma_ = on; }

  /// Parallel host->MRAM transfer. All blocks must be the same length.
  std::uint64_t push_to_mram(const DpuSet& set, std::span<const HostBlock> blocks) {
    std::vector<MramRange> ranges;
    ranges.reserve(blocks.size());
    for (const auto& b : blocks) ranges.push_back({b.dpu_id, b.offset, static_cast<std::uint32_t>(b.data.size())});
    if (std::any_of(blocks.begin(), blocks.end(), [](const HostBlock& b) { return b.data.size() > UINT32_MAX; }))
      throw Error(ErrorCode::InvalidArgument, "block too large for one transfer");
    validate_parallel(set, ranges);
    const std::uint64_t batch = next_batch_++;
    for (const auto& b : blocks) {
      dpus_[b.dpu_id].write_mram(b.offset, b.data);
      log_.push_back({batch, TransferKind::HostToMram, b.dpu_id, b.offset, static_cast<std::uint32_t>(b.data.size())});
      stats_.host_to_mram_bytes += b.data.size();
    }
    return batch;
  }

  /// Parallel MRAM->host transfer, with the same equal-length rule as pushes.
  std::vector<std::vector<std::byte>> pull_from_mram(const DpuSet& set, std::span<const MramRange> ranges) {
    validate_parallel(set, ranges);
    const std::uint64_t batch = next_batch_++;
    std::vector<std::vector<std::byte>> out;
    out.reserve(ranges.size());
    for (const auto& r : ranges) {
      out.push_back(dpus_[r.dpu_id].read_mram(r.offset, r.length));
      log_.push_back({batch, TransferKind::MramToHost, r.dpu_id, r.offset, r.length});
      stats_.mram_to_host_bytes += r.length;
    }
    return out;
  }

  /// Single DMA between MRAM and WRAM on one DPU.
  void dpu_dma(std::uint32_t dpu_id, DmaDirection dir, std::uint64_t mram_offset, std::uint32_t wram_offset,
               std::uint32_t length) {
    if (dpu_id >= size()) throw Error(ErrorCode::InvalidArgument, "unknown DPU " + std::to_string(dpu_id));
    check_alignment(length, mram_offset);
    if (wram_offset % cfg_.dma_alignment != 0) throw Error(ErrorCode::Misaligned, "WRAM offset not aligned");
    if (std::uint64_t(wram_offset) + length > cfg_.wram_capacity)
      throw Error(ErrorCode::WramOverflow, "DMA of " + std::to_string(length) + " bytes at WRAM offset " +
                                               std::to_string(wram_offset) + " exceeds WRAM capacity");
    if (mram_offset + length > cfg_.mram_capacity)
      throw Error(ErrorCode::MramOverflow, "DMA exceeds MRAM capacity");
    check_not_busy(dpu_id, mram_offset, length);
    DpuState& d = dpus_[dpu_id];
    if (dir == DmaDirection::MramToWram) {
      d.copy_out(mram_offset, std::span<std::byte>(d.wram_data() + wram_offset, length));
    } else {
      d.write_mram(mram_offset, std::span<const std::byte>(d.wram_data() + wram_offset, length));
    }
    stats_.dma_count++;
    stats_.dma_bytes += length;
    if (record_dma_)
      log_.push_back({next_batch_, dir == DmaDirection::MramToWram ? TransferKind::MramToWram : TransferKind::WramToMram,
                      dpu_id, mram_offset, length});
    next_batch_++;
  }

  LaunchHandle launch(const DpuSet& set, std::string_view kernel, const KernelArgs& args, LaunchOptions opts = {}) {
    return launch(set, kernel, args, set.launch_mode, opts);
  }

  LaunchHandle launch(const DpuSet& set, std::string_view kernel, const KernelArgs& args, LaunchMode mode,
                      LaunchOptions opts = {}) {
    std::vector<KernelArgs> per_dpu(set.size(), args);
    return launch(set, kernel, std::span<const KernelArgs>(per_dpu), mode, opts);
  }

  /// Launch with per-DPU arguments (`per_dpu[i]` goes to `set.dpu_ids[i]`).
  LaunchHandle launch(const DpuSet& set, std::string_view kernel, std::span<const KernelArgs> per_dpu,
                      LaunchMode mode, LaunchOptions opts = {}) {
    validate_set(set);
    if (per_dpu.size() != set.size()) throw Error(ErrorCode::InvalidArgument, "one KernelArgs per DPU required");
    auto it = kernels_.find(std::string(kernel));
    if (it == kernels_.end()) throw Error(ErrorCode::UnknownKernel, "kernel '" + std::string(kernel) + "' not registered");
    if (it->second.iram_bytes > cfg_.iram_capacity)
      throw Error(ErrorCode::IramOverflow, "kernel '" + it->second.name + "' needs " +
                                               std::to_string(it->second.iram_bytes) + " bytes of IRAM");
    for (auto id : set.dpu_ids)
      for (const auto& p : pending_)
        if (std::find(p.set.dpu_ids.begin(), p.set.dpu_ids.end(), id) != p.set.dpu_ids.end())
          throw Error(ErrorCode::Busy, "DPU " + std::to_string(id) + " has a launch in flight");

    Pending p{next_launch_++, set, &it->second, std::vector<KernelArgs>(per_dpu.begin(), per_dpu.end()), opts};
    stats_.launches++;
    const LaunchHandle h{p.id};
    if (mode == LaunchMode::Sync) {
      execute(p);
    } else {
      pending_.push_back(std::move(p));
    }
    return h;
  }

  bool in_flight(LaunchHandle h) const {
    return std::any_of(pending_.begin(), pending_.end(), [&](const Pending& p) { return p.id == h.id; });
  }

  /// Completes an asynchronous launch. Waiting on a finished launch is a no-op.
  void wait(LaunchHandle h) {
    auto it = std::find_if(pending_.begin(), pending_.end(), [&](const Pending& p) { return p.id == h.id; });
    if (it == pending_.end()) return;
    Pending p = std::move(*it);
    pending_.erase(it);
    execute(p);
  }

  void wait_all() {
    while (!pending_.empty()) wait({pending_.front().id});
  }

  const std::vector<TransferRecord>& transfer_log() const noexcept { return log_; }
  void clear_transfer_log() { log_.clear(); }

  TransferStats stats() const noexcept { return stats_; }

 private:
  struct Pending {
    std::uint64_t id;
    DpuSet set;
    const KernelInfo* kernel;
    std::vector<KernelArgs> args;
    LaunchOptions opts;
  };

  PimSystem(std::uint32_t n, const SystemConfig& cfg) : cfg_(cfg) {
    const std::uint32_t tasklets = std::min(kDefaultTasklets, cfg.max_tasklets);
    dpus_.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) dpus_.emplace_back(i, cfg_, tasklets);
    stats_.allocations = n;
  }

  void validate_set(const DpuSet& set) const {
    if (set.dpu_ids.empty()) throw Error(ErrorCode::InvalidArgument, "empty DPU set");
    std::vector<std::uint32_t> ids = set.dpu_ids;
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
      throw Error(ErrorCode::InvalidArgument, "duplicate DPU in set");
    if (ids.back() >= size()) throw Error(ErrorCode::InvalidArgument, "DPU " + std::to_string(ids.back()) + " not allocated");
  }

  void check_alignment(std::uint64_t length, std::uint64_t offset) const {
    if (length % cfg_.dma_alignment != 0)
      throw Error(ErrorCode::Misaligned, "transfer length " + std::to_string(length) + " is not a multiple of " +
                                             std::to_string(cfg_.dma_alignment));
    if (offset % cfg_.dma_alignment != 0)
      throw Error(ErrorCode::Misaligned, "MRAM offset " + std::to_string(offset) + " is not aligned");
    if (length == 0) throw Error(ErrorCode::InvalidArgument, "zero-length transfer");
  }

  void validate_parallel(const DpuSet& set, std::span<const MramRange> ranges) const {
    if (ranges.empty()) throw Error(ErrorCode::InvalidArgument, "empty transfer batch");
    validate_set(set);
    std::vector<std::uint32_t> seen;
    for (const auto& r : ranges) {
      if (std::find(set.dpu_ids.begin(), set.dpu_ids.end(), r.dpu_id) == set.dpu_ids.end())
        throw Error(ErrorCode::InvalidArgument, "DPU " + std::to_string(r.dpu_id) + " is not in the set");
      if (std::find(seen.begin(), seen.end(), r.dpu_id) != seen.end())
        throw Error(ErrorCode::InvalidArgument, "DPU " + std::to_string(r.dpu_id) + " appears twice in one batch");
      seen.push_back(r.dpu_id);
    }
    for (const auto& r : ranges) check_alignment(r.length, r.offset);
    for (const auto& r : ranges)
      if (r.length != ranges.front().length)
        throw Error(ErrorCode::UnequalBlocks, "parallel transfer blocks differ in size (" +
                                                  std::to_string(ranges.front().length) + " vs " +
                                                  std::to_string(r.length) + ")");
    for (const auto& r : ranges)
      if (r.offset + r.length > cfg_.mram_capacity)
        throw Error(ErrorCode::MramOverflow, "transfer of " + std::to_string(r.length) + " bytes at offset " +
                                                 std::to_string(r.offset) + " exceeds MRAM capacity");
    for (const auto& r : ranges) check_not_busy(r.dpu_id, r.offset, r.length);
  }

  void check_not_busy(std::uint32_t dpu_id, std::uint64_t offset, std::uint64_t length) const {
    for (const auto& p : pending_) {
      for (std::size_t i = 0; i < p.set.dpu_ids.size(); ++i) {
        if (p.set.dpu_ids[i] != dpu_id) continue;
        for (const auto& [lo, hi] : p.args[i].mram_regions())
          if (offset < hi && lo < offset + length)
            throw Error(ErrorCode::Busy, "MRAM region in use by an asynchronous launch", dpu_id, offset);
      }
    }
  }

  void execute(const Pending& p) {
    const std::size_t n = p.set.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (p.opts.order == ExecutionOrder::Reverse) std::reverse(order.begin(), order.end());
    if (p.opts.order == ExecutionOrder::Shuffled) {
      Rng rng(p.opts.shuffle_seed);
      rng.shuffle(order.begin(), order.end());
    }

    std::vector<std::vector<DmaRecord>> dma(n);
    std::vector<std::exception_ptr> errors(n);
    auto run_one = [&](std::size_t slot) {
      try {
        DpuContext ctx(dpus_[p.set.dpu_ids[slot]], p.args[slot], cfg_.dma_alignment, dma[slot]);
        p.kernel->fn(ctx, p.args[slot]);
      } catch (...) {
        errors[slot] = std::current_exception();
      }
    };

    const unsigned threads = std::max(1u, std::min<unsigned>(p.opts.threads, static_cast<unsigned>(n)));
    if (threads == 1) {
      for (auto slot : order) run_one(slot);
    } else {
      std::vector<std::jthread> workers;
      for (unsigned w = 0; w < threads; ++w)
        workers.emplace_back([&, w] {
          for (std::size_t k = w; k < n; k += threads) run_one(order[k]);
        });
    }

    // Merge per-DPU logs in set order so the log is independent of scheduling.
    for (std::size_t slot = 0; slot < n; ++slot) {
      for (const auto& r : dma[slot]) {
        stats_.dma_count++;
        stats_.dma_bytes += r.length;
        if (record_dma_)
          log_.push_back({next_batch_,
                          r.direction == DmaDirection::MramToWram ? TransferKind::MramToWram : TransferKind::WramToMram,
                          p.set.dpu_ids[slot], r.mram_offset, r.length});
        next_batch_++;
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  SystemConfig cfg_;
  std::vector<DpuState> dpus_;
  std::map<std::string, KernelInfo, std::less<>> kernels_;
  std::vector<TransferRecord> log_;
  std::vector<Pending> pending_;
  TransferStats stats_;
  std::uint64_t next_batch_ = 0;
  std::uint64_t next_launch_ = 1;
  bool record_dma_ = true;
};

}  // namespace pimnn
