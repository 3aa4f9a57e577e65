#pragma once

// Analytical timing model for one inference pass of a layered workload:
//
//   alloc_s  = per_dpu_alloc_s * N                        (once per run)
//   push_s   = sum over layers of pushed bytes / host_mram_bw
//   pull_s   = sum over layers of pulled bytes / host_mram_bw
//   stage_s  = per-DPU MRAM->WRAM->MRAM bytes / mram_wram_bw (WRAM_RESIDENT only)
//   kernel_s = per_launch_s + instructions * issue_cycles / (clock * min(T, 11))
//   total_s  = alloc_s + push_s + stage_s + kernel_s + pull_s
//
// Streaming through WRAM in MRAM_STREAM plans is folded into instr_per_mac.
// Default constants are calibrated, not measured.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pimnn/error.hpp"
#include "pimnn/machine.hpp"
#include "pimnn/matrix.hpp"
#include "pimnn/planner.hpp"

namespace pimnn {

inline constexpr std::uint32_t kCostParamsVersion = 1;

struct CostParams {
  std::uint32_t version = kCostParamsVersion;
  double dpu_clock_hz = 350e6;
  double issue_cycles_per_instr = 11;
  std::uint32_t saturation_tasklets = 11;
  double instr_per_mac_int8 = 3;
  double instr_per_mac_int32 = 16;
  double instr_per_mac_fp32 = 32;
  double instr_per_sigmoid = 64;
  double instr_per_relu = 2;
  double host_mram_bw = 6e9;
  double mram_wram_bw = 600e6;
  double per_dpu_alloc_s = 1.8e-4;
  double per_launch_s = 1e-4;

  double instr_per_mac(ElemType t) const {
    switch (t) {
      case ElemType::INT8: return instr_per_mac_int8;
      case ElemType::INT32: return instr_per_mac_int32;
      case ElemType::FP32: return instr_per_mac_fp32;
    }
    return instr_per_mac_fp32;
  }

  double instr_per_activation(Activation a) const {
    switch (a) {
      case Activation::Sigmoid: return instr_per_sigmoid;
      case Activation::Relu: return instr_per_relu;
      case Activation::None: return 0;
    }
    return 0;
  }

  void validate() const {
    if (version != kCostParamsVersion)
      throw Error(ErrorCode::InvalidArgument, "unsupported cost parameter version " + std::to_string(version));
    const double positive[] = {dpu_clock_hz,       issue_cycles_per_instr, instr_per_mac_int8, instr_per_mac_int32,
                               instr_per_mac_fp32, instr_per_sigmoid,      instr_per_relu,     host_mram_bw,
                               mram_wram_bw,       per_dpu_alloc_s,        per_launch_s};
    for (double v : positive)
      if (!(v > 0)) throw Error(ErrorCode::InvalidArgument, "cost parameters must be positive");
    if (saturation_tasklets == 0) throw Error(ErrorCode::InvalidArgument, "saturation_tasklets must be >= 1");
    if (!(instr_per_mac_int8 <= instr_per_mac_int32 && instr_per_mac_int32 <= instr_per_mac_fp32))
      throw Error(ErrorCode::InvalidArgument, "instr_per_mac must satisfy int8 <= int32 <= fp32");
  }

  bool operator==(const CostParams&) const = default;
};

inline void to_json(nlohmann::json& j, const CostParams& p) {
  j = nlohmann::json{{"version", p.version},
                     {"dpu_clock_hz", p.dpu_clock_hz},
                     {"issue_cycles_per_instr", p.issue_cycles_per_instr},
                     {"saturation_tasklets", p.saturation_tasklets},
                     {"instr_per_mac", {{"int8", p.instr_per_mac_int8}, {"int32", p.instr_per_mac_int32}, {"fp32", p.instr_per_mac_fp32}}},
                     {"instr_per_activation", {{"sigmoid", p.instr_per_sigmoid}, {"relu", p.instr_per_relu}}},
                     {"host_mram_bw", p.host_mram_bw},
                     {"mram_wram_bw", p.mram_wram_bw},
                     {"per_dpu_alloc_s", p.per_dpu_alloc_s},
                     {"per_launch_s", p.per_launch_s}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, CostParams& p) {
  static const char* known[] = {"version",          "dpu_clock_hz",         "issue_cycles_per_instr", "saturation_tasklets",
                                "instr_per_mac",    "instr_per_activation", "host_mram_bw",           "mram_wram_bw",
                                "per_dpu_alloc_s",  "per_launch_s",         "comment"};
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "cost parameters must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known))
      throw Error(ErrorCode::ParseError, "unknown cost parameter '" + key + "'");
  try {
    auto opt = [&](const nlohmann::json& o, const char* key, auto& field) {
      if (o.contains(key)) o.at(key).get_to(field);
    };
    opt(j, "version", p.version);
    opt(j, "dpu_clock_hz", p.dpu_clock_hz);
    opt(j, "issue_cycles_per_instr", p.issue_cycles_per_instr);
    opt(j, "saturation_tasklets", p.saturation_tasklets);
    if (j.contains("instr_per_mac")) {
      const auto& m = j.at("instr_per_mac");
      opt(m, "int8", p.instr_per_mac_int8);
      opt(m, "int32", p.instr_per_mac_int32);
      opt(m, "fp32", p.instr_per_mac_fp32);
    }
    if (j.contains("instr_per_activation")) {
      const auto& a = j.at("instr_per_activation");
      opt(a, "sigmoid", p.instr_per_sigmoid);
      opt(a, "relu", p.instr_per_relu);
    }
    opt(j, "host_mram_bw", p.host_mram_bw);
    opt(j, "mram_wram_bw", p.mram_wram_bw);
    opt(j, "per_dpu_alloc_s", p.per_dpu_alloc_s);
    opt(j, "per_launch_s", p.per_launch_s);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("cost parameters: ") + e.what());
  }
}

inline CostParams parse_cost_params(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("cost parameters: ") + e.what());
  }
  CostParams p = j.get<CostParams>();
  p.validate();
  return p;
}

inline CostParams load_cost_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_cost_params(text);
}

inline std::uint32_t effective_parallel_tasklets(std::uint32_t t, std::uint32_t saturation = 11) {
  return std::min(t, saturation);
}

// ---------------------------------------------------------------------------
// Per-phase estimates
// ---------------------------------------------------------------------------

/// Work done by one DPU in one launch.
struct KernelWork {
  std::uint64_t macs = 0;
  std::uint64_t activated = 0;  // output elements passed through the activation
  Activation activation = Activation::None;
  ElemType type = ElemType::FP32;
  std::uint32_t tasklets = 16;
  std::uint32_t launches = 1;
};

/// Padded block sizes are used: padding rows and lines cost cycles too.
inline KernelWork kernel_work(const PartitionPlan& plan, Activation act) {
  KernelWork w;
  w.macs = std::uint64_t(plan.a_block_rows) * plan.k_padded * plan.b_block_lines;
  w.activated = act == Activation::None ? 0 : std::uint64_t(plan.a_block_rows) * plan.b_block_lines;
  w.activation = act;
  w.type = plan.shape.type;
  w.tasklets = plan.tasklets;
  return w;
}

inline double estimate_kernel_s(const KernelWork& w, const CostParams& p) {
  if (w.tasklets == 0) throw Error(ErrorCode::InvalidArgument, "tasklets must be >= 1");
  const double instr = double(w.macs) * p.instr_per_mac(w.type) + double(w.activated) * p.instr_per_activation(w.activation);
  const double parallel = effective_parallel_tasklets(w.tasklets, p.saturation_tasklets);
  return p.per_launch_s * w.launches + instr * p.issue_cycles_per_instr / (p.dpu_clock_hz * parallel);
}

inline double estimate_kernel_s(const PartitionPlan& plan, Activation act, const CostParams& p) {
  return estimate_kernel_s(kernel_work(plan, act), p);
}

struct TransferBytes {
  std::uint64_t push_a = 0;     // all DPUs, A blocks
  std::uint64_t push_b = 0;     // all DPUs, B blocks
  std::uint64_t pull = 0;       // all DPUs, C blocks
  std::uint64_t staged = 0;     // per DPU, MRAM<->WRAM (WRAM_RESIDENT only)
  std::uint64_t push() const noexcept { return push_a + push_b; }
};

inline TransferBytes transfer_bytes(const PartitionPlan& plan) {
  TransferBytes t;
  t.push_a = std::uint64_t(plan.dpus()) * plan.a_block_bytes;
  t.push_b = std::uint64_t(plan.dpus()) * plan.b_block_bytes;
  t.pull = std::uint64_t(plan.dpus()) * plan.c_block_bytes;
  if (plan.placement == Placement::WramResident) t.staged = plan.per_dpu_bytes;
  return t;
}

struct TransferCost {
  double push_s = 0, stage_s = 0, pull_s = 0;
  double total() const noexcept { return push_s + stage_s + pull_s; }
};

inline TransferCost estimate_transfer_s(const TransferBytes& b, const CostParams& p) {
  return {double(b.push()) / p.host_mram_bw, double(b.staged) / p.mram_wram_bw, double(b.pull) / p.host_mram_bw};
}

inline TransferCost estimate_transfer_s(const PartitionPlan& plan, const CostParams& p) {
  return estimate_transfer_s(transfer_bytes(plan), p);
}

// ---------------------------------------------------------------------------
// Workloads and reports
// ---------------------------------------------------------------------------

struct LayerWork {
  GemmShape shape;
  Activation activation = Activation::Sigmoid;
};

struct Workload {
  std::string name;
  std::vector<LayerWork> layers;
  Placement placement = Placement::MramStream;
  std::uint32_t tasklets = 16;
};

/// Feedforward workload for `batch` samples through `layer_sizes`.
inline Workload make_workload(std::string name, const std::vector<std::uint32_t>& layer_sizes, std::uint32_t batch,
                              ElemType type, Placement placement = Placement::MramStream, std::uint32_t tasklets = 16,
                              Activation act = Activation::Sigmoid) {
  if (layer_sizes.size() < 2 || batch == 0) throw Error(ErrorCode::InvalidArgument, "workload needs a batch and two layer sizes");
  Workload w{std::move(name), {}, placement, tasklets};
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    w.layers.push_back({GemmShape{batch, layer_sizes[l], layer_sizes[l + 1], type}, act});
  return w;
}

struct LayerCost {
  std::uint32_t n1 = 1, n2 = 1;
  std::uint64_t per_dpu_bytes = 0;
  double replication_rate_pct = 0;
  double push_s = 0, stage_s = 0, kernel_s = 0, pull_s = 0;
  double total() const noexcept { return push_s + stage_s + kernel_s + pull_s; }
};

struct CostReport {
  std::uint32_t dpus = 0;
  double alloc_s = 0, push_s = 0, stage_s = 0, kernel_s = 0, pull_s = 0, total_s = 0;
  std::vector<LayerCost> layers;
};

inline LayerCost estimate_layer(const PartitionPlan& plan, Activation act, const CostParams& p) {
  const TransferCost t = estimate_transfer_s(plan, p);
  LayerCost c;
  c.n1 = plan.n1;
  c.n2 = plan.n2;
  c.per_dpu_bytes = plan.per_dpu_bytes;
  c.replication_rate_pct = plan.replication_rate_pct;
  c.push_s = t.push_s;
  c.stage_s = t.stage_s;
  c.pull_s = t.pull_s;
  c.kernel_s = estimate_kernel_s(plan, act, p);
  return c;
}

inline CostReport summarize(std::uint32_t dpus, std::vector<LayerCost> layers, const CostParams& p) {
  CostReport r;
  r.dpus = dpus;
  r.alloc_s = p.per_dpu_alloc_s * dpus;
  for (const auto& l : layers) {
    r.push_s += l.push_s;
    r.stage_s += l.stage_s;
    r.kernel_s += l.kernel_s;
    r.pull_s += l.pull_s;
  }
  r.total_s = r.alloc_s + r.push_s + r.stage_s + r.kernel_s + r.pull_s;
  r.layers = std::move(layers);
  return r;
}

/// Cost of running `w` on n1 x n2 DPUs; each layer uses min(n1, rows) x
/// min(n2, cols). Propagates planner errors for infeasible layers.
inline CostReport estimate_workload(const Workload& w, std::uint32_t n1, std::uint32_t n2, const CostParams& p,
                                    const SystemConfig& cfg = {}) {
  std::vector<LayerCost> layers;
  for (const auto& l : w.layers) {
    const PartitionPlan plan = make_plan(l.shape, std::min(n1, l.shape.rows), std::min(n2, l.shape.cols), w.tasklets,
                                         w.placement, cfg, n1 * n2);
    layers.push_back(estimate_layer(plan, l.activation, p));
  }
  return summarize(n1 * n2, std::move(layers), p);
}

/// Best split of one layer over `n` DPUs: minimum kernel time, ties broken
/// by transfer time then by smaller N2. Each factorization N1 x N2 = n is
/// clamped to the layer shape as in estimate_workload, so a layer smaller
/// than the split leaves DPUs idle. Empty when no split fits.
inline std::optional<LayerCost> best_layer_split(const LayerWork& l, std::uint32_t n, const Workload& w,
                                                 const CostParams& p, const SystemConfig& cfg) {
  std::optional<LayerCost> best;
  for (std::uint32_t f2 = 1; f2 <= n; ++f2) {
    if (n % f2 != 0) continue;
    const std::uint32_t n1 = std::min(n / f2, l.shape.rows);
    const std::uint32_t n2 = std::min(f2, l.shape.cols);
    if (w.placement == Placement::WramResident && n2 != 1) continue;
    PartitionPlan plan;
    try {
      plan = make_plan(l.shape, n1, n2, w.tasklets, w.placement, cfg, n);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BlockTooLarge) continue;
      throw;
    }
    const LayerCost c = estimate_layer(plan, l.activation, p);
    const double ct = c.push_s + c.stage_s + c.pull_s;
    if (!best || c.kernel_s < best->kernel_s ||
        (c.kernel_s == best->kernel_s && ct < best->push_s + best->stage_s + best->pull_s))
      best = c;
  }
  return best;
}

struct SweepPoint {
  std::uint32_t dpus = 0;
  bool feasible = false;
  CostReport report;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::optional<std::uint32_t> argmin;  // feasible point with the lowest total_s (first on ties)
};

inline SweepResult sweep_dpus(const Workload& w, const std::vector<std::uint32_t>& candidates, const CostParams& p,
                              const SystemConfig& cfg = {}) {
  SweepResult out;
  double best = 0;
  for (std::uint32_t n : candidates) {
    if (n == 0 || n > cfg.total_dpus) throw Error(ErrorCode::InvalidArgument, "candidate DPU count out of range: " + std::to_string(n));
    SweepPoint pt{n, true, {}};
    std::vector<LayerCost> layers;
    for (const auto& l : w.layers) {
      auto c = best_layer_split(l, n, w, p, cfg);
      if (!c) {
        pt.feasible = false;
        break;
      }
      layers.push_back(*c);
    }
    if (pt.feasible) {
      pt.report = summarize(n, std::move(layers), p);
      if (!out.argmin || pt.report.total_s < best) {
        out.argmin = n;
        best = pt.report.total_s;
      }
    } else {
      pt.report.dpus = n;
    }
    out.points.push_back(std::move(pt));
  }
  return out;
}

}  // namespace pimnn
