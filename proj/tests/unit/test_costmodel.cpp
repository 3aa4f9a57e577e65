#include <gtest/gtest.h>

#include <sstream>

#include "pimnn/costmodel.hpp"
#include "pimnn/data.hpp"

using namespace pimnn;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::KernelFault;
}

Workload preset_workload(const std::string& name, ElemType t, Placement pl = Placement::MramStream,
                         std::uint32_t batch = 0) {
  const auto& p = preset(name);
  return make_workload(name, p.layer_sizes, batch ? batch : p.batch_sizes.front(), t, pl);
}

const std::vector<std::uint32_t> kSweepNs{256, 512, 1024, 2048};

}  // namespace

TEST(CostParams, ShippedFileEqualsCompiledDefaults) {
  EXPECT_EQ(load_cost_params(PIMNN_DEFAULT_COST_PARAMS_PATH), CostParams{});
}

TEST(CostParams, JsonRoundTripAndPartialOverride) {
  CostParams p;
  p.per_launch_s = 2.5e-4;
  p.instr_per_mac_int32 = 20;
  const nlohmann::json j = p;
  EXPECT_EQ(parse_cost_params(j.dump()), p);
  const auto q = parse_cost_params(R"({"host_mram_bw": 1e9})");
  EXPECT_EQ(q.host_mram_bw, 1e9);
  EXPECT_EQ(q.per_launch_s, CostParams{}.per_launch_s);
}

TEST(CostParams, Rejections) {
  EXPECT_EQ(code_of([] { parse_cost_params(R"({"bogus": 1})"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_cost_params("{"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_cost_params("[1]"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_cost_params(R"({"host_mram_bw": "fast"})"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_cost_params(R"({"per_launch_s": -1})"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { parse_cost_params(R"({"version": 2})"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { parse_cost_params(R"({"instr_per_mac": {"int8": 40}})"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { load_cost_params("/nonexistent/params.json"); }), ErrorCode::IoError);
}

TEST(KernelEstimate, HandComputedValue) {
  // 100x50 * 50x60 FP32 on 4x3: blocks 25x50 and 20 lines; 25000 MACs and
  // 500 sigmoids -> 832000 instructions at 11 cycles over 11 tasklets
  const auto plan = make_plan(GemmShape{100, 50, 60, ElemType::FP32}, 4, 3, 16, Placement::MramStream, SystemConfig{});
  EXPECT_NEAR(estimate_kernel_s(plan, Activation::Sigmoid, CostParams{}), 0.002477142857142857, 1e-17);
  const auto w = kernel_work(plan, Activation::Relu);
  EXPECT_EQ(w.macs, 25000u);
  EXPECT_EQ(w.activated, 500u);
}

TEST(KernelEstimate, SaturatesAtElevenTasklets) {
  EXPECT_EQ(effective_parallel_tasklets(1), 1u);
  EXPECT_EQ(effective_parallel_tasklets(11), 11u);
  EXPECT_EQ(effective_parallel_tasklets(24), 11u);
  KernelWork w{1'000'000, 1000, Activation::Sigmoid, ElemType::INT32, 1, 1};
  const CostParams p;
  double prev = estimate_kernel_s(w, p);
  for (std::uint32_t t = 2; t <= 24; ++t) {
    w.tasklets = t;
    const double cur = estimate_kernel_s(w, p);
    if (t <= 11) {
      EXPECT_LT(cur, prev) << t;
    } else {
      EXPECT_EQ(cur, prev) << t;
    }
    prev = cur;
  }
  w.tasklets = 0;
  EXPECT_EQ(code_of([&] { estimate_kernel_s(w, p); }), ErrorCode::InvalidArgument);
}

TEST(KernelEstimate, DtypeOrdering) {
  const CostParams p;
  double prev = 0;
  for (auto t : {ElemType::INT8, ElemType::INT32, ElemType::FP32}) {
    const auto plan = make_plan(GemmShape{512, 256, 128, t}, 8, 2, 16, Placement::MramStream, SystemConfig{});
    const double k = estimate_kernel_s(plan, Activation::Sigmoid, p);
    EXPECT_GE(k, prev);
    prev = k;
  }
}

TEST(KernelEstimate, LinearInWorkWithoutLaunchOverhead) {
  const CostParams p;
  KernelWork w{12345, 0, Activation::None, ElemType::FP32, 16, 1};
  const double one = estimate_kernel_s(w, p) - p.per_launch_s;
  w.macs *= 4;
  EXPECT_NEAR(estimate_kernel_s(w, p) - p.per_launch_s, 4 * one, 1e-18);
}

TEST(TransferEstimate, HandComputedBytes) {
  const auto plan = make_plan(GemmShape{100, 50, 60, ElemType::FP32}, 4, 3, 16, Placement::MramStream, SystemConfig{});
  const auto b = transfer_bytes(plan);
  EXPECT_EQ(b.push_a, 12u * 25 * 50 * 4);
  EXPECT_EQ(b.push_b, 12u * 20 * 50 * 4);
  EXPECT_EQ(b.pull, 12u * 25 * 20 * 4);
  EXPECT_EQ(b.staged, 0u);
  const auto t = estimate_transfer_s(plan, CostParams{});
  EXPECT_DOUBLE_EQ(t.push_s, 108000 / 6e9);
  EXPECT_DOUBLE_EQ(t.pull_s, 24000 / 6e9);
  EXPECT_EQ(t.stage_s, 0.0);
}

TEST(TransferEstimate, DoublingTheBatchDoublesTransfers) {
  const CostParams p;
  const auto a = make_plan(GemmShape{1024, 64, 32, ElemType::INT32}, 8, 1, 16, Placement::MramStream, SystemConfig{});
  const auto b = make_plan(GemmShape{2048, 64, 32, ElemType::INT32}, 8, 1, 16, Placement::MramStream, SystemConfig{});
  EXPECT_EQ(transfer_bytes(b).push_a, 2 * transfer_bytes(a).push_a);
  EXPECT_EQ(transfer_bytes(b).pull, 2 * transfer_bytes(a).pull);
  EXPECT_EQ(transfer_bytes(b).push_b, transfer_bytes(a).push_b);
  EXPECT_DOUBLE_EQ(estimate_transfer_s(b, p).pull_s, 2 * estimate_transfer_s(a, p).pull_s);
}

TEST(TransferEstimate, WramStagesEveryResidentByte) {
  const auto plan = make_plan(GemmShape{2556, 112, 96, ElemType::FP32}, 2556, 1, 16, Placement::WramResident, SystemConfig{});
  EXPECT_EQ(transfer_bytes(plan).staged, plan.per_dpu_bytes);
  EXPECT_DOUBLE_EQ(estimate_transfer_s(plan, CostParams{}).stage_s, double(plan.per_dpu_bytes) / 600e6);
}

TEST(Workload, TotalIsSumOfParts) {
  const CostParams p;
  for (const auto& name : {"Net1", "Net3", "Net4"})
    for (auto t : {ElemType::FP32, ElemType::INT32, ElemType::INT8}) {
      const auto r = estimate_workload(preset_workload(name, t), 64, 2, p);
      EXPECT_EQ(r.total_s, r.alloc_s + r.push_s + r.stage_s + r.kernel_s + r.pull_s);
      double kernel = 0;
      for (const auto& l : r.layers) kernel += l.kernel_s;
      EXPECT_EQ(r.kernel_s, kernel);
      EXPECT_DOUBLE_EQ(r.alloc_s, 128 * p.per_dpu_alloc_s);
    }
}

TEST(Workload, LayersClampSplitToShape) {
  // the last layer has one output column, so N2 collapses to 1 there
  const auto r = estimate_workload(preset_workload("Net1", ElemType::FP32), 32, 4, CostParams{});
  ASSERT_EQ(r.layers.size(), 3u);
  EXPECT_EQ(r.layers[0].n2, 4u);
  EXPECT_EQ(r.layers[2].n2, 1u);
  EXPECT_EQ(r.layers[2].n1, 32u);
}

TEST(Workload, Validation) {
  EXPECT_EQ(code_of([] { make_workload("x", {4}, 1, ElemType::FP32); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { make_workload("x", {4, 2}, 0, ElemType::FP32); }), ErrorCode::InvalidArgument);
}

TEST(Sweep, CalibratedArgmins) {
  const CostParams p = load_cost_params(PIMNN_DEFAULT_COST_PARAMS_PATH);
  EXPECT_EQ(sweep_dpus(preset_workload("Net1", ElemType::FP32), kSweepNs, p).argmin, 512u);
  EXPECT_EQ(sweep_dpus(preset_workload("Net1", ElemType::INT32), kSweepNs, p).argmin, 512u);
  EXPECT_EQ(sweep_dpus(preset_workload("Net2", ElemType::FP32), kSweepNs, p).argmin, 2048u);
}

TEST(Sweep, SplitsClampToSmallLayers) {
  // 2560 DPUs against a 2556-row batch: every layer leaves some DPUs idle
  const auto s = sweep_dpus(preset_workload("Net3", ElemType::FP32), {2560}, CostParams{});
  ASSERT_TRUE(s.points[0].feasible);
  for (const auto& l : s.points[0].report.layers) EXPECT_LE(l.n1 * l.n2, 2560u);
  EXPECT_EQ(s.points[0].report.alloc_s, 2560 * CostParams{}.per_dpu_alloc_s);
}

TEST(Sweep, SingletonListIsArgmin) {
  for (std::uint32_t n : {1u, 300u, 2560u})
    EXPECT_EQ(sweep_dpus(preset_workload("Net3", ElemType::INT8), {n}, CostParams{}).argmin, n);
}

TEST(Sweep, InfeasiblePointsAreExcluded) {
  const auto s = sweep_dpus(preset_workload("Net2", ElemType::FP32), {1, 2048}, CostParams{});
  ASSERT_EQ(s.points.size(), 2u);
  EXPECT_FALSE(s.points[0].feasible);
  EXPECT_TRUE(s.points[1].feasible);
  EXPECT_EQ(s.argmin, 2048u);
  const auto none = sweep_dpus(preset_workload("Net2", ElemType::FP32, Placement::WramResident), {2048}, CostParams{});
  EXPECT_FALSE(none.argmin.has_value());
  EXPECT_EQ(code_of([] { sweep_dpus(preset_workload("Net1", ElemType::FP32), {4096}, CostParams{}); }),
            ErrorCode::InvalidArgument);
}

TEST(Sweep, BestSplitPrefersFewerKernelSeconds) {
  const CostParams p;
  const auto w = preset_workload("Net1", ElemType::FP32);
  const auto best = best_layer_split(w.layers[0], 256, w, p, SystemConfig{});
  ASSERT_TRUE(best.has_value());
  for (std::uint32_t n2 = 1; n2 <= w.layers[0].shape.cols; n2 *= 2) {
    const auto plan = make_plan(w.layers[0].shape, 256 / n2, n2, 16, Placement::MramStream, SystemConfig{});
    EXPECT_LE(best->kernel_s, estimate_kernel_s(plan, Activation::Sigmoid, p));
  }
}

// For every preset, dtype and placement: kernel_s never rises and alloc_s
// always rises along a doubling sweep, whatever the calibration.
TEST(CostProperty, SweepMonotonicity) {
  std::vector<std::uint32_t> ns;
  for (std::uint32_t n = 1; n <= 2048; n *= 2) ns.push_back(n);
  CostParams skewed;
  skewed.per_dpu_alloc_s = 1e-7;
  skewed.host_mram_bw = 1e12;
  skewed.instr_per_mac_int8 = skewed.instr_per_mac_int32 = skewed.instr_per_mac_fp32 = 1;
  for (const auto& params : {CostParams{}, skewed})
    for (const auto& p : all_presets())
      for (auto t : {ElemType::FP32, ElemType::INT32, ElemType::INT8})
        for (auto pl : {Placement::MramStream, Placement::WramResident}) {
          const auto s = sweep_dpus(make_workload(p.name, p.layer_sizes, p.batch_sizes.front(), t, pl), ns, params);
          const SweepPoint* prev = nullptr;
          for (const auto& pt : s.points) {
            if (!pt.feasible) continue;
            if (prev) {
              EXPECT_LE(pt.report.kernel_s, prev->report.kernel_s) << p.name << " " << pt.dpus;
              EXPECT_GT(pt.report.alloc_s, prev->report.alloc_s) << p.name << " " << pt.dpus;
            }
            prev = &pt;
          }
        }
}

TEST(CostProperty, WramNeverCheaperThanMram) {
  const CostParams p;
  for (const char* name : {"Net3", "Net4"}) {
    const auto& pr = preset(name);
    for (std::uint32_t batch : pr.batch_sizes)
      for (auto t : {ElemType::FP32, ElemType::INT32, ElemType::INT8})
        for (std::uint32_t n1 : {2556u, 1278u}) {
          const auto m = estimate_workload(make_workload(name, pr.layer_sizes, batch, t, Placement::MramStream), n1, 1, p);
          CostReport w;
          try {
            w = estimate_workload(make_workload(name, pr.layer_sizes, batch, t, Placement::WramResident), n1, 1, p);
          } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::BlockTooLarge);
            continue;
          }
          EXPECT_GE(w.total_s, m.total_s) << name << " " << batch << " " << n1;
          EXPECT_EQ(w.kernel_s, m.kernel_s);
        }
  }
}
