#pragma once

// Experiment harness behind the `pimnn` executable. Every subcommand is a
// plain function over parsed arguments so tests can drive it in-process.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pimnn/costmodel.hpp"
#include "pimnn/data.hpp"
#include "pimnn/gemm.hpp"
#include "pimnn/model_io.hpp"
#include "pimnn/nn.hpp"
#include "pimnn/planner.hpp"

#ifndef PIMNN_DEFAULT_IRIS_PATH
#define PIMNN_DEFAULT_IRIS_PATH "data/iris.csv"
#endif
#ifndef PIMNN_DEFAULT_COST_PARAMS_PATH
#define PIMNN_DEFAULT_COST_PARAMS_PATH ""
#endif

namespace pimnn::cli {

enum ExitCode : int { kOk = 0, kValidation = 2, kCapacity = 3, kInternal = 4 };

inline int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::DimMismatch:
    case ErrorCode::DimError:
    case ErrorCode::ParseError:
    case ErrorCode::Misaligned:
    case ErrorCode::UnequalBlocks:
    case ErrorCode::UnknownKernel:
    case ErrorCode::IoError:
      return kValidation;
    case ErrorCode::OverAllocation:
    case ErrorCode::MramOverflow:
    case ErrorCode::WramOverflow:
    case ErrorCode::IramOverflow:
    case ErrorCode::BlockTooLarge:
      return kCapacity;
    case ErrorCode::KernelFault:
    case ErrorCode::Busy:
      return kInternal;
  }
  return kInternal;
}

/// Seed of the Iris run whose 28/28 result is checked by the acceptance suite.
inline constexpr std::uint64_t kIrisSeed = 1;

inline constexpr std::string_view kPlanSchema = "pimnn.plan/v1";
inline constexpr std::string_view kTransferLogSchema = "pimnn.transfer_log/v1";
inline constexpr std::string_view kBenchSchema = "pimnn.bench/v1";
inline constexpr std::string_view kSweepSchema = "pimnn.sweep/v1";
inline constexpr std::string_view kLossSchema = "pimnn.train_loss/v1";

/// Functional simulation in `bench` is skipped above this many MACs.
inline constexpr std::uint64_t kDefaultMacBudget = 4'000'000'000ull;

struct Common {
  std::uint32_t dpus = 0;  // 0: just enough for the requested split
  std::uint32_t n1 = 1;
  std::uint32_t n2 = 1;
  std::uint32_t tasklets = 16;
  std::string placement = "mram";
  std::string dtype = "fp32";
  std::optional<std::uint64_t> seed;
  std::string cost_params;
  std::string out;

  Placement placement_value() const { return parse_placement(placement); }
  ElemType dtype_value() const { return parse_elem_type(dtype); }
  std::uint64_t seed_or(std::uint64_t fallback) const { return seed.value_or(fallback); }

  CostParams cost_params_value() const {
    if (!cost_params.empty()) return load_cost_params(cost_params);
    if (std::string_view(PIMNN_DEFAULT_COST_PARAMS_PATH).empty()) return CostParams{};
    std::ifstream probe(PIMNN_DEFAULT_COST_PARAMS_PATH);
    return probe ? load_cost_params(PIMNN_DEFAULT_COST_PARAMS_PATH) : CostParams{};
  }

  void validate(const SystemConfig& cfg) const {
    placement_value();
    dtype_value();
    if (n1 == 0 || n2 == 0) throw Error(ErrorCode::InvalidArgument, "--n1 and --n2 must be >= 1");
    if (tasklets == 0 || tasklets > cfg.max_tasklets)
      throw Error(ErrorCode::InvalidArgument, "--tasklets must be in [1, " + std::to_string(cfg.max_tasklets) + "]");
    if (dpus > cfg.total_dpus)
      throw Error(ErrorCode::OverAllocation, "--dpus " + std::to_string(dpus) + " exceeds the " +
                                                 std::to_string(cfg.total_dpus) + " DPUs of the system");
  }

  std::uint32_t allocated() const { return dpus ? dpus : n1 * n2; }
};

struct Dims {
  std::uint32_t rows = 0, cols = 0;
};

inline Dims parse_dims(std::string_view s) {
  const auto x = s.find('x');
  Dims d;
  auto num = [&](std::string_view t, std::uint32_t& v) {
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    return r.ec == std::errc{} && r.ptr == t.data() + t.size();
  };
  if (x == std::string_view::npos || !num(s.substr(0, x), d.rows) || !num(s.substr(x + 1), d.cols))
    throw Error(ErrorCode::InvalidArgument, "dimensions must look like ROWSxCOLS, got '" + std::string(s) + "'");
  if (d.rows == 0 || d.cols == 0) throw Error(ErrorCode::DimError, "dimensions must be >= 1");
  return d;
}

inline std::string fmt(double v, int digits = 9) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string schema_comment(std::string_view schema) {
  return "# schema=" + std::string(schema) + " prng=" + std::string(Rng::kAlgorithm);
}

/// FNV-1a over the logical elements in row-major order.
inline std::string checksum(const MatrixBuf& m) {
  std::uint64_t h = 1469598103934665603ull;
  const std::size_t es = m.elem_bytes();
  for (std::uint32_t r = 0; r < m.rows(); ++r)
    for (std::uint32_t c = 0; c < m.cols(); ++c) {
      const std::byte* p = m.storage().data() + m.offset_of(r, c);
      for (std::size_t i = 0; i < es; ++i) {
        h ^= static_cast<std::uint8_t>(p[i]);
        h *= 1099511628211ull;
      }
    }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// Writes to `path`, or to `fallback` when the path is empty.
template <class F>
void emit(const std::string& path, std::ostream& fallback, F&& write) {
  if (path.empty()) {
    write(fallback);
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  write(os);
}

// ---------------------------------------------------------------------------
// plan
// ---------------------------------------------------------------------------

struct PlanArgs {
  std::string a = "4x4";
  std::string b = "4x4";
  std::string preset;        // optional: take dims from a preset layer
  std::uint32_t layer = 0;
  std::uint32_t batch = 0;   // 0: preset's first batch size
  bool json = false;
};

inline GemmShape plan_shape(const PlanArgs& args, ElemType type) {
  if (!args.preset.empty()) {
    const NetPreset& p = preset(args.preset);
    if (args.layer + 1 >= p.layer_sizes.size())
      throw Error(ErrorCode::InvalidArgument, args.preset + " has " + std::to_string(p.layer_sizes.size() - 1) + " weight layers");
    const std::uint32_t batch = args.batch ? args.batch : p.batch_sizes.front();
    return {batch, p.layer_sizes[args.layer], p.layer_sizes[args.layer + 1], type};
  }
  const Dims a = parse_dims(args.a), b = parse_dims(args.b);
  if (a.cols != b.rows)
    throw Error(ErrorCode::DimMismatch, "A is " + args.a + " but B is " + args.b + " (inner dimensions differ)");
  return {a.rows, a.cols, b.cols, type};
}

inline nlohmann::json plan_json(const PartitionPlan& p) {
  return {{"schema", kPlanSchema},
          {"a", {{"rows", p.shape.rows}, {"cols", p.shape.k}}},
          {"b", {{"rows", p.shape.k}, {"cols", p.shape.cols}}},
          {"dtype", to_string(p.shape.type)},
          {"placement", to_string(p.placement)},
          {"n1", p.n1},
          {"n2", p.n2},
          {"dpus", p.dpus()},
          {"tasklets", p.tasklets},
          {"tasklet_rows", p.tasklet_rows},
          {"a_block_rows", p.a_block_rows},
          {"k_padded", p.k_padded},
          {"b_block_lines", p.b_block_lines},
          {"replication", {{"numerator", p.replication_numerator}, {"denominator", p.replication_denominator}, {"pct", p.replication_rate_pct}}},
          {"bytes", {{"a_block", p.a_block_bytes}, {"b_block", p.b_block_bytes}, {"c_block", p.c_block_bytes}, {"per_dpu", p.per_dpu_bytes}, {"capacity", p.capacity_bytes}}},
          {"mram_layout", {{"a_offset", p.a_offset}, {"b_offset", p.b_offset}, {"c_offset", p.c_offset}}},
          {"chunk_bytes", p.chunk_bytes},
          {"verdict", "ok"}};
}

inline void print_plan(std::ostream& os, const PartitionPlan& p) {
  os << "A " << p.shape.rows << "x" << p.shape.k << "  B " << p.shape.k << "x" << p.shape.cols << "  dtype "
     << to_string(p.shape.type) << "  placement " << to_string(p.placement) << "\n"
     << "N1 " << p.n1 << "  N2 " << p.n2 << "  N " << p.dpus() << "  tasklets " << p.tasklets << "  tasklet_rows "
     << p.tasklet_rows << "\n"
     << "blocks: A " << p.a_block_rows << "x" << p.k_padded << "  B^T " << p.b_block_lines << "x" << p.k_padded
     << "  C " << p.a_block_rows << "x" << p.b_block_lines << "\n"
     << "replication " << fmt(p.replication_rate_pct, 17) << "% (" << p.replication_numerator << "/"
     << p.replication_denominator << ")\n"
     << "per_dpu_bytes " << p.per_dpu_bytes << " of " << p.capacity_bytes << "  chunk_bytes " << p.chunk_bytes << "\n"
     << "verdict ok\n";
}

inline int cmd_plan(const Common& c, const PlanArgs& args, const SystemConfig& cfg, std::ostream& out) {
  c.validate(cfg);
  const GemmShape shape = plan_shape(args, c.dtype_value());
  const std::uint32_t allocated = c.dpus ? c.dpus : cfg.total_dpus;
  try {
    const PartitionPlan plan = make_plan(shape, c.n1, c.n2, c.tasklets, c.placement_value(), cfg, allocated);
    emit(c.out, out, [&](std::ostream& os) {
      if (args.json) os << plan_json(plan).dump(2) << "\n";
      else print_plan(os, plan);
    });
    return kOk;
  } catch (const Error& e) {
    if (args.json)
      emit(c.out, out, [&](std::ostream& os) {
        os << nlohmann::json{{"schema", kPlanSchema}, {"verdict", "rejected"},
                             {"error", {{"code", to_string(e.code())}, {"message", e.what()}}}}.dump(2)
           << "\n";
      });
    throw;
  }
}

// ---------------------------------------------------------------------------
// gemm
// ---------------------------------------------------------------------------

struct GemmArgs {
  std::string a = "64x64";
  std::string b = "64x64";
  std::string activation = "none";
};

inline Activation parse_activation(std::string_view s) {
  if (s == "none") return Activation::None;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "relu") return Activation::Relu;
  throw Error(ErrorCode::InvalidArgument, "unknown activation '" + std::string(s) + "'");
}

inline int cmd_gemm(const Common& c, const GemmArgs& args, const SystemConfig& cfg, std::ostream& out) {
  c.validate(cfg);
  const Dims ad = parse_dims(args.a), bd = parse_dims(args.b);
  const ElemType type = c.dtype_value();
  const Activation act = parse_activation(args.activation);
  const std::uint64_t seed = c.seed_or(1);
  const MatrixBuf a = random_matrix(ad.rows, ad.cols, type, seed);
  const MatrixBuf b = random_matrix(bd.rows, bd.cols, type, seed + 1);
  make_plan(a, b, c.n1, c.n2, c.tasklets, c.placement_value(), cfg, c.allocated());  // validate before allocating

  PimSystem sys = allocate_dpus(c.allocated(), cfg);
  GemmOptions opt;
  opt.n1 = c.n1;
  opt.n2 = c.n2;
  opt.tasklets = c.tasklets;
  opt.placement = c.placement_value();
  opt.activation = act;
  const GemmResult r = distributed_gemm(sys, a, b, opt);

  // host re-computation with the kernel arithmetic; must match bit for bit
  MatrixBuf expect(type, ad.rows, bd.cols);
  dispatch(type, [&]<class T>(std::type_identity<T>) {
    for (std::uint32_t i = 0; i < ad.rows; ++i)
      for (std::uint32_t j = 0; j < bd.cols; ++j) {
        Accum<T> s{0};
        for (std::uint32_t k = 0; k < ad.cols; ++k) s = mac<T>(s, a.get<T>(i, k), b.get<T>(k, j));
        expect.set<T>(i, j, activate<T>(narrow<T>(s), act, ExpMode::Fast));
      }
  });
  std::uint64_t mismatches = 0;
  for (std::uint32_t i = 0; i < ad.rows; ++i)
    for (std::uint32_t j = 0; j < bd.cols; ++j)
      mismatches += std::memcmp(r.c.storage().data() + r.c.offset_of(i, j),
                                expect.storage().data() + expect.offset_of(i, j), r.c.elem_bytes()) != 0;

  print_plan(out, r.plan);
  const TransferStats st = sys.stats();
  out << "host_to_mram_bytes " << st.host_to_mram_bytes << "  mram_to_host_bytes " << st.mram_to_host_bytes
      << "  dma_count " << st.dma_count << "\n"
      << "checksum " << checksum(r.c) << "  mismatches " << mismatches << "\n";
  if (!c.out.empty())
    emit(c.out, out, [&](std::ostream& os) {
      os << schema_comment(kTransferLogSchema) << "\n";
      write_transfer_log_csv(os, sys.transfer_log());
    });
  if (mismatches) throw Error(ErrorCode::KernelFault, std::to_string(mismatches) + " elements differ from the host oracle");
  return kOk;
}

// ---------------------------------------------------------------------------
// train-iris
// ---------------------------------------------------------------------------

struct TrainIrisArgs {
  std::string data = PIMNN_DEFAULT_IRIS_PATH;
  double lr = 0.1;
  std::uint32_t epochs = 500;
  std::uint32_t batch = 0;  // 0: whole training split
  std::string exp = "fast";
  std::string loss_out;
};

struct IrisRun {
  Dataset dataset;
  TrainResult result;
  std::uint32_t correct = 0;
  std::uint32_t total = 0;
};

inline constexpr std::uint32_t kIrisHidden = 8;

/// Full Iris protocol: stratified split and weight init from `seed`, then
/// single-DPU training and evaluation.
inline IrisRun run_iris(const std::vector<IrisRecord>& records, std::uint64_t seed, const TrainConfig& tc) {
  IrisRun run{split_iris(records, seed), {}, 0, 0};
  const MlpModel init = MlpModel::random(MlpConfig::uniform({4, kIrisHidden, 1}, Activation::Sigmoid), seed);
  PimSystem sys = allocate_dpus(1);
  run.result = train(init, run.dataset.train_x, run.dataset.train_y, tc, sys);
  run.total = run.dataset.test_x.rows();
  const double acc = evaluate(run.result.model, run.dataset.test_x, run.dataset.test_y, sys);
  run.correct = static_cast<std::uint32_t>(std::lround(acc * run.total));
  return run;
}

inline int cmd_train_iris(const Common& c, const TrainIrisArgs& args, const SystemConfig& cfg, std::ostream& out) {
  c.validate(cfg);
  if (!(args.lr >= 0)) throw Error(ErrorCode::InvalidArgument, "--lr must be >= 0");
  TrainConfig tc;
  tc.learning_rate = args.lr;
  tc.epochs = args.epochs;
  tc.batch_size = args.batch;
  tc.tasklets = c.tasklets;
  if (args.exp == "fast") tc.exp_mode = ExpMode::Fast;
  else if (args.exp == "exact") tc.exp_mode = ExpMode::Exact;
  else throw Error(ErrorCode::InvalidArgument, "--exp must be fast or exact");
  const auto records = load_iris(args.data);
  const std::uint64_t seed = c.seed_or(kIrisSeed);
  const IrisRun run = run_iris(records, seed, tc);

  const auto& trace = run.result.epoch_mean_abs_error;
  out << "seed " << seed << "  train " << run.dataset.train_x.rows() << "  test " << run.total << "  epochs "
      << args.epochs << "  lr " << fmt(args.lr) << "\n";
  if (!trace.empty())
    out << "mean_abs_error first " << fmt(trace.front()) << "  last " << fmt(trace.back()) << "\n";
  out << "accuracy " << run.correct << "/" << run.total << "\n";
  if (!c.out.empty()) save_model(c.out, run.result.model);
  if (!args.loss_out.empty())
    emit(args.loss_out, out, [&](std::ostream& os) {
      os << schema_comment(kLossSchema) << " seed=" << seed << "\nepoch,mean_abs_error\n";
      for (std::size_t e = 0; e < trace.size(); ++e) os << e + 1 << "," << fmt(trace[e], 17) << "\n";
    });
  return kOk;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string preset = "Net1";
  std::uint32_t batch = 0;  // 0: preset's first batch size
  std::uint64_t mac_budget = kDefaultMacBudget;
};

inline std::uint64_t workload_macs(const Workload& w) {
  std::uint64_t m = 0;
  for (const auto& l : w.layers) m += std::uint64_t(l.shape.rows) * l.shape.k * l.shape.cols;
  return m;
}

struct BenchRow {
  std::string preset;
  std::uint32_t batch = 0, n1 = 1, n2 = 1, tasklets = 16;
  ElemType type = ElemType::FP32;
  Placement placement = Placement::MramStream;
  CostReport cost;
  std::string checksum = "na";
};

inline std::string bench_header() {
  return "preset,batch,N,n1,n2,tasklets,dtype,placement,est_alloc_s,est_push_s,est_stage_s,est_kernel_s,est_pull_s,"
         "est_total_s,checksum";
}

inline std::string bench_csv_row(const BenchRow& r) {
  std::ostringstream os;
  os << r.preset << "," << r.batch << "," << r.n1 * r.n2 << "," << r.n1 << "," << r.n2 << "," << r.tasklets << ","
     << to_string(r.type) << "," << to_string(r.placement) << "," << fmt(r.cost.alloc_s) << "," << fmt(r.cost.push_s)
     << "," << fmt(r.cost.stage_s) << "," << fmt(r.cost.kernel_s) << "," << fmt(r.cost.pull_s) << ","
     << fmt(r.cost.total_s) << "," << r.checksum;
  return os.str();
}

/// Cost estimate plus, within the MAC budget, a functional run whose output
/// checksum is verified against the host re-computation.
inline BenchRow run_bench(const Common& c, const BenchArgs& args, const SystemConfig& cfg) {
  c.validate(cfg);
  const NetPreset& p = preset(args.preset);
  BenchRow row;
  row.preset = p.name;
  row.batch = args.batch ? args.batch : p.batch_sizes.front();
  row.n1 = c.n1;
  row.n2 = c.n2;
  row.tasklets = c.tasklets;
  row.type = c.dtype_value();
  row.placement = c.placement_value();
  const Workload w = make_workload(p.name, p.layer_sizes, row.batch, row.type, row.placement, c.tasklets);
  row.cost = estimate_workload(w, c.n1, c.n2, c.cost_params_value(), cfg);
  if (workload_macs(w) > args.mac_budget) return row;

  const std::uint64_t seed = c.seed_or(1);
  const MlpModel model = MlpModel::random(MlpConfig::uniform(p.layer_sizes, Activation::Sigmoid, row.type), seed + 1);
  const MatrixBuf x = random_matrix(row.batch, p.layer_sizes.front(), row.type, seed);
  PimSystem sys = allocate_dpus(std::max(c.allocated(), c.n1 * c.n2), cfg);
  InferenceExec exec;
  exec.n1 = c.n1;
  exec.n2 = c.n2;
  exec.placement = row.placement;
  exec.tasklets = c.tasklets;
  const MatrixBuf y = feedforward(model, x, sys, exec);
  row.checksum = checksum(y);
  const std::string oracle = checksum(emulated_forward(model, x));
  if (row.checksum != oracle)
    throw Error(ErrorCode::KernelFault, "bench output checksum " + row.checksum + " differs from host oracle " + oracle);
  return row;
}

inline int cmd_bench(const Common& c, const BenchArgs& args, const SystemConfig& cfg, std::ostream& out) {
  const BenchRow row = run_bench(c, args, cfg);
  emit(c.out, out, [&](std::ostream& os) {
    os << schema_comment(kBenchSchema) << " seed=" << c.seed_or(1) << "\n" << bench_header() << "\n" << bench_csv_row(row) << "\n";
  });
  return kOk;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string preset = "Net1";
  std::uint32_t batch = 0;
  std::vector<std::uint32_t> dpu_list{256, 512, 1024, 2048};
};

inline void write_sweep_csv(std::ostream& os, const Workload& w, std::uint32_t batch, ElemType type,
                            const SweepResult& s) {
  os << schema_comment(kSweepSchema) << "\n"
     << "preset,batch,N,dtype,placement,tasklets,feasible,est_alloc_s,est_push_s,est_stage_s,est_kernel_s,est_pull_s,"
        "est_total_s,is_argmin\n";
  for (const auto& pt : s.points) {
    const CostReport& r = pt.report;
    os << w.name << "," << batch << "," << pt.dpus << "," << to_string(type) << "," << to_string(w.placement) << ","
       << w.tasklets << "," << (pt.feasible ? 1 : 0);
    if (pt.feasible)
      os << "," << fmt(r.alloc_s) << "," << fmt(r.push_s) << "," << fmt(r.stage_s) << "," << fmt(r.kernel_s) << ","
         << fmt(r.pull_s) << "," << fmt(r.total_s);
    else
      os << ",,,,,,";
    os << "," << (s.argmin && *s.argmin == pt.dpus ? 1 : 0) << "\n";
  }
}

inline int cmd_sweep(const Common& c, const SweepArgs& args, const SystemConfig& cfg, std::ostream& out) {
  c.validate(cfg);
  if (args.dpu_list.empty()) throw Error(ErrorCode::InvalidArgument, "--dpu-list must not be empty");
  const NetPreset& p = preset(args.preset);
  const std::uint32_t batch = args.batch ? args.batch : p.batch_sizes.front();
  const ElemType type = c.dtype_value();
  const Workload w = make_workload(p.name, p.layer_sizes, batch, type, c.placement_value(), c.tasklets);
  const SweepResult s = sweep_dpus(w, args.dpu_list, c.cost_params_value(), cfg);
  emit(c.out, out, [&](std::ostream& os) { write_sweep_csv(os, w, batch, type, s); });
  if (!c.out.empty()) {
    if (s.argmin) out << "argmin " << *s.argmin << "\n";
    else out << "argmin none (no feasible DPU count)\n";
  }
  if (!s.argmin) throw Error(ErrorCode::BlockTooLarge, "no candidate DPU count can hold the workload");
  return kOk;
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  const SystemConfig cfg;
  CLI::App app{"Processing-in-memory MLP simulator and experiment harness", "pimnn"};
  app.set_config("--config", "", "TOML/INI file with the same keys as the flags; flags override it");
  app.require_subcommand(1);
  app.fallthrough();

  Common c;
  app.add_option("--dpus", c.dpus, "DPUs to allocate (default: N1*N2; plan: whole system)");
  app.add_option("--n1", c.n1, "blocks of A");
  app.add_option("--n2", c.n2, "blocks of B");
  app.add_option("--tasklets", c.tasklets, "tasklets per DPU");
  app.add_option("--placement", c.placement, "mram or wram");
  app.add_option("--dtype", c.dtype, "fp32, int32 or int8");
  app.add_option("--seed", c.seed, "PRNG seed");
  app.add_option("--cost-params", c.cost_params, "cost model parameter file (JSON)");
  app.add_option("--out", c.out, "output path");

  PlanArgs plan;
  auto* p = app.add_subcommand("plan", "validate a GEMM split and print its partition plan");
  p->add_option("--a", plan.a, "A dimensions ROWSxK");
  p->add_option("--b", plan.b, "B dimensions KxCOLS");
  p->add_option("--preset", plan.preset, "take dimensions from a preset layer instead");
  p->add_option("--layer", plan.layer, "preset weight layer index");
  p->add_option("--batch", plan.batch, "preset batch size");
  p->add_flag("--json", plan.json, "emit the plan as JSON");

  GemmArgs gemm;
  auto* g = app.add_subcommand("gemm", "run one distributed GEMM on random operands and verify it");
  g->add_option("--a", gemm.a, "A dimensions ROWSxK");
  g->add_option("--b", gemm.b, "B dimensions KxCOLS");
  g->add_option("--activation", gemm.activation, "none, sigmoid or relu");

  TrainIrisArgs iris;
  auto* t = app.add_subcommand("train-iris", "train the 4-8-1 Iris classifier on one DPU");
  t->add_option("--data", iris.data, "Iris CSV path");
  t->add_option("--lr", iris.lr, "learning rate");
  t->add_option("--epochs", iris.epochs, "epochs");
  t->add_option("--batch", iris.batch, "batch size (0: whole training split)");
  t->add_option("--exp", iris.exp, "fast or exact exponential");
  t->add_option("--loss-out", iris.loss_out, "per-epoch error CSV path");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "estimate and functionally verify a preset inference run");
  b->add_option("--preset", bench.preset, "Net1, Net2, Net3 or Net4");
  b->add_option("--batch", bench.batch, "batch size (default: preset's first)");
  b->add_option("--mac-budget", bench.mac_budget, "skip the functional run above this many MACs");

  SweepArgs sweep;
  auto* s = app.add_subcommand("sweep", "cost-model sweep over DPU counts");
  s->add_option("--preset", sweep.preset, "Net1, Net2, Net3 or Net4");
  s->add_option("--batch", sweep.batch, "batch size (default: preset's first)");
  s->add_option("--dpu-list", sweep.dpu_list, "candidate DPU counts")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*p) return cmd_plan(c, plan, cfg, out);
    if (*g) return cmd_gemm(c, gemm, cfg, out);
    if (*t) return cmd_train_iris(c, iris, cfg, out);
    if (*b) return cmd_bench(c, bench, cfg, out);
    if (*s) return cmd_sweep(c, sweep, cfg, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"pimnn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace pimnn::cli
