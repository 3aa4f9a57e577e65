#pragma once

// Multilayer perceptron on the simulated PiM system.
//
// Inference distributes each layer's GEMM (A = activations, B = weights)
// over the DPU set; the host gathers, crops and re-scatters between layers.
// Training runs on a single DPU: forward pass, error E = Y - Y_hat,
// output delta E (.) s'(a_L), hidden deltas (delta W^T) (.) s'(a_l) and
// the update W += lr * a_{l-1}^T delta. GEMM, subtraction, element-wise
// product and the sigmoid derivative run as DPU kernels; transposes and the
// weight update happen on the host.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "pimnn/gemm.hpp"
#include "pimnn/kernels.hpp"
#include "pimnn/machine.hpp"
#include "pimnn/matrix.hpp"
#include "pimnn/planner.hpp"
#include "pimnn/rng.hpp"

namespace pimnn {

struct MlpConfig {
  std::vector<std::uint32_t> layer_sizes;  // input, hidden..., output
  std::vector<Activation> activations;     // one per non-input layer
  ElemType elem_type = ElemType::FP32;

  std::size_t weight_layers() const noexcept { return layer_sizes.empty() ? 0 : layer_sizes.size() - 1; }

  void validate() const {
    if (layer_sizes.size() < 3) throw Error(ErrorCode::InvalidArgument, "an MLP needs at least three layers");
    for (auto s : layer_sizes)
      if (s == 0) throw Error(ErrorCode::InvalidArgument, "layer sizes must be >= 1");
    if (activations.size() != weight_layers())
      throw Error(ErrorCode::InvalidArgument, "need one activation per non-input layer");
  }

  static MlpConfig uniform(std::vector<std::uint32_t> sizes, Activation act, ElemType type = ElemType::FP32) {
    MlpConfig c;
    c.activations.assign(sizes.size() > 0 ? sizes.size() - 1 : 0, act);
    c.layer_sizes = std::move(sizes);
    c.elem_type = type;
    return c;
  }
};

struct MlpModel {
  MlpConfig config;
  std::vector<MatrixBuf> weights;  // weights[l] is sizes[l] x sizes[l+1], row-major

  void validate() const {
    config.validate();
    if (weights.size() != config.weight_layers()) throw Error(ErrorCode::InvalidArgument, "weight count mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
      const auto& w = weights[l];
      if (w.rows() != config.layer_sizes[l] || w.cols() != config.layer_sizes[l + 1] ||
          w.elem_type() != config.elem_type)
        throw Error(ErrorCode::DimMismatch, "weight matrix " + std::to_string(l) + " has the wrong shape or type");
    }
  }

  static MlpModel zeros(const MlpConfig& cfg) {
    cfg.validate();
    MlpModel m{cfg, {}};
    for (std::size_t l = 0; l < cfg.weight_layers(); ++l)
      m.weights.emplace_back(cfg.elem_type, cfg.layer_sizes[l], cfg.layer_sizes[l + 1]);
    return m;
  }

  /// FP32 weights uniform in [-0.5, 0.5); integer weights uniform in [-8, 7].
  static MlpModel random(const MlpConfig& cfg, std::uint64_t seed) {
    MlpModel m = zeros(cfg);
    Rng rng(seed);
    for (auto& w : m.weights)
      for (std::uint32_t r = 0; r < w.rows(); ++r)
        for (std::uint32_t c = 0; c < w.cols(); ++c) {
          if (cfg.elem_type == ElemType::FP32) w.set<float>(r, c, static_cast<float>(rng.uniform(-0.5, 0.5)));
          else if (cfg.elem_type == ElemType::INT32) w.set<std::int32_t>(r, c, static_cast<std::int32_t>(rng.uniform_int(-8, 7)));
          else w.set<std::int8_t>(r, c, static_cast<std::int8_t>(rng.uniform_int(-8, 7)));
        }
    return m;
  }
};

/// Distribution of each layer's GEMM. A layer smaller than the requested
/// split uses min(N1, rows) x min(N2, cols).
struct InferenceExec {
  std::uint32_t n1 = 1;
  std::uint32_t n2 = 1;
  Placement placement = Placement::MramStream;
  std::uint32_t tasklets = 16;
  ExpMode exp_mode = ExpMode::Fast;
  LaunchOptions launch;

  GemmOptions layer_options(std::uint32_t rows, std::uint32_t cols, Activation act) const {
    GemmOptions o;
    o.n1 = std::min(n1, rows);
    o.n2 = std::min(n2, cols);
    o.tasklets = tasklets;
    o.placement = placement;
    o.activation = act;
    o.exp_mode = exp_mode;
    o.launch = launch;
    return o;
  }
};

/// Runs the model layer by layer on `sys`. `trace`, when given, receives
/// every layer's gathered output.
inline MatrixBuf feedforward(const MlpModel& model, const MatrixBuf& x, PimSystem& sys, const InferenceExec& exec,
                             std::vector<MatrixBuf>* trace = nullptr) {
  model.validate();
  if (x.cols() != model.config.layer_sizes.front())
    throw Error(ErrorCode::DimMismatch, "input has " + std::to_string(x.cols()) + " features, model expects " +
                                            std::to_string(model.config.layer_sizes.front()));
  if (x.elem_type() != model.config.elem_type) throw Error(ErrorCode::DimMismatch, "input type differs from model type");
  MatrixBuf act = x;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const MatrixBuf& w = model.weights[l];
    GemmResult r = distributed_gemm(sys, act, w, exec.layer_options(act.rows(), w.cols(), model.config.activations[l]));
    act = std::move(r.c);
    if (trace) trace->push_back(act);
  }
  return act;
}

// ---------------------------------------------------------------------------
// Host oracles
// ---------------------------------------------------------------------------

/// Row-major double matrix returned by the double-precision oracle.
struct DenseMatrix {
  std::uint32_t rows = 0, cols = 0;
  std::vector<double> values;
  double operator()(std::uint32_t r, std::uint32_t c) const { return values[std::size_t(r) * cols + c]; }
};

/// Double-precision forward pass with exact exponentials; the sequential
/// CPU baseline.
inline DenseMatrix reference_forward(const MlpModel& model, const MatrixBuf& x) {
  model.validate();
  DenseMatrix cur{x.rows(), x.cols(), {}};
  cur.values.resize(std::size_t(x.rows()) * x.cols());
  for (std::uint32_t r = 0; r < x.rows(); ++r)
    for (std::uint32_t c = 0; c < x.cols(); ++c) cur.values[std::size_t(r) * x.cols() + c] = x.get_as_double(r, c);
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const MatrixBuf& w = model.weights[l];
    DenseMatrix next{cur.rows, w.cols(), std::vector<double>(std::size_t(cur.rows) * w.cols())};
    for (std::uint32_t r = 0; r < cur.rows; ++r)
      for (std::uint32_t c = 0; c < w.cols(); ++c) {
        double s = 0;
        for (std::uint32_t k = 0; k < cur.cols; ++k) s += cur(r, k) * w.get_as_double(k, c);
        switch (model.config.activations[l]) {
          case Activation::Sigmoid: s = 1.0 / (1.0 + std::exp(-s)); break;
          case Activation::Relu: s = s > 0 ? s : 0; break;
          case Activation::None: break;
        }
        next.values[std::size_t(r) * next.cols + c] = s;
      }
    cur = std::move(next);
  }
  return cur;
}

/// Host re-computation with the DPU arithmetic rules (wide accumulation, one
/// narrowing per element, shared activation code). Matches distributed
/// inference bit for bit.
inline MatrixBuf emulated_forward(const MlpModel& model, const MatrixBuf& x, ExpMode mode = ExpMode::Fast) {
  model.validate();
  MatrixBuf cur = x;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const MatrixBuf& w = model.weights[l];
    MatrixBuf next(model.config.elem_type, cur.rows(), w.cols());
    dispatch(model.config.elem_type, [&]<class T>(std::type_identity<T>) {
      for (std::uint32_t r = 0; r < cur.rows(); ++r)
        for (std::uint32_t c = 0; c < w.cols(); ++c) {
          Accum<T> s{0};
          for (std::uint32_t k = 0; k < cur.cols(); ++k) s = mac<T>(s, cur.get<T>(r, k), w.get<T>(k, c));
          next.set<T>(r, c, activate<T>(narrow<T>(s), model.config.activations[l], mode));
        }
    });
    cur = std::move(next);
  }
  return cur;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 0.1;
  std::uint32_t epochs = 500;
  std::uint32_t batch_size = 0;  // 0 = whole training set
  std::uint32_t tasklets = 16;
  ExpMode exp_mode = ExpMode::Fast;
};

struct TrainResult {
  MlpModel model;
  std::vector<double> epoch_mean_abs_error;  // measured during each epoch's forward passes
};

inline MatrixBuf slice_rows(const MatrixBuf& m, std::uint32_t begin, std::uint32_t end) {
  MatrixBuf out(m.elem_type(), end - begin, m.cols());
  const std::size_t es = m.elem_bytes();
  for (std::uint32_t r = begin; r < end; ++r)
    for (std::uint32_t c = 0; c < m.cols(); ++c)
      std::memcpy(out.storage().data() + out.offset_of(r - begin, c), m.storage().data() + m.offset_of(r, c), es);
  return out;
}

/// Runs GEMM and element-wise kernels on DPU 0 of a system.
class SingleDpuExecutor {
 public:
  SingleDpuExecutor(PimSystem& sys, std::uint32_t tasklets, ExpMode mode)
      : sys_(sys), set_(sys.first(1)), tasklets_(tasklets), mode_(mode) {}

  MatrixBuf gemm(const MatrixBuf& a, const MatrixBuf& b, Activation act) {
    GemmOptions o;
    o.tasklets = tasklets_;
    o.activation = act;
    o.exp_mode = mode_;
    return distributed_gemm(sys_, a, b, o).c;
  }

  MatrixBuf unary(std::string_view kernel, const MatrixBuf& x) { return run(kernel, x, nullptr); }
  MatrixBuf binary(std::string_view kernel, const MatrixBuf& x, const MatrixBuf& y) { return run(kernel, x, &y); }

 private:
  MatrixBuf run(std::string_view kernel, const MatrixBuf& x, const MatrixBuf* y) {
    if (x.layout() != Layout::RowMajor || (y && (y->layout() != Layout::RowMajor || y->rows() != x.rows() ||
                                                 y->cols() != x.cols() || y->elem_type() != x.elem_type())))
      throw Error(ErrorCode::DimMismatch, "element-wise operands must be row-major with equal shapes");
    const std::uint64_t bytes = x.storage().size();
    KernelArgs args;
    args.a = {MemSpace::Mram, 0, x.padded_rows(), x.padded_cols(), x.elem_type()};
    args.b = {MemSpace::Mram, y ? bytes : 0, y ? x.padded_rows() : 0u, x.padded_cols(), x.elem_type()};
    args.c = {MemSpace::Mram, 2 * bytes, x.padded_rows(), x.padded_cols(), x.elem_type()};
    args.exp_mode = mode_;
    const HostBlock bx{set_.dpu_ids[0], 0, x.storage()};
    sys_.push_to_mram(set_, std::span<const HostBlock>(&bx, 1));
    if (y) {
      const HostBlock by{set_.dpu_ids[0], bytes, y->storage()};
      sys_.push_to_mram(set_, std::span<const HostBlock>(&by, 1));
    }
    sys_.set_tasklet_count(set_, tasklets_);
    sys_.launch(set_, kernel, args, LaunchMode::Sync);
    const MramRange range{set_.dpu_ids[0], 2 * bytes, static_cast<std::uint32_t>(bytes)};
    const auto out = sys_.pull_from_mram(set_, std::span<const MramRange>(&range, 1));
    MatrixBuf result(x.elem_type(), x.rows(), x.cols());
    std::memcpy(result.storage().data(), out[0].data(), bytes);
    // padding cells may hold op(0): restore the zero-padding invariant
    return crop_padding(std::move(result));
  }

  static MatrixBuf crop_padding(MatrixBuf m) {
    const std::size_t es = m.elem_bytes();
    for (std::uint32_t r = 0; r < m.padded_rows(); ++r)
      for (std::uint32_t c = 0; c < m.padded_cols(); ++c)
        if (r >= m.rows() || c >= m.cols()) std::memset(m.storage().data() + m.offset_of(r, c), 0, es);
    return m;
  }

  PimSystem& sys_;
  DpuSet set_;
  std::uint32_t tasklets_;
  ExpMode mode_;
};

/// Full backpropagation step on one batch. Returns the summed |E|.
inline double train_step(MlpModel& model, const MatrixBuf& x, const MatrixBuf& y, double lr, SingleDpuExecutor& dpu) {
  using namespace kernel_names;
  const std::size_t layers = model.weights.size();
  std::vector<MatrixBuf> acts{x};
  for (std::size_t l = 0; l < layers; ++l) acts.push_back(dpu.gemm(acts.back(), model.weights[l], Activation::Sigmoid));

  const MatrixBuf err = dpu.binary(kMatSub, y, acts.back());
  double abs_err = 0;
  for (std::uint32_t r = 0; r < err.rows(); ++r)
    for (std::uint32_t c = 0; c < err.cols(); ++c) abs_err += std::fabs(err.get<float>(r, c));

  MatrixBuf delta = dpu.binary(kEwMul, err, dpu.unary(kSigmoidDeriv, acts.back()));
  const auto step = static_cast<float>(lr);
  for (std::size_t l = layers; l-- > 0;) {
    const MatrixBuf grad = dpu.gemm(transpose(acts[l]), delta, Activation::None);
    if (l > 0) {
      const MatrixBuf back = dpu.gemm(delta, transpose(model.weights[l]), Activation::None);
      delta = dpu.binary(kEwMul, back, dpu.unary(kSigmoidDeriv, acts[l]));
    }
    MatrixBuf& w = model.weights[l];
    for (std::uint32_t r = 0; r < w.rows(); ++r)
      for (std::uint32_t c = 0; c < w.cols(); ++c) w.set<float>(r, c, w.get<float>(r, c) + step * grad.get<float>(r, c));
  }
  return abs_err;
}

/// Trains an all-sigmoid FP32 model on DPU 0 of `sys`.
inline TrainResult train(MlpModel model, const MatrixBuf& x, const MatrixBuf& y, const TrainConfig& cfg, PimSystem& sys) {
  model.validate();
  if (model.config.elem_type != ElemType::FP32) throw Error(ErrorCode::InvalidArgument, "training requires FP32");
  for (auto a : model.config.activations)
    if (a != Activation::Sigmoid) throw Error(ErrorCode::InvalidArgument, "training requires sigmoid activations");
  if (x.rows() != y.rows() || x.cols() != model.config.layer_sizes.front() || y.cols() != model.config.layer_sizes.back())
    throw Error(ErrorCode::DimMismatch, "training data does not match the model");
  if (x.rows() == 0) throw Error(ErrorCode::DimError, "empty training set");

  SingleDpuExecutor dpu(sys, cfg.tasklets, cfg.exp_mode);
  const std::uint32_t batch = cfg.batch_size == 0 ? x.rows() : std::min(cfg.batch_size, x.rows());
  TrainResult result{std::move(model), {}};
  result.epoch_mean_abs_error.reserve(cfg.epochs);
  for (std::uint32_t e = 0; e < cfg.epochs; ++e) {
    double abs_err = 0;
    for (std::uint32_t b = 0; b < x.rows(); b += batch) {
      const std::uint32_t end = std::min(b + batch, x.rows());
      if (b == 0 && end == x.rows()) {
        abs_err += train_step(result.model, x, y, cfg.learning_rate, dpu);
      } else {
        abs_err += train_step(result.model, slice_rows(x, b, end), slice_rows(y, b, end), cfg.learning_rate, dpu);
      }
    }
    result.epoch_mean_abs_error.push_back(abs_err / (double(x.rows()) * y.cols()));
  }
  return result;
}

/// Fraction of samples where (output >= threshold) matches the 0/1 label.
inline double accuracy(const MatrixBuf& outputs, const MatrixBuf& labels, double threshold = 0.5) {
  if (outputs.rows() != labels.rows() || outputs.cols() != 1 || labels.cols() != 1)
    throw Error(ErrorCode::DimMismatch, "accuracy needs matching single-column outputs and labels");
  if (outputs.rows() == 0) return 0.0;
  std::uint32_t correct = 0;
  for (std::uint32_t r = 0; r < outputs.rows(); ++r) {
    const bool predicted = outputs.get_as_double(r, 0) >= threshold;
    const bool actual = labels.get_as_double(r, 0) >= 0.5;
    correct += predicted == actual;
  }
  return double(correct) / outputs.rows();
}

inline double evaluate(const MlpModel& model, const MatrixBuf& x, const MatrixBuf& labels, PimSystem& sys,
                       const InferenceExec& exec = {}, double threshold = 0.5) {
  return accuracy(feedforward(model, x, sys, exec), labels, threshold);
}

}  // namespace pimnn
