#pragma once

// Fully connected network with exact first derivatives of every output with
// respect to the leading "spatial" inputs, and reverse-mode parameter
// gradients of losses that may depend on those derivatives.
//
// Derivatives are carried forward as tangent rows stacked under the value
// rows: a batch of B inputs becomes a 3B-row block [values; d/dx*; d/dy*]
// that flows through every affine layer with one matrix product. The reverse
// pass differentiates that augmented forward pass, which needs the first and
// second derivative of the activation.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "micromix/diffnet/tape.hpp"
#include "micromix/errors.hpp"
#include "micromix/random.hpp"
#include "micromix/sampling.hpp"

namespace micromix::diffnet {

using Matrix = Eigen::MatrixXd;
using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

enum class Activation { tanh, sine };

inline std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "sine"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "sine") return Activation::sine;
  throw DomainError("unknown activation '" + s + "' (expected tanh or sine)");
}

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_offset = 0;  // out x in, row-major
  std::size_t bias_offset = 0;
};

struct NetworkSpec {
  std::size_t input_dim = kInputDim;
  std::size_t output_dim = 9;
  std::vector<std::size_t> hidden{64, 64, 64, 64};
  Activation activation = Activation::tanh;
  // Each input is mapped affinely from [lo, hi] to [-1, 1] before layer 0.
  std::vector<Interval> input_bounds;
  // Leading inputs that spatial_jacobian differentiates (0 or 2).
  std::size_t spatial_inputs = 2;
  // Multiplies the initial standard deviation of the output layer's weights.
  double output_init_scale = 1.0;
  // Initial output bias; empty means zero.
  std::vector<double> output_bias_init;

  static NetworkSpec field_approximator(const SampleBounds& bounds, std::vector<std::size_t> hidden = {64, 64, 64, 64}) {
    NetworkSpec s;
    s.hidden = std::move(hidden);
    s.input_bounds.assign(bounds.dims.begin(), bounds.dims.end());
    return s;
  }

  void validate() const {
    if (input_dim == 0 || output_dim == 0) throw DomainError("network input/output widths must be at least 1");
    for (std::size_t w : hidden) {
      if (w == 0) throw DomainError("hidden layer widths must be at least 1");
    }
    if (input_bounds.size() != input_dim) throw DomainError("network needs one normalization interval per input");
    for (const auto& b : input_bounds) {
      if (!(b.lo < b.hi)) throw DomainError("network normalization interval needs lo < hi");
    }
    if (spatial_inputs != 0 && spatial_inputs != 2) throw DomainError("spatial_inputs must be 0 or 2");
    if (spatial_inputs > input_dim) throw DomainError("spatial_inputs exceeds input_dim");
    if (!output_bias_init.empty() && output_bias_init.size() != output_dim)
      throw DomainError("output_bias_init length must equal output_dim");
  }

  std::vector<LayerShape> layer_shapes() const {
    std::vector<LayerShape> shapes;
    std::size_t in = input_dim, offset = 0;
    auto add = [&](std::size_t out) {
      shapes.push_back({in, out, offset, offset + in * out});
      offset += in * out + out;
      in = out;
    };
    for (std::size_t w : hidden) add(w);
    add(output_dim);
    return shapes;
  }

  std::size_t parameter_count() const {
    const auto s = layer_shapes();
    return s.back().bias_offset + s.back().out;
  }
};

struct ParameterSet {
  std::vector<double> values;
  std::vector<LayerShape> shapes;
  std::uint32_t version = 1;

  std::size_t size() const { return values.size(); }

  void validate() const {
    std::size_t total = 0;
    for (const auto& s : shapes) total += s.in * s.out + s.out;
    if (total != values.size()) throw DomainError("parameter array length does not match its shape table");
  }
};

struct Network {
  NetworkSpec spec;
  ParameterSet params;
};

// Weights ~ N(0, (scale / sqrt(fan_in))^2); biases zero unless the spec sets
// an initial output bias.
inline double init_scale(std::size_t fan_in) { return 1.0 / std::sqrt(double(fan_in)); }

inline ParameterSet init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParameterSet p;
  p.shapes = spec.layer_shapes();
  p.values.assign(spec.parameter_count(), 0.0);
  Rng rng = make_rng(seed, 0x6e6574);
  for (std::size_t l = 0; l < p.shapes.size(); ++l) {
    const auto& s = p.shapes[l];
    const double sd = init_scale(s.in) * (l + 1 == p.shapes.size() ? spec.output_init_scale : 1.0);
    for (std::size_t k = 0; k < s.in * s.out; ++k) p.values[s.weight_offset + k] = sd * standard_normal(rng);
  }
  if (!spec.output_bias_init.empty()) {
    const auto& last = p.shapes.back();
    for (std::size_t k = 0; k < last.out; ++k) p.values[last.bias_offset + k] = spec.output_bias_init[k];
  }
  return p;
}

inline Network make_network(const NetworkSpec& spec, std::uint64_t seed) { return {spec, init_params(spec, seed)}; }

// Cached forward pass. `blocks` is 1 (values only) or 3 (values, d/dx, d/dy).
struct Trace {
  Eigen::Index batch = 0;
  Eigen::Index blocks = 1;
  std::vector<Matrix> inputs;  // stacked input to each layer
  std::vector<Matrix> pre;     // stacked pre-activation of each hidden layer
  std::vector<Matrix> d1, d2;  // activation derivatives at the value rows
  Matrix output;               // stacked network output

  auto values() const { return output.topRows(batch); }
  auto d_dx() const { return output.middleRows(batch, batch); }
  auto d_dy() const { return output.middleRows(2 * batch, batch); }
};

namespace detail {

inline void activate(Activation act, const Matrix& z, Matrix& a, Matrix& d1, Matrix& d2) {
  if (act == Activation::tanh) {
    a = z.array().tanh().matrix();
    d1 = (1.0 - a.array().square()).matrix();
    d2 = (-2.0 * a.array() * d1.array()).matrix();
  } else {
    a = z.array().sin().matrix();
    d1 = z.array().cos().matrix();
    d2 = -a;
  }
}

}  // namespace detail

inline void check_inputs(const Network& net, const Matrix& inputs) {
  if (std::size_t(inputs.cols()) != net.spec.input_dim) {
    std::ostringstream msg;
    msg << "network expects " << net.spec.input_dim << " input columns, got " << inputs.cols();
    throw DomainError(msg.str());
  }
  if (net.params.values.size() != net.spec.parameter_count())
    throw DomainError("parameter array does not match the network spec");
}

inline Trace trace(const Network& net, const Matrix& inputs, bool with_jacobian) {
  check_inputs(net, inputs);
  const NetworkSpec& spec = net.spec;
  if (with_jacobian && spec.spatial_inputs != 2) throw DomainError("network has no spatial inputs to differentiate");

  Trace t;
  t.batch = inputs.rows();
  t.blocks = with_jacobian ? 3 : 1;
  const Eigen::Index B = t.batch;

  Matrix x(t.blocks * B, inputs.cols());
  x.setZero();
  for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
    const Interval& iv = spec.input_bounds[std::size_t(j)];
    const double scale = 2.0 / iv.width();
    x.col(j).head(B) = ((inputs.col(j).array() - iv.lo) * scale - 1.0).matrix();
    if (with_jacobian && j < 2) x.col(j).segment((j + 1) * B, B).setConstant(scale);
  }

  const auto& shapes = net.params.shapes;
  const double* theta = net.params.values.data();
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const LayerShape& s = shapes[l];
    const RowMajorMap W(theta + s.weight_offset, Eigen::Index(s.out), Eigen::Index(s.in));
    const Eigen::Map<const Eigen::RowVectorXd> b(theta + s.bias_offset, Eigen::Index(s.out));
    Matrix z = x * W.transpose();
    z.topRows(B).rowwise() += b;
    t.inputs.push_back(std::move(x));
    if (l + 1 == shapes.size()) {
      t.output = std::move(z);
      break;
    }
    Matrix a, d1, d2;
    detail::activate(spec.activation, z.topRows(B), a, d1, d2);
    x.resize(z.rows(), z.cols());
    x.topRows(B) = a;
    for (Eigen::Index k = 1; k < t.blocks; ++k) x.middleRows(k * B, B) = z.middleRows(k * B, B).cwiseProduct(d1);
    t.pre.push_back(std::move(z));
    t.d1.push_back(std::move(d1));
    t.d2.push_back(std::move(d2));
  }
  return t;
}

inline Matrix forward(const Network& net, const Matrix& inputs) { return trace(net, inputs, false).output; }

// values(b, k) = output k at row b; d_dx / d_dy hold the matching derivatives.
struct SpatialJacobian {
  Matrix values;
  Matrix d_dx;
  Matrix d_dy;
};

inline SpatialJacobian spatial_jacobian(const Network& net, const Matrix& inputs) {
  const Trace t = trace(net, inputs, true);
  return {t.values(), t.d_dx(), t.d_dy()};
}

// Vector-Jacobian product of the traced forward pass. `g_out` stacks the
// cotangents of the traced output blocks (B or 3B rows).
inline void backward(const Network& net, const Trace& t, Matrix g_out, std::vector<double>& grad) {
  const auto& shapes = net.params.shapes;
  const double* theta = net.params.values.data();
  const Eigen::Index B = t.batch;
  if (grad.size() != net.params.values.size()) grad.assign(net.params.values.size(), 0.0);

  Matrix g = std::move(g_out);
  for (std::size_t l = shapes.size(); l-- > 0;) {
    const LayerShape& s = shapes[l];
    if (l + 1 < shapes.size()) {
      // g holds cotangents of the activation block; move to pre-activation.
      const Matrix& z = t.pre[l];
      const Matrix& d1 = t.d1[l];
      const Matrix& d2 = t.d2[l];
      Matrix gz(g.rows(), g.cols());
      gz.topRows(B) = g.topRows(B).cwiseProduct(d1);
      if (t.blocks == 3) {
        const auto gx = g.middleRows(B, B), gy = g.middleRows(2 * B, B);
        gz.topRows(B) += (gx.cwiseProduct(z.middleRows(B, B)) + gy.cwiseProduct(z.middleRows(2 * B, B))).cwiseProduct(d2);
        gz.middleRows(B, B) = gx.cwiseProduct(d1);
        gz.middleRows(2 * B, B) = gy.cwiseProduct(d1);
      }
      g = std::move(gz);
    }
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gW(
        grad.data() + s.weight_offset, Eigen::Index(s.out), Eigen::Index(s.in));
    Eigen::Map<Eigen::RowVectorXd> gb(grad.data() + s.bias_offset, Eigen::Index(s.out));
    gW.noalias() += g.transpose() * t.inputs[l];
    gb += g.topRows(B).colwise().sum();
    if (l > 0) {
      const RowMajorMap W(theta + s.weight_offset, Eigen::Index(s.out), Eigen::Index(s.in));
      g = g * W;
    }
  }
}

// Tape-side view of one traced batch: output k of row b, and its spatial
// derivatives when the batch was traced with a jacobian.
class VarBlock {
 public:
  VarBlock(ad::Tape& tape, const Trace& t) : batch_(t.batch), width_(t.output.cols()), blocks_(t.blocks) {
    vars_.reserve(std::size_t(t.output.size()));
    for (Eigen::Index k = 0; k < blocks_; ++k)
      for (Eigen::Index b = 0; b < batch_; ++b)
        for (Eigen::Index j = 0; j < width_; ++j) vars_.push_back(tape.variable(t.output(k * batch_ + b, j)));
  }

  Eigen::Index rows() const { return batch_; }
  Eigen::Index cols() const { return width_; }
  bool has_jacobian() const { return blocks_ == 3; }

  const ad::Var& value(Eigen::Index b, Eigen::Index j) const { return at(0, b, j); }
  const ad::Var& d_dx(Eigen::Index b, Eigen::Index j) const { return at(1, b, j); }
  const ad::Var& d_dy(Eigen::Index b, Eigen::Index j) const { return at(2, b, j); }

  // Gathers adjoints of this block's leaves into a stacked cotangent matrix.
  Matrix cotangent(const std::vector<double>& adj) const {
    Matrix g(blocks_ * batch_, width_);
    for (Eigen::Index k = 0; k < blocks_; ++k)
      for (Eigen::Index b = 0; b < batch_; ++b)
        for (Eigen::Index j = 0; j < width_; ++j) g(k * batch_ + b, j) = adj[at(k, b, j).index()];
    return g;
  }

 private:
  const ad::Var& at(Eigen::Index k, Eigen::Index b, Eigen::Index j) const {
    if (k >= blocks_) throw std::logic_error("batch was traced without a spatial jacobian");
    return vars_[std::size_t((k * batch_ + b) * width_ + j)];
  }

  Eigen::Index batch_, width_, blocks_;
  std::vector<ad::Var> vars_;
};

struct BatchInput {
  Matrix inputs;
  bool with_jacobian = false;
};

using LossFn = std::function<ad::Var(ad::Tape&, std::span<const VarBlock>)>;

struct GradientResult {
  double loss = 0.0;
  std::vector<double> gradient;
};

// Exact gradient of loss(network outputs [and spatial derivatives]) with
// respect to the parameters. The loss is recorded on a scalar tape from the
// per-row outputs; its adjoints seed the batched reverse pass.
inline GradientResult param_gradient(const Network& net, std::span<const BatchInput> batches, const LossFn& loss) {
  std::vector<Trace> traces;
  traces.reserve(batches.size());
  for (const auto& b : batches) traces.push_back(trace(net, b.inputs, b.with_jacobian));

  ad::Tape tape;
  std::size_t leaves = 0;
  for (const auto& t : traces) leaves += std::size_t(t.output.size());
  tape.reserve(leaves * 4);
  std::vector<VarBlock> blocks;
  blocks.reserve(traces.size());
  for (const auto& t : traces) blocks.emplace_back(tape, t);

  const ad::Var out = loss(tape, blocks);
  GradientResult r;
  r.loss = out.value();
  r.gradient.assign(net.params.values.size(), 0.0);
  const std::vector<double> adj = tape.gradient(out);
  for (std::size_t i = 0; i < traces.size(); ++i) backward(net, traces[i], blocks[i].cotangent(adj), r.gradient);
  return r;
}

inline GradientResult param_gradient(const Network& net, const BatchInput& batch, const LossFn& loss) {
  return param_gradient(net, std::span<const BatchInput>(&batch, 1), loss);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  AdamConfig config;

  static OptimizerState for_params(const ParameterSet& p, AdamConfig cfg = {}) {
    return {std::vector<double>(p.size(), 0.0), std::vector<double>(p.size(), 0.0), 0, cfg};
  }
};

inline void adam_step(ParameterSet& params, std::span<const double> grad, OptimizerState& state) {
  const std::size_t n = params.values.size();
  if (grad.size() != n || state.m.size() != n || state.v.size() != n)
    throw DomainError("adam_step: parameter, gradient and moment shapes differ");
  for (double g : grad) {
    if (!std::isfinite(g)) throw NumericalError("adam_step: non-finite gradient entry; step refused");
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, double(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grad[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params.values[i] -= c.step_size * mhat / (std::sqrt(vhat) + c.epsilon);
  }
}

}  // namespace micromix::diffnet
