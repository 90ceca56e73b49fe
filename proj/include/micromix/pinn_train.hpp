#pragma once

// Parametric field-approximator training, checkpointing and grid evaluation.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "micromix/diffnet/checkpoint.hpp"
#include "micromix/diffnet/network.hpp"
#include "micromix/errors.hpp"
#include "micromix/geometry.hpp"
#include "micromix/physics.hpp"
#include "micromix/random.hpp"
#include "micromix/sampling.hpp"

namespace micromix {

struct MinibatchSizes {
  std::size_t interior = 512;
  std::size_t boundary_per_kind = 64;
  std::size_t slices = 20;
};

struct TrainConfig {
  std::size_t steps = 5000;
  MinibatchSizes batch;
  diffnet::AdamConfig adam;
  LossWeights weights;
  CollocationOptions collocation;
  std::vector<std::size_t> hidden{64, 64, 64, 64};
  diffnet::Activation activation = diffnet::Activation::tanh;
  std::uint64_t seed = 1;
  std::size_t checkpoint_interval = 0;  // 0 disables periodic checkpoints
  std::string checkpoint_path;
  std::size_t log_interval = 100;
  std::string log_path;  // JSON lines; empty disables

  void validate() const {
    if (batch.interior == 0 || batch.boundary_per_kind == 0 || batch.slices == 0)
      throw DomainError("minibatch sizes must be at least 1");
    if (log_interval == 0) throw DomainError("log_interval must be at least 1");
    if (checkpoint_interval > 0 && checkpoint_path.empty())
      throw DomainError("checkpoint_interval set without a checkpoint path");
    if (!(adam.step_size > 0.0)) throw DomainError("step size must be positive");
    weights.validate();
    collocation.bounds.validate();
    collocation.dims.validate();
  }
};

struct TrainHistory {
  std::vector<std::size_t> steps;   // logged steps, strictly increasing
  std::vector<LossReport> reports;  // minibatch report at each logged step
  std::vector<double> step_totals;  // minibatch total at every step
  LossReport initial;               // whole collocation set, before training
  LossReport final;                 // whole collocation set, after training
};

struct TrainResult {
  diffnet::Network net;
  TrainHistory history;
  CollocationSet collocation;
};

// Thrown when training produces a non-finite loss; carries the last finite
// parameters. A periodic checkpoint on disk is left at its last good state.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const std::string& what, diffnet::Network last_good, std::size_t step)
      : NumericalError(what), last_good_(std::move(last_good)), step_(step) {}
  const diffnet::Network& last_good() const { return last_good_; }
  std::size_t step() const { return step_; }

 private:
  diffnet::Network last_good_;
  std::size_t step_;
};

inline nlohmann::ordered_json dims_to_json(const ChannelDims& d) {
  return {{"L", d.L}, {"L0", d.L0}, {"L1", d.L1}, {"H", d.H}, {"W", d.W}, {"d", d.d}, {"h_d", d.h_d}, {"l_d", d.l_d}};
}

inline ChannelDims dims_from_json(const nlohmann::ordered_json& j) {
  ChannelDims d;
  d.L = j.at("L").get<double>();
  d.L0 = j.at("L0").get<double>();
  d.L1 = j.at("L1").get<double>();
  d.H = j.at("H").get<double>();
  d.W = j.at("W").get<double>();
  d.d = j.at("d").get<double>();
  d.h_d = j.at("h_d").get<double>();
  d.l_d = j.at("l_d").get<double>();
  d.validate();
  return d;
}

inline diffnet::Checkpoint field_checkpoint(const diffnet::Network& net, const ChannelDims& dims, std::uint64_t seed) {
  diffnet::Checkpoint c{net, "field", seed, nlohmann::ordered_json::object()};
  c.metadata["channel"] = dims_to_json(dims);
  return c;
}

inline void save_checkpoint(const diffnet::Network& net, const ChannelDims& dims, std::uint64_t seed,
                            const std::string& path) {
  diffnet::save_checkpoint(field_checkpoint(net, dims, seed), path);
}

struct FieldModel {
  diffnet::Network net;
  ChannelDims dims;
  std::uint64_t seed = 0;
};

inline FieldModel load_field_model(const std::string& path) {
  diffnet::Checkpoint c = diffnet::load_checkpoint(path);
  if (c.role != "field") throw FormatError("checkpoint '" + path + "' holds a " + c.role + " network, not a field model");
  if (c.net.spec.input_dim != kInputDim || c.net.spec.output_dim != kFieldCount)
    throw FormatError("field checkpoint has the wrong input/output width");
  try {
    return {std::move(c.net), dims_from_json(c.metadata.at("channel")), c.seed};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("field checkpoint metadata unreadable: ") + e.what());
  }
}

namespace detail {

// Cycles through a fixed index set in reshuffled passes.
class IndexStream {
 public:
  IndexStream(std::size_t n, Rng& rng) : rng_(&rng), order_(n) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    shuffle(order_, *rng_);
  }

  std::size_t next() {
    if (cursor_ == order_.size()) {
      shuffle(order_, *rng_);
      cursor_ = 0;
    }
    return order_[cursor_++];
  }

  std::vector<std::size_t> take(std::size_t k) {
    std::vector<std::size_t> out;
    if (order_.empty()) return out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(next());
    return out;
  }

 private:
  Rng* rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace detail

using TrainObserver = std::function<void(std::size_t step, const LossReport&)>;

// Adam on minibatches drawn from one fixed collocation set.
inline TrainResult train(const TrainConfig& cfg, const TrainObserver& observer = {}) {
  cfg.validate();
  TrainResult result;
  CollocationOptions copt = cfg.collocation;
  copt.seed = mix_seed(cfg.seed, 100);
  result.collocation = generate_collocation(copt);
  const CollocationSet& set = result.collocation;

  diffnet::NetworkSpec spec = diffnet::NetworkSpec::field_approximator(copt.bounds, cfg.hidden);
  spec.activation = cfg.activation;
  result.net = diffnet::make_network(spec, cfg.seed);
  diffnet::Network& net = result.net;
  diffnet::OptimizerState opt = diffnet::OptimizerState::for_params(net.params, cfg.adam);

  const LossBatch everything = full_loss_batch(set);
  result.history.initial = evaluate_loss(net, everything, cfg.weights);

  std::ofstream log;
  if (!cfg.log_path.empty()) {
    log.open(cfg.log_path, std::ios::trunc);
    if (!log) throw FormatError("cannot open training log '" + cfg.log_path + "'");
  }

  Rng rng = make_rng(cfg.seed, 200);
  detail::IndexStream interior(std::size_t(set.interior.rows()), rng);
  std::vector<detail::IndexStream> boundary;
  for (const SegmentKind k : kAllSegmentKinds) boundary.emplace_back(set.rows(k).size(), rng);
  detail::IndexStream slices(set.slices.size(), rng);

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    std::vector<BoundaryPick> picks;
    for (const SegmentKind k : kAllSegmentKinds)
      for (std::size_t i : boundary[std::size_t(k)].take(cfg.batch.boundary_per_kind)) picks.push_back({k, i});
    const LossBatch batch = make_loss_batch(set, interior.take(cfg.batch.interior), picks,
                                            slices.take(std::min(cfg.batch.slices, set.slices.size())));
    const LossGradient lg = loss_gradient(net, batch, cfg.weights);
    bool finite = std::isfinite(lg.report.total);
    for (double g : lg.gradient) finite = finite && std::isfinite(g);
    if (!finite) throw TrainingAborted("non-finite loss at step " + std::to_string(step), net, step);

    diffnet::adam_step(net.params, lg.gradient, opt);
    result.history.step_totals.push_back(lg.report.total);
    if (step % cfg.log_interval == 0 || step == cfg.steps) {
      result.history.steps.push_back(step);
      result.history.reports.push_back(lg.report);
      if (log) log << lg.report.to_json(step).dump() << '\n';
      if (observer) observer(step, lg.report);
    }
    if (cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0)
      save_checkpoint(net, copt.dims, cfg.seed, cfg.checkpoint_path);
  }
  result.history.final = evaluate_loss(net, everything, cfg.weights);
  if (!cfg.checkpoint_path.empty()) save_checkpoint(net, copt.dims, cfg.seed, cfg.checkpoint_path);
  return result;
}

// ---------------------------------------------------------------------------
// Field evaluation
// ---------------------------------------------------------------------------

// Cell-centred grid over [x_lo, x_hi] x [y_lo, y_hi] (dimensionless).
struct GridSpec {
  std::size_t nx = 140;
  std::size_t ny = 40;
  double x_lo = 0.0, x_hi = 7.0;
  double y_lo = 0.0, y_hi = 1.0;

  static GridSpec main_channel(const ChannelDims& dims, std::size_t nx, std::size_t ny) {
    return {nx, ny, 0.0, dims.L / dims.H, 0.0, 1.0};
  }

  double dx() const { return (x_hi - x_lo) / double(nx); }
  double dy() const { return (y_hi - y_lo) / double(ny); }
};

struct FieldCell {
  double x = 0.0, y = 0.0;
  double u = 0.0, v = 0.0, speed = 0.0, p = 0.0, c = 0.0;
  bool masked = false;
};

struct FieldTable {
  GridSpec grid;
  std::vector<FieldCell> cells;  // row-major in y, then x

  std::size_t masked_count() const {
    std::size_t n = 0;
    for (const auto& c : cells) n += c.masked;
    return n;
  }
};

struct DesignCase {
  ControlPolygon cp;
  double Re = 22.5;
  double Sc = 10.0;

  CaseVector vector() const { return {cp.cp1, cp.cp2, cp.cp3, Re, Sc}; }
};

inline Eigen::MatrixXd design_inputs(const std::vector<Vec2>& points, const DesignCase& c) {
  Eigen::MatrixXd x(Eigen::Index(points.size()), Eigen::Index(kInputDim));
  for (std::size_t i = 0; i < points.size(); ++i) x.row(Eigen::Index(i)) = input_row(points[i], c.vector());
  return x;
}

inline FieldTable evaluate_fields(const diffnet::Network& net, const ChannelDims& dims, const DesignCase& design,
                                  const GridSpec& grid) {
  if (grid.nx == 0 || grid.ny == 0) throw DomainError("field grid needs at least one cell per axis");
  const ChannelLayout layout(design.cp, dims);
  FieldTable table{grid, {}};
  std::vector<Vec2> fluid;
  for (std::size_t j = 0; j < grid.ny; ++j) {
    for (std::size_t i = 0; i < grid.nx; ++i) {
      FieldCell cell;
      cell.x = grid.x_lo + (double(i) + 0.5) * grid.dx();
      cell.y = grid.y_lo + (double(j) + 0.5) * grid.dy();
      cell.masked = !layout.contains({cell.x * dims.H, cell.y * dims.H});
      if (!cell.masked) fluid.push_back({cell.x, cell.y});
      table.cells.push_back(cell);
    }
  }
  const Eigen::MatrixXd out = diffnet::forward(net, design_inputs(fluid, design));
  Eigen::Index k = 0;
  for (auto& cell : table.cells) {
    if (cell.masked) continue;
    cell.u = out(k, kU);
    cell.v = out(k, kV);
    cell.p = out(k, kP);
    cell.c = out(k, kC);
    cell.speed = std::hypot(cell.u, cell.v);
    ++k;
  }
  return table;
}

inline void write_field_csv(std::ostream& os, const FieldTable& t) {
  os << "x_star,y_star,u_star,v_star,p_star,c_star,masked\n" << std::setprecision(10);
  for (const auto& c : t.cells)
    os << c.x << ',' << c.y << ',' << c.u << ',' << c.v << ',' << c.p << ',' << c.c << ',' << (c.masked ? 1 : 0) << '\n';
}

// Velocity profile across the outlet at `n` uniform points (y* from 0 to 1).
inline std::vector<double> outlet_u_profile(const diffnet::Network& net, const ChannelDims& dims,
                                            const DesignCase& design, std::size_t n) {
  const ChannelLayout layout(design.cp, dims);
  const SlicePoints col = slice_points(layout, dims.L / dims.H, n);
  const Eigen::MatrixXd out = diffnet::forward(net, design_inputs(col.points, design));
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = out(Eigen::Index(i), kU);
  return u;
}

}  // namespace micromix
