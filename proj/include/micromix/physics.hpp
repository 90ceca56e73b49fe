#pragma once

// First-order dimensionless flow + transport residuals and the weighted
// training loss. Residual kernels are templates so the same code runs on
// plain doubles and on tape variables.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "micromix/diffnet/network.hpp"
#include "micromix/diffnet/tape.hpp"
#include "micromix/errors.hpp"
#include "micromix/geometry.hpp"
#include "micromix/sampling.hpp"

namespace micromix {

// Network output columns.
enum Field : std::size_t { kU = 0, kV, kP, kTxx, kTyy, kTxy, kC, kJx, kJy };
inline constexpr std::size_t kFieldCount = 9;

template <typename T>
struct FieldSample {
  std::array<T, kFieldCount> value{};
  std::array<T, kFieldCount> d_dx{};
  std::array<T, kFieldCount> d_dy{};
};

// One residual per governing relation: continuity, x/y momentum, the three
// stress closures, species transport and the two flux closures.
template <typename T>
struct ResidualBundle {
  T cont, mom_x, mom_y, stress_xx, stress_yy, stress_xy, transport, flux_x, flux_y;

  std::array<T, 9> as_array() const {
    return {cont, mom_x, mom_y, stress_xx, stress_yy, stress_xy, transport, flux_x, flux_y};
  }
};

struct DimensionlessGroups {
  double Re = 10.0;
  double Sc = 10.0;

  // Re = rho U_m H / mu, Sc = mu / (rho D).
  static DimensionlessGroups from_physical(double rho, double mu, double D, double U_m, double H) {
    return {rho * U_m * H / mu, mu / (rho * D)};
  }

  void validate() const {
    if (!(Re > 0.0) || !std::isfinite(Re)) throw DomainError("Reynolds number must be positive");
    if (!(Sc > 0.0) || !std::isfinite(Sc)) throw DomainError("Schmidt number must be positive");
  }
};

namespace detail {

template <typename T>
void require_finite(const FieldSample<T>& s) {
  for (const auto* arr : {&s.value, &s.d_dx, &s.d_dy})
    for (const auto& v : *arr)
      if (!std::isfinite(ad::value_of(v))) throw NumericalError("field sample contains a non-finite value");
}

}  // namespace detail

template <typename T>
ResidualBundle<T> pde_residuals(const FieldSample<T>& s, double Re, double Sc) {
  DimensionlessGroups{Re, Sc}.validate();
  detail::require_finite(s);
  const auto& f = s.value;
  const auto& dx = s.d_dx;
  const auto& dy = s.d_dy;
  const double inv_re = 1.0 / Re;
  const double inv_pe = 1.0 / (Re * Sc);
  ResidualBundle<T> r;
  r.cont = dx[kU] + dy[kV];
  r.mom_x = f[kU] * dx[kU] + f[kV] * dy[kU] - dx[kTxx] - dy[kTxy];
  r.mom_y = f[kU] * dx[kV] + f[kV] * dy[kV] - dx[kTxy] - dy[kTyy];
  r.stress_xx = -f[kP] + 2.0 * inv_re * dx[kU] - f[kTxx];
  r.stress_yy = -f[kP] + 2.0 * inv_re * dy[kV] - f[kTyy];
  r.stress_xy = inv_re * (dy[kU] + dx[kV]) - f[kTxy];
  r.transport = f[kU] * dx[kC] + f[kV] * dy[kC] + inv_pe * (dx[kJx] + dy[kJy]);
  r.flux_x = f[kJx] + dx[kC];
  r.flux_y = f[kJy] + dy[kC];
  return r;
}

template <typename T>
struct BoundaryResiduals {
  std::array<T, 3> r{};
  std::size_t count = 0;
};

// Inlets: tangential velocity, inflow parabola, inlet concentration.
// Walls and baffles: no slip plus zero normal flux J.n. Outlet: p* = 0 and
// zero streamwise diffusive flux.
template <typename T>
BoundaryResiduals<T> boundary_residuals(const FieldSample<T>& s, SegmentKind kind, Vec2 normal,
                                        const std::array<double, 3>& target) {
  const auto& f = s.value;
  switch (kind) {
    case SegmentKind::inlet_top:
    case SegmentKind::inlet_bottom:
      return {{f[kU] - target[0], f[kV] - target[1], f[kC] - target[2]}, 3};
    case SegmentKind::wall:
    case SegmentKind::baffle:
      return {{f[kU], f[kV], f[kJx] * normal.x + f[kJy] * normal.y}, 3};
    case SegmentKind::outlet:
      return {{f[kP], f[kJx], T(0.0)}, 2};
  }
  throw DomainError("unknown boundary kind");
}

// (trapezoid integral of the through-flow velocity - target)^2
template <typename T>
T massflow_penalty(const std::vector<double>& weights, const std::vector<T>& velocity, double target) {
  if (weights.size() < 2 || velocity.size() != weights.size())
    throw DomainError("mass-flow penalty needs at least 2 weighted points per slice");
  T flux = T(0.0);
  for (std::size_t k = 0; k < weights.size(); ++k) flux = flux + weights[k] * velocity[k];
  const T e = flux - target;
  return e * e;
}

// ---------------------------------------------------------------------------
// Loss assembly
// ---------------------------------------------------------------------------

enum class LossFamily : std::size_t {
  cont, mom_x, mom_y, stress_xx, stress_yy, stress_xy, transport, flux_x, flux_y,
  inlet, wall, baffle, outlet, penalty
};
inline constexpr std::size_t kLossFamilyCount = 14;

inline const char* to_string(LossFamily f) {
  static constexpr std::array<const char*, kLossFamilyCount> names{
      "cont", "mom_x", "mom_y", "stress_xx", "stress_yy", "stress_xy", "transport",
      "flux_x", "flux_y", "inlet", "wall", "baffle", "outlet", "penalty"};
  return names[std::size_t(f)];
}

struct LossWeights {
  double pde = 1.0;
  double inlet = 10.0;
  double wall = 10.0;
  double baffle = 10.0;
  double outlet = 10.0;
  double penalty = 10.0;

  double of(LossFamily f) const {
    switch (f) {
      case LossFamily::inlet: return inlet;
      case LossFamily::wall: return wall;
      case LossFamily::baffle: return baffle;
      case LossFamily::outlet: return outlet;
      case LossFamily::penalty: return penalty;
      default: return pde;
    }
  }

  void validate() const {
    const std::array<double, 6> w{pde, inlet, wall, baffle, outlet, penalty};
    bool any = false;
    for (double v : w) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("loss weights must be finite and nonnegative");
      any = any || v > 0.0;
    }
    if (!any) throw DomainError("at least one loss weight must be positive");
  }
};

struct LossReport {
  std::array<double, kLossFamilyCount> terms{};  // per-family mean squares
  double total = 0.0;

  double operator[](LossFamily f) const { return terms[std::size_t(f)]; }

  nlohmann::ordered_json to_json(std::size_t step) const {
    nlohmann::ordered_json j;
    j["step"] = step;
    for (std::size_t i = 0; i < kLossFamilyCount; ++i) j[to_string(LossFamily(i))] = terms[i];
    j["total"] = total;
    return j;
  }
};

// Rows handed to the network for one loss evaluation.
struct LossBatch {
  Eigen::MatrixXd interior;                 // n x 7, traced with jacobian
  Eigen::MatrixXd boundary;                 // m x 7
  std::vector<SegmentKind> boundary_kind;   // per boundary row
  std::vector<Vec2> boundary_normal;
  std::vector<std::array<double, 3>> boundary_target;
  Eigen::MatrixXd slices;                   // concatenated slice columns
  struct SliceRef {
    std::size_t offset, count;
    const PenaltySlice* slice;
  };
  std::vector<SliceRef> slice_refs;
};

inline Eigen::RowVectorXd input_row(Vec2 p, const CaseVector& design) {
  Eigen::RowVectorXd r(static_cast<Eigen::Index>(kInputDim));
  r << p.x, p.y, design[0], design[1], design[2], design[3], design[4];
  return r;
}

struct BoundaryPick {
  SegmentKind kind;
  std::size_t index;
};

inline LossBatch make_loss_batch(const CollocationSet& set, const std::vector<std::size_t>& interior_rows,
                                 const std::vector<BoundaryPick>& boundary_rows,
                                 const std::vector<std::size_t>& slice_ids) {
  LossBatch b;
  b.interior.resize(Eigen::Index(interior_rows.size()), Eigen::Index(kInputDim));
  for (std::size_t i = 0; i < interior_rows.size(); ++i) b.interior.row(Eigen::Index(i)) = set.interior.row(Eigen::Index(interior_rows[i]));

  b.boundary.resize(Eigen::Index(boundary_rows.size()), Eigen::Index(kInputDim));
  for (std::size_t i = 0; i < boundary_rows.size(); ++i) {
    const BoundaryRow& r = set.rows(boundary_rows[i].kind).at(boundary_rows[i].index);
    b.boundary.row(Eigen::Index(i)) = input_row(r.point, r.design);
    b.boundary_kind.push_back(boundary_rows[i].kind);
    b.boundary_normal.push_back(r.normal);
    b.boundary_target.push_back(r.target);
  }

  std::size_t total = 0;
  for (std::size_t id : slice_ids) total += set.slices.at(id).points.size();
  b.slices.resize(Eigen::Index(total), Eigen::Index(kInputDim));
  std::size_t off = 0;
  for (std::size_t id : slice_ids) {
    const PenaltySlice& s = set.slices[id];
    for (std::size_t k = 0; k < s.points.size(); ++k) b.slices.row(Eigen::Index(off + k)) = input_row(s.points[k], s.design);
    b.slice_refs.push_back({off, s.points.size(), &s});
    off += s.points.size();
  }
  return b;
}

inline LossBatch full_loss_batch(const CollocationSet& set) {
  std::vector<std::size_t> interior(std::size_t(set.interior.rows()));
  for (std::size_t i = 0; i < interior.size(); ++i) interior[i] = i;
  std::vector<BoundaryPick> boundary;
  for (const SegmentKind k : kAllSegmentKinds)
    for (std::size_t i = 0; i < set.rows(k).size(); ++i) boundary.push_back({k, i});
  std::vector<std::size_t> slices(set.slices.size());
  for (std::size_t i = 0; i < slices.size(); ++i) slices[i] = i;
  return make_loss_batch(set, interior, boundary, slices);
}

namespace detail {

inline LossFamily family_of(SegmentKind k) {
  switch (k) {
    case SegmentKind::inlet_top:
    case SegmentKind::inlet_bottom: return LossFamily::inlet;
    case SegmentKind::wall: return LossFamily::wall;
    case SegmentKind::baffle: return LossFamily::baffle;
    case SegmentKind::outlet: return LossFamily::outlet;
  }
  throw DomainError("unknown boundary kind");
}

// Per-family mean squares and their weighted sum. Getters supply network
// outputs (and interior derivatives) as T for a given row.
template <typename T, typename InteriorFn, typename BoundaryFn, typename SliceFn>
std::pair<std::array<T, kLossFamilyCount>, T> assemble_loss(const LossBatch& batch, const LossWeights& weights,
                                                            InteriorFn interior, BoundaryFn boundary, SliceFn slice_u) {
  std::array<T, kLossFamilyCount> sum;
  sum.fill(T(0.0));
  std::array<std::size_t, kLossFamilyCount> count{};

  for (Eigen::Index i = 0; i < batch.interior.rows(); ++i) {
    const FieldSample<T> s = interior(i);
    const auto r = pde_residuals(s, batch.interior(i, kRe), batch.interior(i, kSc)).as_array();
    for (std::size_t f = 0; f < 9; ++f) {
      sum[f] = sum[f] + r[f] * r[f];
      ++count[f];
    }
  }
  for (Eigen::Index i = 0; i < batch.boundary.rows(); ++i) {
    const std::size_t idx = std::size_t(i);
    const FieldSample<T> s = boundary(i);
    const auto br = boundary_residuals(s, batch.boundary_kind[idx], batch.boundary_normal[idx], batch.boundary_target[idx]);
    const std::size_t f = std::size_t(family_of(batch.boundary_kind[idx]));
    for (std::size_t k = 0; k < br.count; ++k) sum[f] = sum[f] + br.r[k] * br.r[k];
    count[f] += br.count;
  }
  const std::size_t pf = std::size_t(LossFamily::penalty);
  for (const auto& ref : batch.slice_refs) {
    std::vector<T> u;
    u.reserve(ref.count);
    for (std::size_t k = 0; k < ref.count; ++k) u.push_back(slice_u(Eigen::Index(ref.offset + k)));
    sum[pf] = sum[pf] + massflow_penalty(ref.slice->weights, u, ref.slice->target);
    ++count[pf];
  }

  T total = T(0.0);
  for (std::size_t f = 0; f < kLossFamilyCount; ++f) {
    if (count[f] == 0) continue;
    sum[f] = sum[f] * (1.0 / double(count[f]));
    const double w = weights.of(LossFamily(f));
    if (w != 0.0) total = total + w * sum[f];
  }
  return {sum, total};
}

inline LossReport to_report(const std::array<double, kLossFamilyCount>& terms, double total) {
  LossReport r;
  r.terms = terms;
  r.total = total;
  return r;
}

}  // namespace detail

inline LossReport evaluate_loss(const diffnet::Network& net, const LossBatch& batch, const LossWeights& weights) {
  weights.validate();
  const auto ti = diffnet::trace(net, batch.interior, true);
  const auto tb = diffnet::forward(net, batch.boundary);
  const auto ts = diffnet::forward(net, batch.slices);
  auto interior = [&](Eigen::Index i) {
    FieldSample<double> s;
    for (std::size_t k = 0; k < kFieldCount; ++k) {
      const auto kk = Eigen::Index(k);
      s.value[k] = ti.values()(i, kk);
      s.d_dx[k] = ti.d_dx()(i, kk);
      s.d_dy[k] = ti.d_dy()(i, kk);
    }
    return s;
  };
  auto boundary = [&](Eigen::Index i) {
    FieldSample<double> s;
    for (std::size_t k = 0; k < kFieldCount; ++k) s.value[k] = tb(i, Eigen::Index(k));
    return s;
  };
  auto slice_u = [&](Eigen::Index i) { return ts(i, kU); };
  const auto [terms, total] = detail::assemble_loss<double>(batch, weights, interior, boundary, slice_u);
  return detail::to_report(terms, total);
}

// total = sum_f weight_f * mean(residual_f^2) over the whole collocation set.
inline LossReport total_loss(const CollocationSet& set, const diffnet::Network& net, const LossWeights& weights) {
  return evaluate_loss(net, full_loss_batch(set), weights);
}

struct LossGradient {
  LossReport report;
  std::vector<double> gradient;
};

inline LossGradient loss_gradient(const diffnet::Network& net, const LossBatch& batch, const LossWeights& weights) {
  weights.validate();
  const std::array<diffnet::BatchInput, 3> inputs{diffnet::BatchInput{batch.interior, true},
                                                  diffnet::BatchInput{batch.boundary, false},
                                                  diffnet::BatchInput{batch.slices, false}};
  std::array<double, kLossFamilyCount> terms{};
  auto loss = [&](ad::Tape&, std::span<const diffnet::VarBlock> blocks) {
    const auto& bi = blocks[0];
    const auto& bb = blocks[1];
    const auto& bs = blocks[2];
    auto interior = [&](Eigen::Index i) {
      FieldSample<ad::Var> s;
      for (std::size_t k = 0; k < kFieldCount; ++k) {
        const auto kk = Eigen::Index(k);
        s.value[k] = bi.value(i, kk);
        s.d_dx[k] = bi.d_dx(i, kk);
        s.d_dy[k] = bi.d_dy(i, kk);
      }
      return s;
    };
    auto boundary = [&](Eigen::Index i) {
      FieldSample<ad::Var> s;
      for (std::size_t k = 0; k < kFieldCount; ++k) s.value[k] = bb.value(i, Eigen::Index(k));
      return s;
    };
    auto slice_u = [&](Eigen::Index i) { return bs.value(i, kU); };
    const auto [fam, total] = detail::assemble_loss<ad::Var>(batch, weights, interior, boundary, slice_u);
    for (std::size_t f = 0; f < kLossFamilyCount; ++f) terms[f] = fam[f].value();
    return total;
  };
  auto g = diffnet::param_gradient(net, std::span<const diffnet::BatchInput>(inputs), loss);
  return {detail::to_report(terms, g.loss), std::move(g.gradient)};
}

}  // namespace micromix
