#pragma once

// Mixing index, pressure cost and mixing efficiency over a trained field
// model, plus the flat-channel baseline table they are normalized by.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "micromix/errors.hpp"
#include "micromix/geometry.hpp"
#include "micromix/pinn_train.hpp"
#include "micromix/sampling.hpp"

namespace micromix {

inline constexpr double kMixedConcentration = 0.5;

class DesignCandidate {
 public:
  static constexpr Interval kCp = SampleBounds::kCpRange;
  static constexpr Interval kRe = SampleBounds::kReRange;

  DesignCandidate() = default;
  DesignCandidate(double cp1, double cp2, double cp3, double Re) : cp_{cp1, cp2, cp3}, Re_(Re) {
    cp_.validate();
    if (!(Re >= kRe.lo && Re <= kRe.hi))
      throw DomainError("Re = " + std::to_string(Re) + " outside [" + std::to_string(kRe.lo) + ", " +
                        std::to_string(kRe.hi) + "]");
  }

  double cp1() const { return cp_.cp1; }
  double cp2() const { return cp_.cp2; }
  double cp3() const { return cp_.cp3; }
  double Re() const { return Re_; }
  const ControlPolygon& polygon() const { return cp_; }
  std::array<double, 4> as_array() const { return {cp_.cp1, cp_.cp2, cp_.cp3, Re_}; }

  DesignCase with_sc(double Sc) const { return {cp_, Re_, Sc}; }
  static DesignCandidate flat(double Re) { return {0.0, 0.0, 0.0, Re}; }

  bool operator==(const DesignCandidate& o) const { return as_array() == o.as_array(); }

 private:
  ControlPolygon cp_{};
  double Re_ = 22.5;
};

// MI = 1 - sqrt(mean(((c - 0.5) / 0.5)^2))
inline double mixing_index(std::span<const double> c) {
  if (c.empty()) throw DomainError("mixing index needs at least one sample");
  double acc = 0.0;
  for (double v : c) {
    const double z = (v - kMixedConcentration) / kMixedConcentration;
    acc += z * z;
  }
  return 1.0 - std::sqrt(acc / double(c.size()));
}

inline double pressure_cost(std::span<const double> p) {
  if (p.empty()) throw DomainError("pressure cost needs at least one sample");
  double acc = 0.0;
  for (double v : p) acc += v;
  return acc / double(p.size());
}

inline double mixing_efficiency(double MI, double Cp, double MI0, double Cp0) {
  if (!(MI0 > 0.0)) throw DomainError("baseline mixing index must be positive");
  if (!(Cp0 > 0.0)) throw DomainError("baseline pressure cost must be positive (degenerate flow)");
  if (!(Cp > 0.0)) throw DomainError("pressure cost must be positive (degenerate flow)");
  return (MI / MI0) / std::cbrt(Cp / Cp0);
}

struct MetricSettings {
  std::size_t outlet_points = 101;
  std::size_t inlet_points = 101;  // per inlet

  void validate() const {
    if (outlet_points == 0 || inlet_points == 0) throw DomainError("metric sample counts must be at least 1");
  }
};

struct RawMetrics {
  double MI = 0.0;
  double Cp = 0.0;
  std::size_t N = 0;        // outlet samples
  std::size_t clamped = 0;  // outlet samples clipped into [0, 1]
};

// Outlet concentration and inlet pressure for one design at one Sc.
inline RawMetrics measure(const FieldModel& model, const DesignCandidate& design, double Sc,
                          const MetricSettings& settings = {}) {
  settings.validate();
  const ChannelDims& dims = model.dims;
  const double H = dims.H, outlet_x = dims.L / H, w = dims.W / H, arm = dims.arm_length() / H;
  const DesignCase dc = design.with_sc(Sc);

  std::vector<Vec2> pts;
  const std::size_t n = settings.outlet_points;
  for (std::size_t i = 0; i < n; ++i) pts.push_back({outlet_x, n == 1 ? 0.5 : double(i) / double(n - 1)});
  const std::size_t m = settings.inlet_points;
  for (double y : {1.0 + arm, -arm})
    for (std::size_t i = 0; i < m; ++i) pts.push_back({w * (double(i) + 0.5) / double(m), y});

  const Eigen::MatrixXd out = diffnet::forward(model.net, design_inputs(pts, dc));
  RawMetrics r;
  r.N = n;
  std::vector<double> c(n), p(2 * m);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = out(Eigen::Index(i), kC);
    if (!std::isfinite(v)) throw NumericalError("non-finite outlet concentration");
    c[i] = std::clamp(v, 0.0, 1.0);
    r.clamped += c[i] != v;
  }
  for (std::size_t i = 0; i < 2 * m; ++i) p[i] = out(Eigen::Index(n + i), kP);
  r.MI = mixing_index(c);
  r.Cp = pressure_cost(p);
  if (!std::isfinite(r.Cp)) throw NumericalError("non-finite inlet pressure");
  return r;
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

struct BaselineEntry {
  double MI0 = 0.0;
  double Cp0 = 0.0;
};

// Flat-channel (MI0, Cp0) on a rectilinear (Re, Sc) grid, bilinear in between.
// Queries outside the grid are clamped to its edge.
class BaselineTable {
 public:
  BaselineTable() = default;
  BaselineTable(std::vector<double> re, std::vector<double> sc, std::vector<BaselineEntry> entries)
      : re_(std::move(re)), sc_(std::move(sc)), entries_(std::move(entries)) {
    check_axis(re_, "Re");
    check_axis(sc_, "Sc");
    if (entries_.size() != re_.size() * sc_.size()) throw DomainError("baseline table size does not match its axes");
  }

  const std::vector<double>& re_axis() const { return re_; }
  const std::vector<double>& sc_axis() const { return sc_; }
  const BaselineEntry& node(std::size_t i, std::size_t j) const { return entries_[i * sc_.size() + j]; }

  BaselineEntry at(double Re, double Sc) const {
    if (entries_.empty()) throw DomainError("baseline table is empty");
    const auto [i, s] = locate(re_, Re);
    const auto [j, t] = locate(sc_, Sc);
    const std::size_t i1 = std::min(i + 1, re_.size() - 1), j1 = std::min(j + 1, sc_.size() - 1);
    auto lerp2 = [&](double BaselineEntry::*f) {
      return (1 - s) * (1 - t) * node(i, j).*f + s * (1 - t) * node(i1, j).*f + (1 - s) * t * node(i, j1).*f +
             s * t * node(i1, j1).*f;
    };
    return {lerp2(&BaselineEntry::MI0), lerp2(&BaselineEntry::Cp0)};
  }

  void write_csv(std::ostream& os) const {
    os << "Re,Sc,MI0,Cp0\n" << std::setprecision(17);
    for (std::size_t i = 0; i < re_.size(); ++i)
      for (std::size_t j = 0; j < sc_.size(); ++j)
        os << re_[i] << ',' << sc_[j] << ',' << node(i, j).MI0 << ',' << node(i, j).Cp0 << '\n';
  }

  static BaselineTable read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "Re,Sc,MI0,Cp0") throw FormatError("baseline CSV header must be Re,Sc,MI0,Cp0");
    std::vector<std::array<double, 4>> rows;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::array<double, 4> r{};
      std::istringstream ls(line);
      for (std::size_t k = 0; k < 4; ++k) {
        std::string cell;
        if (!std::getline(ls, cell, ',')) throw FormatError("baseline CSV row has fewer than 4 columns: " + line);
        try {
          std::size_t used = 0;
          r[k] = std::stod(cell, &used);
          if (used != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
          throw FormatError("baseline CSV has a non-numeric cell: '" + cell + "'");
        }
      }
      rows.push_back(r);
    }
    std::vector<double> re, sc;
    for (const auto& r : rows) {
      if (std::find(re.begin(), re.end(), r[0]) == re.end()) re.push_back(r[0]);
      if (std::find(sc.begin(), sc.end(), r[1]) == sc.end()) sc.push_back(r[1]);
    }
    if (rows.size() != re.size() * sc.size()) throw FormatError("baseline CSV is not a full Re x Sc grid");
    std::vector<BaselineEntry> e(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (rows[k][0] != re[k / sc.size()] || rows[k][1] != sc[k % sc.size()])
        throw FormatError("baseline CSV rows must be Re-major with a repeated Sc axis");
      e[k] = {rows[k][2], rows[k][3]};
    }
    try {
      return {re, sc, e};
    } catch (const DomainError& err) {
      throw FormatError(std::string("baseline CSV: ") + err.what());
    }
  }

 private:
  static void check_axis(const std::vector<double>& a, const char* name) {
    if (a.empty()) throw DomainError(std::string("baseline ") + name + " axis is empty");
    for (std::size_t k = 1; k < a.size(); ++k)
      if (!(a[k] > a[k - 1])) throw DomainError(std::string("baseline ") + name + " axis must be increasing");
  }

  static std::pair<std::size_t, double> locate(const std::vector<double>& a, double v) {
    if (a.size() == 1 || v <= a.front()) return {0, 0.0};
    if (v >= a.back()) return {a.size() - 2, 1.0};
    const std::size_t i = std::size_t(std::upper_bound(a.begin(), a.end(), v) - a.begin()) - 1;
    return {i, (v - a[i]) / (a[i + 1] - a[i])};
  }

  std::vector<double> re_, sc_;
  std::vector<BaselineEntry> entries_;  // Re-major
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n == 0) throw DomainError("linspace needs at least one point");
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = n == 1 ? lo : lo + (hi - lo) * double(k) / double(n - 1);
  return v;
}

inline BaselineTable baseline_table(const FieldModel& model, const std::vector<double>& re, const std::vector<double>& sc,
                                    const MetricSettings& settings = {}) {
  std::vector<BaselineEntry> e;
  for (double R : re)
    for (double S : sc) {
      const RawMetrics m = measure(model, DesignCandidate::flat(R), S, settings);
      e.push_back({m.MI, m.Cp});
    }
  return {re, sc, e};
}

inline BaselineTable default_baseline_table(const FieldModel& model, const MetricSettings& settings = {}) {
  return baseline_table(model, linspace(5.0, 40.0, 8), linspace(1.0, 100.0, 8), settings);
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct MixingReport {
  double MI = 0.0, Cp = 0.0, MI0 = 0.0, Cp0 = 0.0, ME = 0.0;
  std::size_t N = 0;
  std::size_t clamped = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["MI"] = MI;
    j["Cp"] = Cp;
    j["MI0"] = MI0;
    j["Cp0"] = Cp0;
    j["ME"] = ME;
    j["N"] = N;
    j["clamped_samples"] = clamped;
    j["pressure_note"] = "Cp is the mean dimensionless inlet pressure; the outlet is held at p* = 0, so Cp stands in for the pressure drop";
    return j;
  }
};

// Baseline from the table when given, otherwise evaluated directly at the flat
// geometry with the same (Re, Sc) and sample points.
inline MixingReport evaluate_design(const FieldModel& model, const DesignCandidate& design, double Sc,
                                    const BaselineTable* baseline = nullptr, const MetricSettings& settings = {}) {
  const RawMetrics m = measure(model, design, Sc, settings);
  BaselineEntry b;
  if (baseline) {
    b = baseline->at(design.Re(), Sc);
  } else {
    const RawMetrics m0 = measure(model, DesignCandidate::flat(design.Re()), Sc, settings);
    b = {m0.MI, m0.Cp};
  }
  MixingReport r{m.MI, m.Cp, b.MI0, b.Cp0, 0.0, m.N, m.clamped};
  r.ME = mixing_efficiency(r.MI, r.Cp, r.MI0, r.Cp0);
  return r;
}

}  // namespace micromix
