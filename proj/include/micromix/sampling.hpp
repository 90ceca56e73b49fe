#pragma once

// Latin hypercube collocation over (x*, y*, cp1, cp2, cp3, Re, Sc).

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "micromix/errors.hpp"
#include "micromix/geometry.hpp"
#include "micromix/random.hpp"

namespace micromix {

inline constexpr std::size_t kInputDim = 7;

enum InputIndex : std::size_t { kX = 0, kY, kCp1, kCp2, kCp3, kRe, kSc };

// cp1, cp2, cp3, Re, Sc
using CaseVector = std::array<double, 5>;

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double width() const { return hi - lo; }
  double map(double unit) const { return lo + unit * (hi - lo); }
  double to_unit(double v) const { return (v - lo) / (hi - lo); }
};

struct SampleBounds {
  std::array<Interval, kInputDim> dims;

  static constexpr Interval kCpRange{-0.5, 0.5};
  static constexpr Interval kReRange{5.0, 40.0};
  static constexpr Interval kScRange{1.0, 100.0};

  // Spatial box covers every admissible design of the given channel.
  static SampleBounds for_channel(const ChannelDims& dims) {
    const ChannelLayout flat(ControlPolygon{}, dims);
    const auto [lo, hi] = flat.envelope_box();
    SampleBounds b;
    b.dims = {Interval{lo.x / dims.H, hi.x / dims.H}, Interval{lo.y / dims.H, hi.y / dims.H}, kCpRange, kCpRange,
              kCpRange, kReRange, kScRange};
    return b;
  }

  void validate() const {
    static const std::array<const char*, kInputDim> names{"x*", "y*", "cp1", "cp2", "cp3", "Re", "Sc"};
    for (std::size_t i = 0; i < kInputDim; ++i) {
      if (!(dims[i].lo < dims[i].hi)) throw DomainError(std::string("sample bounds for ") + names[i] + " need lo < hi");
    }
  }
};

// Unit-cube LHS: column j holds one sample in each of the n strata [k/n, (k+1)/n).
inline Eigen::MatrixXd lhs_unit(std::size_t n, std::size_t dim, Rng& rng) {
  if (n == 0) throw DomainError("LHS sample count must be at least 1");
  Eigen::MatrixXd u{Eigen::Index(n), Eigen::Index(dim)};
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < dim; ++j) {
    for (std::size_t k = 0; k < n; ++k) perm[k] = k;
    shuffle(perm, rng);
    for (std::size_t i = 0; i < n; ++i) u(Eigen::Index(i), Eigen::Index(j)) = (double(perm[i]) + uniform01(rng)) / double(n);
  }
  return u;
}

inline Eigen::MatrixXd lhs_sample(std::size_t n, const SampleBounds& bounds, std::uint64_t seed) {
  bounds.validate();
  Rng rng = make_rng(seed);
  Eigen::MatrixXd s = lhs_unit(n, kInputDim, rng);
  for (std::size_t j = 0; j < kInputDim; ++j) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) s(i, Eigen::Index(j)) = bounds.dims[j].map(s(i, Eigen::Index(j)));
  }
  return s;
}

// Normal-direction speed of the inlet parabola at x* across an inlet of width
// W. The mean is H/(2W) so the two inlets together deliver unit flux H * U_m.
inline double inlet_profile(double x_star, const ChannelDims& dims) {
  const double w = dims.W / dims.H;
  const double xi = x_star / w;
  if (xi <= 0.0 || xi >= 1.0) return 0.0;
  const double mean = 0.5 / w;
  return 6.0 * mean * xi * (1.0 - xi);
}

// Dimensionless volume flux through any cross-section of the main channel.
inline constexpr double kUnitFlux = 1.0;

struct BoundaryRow {
  Vec2 point;   // dimensionless
  Vec2 normal;  // outward unit normal
  CaseVector design{};
  std::array<double, 3> target{};  // u*, v*, c* (inlets); unused elsewhere
};

struct PenaltySlice {
  double x_station = 0.0;  // dimensionless
  CaseVector design{};
  std::vector<Vec2> points;
  std::vector<double> weights;  // trapezoid rule in y*
  double target = kUnitFlux;
};

struct CollocationCounts {
  // Sized for the parametric problem: sparser sets let the network fit the
  // sampled designs and miss the rest of the design space.
  std::size_t interior = 20000;
  std::size_t per_boundary = 2000;  // per segment kind
  std::size_t per_slice = 21;
  std::size_t slice_designs = 40;   // designs sampled per station
};

struct CollocationSet {
  Eigen::MatrixXd interior;  // rows: x*, y*, cp1, cp2, cp3, Re, Sc
  std::array<std::vector<BoundaryRow>, kAllSegmentKinds.size()> boundary;
  std::vector<PenaltySlice> slices;
  std::size_t rejections = 0;

  std::vector<BoundaryRow>& rows(SegmentKind k) { return boundary[std::size_t(k)]; }
  const std::vector<BoundaryRow>& rows(SegmentKind k) const { return boundary[std::size_t(k)]; }
};

struct SlicePoints {
  std::vector<Vec2> points;
  std::vector<double> weights;
  double height = 0.0;
};

// Uniform column across the local fluid height at x_station (dimensionless).
inline SlicePoints slice_points(const ChannelLayout& layout, double x_station, std::size_t n) {
  const ChannelDims& dims = layout.dims();
  if (n < 2) throw DomainError("a penalty slice needs at least 2 points");
  const double x_lo = dims.W / dims.H, x_hi = dims.L / dims.H;
  if (!(x_station >= x_lo && x_station <= x_hi)) {
    std::ostringstream msg;
    msg << "slice station x* = " << x_station << " outside the main channel [" << x_lo << ", " << x_hi << "]";
    throw DomainError(msg.str());
  }
  const double x_mm = x_station * dims.H;
  const double lo = layout.lower_wall(x_mm) / dims.H, hi = layout.upper_wall(x_mm) / dims.H;
  SlicePoints s;
  s.height = hi - lo;
  const double step = s.height / double(n - 1);
  for (std::size_t k = 0; k < n; ++k) {
    s.points.push_back({x_station, k + 1 == n ? hi : lo + step * double(k)});
    s.weights.push_back((k == 0 || k + 1 == n) ? 0.5 * step : step);
  }
  return s;
}

// Four stations spread over the baffle region plus the outlet.
inline std::vector<double> default_slice_stations(const ChannelDims& dims) {
  const double start = dims.L0 / dims.H;
  const double stop = (dims.L0 + dims.d) / dims.H + kSplineSpan;
  std::vector<double> st;
  for (int k = 0; k < 4; ++k) st.push_back(start + (stop - start) * (k + 0.5) / 4.0);
  st.push_back(dims.L / dims.H);
  return st;
}

struct CollocationOptions {
  ChannelDims dims = ChannelDims::reference();
  SampleBounds bounds = SampleBounds::for_channel(ChannelDims::reference());
  CollocationCounts counts;
  std::vector<double> slice_stations = default_slice_stations(ChannelDims::reference());
  std::optional<CaseVector> fixed_design;  // overrides cp1..Sc for every row
  std::uint64_t seed = 0;
};

namespace detail {

inline CaseVector design_from_unit(const Eigen::MatrixXd& u, Eigen::Index row, Eigen::Index first_col,
                                   const SampleBounds& b, const std::optional<CaseVector>& fixed) {
  if (fixed) return *fixed;
  CaseVector c{};
  for (std::size_t j = 0; j < 5; ++j) c[j] = b.dims[kCp1 + j].map(u(row, first_col + Eigen::Index(j)));
  return c;
}

inline ControlPolygon polygon_of(const CaseVector& c) { return {c[0], c[1], c[2]}; }

// Vertical extent (dimensionless) that the y-coordinate is stretched over at x*.
struct Column {
  double lo, hi;
};

inline Column envelope_column(double x_star, const ChannelDims& dims, const SampleBounds& b,
                              const std::optional<ChannelLayout>& fixed_layout) {
  const double H = dims.H, x_mm = x_star * H;
  double lo, hi;
  if (x_mm < dims.W) {
    lo = -dims.arm_length() / H;
    hi = (H + dims.arm_length()) / H;
  } else if (fixed_layout) {
    lo = fixed_layout->lower_wall(x_mm) / H;
    hi = fixed_layout->upper_wall(x_mm) / H;
  } else {
    const double ext = spline_excursion_bound();
    const double span = kSplineSpan * H;
    const bool in_upper = x_mm >= dims.L0 && x_mm <= dims.L0 + span;
    const bool in_lower = x_mm >= dims.L0 + dims.d && x_mm <= dims.L0 + dims.d + span;
    lo = in_lower ? -ext : 0.0;
    hi = in_upper ? 1.0 + ext : 1.0;
  }
  return {std::max(lo, b.dims[kY].lo), std::min(hi, b.dims[kY].hi)};
}

}  // namespace detail

// Interior rows are one 7-D LHS. x* maps affinely; y* is stretched over the
// fluid envelope at that x*. Rows landing in solid are first resampled inside
// their own strata, then repaired by exchanging y-strata with another row, so
// every column keeps exactly one sample per stratum.
inline CollocationSet generate_collocation(const CollocationOptions& opt) {
  const ChannelDims& dims = opt.dims;
  dims.validate();
  opt.bounds.validate();
  const auto& c = opt.counts;
  if (c.interior == 0 || c.per_boundary == 0 || c.per_slice == 0 || c.slice_designs == 0)
    throw DomainError("collocation counts must be at least 1");

  std::optional<ChannelLayout> fixed_layout;
  if (opt.fixed_design) fixed_layout.emplace(detail::polygon_of(*opt.fixed_design), dims);

  CollocationSet set;
  const double H = dims.H;

  // Interior.
  {
    Rng rng = make_rng(opt.seed, 1);
    const std::size_t n = c.interior;
    Eigen::MatrixXd u = lhs_unit(n, kInputDim, rng);
    set.interior.resize(Eigen::Index(n), Eigen::Index(kInputDim));

    auto realize = [&](Eigen::Index i) -> bool {
      const CaseVector design = detail::design_from_unit(u, i, kCp1, opt.bounds, opt.fixed_design);
      const double x = opt.bounds.dims[kX].map(u(i, kX));
      const auto col = detail::envelope_column(x, dims, opt.bounds, fixed_layout);
      const double y = col.lo + u(i, kY) * (col.hi - col.lo);
      set.interior(i, kX) = x;
      set.interior(i, kY) = y;
      for (std::size_t j = 0; j < 5; ++j) set.interior(i, Eigen::Index(kCp1 + j)) = design[j];
      const Vec2 p{x * H, y * H};
      if (fixed_layout) return fixed_layout->contains(p);
      return ChannelLayout(detail::polygon_of(design), dims).contains(p);
    };
    auto restratify = [&](Eigen::Index i, Eigen::Index j) {
      const double cell = std::floor(u(i, j) * double(n));
      u(i, j) = (cell + uniform01(rng)) / double(n);
    };

    std::size_t attempts = 0;
    const std::size_t max_attempts = 100 * n;
    std::vector<Eigen::Index> bad;
    for (Eigen::Index i = 0; i < Eigen::Index(n); ++i) {
      ++attempts;
      bool ok = realize(i);
      for (int retry = 0; !ok && retry < 16; ++retry) {
        ++set.rejections;
        ++attempts;
        for (Eigen::Index j = 0; j < Eigen::Index(kInputDim); ++j) restratify(i, j);
        ok = realize(i);
      }
      if (!ok) bad.push_back(i);
    }
    for (const Eigen::Index i : bad) {
      bool ok = false;
      while (!ok) {
        if (attempts > max_attempts) throw SamplingError("interior rejection rate above 99%; geometry degenerate?");
        const Eigen::Index j = Eigen::Index(uniform_index(rng, n));
        if (j == i) continue;
        ++attempts;
        ++set.rejections;
        std::swap(u(i, kY), u(j, kY));
        ok = realize(i) && realize(j);
        if (!ok) {
          std::swap(u(i, kY), u(j, kY));
          realize(i);
          realize(j);
        }
      }
    }
  }

  // Boundary: per kind, a 6-D LHS over (arc fraction, design).
  for (const SegmentKind kind : kAllSegmentKinds) {
    Rng rng = make_rng(opt.seed, 2 + std::size_t(kind));
    const Eigen::MatrixXd u = lhs_unit(c.per_boundary, 6, rng);
    auto& rows = set.rows(kind);
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      const CaseVector design = detail::design_from_unit(u, i, 1, opt.bounds, opt.fixed_design);
      const ChannelLayout layout = fixed_layout ? *fixed_layout : ChannelLayout(detail::polygon_of(design), dims);
      std::vector<BoundarySegment> segs;
      double total = 0.0;
      for (auto& s : layout.boundary()) {
        if (s.kind() == kind && s.length() > 0.0) {
          total += s.length();
          segs.push_back(std::move(s));
        }
      }
      double arc = u(i, 0) * total;
      std::size_t k = 0;
      while (k + 1 < segs.size() && arc > segs[k].length()) arc -= segs[k++].length();
      const BoundarySegment& seg = segs[k];
      const double t = seg.t_at_arc_fraction(arc / seg.length());
      const Vec2 p = seg.point(t);
      BoundaryRow row{{p.x / H, p.y / H}, seg.normal(t), design, {0.0, 0.0, 0.0}};
      if (kind == SegmentKind::inlet_top) row.target = {0.0, -inlet_profile(row.point.x, dims), 1.0};
      if (kind == SegmentKind::inlet_bottom) row.target = {0.0, inlet_profile(row.point.x, dims), 0.0};
      rows.push_back(row);
    }
  }

  // Mass-flow penalty slices.
  {
    Rng rng = make_rng(opt.seed, 16);
    for (const double station : opt.slice_stations) {
      const Eigen::MatrixXd u = lhs_unit(c.slice_designs, 5, rng);
      for (Eigen::Index i = 0; i < u.rows(); ++i) {
        const CaseVector design = detail::design_from_unit(u, i, 0, opt.bounds, opt.fixed_design);
        const ChannelLayout layout = fixed_layout ? *fixed_layout : ChannelLayout(detail::polygon_of(design), dims);
        SlicePoints sp = slice_points(layout, station, c.per_slice);
        set.slices.push_back({station, design, std::move(sp.points), std::move(sp.weights), kUnitFlux});
      }
    }
  }
  return set;
}

// One CSV per group; full round-trip precision.
inline void write_interior_csv(std::ostream& os, const CollocationSet& set) {
  os << "x_star,y_star,cp1,cp2,cp3,Re,Sc\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < set.interior.rows(); ++i) {
    for (Eigen::Index j = 0; j < set.interior.cols(); ++j) os << (j ? "," : "") << set.interior(i, j);
    os << '\n';
  }
}

inline void write_boundary_csv(std::ostream& os, const CollocationSet& set) {
  os << "kind,x_star,y_star,n_x,n_y,cp1,cp2,cp3,Re,Sc,target_u,target_v,target_c\n" << std::setprecision(17);
  for (const SegmentKind kind : kAllSegmentKinds) {
    for (const auto& r : set.rows(kind)) {
      os << to_string(kind) << ',' << r.point.x << ',' << r.point.y << ',' << r.normal.x << ',' << r.normal.y;
      for (double v : r.design) os << ',' << v;
      for (double v : r.target) os << ',' << v;
      os << '\n';
    }
  }
}

inline void write_slices_csv(std::ostream& os, const CollocationSet& set) {
  os << "slice,x_star,y_star,weight,cp1,cp2,cp3,Re,Sc,target\n" << std::setprecision(17);
  for (std::size_t s = 0; s < set.slices.size(); ++s) {
    const auto& sl = set.slices[s];
    for (std::size_t k = 0; k < sl.points.size(); ++k) {
      os << s << ',' << sl.points[k].x << ',' << sl.points[k].y << ',' << sl.weights[k];
      for (double v : sl.design) os << ',' << v;
      os << ',' << sl.target << '\n';
    }
  }
}

}  // namespace micromix
