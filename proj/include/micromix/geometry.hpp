#pragma once

// Parametric micromixer channel: a T-junction inlet feeding a straight main
// channel whose upper and lower walls each carry one cubic-spline baffle.
//
// Spline coordinates are dimensionless (units of the channel height H); the
// channel layout itself is in millimetres. `*_star` helpers work in units of H.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "micromix/errors.hpp"

namespace micromix {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

// ---------------------------------------------------------------------------
// Control polygon and natural cubic spline
// ---------------------------------------------------------------------------

struct ControlPolygon {
  static constexpr double kMin = -0.5;
  static constexpr double kMax = 0.5;

  double cp1 = 0.0;
  double cp2 = 0.0;
  double cp3 = 0.0;

  std::array<double, 3> values() const { return {cp1, cp2, cp3}; }

  void validate() const {
    const std::array<const char*, 3> names{"cp1", "cp2", "cp3"};
    const auto v = values();
    for (std::size_t i = 0; i < 3; ++i) {
      if (!(v[i] >= kMin && v[i] <= kMax)) {
        std::ostringstream msg;
        msg << names[i] << " = " << v[i] << " outside [" << kMin << ", " << kMax << "]";
        throw DomainError(msg.str());
      }
    }
  }
};

inline constexpr std::array<double, 5> kSplineKnots{0.0, 0.125, 0.25, 0.375, 0.5};
inline constexpr double kSplineSpan = 0.5;

// S_i(x) = a_i + b_i (x - x_i) + c_i (x - x_i)^2 + d_i (x - x_i)^3 on [x_i, x_{i+1}].
struct SplineCurve {
  std::array<double, 5> knots = kSplineKnots;
  std::array<double, 4> a{};
  std::array<double, 4> b{};
  std::array<double, 4> c{};
  std::array<double, 4> d{};

  std::size_t segment_of(double x) const {
    std::size_t i = 0;
    while (i < 3 && x >= knots[i + 1]) ++i;
    return i;
  }
};

struct SplinePoint {
  double height = 0.0;
  double slope = 0.0;
};

// Natural cubic spline through (x_i, y_i); second derivatives from the
// tridiagonal system solved with the Thomas algorithm.
inline SplineCurve build_spline_through(const std::array<double, 5>& x, const std::array<double, 5>& y) {
  constexpr std::size_t n = 4;  // segments
  std::array<double, n> h{};
  for (std::size_t i = 0; i < n; ++i) h[i] = x[i + 1] - x[i];

  // Unknowns M_1..M_3; M_0 = M_4 = 0.
  std::array<double, 3> sub{}, diag{}, sup{}, rhs{};
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t i = k + 1;
    sub[k] = h[i - 1];
    diag[k] = 2.0 * (h[i - 1] + h[i]);
    sup[k] = h[i];
    rhs[k] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
  }
  for (std::size_t k = 1; k < 3; ++k) {
    const double w = sub[k] / diag[k - 1];
    diag[k] -= w * sup[k - 1];
    rhs[k] -= w * rhs[k - 1];
  }
  std::array<double, 5> m{};
  m[3] = rhs[2] / diag[2];
  for (std::size_t k = 2; k-- > 0;) m[k + 1] = (rhs[k] - sup[k] * m[k + 2]) / diag[k];

  SplineCurve s;
  s.knots = x;
  for (std::size_t i = 0; i < n; ++i) {
    s.a[i] = y[i];
    s.b[i] = (y[i + 1] - y[i]) / h[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0;
    s.c[i] = m[i] / 2.0;
    s.d[i] = (m[i + 1] - m[i]) / (6.0 * h[i]);
  }
  return s;
}

inline SplineCurve build_spline(const ControlPolygon& cp) {
  cp.validate();
  return build_spline_through(kSplineKnots, {0.0, cp.cp1, cp.cp2, cp.cp3, 0.0});
}

inline void check_spline_domain(const SplineCurve& s, double x) {
  if (!(x >= s.knots.front() && x <= s.knots.back())) {
    std::ostringstream msg;
    msg << "spline coordinate x = " << x << " outside [" << s.knots.front() << ", " << s.knots.back() << "]";
    throw DomainError(msg.str());
  }
}

inline SplinePoint eval_spline(const SplineCurve& s, double x) {
  check_spline_domain(s, x);
  const std::size_t i = s.segment_of(x);
  const double t = x - s.knots[i];
  return {s.a[i] + t * (s.b[i] + t * (s.c[i] + t * s.d[i])), s.b[i] + t * (2.0 * s.c[i] + 3.0 * t * s.d[i])};
}

inline double spline_second_derivative(const SplineCurve& s, double x) {
  check_spline_domain(s, x);
  const std::size_t i = s.segment_of(x);
  return 2.0 * s.c[i] + 6.0 * s.d[i] * (x - s.knots[i]);
}

// Left-pointing unit normal of the graph y(x) with slope y'.
inline Vec2 unit_normal_from_slope(double slope) {
  const double inv = 1.0 / std::sqrt(1.0 + slope * slope);
  return {-slope * inv, inv};
}

inline Vec2 unit_normal(const SplineCurve& s, double x) { return unit_normal_from_slope(eval_spline(s, x).slope); }

// Upper bound of |S| over every admissible control polygon. S is linear in
// the control values, so the extreme is attained at a corner of the box.
inline double spline_excursion_bound() {
  static const double bound = [] {
    double best = 0.0;
    for (int mask = 0; mask < 8; ++mask) {
      const ControlPolygon cp{(mask & 1) ? ControlPolygon::kMax : ControlPolygon::kMin,
                              (mask & 2) ? ControlPolygon::kMax : ControlPolygon::kMin,
                              (mask & 4) ? ControlPolygon::kMax : ControlPolygon::kMin};
      const SplineCurve s = build_spline(cp);
      for (int k = 0; k <= 4000; ++k) best = std::max(best, std::abs(eval_spline(s, kSplineSpan * k / 4000.0).height));
    }
    return best * (1.0 + 1e-6);
  }();
  return bound;
}

// ---------------------------------------------------------------------------
// Channel layout
// ---------------------------------------------------------------------------

// Lengths in mm.
struct ChannelDims {
  double L = 2.1;    // main channel length
  double L0 = 0.9;   // inlet to first baffle
  double L1 = 1.3;   // total span of the inlet bar (both arms plus the channel)
  double H = 0.3;    // channel height
  double W = 0.3;    // inlet arm width
  double d = 0.15;   // offset between consecutive baffles
  double h_d = 0.3;  // allowable baffle height deviation
  double l_d = 0.15; // baffle length

  static ChannelDims reference() { return {}; }

  double arm_length() const { return 0.5 * (L1 - H); }

  void validate() const {
    const std::array<std::pair<const char*, double>, 8> fields{
        {{"L", L}, {"L0", L0}, {"L1", L1}, {"H", H}, {"W", W}, {"d", d}, {"h_d", h_d}, {"l_d", l_d}}};
    for (const auto& [name, v] : fields) {
      if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string("dimension ") + name + " must be positive");
    }
    if (!(L1 > H)) throw GeometryError("inlet span L1 must exceed channel height H");
    if (!(W < L)) throw GeometryError("inlet width W must be shorter than channel length L");
  }
};

enum class Wall { upper, lower };

struct BafflePlacement {
  Wall wall = Wall::upper;
  double start_mm = 0.0;
  SplineCurve curve;
  // Multiplies S*H to give the wall displacement in +y: -1 on the upper wall,
  // +1 on the lower, so positive control values always point into the channel.
  double orientation = 1.0;
};

enum class SegmentKind { inlet_top, inlet_bottom, outlet, wall, baffle };

inline std::string_view to_string(SegmentKind k) {
  switch (k) {
    case SegmentKind::inlet_top: return "inlet_top";
    case SegmentKind::inlet_bottom: return "inlet_bottom";
    case SegmentKind::outlet: return "outlet";
    case SegmentKind::wall: return "wall";
    case SegmentKind::baffle: return "baffle";
  }
  return "unknown";
}

inline SegmentKind segment_kind_from_string(std::string_view s) {
  for (auto k : {SegmentKind::inlet_top, SegmentKind::inlet_bottom, SegmentKind::outlet, SegmentKind::wall,
                 SegmentKind::baffle}) {
    if (to_string(k) == s) return k;
  }
  throw DomainError("unknown boundary segment kind '" + std::string(s) + "'");
}

inline constexpr std::array<SegmentKind, 5> kAllSegmentKinds{SegmentKind::inlet_top, SegmentKind::inlet_bottom,
                                                             SegmentKind::outlet, SegmentKind::wall,
                                                             SegmentKind::baffle};

// One piece of the domain boundary, parameterized by t in [0, 1]. Straight
// pieces interpolate p0 -> p1; baffle pieces follow x linearly across the
// spline span. Normals point out of the fluid.
class BoundarySegment {
 public:
  static BoundarySegment line(SegmentKind kind, Vec2 p0, Vec2 p1, Vec2 outward) {
    BoundarySegment s;
    s.kind_ = kind;
    s.p0_ = p0;
    s.p1_ = p1;
    s.normal_ = outward;
    s.length_ = norm({p1.x - p0.x, p1.y - p0.y});
    return s;
  }

  static BoundarySegment curve(const BafflePlacement& baffle, double wall_y_mm, double H) {
    BoundarySegment s;
    s.kind_ = SegmentKind::baffle;
    s.is_curve_ = true;
    s.baffle_ = baffle;
    s.wall_y_ = wall_y_mm;
    s.H_ = H;
    s.arc_.resize(kArcSamples + 1, 0.0);
    // Composite Simpson on each sub-interval.
    for (std::size_t k = 0; k < kArcSamples; ++k) {
      const double t0 = double(k) / kArcSamples, t1 = double(k + 1) / kArcSamples;
      auto speed = [&](double t) {
        const double slope = eval_spline(baffle.curve, t * kSplineSpan).slope;
        return kSplineSpan * H * std::sqrt(1.0 + slope * slope);
      };
      s.arc_[k + 1] = s.arc_[k] + (t1 - t0) / 6.0 * (speed(t0) + 4.0 * speed(0.5 * (t0 + t1)) + speed(t1));
    }
    s.length_ = s.arc_.back();
    s.p0_ = s.point(0.0);
    s.p1_ = s.point(1.0);
    return s;
  }

  SegmentKind kind() const { return kind_; }
  bool is_curve() const { return is_curve_; }
  double length() const { return length_; }

  Vec2 point(double t) const {
    if (!is_curve_) return {p0_.x + t * (p1_.x - p0_.x), p0_.y + t * (p1_.y - p0_.y)};
    const double xi = std::clamp(t, 0.0, 1.0) * kSplineSpan;
    return {baffle_.start_mm + xi * H_, wall_y_ + baffle_.orientation * eval_spline(baffle_.curve, xi).height * H_};
  }

  Vec2 normal(double t) const {
    if (!is_curve_) return normal_;
    const double xi = std::clamp(t, 0.0, 1.0) * kSplineSpan;
    const Vec2 up = unit_normal_from_slope(baffle_.orientation * eval_spline(baffle_.curve, xi).slope);
    // Fluid lies below an upper-wall baffle and above a lower-wall one.
    return baffle_.wall == Wall::upper ? up : Vec2{-up.x, -up.y};
  }

  // Parameter t at which the arc length from p0 equals `fraction * length()`.
  double t_at_arc_fraction(double fraction) const {
    fraction = std::clamp(fraction, 0.0, 1.0);
    if (!is_curve_) return fraction;
    const double target = fraction * length_;
    const auto it = std::lower_bound(arc_.begin(), arc_.end(), target);
    if (it == arc_.begin()) return 0.0;
    if (it == arc_.end()) return 1.0;
    const std::size_t k = std::size_t(it - arc_.begin());
    const double w = (target - arc_[k - 1]) / (arc_[k] - arc_[k - 1]);
    return (double(k - 1) + w) / kArcSamples;
  }

 private:
  static constexpr std::size_t kArcSamples = 512;

  SegmentKind kind_ = SegmentKind::wall;
  bool is_curve_ = false;
  Vec2 p0_, p1_, normal_;
  double length_ = 0.0;
  BafflePlacement baffle_;
  double wall_y_ = 0.0;
  double H_ = 1.0;
  std::vector<double> arc_;
};

// T-shaped fluid domain. The main channel spans x in [0, L], y in [0, H];
// the inlet bar spans x in [0, W], y in [-a, H + a] with a = (L1 - H) / 2.
class ChannelLayout {
 public:
  ChannelLayout(const ControlPolygon& cp, const ChannelDims& dims) : cp_(cp), dims_(dims) {
    dims_.validate();
    cp_.validate();
    const SplineCurve curve = build_spline(cp_);
    baffles_.push_back({Wall::upper, dims_.L0, curve, -1.0});
    baffles_.push_back({Wall::lower, dims_.L0 + dims_.d, curve, 1.0});

    for (const auto& b : baffles_) {
      const double end = b.start_mm + kSplineSpan * dims_.H;
      if (b.start_mm < dims_.W || end > dims_.L) {
        std::ostringstream msg;
        msg << (b.wall == Wall::upper ? "upper" : "lower") << " baffle [" << b.start_mm << ", " << end
            << "] mm does not fit between the inlet (" << dims_.W << " mm) and the outlet (" << dims_.L << " mm)";
        throw GeometryError(msg.str());
      }
    }
    // |S| <= spline_excursion_bound() < 1 for admissible polygons, so a single
    // baffle never reaches the opposite wall; only overlapping baffles can.
    if (spline_excursion_bound() >= 1.0 && spline_peak(curve) >= 1.0)
      throw GeometryError("baffle peak crosses the opposite wall");
    const double lo = std::max(baffles_[0].start_mm, baffles_[1].start_mm);
    const double hi = std::min(baffle_end(baffles_[0]), baffle_end(baffles_[1]));
    for (int k = 0; lo < hi && k <= 400; ++k) {
      const double x = lo + (hi - lo) * k / 400.0;
      if (!(upper_wall(x) > lower_wall(x))) throw GeometryError("baffles close the channel");
    }
  }

  const ControlPolygon& control() const { return cp_; }
  const ChannelDims& dims() const { return dims_; }
  const std::vector<BafflePlacement>& baffles() const { return baffles_; }
  double arm_length() const { return dims_.arm_length(); }

  double baffle_end(const BafflePlacement& b) const { return b.start_mm + kSplineSpan * dims_.H; }

  // Fluid extent of the main channel at x (mm), baffles included.
  double upper_wall(double x) const { return dims_.H + displacement(Wall::upper, x); }
  double lower_wall(double x) const { return displacement(Wall::lower, x); }

  bool contains(Vec2 p) const {
    const double a = arm_length();
    if (p.x > 0.0 && p.x < dims_.W && p.y > -a && p.y < dims_.H + a) return true;
    return p.x > 0.0 && p.x < dims_.L && p.y > lower_wall(p.x) && p.y < upper_wall(p.x);
  }

  // Bounding box of every admissible design for these dimensions.
  std::pair<Vec2, Vec2> envelope_box() const {
    const double a = arm_length();
    const double ext = spline_excursion_bound() * dims_.H;
    return {{0.0, std::min(-a, -ext)}, {dims_.L, std::max(dims_.H + a, dims_.H + ext)}};
  }

  std::vector<BoundarySegment> boundary() const {
    const double L = dims_.L, H = dims_.H, W = dims_.W, a = arm_length();
    std::vector<BoundarySegment> out;
    out.push_back(BoundarySegment::line(SegmentKind::inlet_top, {0.0, H + a}, {W, H + a}, {0.0, 1.0}));
    out.push_back(BoundarySegment::line(SegmentKind::inlet_bottom, {0.0, -a}, {W, -a}, {0.0, -1.0}));
    out.push_back(BoundarySegment::line(SegmentKind::outlet, {L, 0.0}, {L, H}, {1.0, 0.0}));
    out.push_back(BoundarySegment::line(SegmentKind::wall, {0.0, -a}, {0.0, H + a}, {-1.0, 0.0}));
    out.push_back(BoundarySegment::line(SegmentKind::wall, {W, H}, {W, H + a}, {1.0, 0.0}));
    out.push_back(BoundarySegment::line(SegmentKind::wall, {W, -a}, {W, 0.0}, {1.0, 0.0}));
    for (const auto& b : baffles_) {
      const bool up = b.wall == Wall::upper;
      const double y = up ? H : 0.0;
      const Vec2 n{0.0, up ? 1.0 : -1.0};
      out.push_back(BoundarySegment::line(SegmentKind::wall, {W, y}, {b.start_mm, y}, n));
      out.push_back(BoundarySegment::line(SegmentKind::wall, {baffle_end(b), y}, {L, y}, n));
      out.push_back(BoundarySegment::curve(b, y, H));
    }
    return out;
  }

 private:
  static double spline_peak(const SplineCurve& s) {
    double peak = 0.0;
    for (int k = 0; k <= 1000; ++k) peak = std::max(peak, std::abs(eval_spline(s, kSplineSpan * k / 1000.0).height));
    return peak;
  }

  double displacement(Wall wall, double x) const {
    for (const auto& b : baffles_) {
      if (b.wall != wall) continue;
      const double xi = (x - b.start_mm) / dims_.H;
      if (xi >= 0.0 && xi <= kSplineSpan) return b.orientation * eval_spline(b.curve, xi).height * dims_.H;
    }
    return 0.0;
  }

  ControlPolygon cp_;
  ChannelDims dims_;
  std::vector<BafflePlacement> baffles_;
};

inline ChannelLayout build_layout(const ControlPolygon& cp, const ChannelDims& dims = ChannelDims::reference()) {
  return ChannelLayout(cp, dims);
}

inline bool contains(const ChannelLayout& layout, Vec2 p_mm) { return layout.contains(p_mm); }

// ---------------------------------------------------------------------------
// Polyline export
// ---------------------------------------------------------------------------

struct PolylineRow {
  double x_mm = 0.0;
  double y_mm = 0.0;
  SegmentKind kind = SegmentKind::wall;
  double n_x = 0.0;
  double n_y = 0.0;
};

inline std::vector<PolylineRow> boundary_polyline(const ChannelLayout& layout, std::size_t curve_samples = 65) {
  std::vector<PolylineRow> rows;
  for (const auto& seg : layout.boundary()) {
    const std::size_t n = seg.is_curve() ? std::max<std::size_t>(curve_samples, 2) : 2;
    for (std::size_t k = 0; k < n; ++k) {
      const double t = double(k) / double(n - 1);
      const Vec2 p = seg.point(t), nv = seg.normal(t);
      rows.push_back({p.x, p.y, seg.kind(), nv.x, nv.y});
    }
  }
  return rows;
}

inline void write_polyline_csv(std::ostream& os, const std::vector<PolylineRow>& rows) {
  os << "x_mm,y_mm,segment_kind,n_x,n_y\n";
  os << std::fixed;
  for (const auto& r : rows) {
    os << std::setprecision(9) << r.x_mm << ',' << r.y_mm << ',' << to_string(r.kind) << ','
       << std::setprecision(12) << r.n_x << ',' << r.n_y << '\n';
  }
}

inline std::vector<PolylineRow> read_polyline_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "x_mm,y_mm,segment_kind,n_x,n_y") throw FormatError("polyline CSV: bad header");
  std::vector<PolylineRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::array<std::string, 5> f;
    for (auto& cell : f) {
      if (!std::getline(ls, cell, ',')) throw FormatError("polyline CSV: short row '" + line + "'");
    }
    try {
      rows.push_back({std::stod(f[0]), std::stod(f[1]), segment_kind_from_string(f[2]), std::stod(f[3]), std::stod(f[4])});
    } catch (const std::invalid_argument&) {
      throw FormatError("polyline CSV: unparsable row '" + line + "'");
    }
  }
  return rows;
}

}  // namespace micromix
