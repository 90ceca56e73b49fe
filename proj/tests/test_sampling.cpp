#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "micromix/sampling.hpp"

using namespace micromix;

namespace {

bool one_per_stratum(const Eigen::VectorXd& col) {
  const auto n = std::size_t(col.size());
  std::vector<int> hits(n, 0);
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    const double v = col(i);
    if (!(v >= 0.0 && v < 1.0)) return false;
    ++hits[std::size_t(std::floor(v * double(n)))];
  }
  return std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
}

CollocationOptions small_options(std::uint64_t seed) {
  CollocationOptions o;
  o.counts.interior = 400;
  o.counts.per_boundary = 40;
  o.counts.per_slice = 11;
  o.counts.slice_designs = 2;
  o.seed = seed;
  return o;
}

}  // namespace

TEST(Lhs, EveryColumnHasOneSamplePerStratum) {
  Rng rng = make_rng(3);
  for (std::size_t n : {1u, 2u, 17u, 256u}) {
    const Eigen::MatrixXd u = lhs_unit(n, 7, rng);
    ASSERT_EQ(u.rows(), Eigen::Index(n));
    for (Eigen::Index j = 0; j < 7; ++j) EXPECT_TRUE(one_per_stratum(u.col(j))) << "n=" << n << " col=" << j;
  }
}

TEST(Lhs, ZeroCountRejected) {
  Rng rng = make_rng(1);
  EXPECT_THROW(lhs_unit(0, 3, rng), DomainError);
}

TEST(Lhs, DeterministicPerSeed) {
  const auto b = SampleBounds::for_channel(ChannelDims::reference());
  const Eigen::MatrixXd a = lhs_sample(64, b, 11);
  EXPECT_EQ(a, lhs_sample(64, b, 11));
  EXPECT_NE(a, lhs_sample(64, b, 12));
  for (Eigen::Index j = 0; j < 7; ++j) {
    EXPECT_GE(a.col(j).minCoeff(), b.dims[std::size_t(j)].lo);
    EXPECT_LE(a.col(j).maxCoeff(), b.dims[std::size_t(j)].hi);
  }
}

TEST(Bounds, ChannelBoxAndParameterRanges) {
  const auto b = SampleBounds::for_channel(ChannelDims::reference());
  EXPECT_DOUBLE_EQ(b.dims[kX].lo, 0.0);
  EXPECT_NEAR(b.dims[kX].hi, 7.0, 1e-12);
  EXPECT_NEAR(b.dims[kY].lo, -0.5 / 0.3, 1e-12);
  EXPECT_NEAR(b.dims[kY].hi, 1.0 + 0.5 / 0.3, 1e-12);
  EXPECT_DOUBLE_EQ(b.dims[kRe].lo, 5.0);
  EXPECT_DOUBLE_EQ(b.dims[kRe].hi, 40.0);
  EXPECT_DOUBLE_EQ(b.dims[kSc].lo, 1.0);
  EXPECT_DOUBLE_EQ(b.dims[kSc].hi, 100.0);
  auto bad = b;
  bad.dims[kRe] = {10.0, 10.0};
  EXPECT_THROW(bad.validate(), DomainError);
}

TEST(InletProfile, ParabolaCarriesHalfTheFlux) {
  const auto dims = ChannelDims::reference();
  const double w = dims.W / dims.H;
  EXPECT_DOUBLE_EQ(inlet_profile(0.0, dims), 0.0);
  EXPECT_DOUBLE_EQ(inlet_profile(w, dims), 0.0);
  EXPECT_DOUBLE_EQ(inlet_profile(w + 0.1, dims), 0.0);
  EXPECT_NEAR(inlet_profile(0.5 * w, dims), 0.75, 1e-12);
  // Simpson on a quadratic is exact.
  const double q = w / 6.0 * (inlet_profile(0.0, dims) + 4.0 * inlet_profile(0.5 * w, dims) + inlet_profile(w, dims));
  EXPECT_NEAR(q, 0.5, 1e-12);
}

TEST(Collocation, InteriorRowsInsideFluid) {
  const auto opt = small_options(5);
  const CollocationSet set = generate_collocation(opt);
  ASSERT_EQ(set.interior.rows(), 400);
  for (Eigen::Index i = 0; i < set.interior.rows(); ++i) {
    const ControlPolygon cp{set.interior(i, kCp1), set.interior(i, kCp2), set.interior(i, kCp3)};
    const ChannelLayout layout(cp, opt.dims);
    EXPECT_TRUE(layout.contains({set.interior(i, kX) * opt.dims.H, set.interior(i, kY) * opt.dims.H})) << "row " << i;
    EXPECT_GE(set.interior(i, kRe), 5.0);
    EXPECT_LE(set.interior(i, kRe), 40.0);
  }
}

TEST(Collocation, StratificationSurvivesRejection) {
  const auto opt = small_options(6);
  const CollocationSet set = generate_collocation(opt);
  const auto n = set.interior.rows();
  for (Eigen::Index j : {Eigen::Index(kX), Eigen::Index(kCp1), Eigen::Index(kCp2), Eigen::Index(kCp3),
                         Eigen::Index(kRe), Eigen::Index(kSc)}) {
    const Interval iv = opt.bounds.dims[std::size_t(j)];
    Eigen::VectorXd unit(n);
    for (Eigen::Index i = 0; i < n; ++i) unit(i) = std::min(iv.to_unit(set.interior(i, j)), 1.0 - 1e-15);
    EXPECT_TRUE(one_per_stratum(unit)) << "column " << j;
  }
}

TEST(Collocation, DeterministicForSeed) {
  const auto a = generate_collocation(small_options(9));
  const auto b = generate_collocation(small_options(9));
  EXPECT_EQ(a.interior, b.interior);
  EXPECT_EQ(a.rejections, b.rejections);
  std::ostringstream sa, sb;
  write_boundary_csv(sa, a);
  write_boundary_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(Collocation, FixedDesignPinsEveryRow) {
  auto opt = small_options(2);
  opt.fixed_design = CaseVector{0.1, -0.2, 0.3, 12.0, 7.0};
  const CollocationSet set = generate_collocation(opt);
  for (Eigen::Index i = 0; i < set.interior.rows(); ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_DOUBLE_EQ(set.interior(i, Eigen::Index(kCp1 + j)), (*opt.fixed_design)[j]);
  for (const auto kind : kAllSegmentKinds)
    for (const auto& r : set.rows(kind)) EXPECT_EQ(r.design, *opt.fixed_design);
  for (const auto& s : set.slices) EXPECT_EQ(s.design, *opt.fixed_design);
}

TEST(Collocation, BoundaryRowsOnTheirSegments) {
  auto opt = small_options(4);
  opt.fixed_design = CaseVector{0.0, 0.0, 0.0, 10.0, 10.0};
  const CollocationSet set = generate_collocation(opt);
  const double w = opt.dims.W / opt.dims.H, arm = opt.dims.arm_length() / opt.dims.H;
  for (const auto kind : kAllSegmentKinds) {
    const auto& rows = set.rows(kind);
    ASSERT_EQ(rows.size(), 40u) << to_string(kind);
    for (const auto& r : rows) {
      EXPECT_NEAR(norm(r.normal), 1.0, 1e-12);
      switch (kind) {
        case SegmentKind::inlet_top:
          EXPECT_NEAR(r.point.y, 1.0 + arm, 1e-12);
          EXPECT_NEAR(r.target[1], -inlet_profile(r.point.x, opt.dims), 1e-15);
          EXPECT_EQ(r.target[2], 1.0);
          EXPECT_NEAR(r.normal.y, 1.0, 1e-12);
          break;
        case SegmentKind::inlet_bottom:
          EXPECT_NEAR(r.point.y, -arm, 1e-12);
          EXPECT_NEAR(r.target[1], inlet_profile(r.point.x, opt.dims), 1e-15);
          EXPECT_EQ(r.target[2], 0.0);
          EXPECT_NEAR(r.normal.y, -1.0, 1e-12);
          break;
        case SegmentKind::outlet:
          EXPECT_NEAR(r.point.x, 7.0, 1e-12);
          EXPECT_NEAR(r.normal.x, 1.0, 1e-12);
          break;
        case SegmentKind::baffle:
          // A flat control polygon leaves the baffles on the walls.
          EXPECT_TRUE(std::abs(r.point.y) < 1e-9 || std::abs(r.point.y - 1.0) < 1e-9);
          break;
        case SegmentKind::wall: {
          const bool on_channel_wall = (std::abs(r.point.y) < 1e-9 || std::abs(r.point.y - 1.0) < 1e-9) && r.point.x >= w - 1e-9;
          const bool on_arm_side = std::abs(r.point.x) < 1e-9 || std::abs(r.point.x - w) < 1e-9;
          EXPECT_TRUE(on_channel_wall || on_arm_side) << r.point.x << "," << r.point.y;
          break;
        }
      }
    }
  }
}

TEST(Slices, WeightsIntegrateTheLocalHeight) {
  const ChannelLayout layout({0.4, -0.3, 0.2}, ChannelDims::reference());
  const auto s = slice_points(layout, 3.2, 21);
  ASSERT_EQ(s.points.size(), 21u);
  double sum = 0.0;
  for (double wgt : s.weights) sum += wgt;
  EXPECT_NEAR(sum, s.height, 1e-12);
  EXPECT_NEAR(s.height, (layout.upper_wall(0.96) - layout.lower_wall(0.96)) / 0.3, 1e-12);
  EXPECT_NE(s.height, 1.0);
  EXPECT_THROW(slice_points(layout, 3.2, 1), DomainError);
  EXPECT_THROW(slice_points(layout, 0.2, 5), DomainError);
  EXPECT_THROW(slice_points(layout, 7.5, 5), DomainError);
}

TEST(Slices, DefaultStationsCoverBafflesAndOutlet) {
  const auto st = default_slice_stations(ChannelDims::reference());
  ASSERT_EQ(st.size(), 5u);
  EXPECT_NEAR(st.front(), 3.125, 1e-12);
  EXPECT_NEAR(st[3], 3.875, 1e-12);
  EXPECT_NEAR(st.back(), 7.0, 1e-12);
  const auto set = generate_collocation(small_options(1));
  EXPECT_EQ(set.slices.size(), 10u);
}

TEST(Collocation, EmptyFluidRegionRaisesSamplingError) {
  auto opt = small_options(1);
  opt.counts.interior = 20;
  opt.bounds.dims[kY] = {5.0, 6.0};
  EXPECT_THROW(generate_collocation(opt), SamplingError);
}

TEST(Collocation, CsvHeaders) {
  const auto set = generate_collocation(small_options(3));
  std::ostringstream a, b, c;
  write_interior_csv(a, set);
  write_boundary_csv(b, set);
  write_slices_csv(c, set);
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "x_star,y_star,cp1,cp2,cp3,Re,Sc");
  EXPECT_EQ(b.str().substr(0, b.str().find('\n')), "kind,x_star,y_star,n_x,n_y,cp1,cp2,cp3,Re,Sc,target_u,target_v,target_c");
  EXPECT_EQ(c.str().substr(0, c.str().find('\n')), "slice,x_star,y_star,weight,cp1,cp2,cp3,Re,Sc,target");
  const std::string text = a.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 401);
}
