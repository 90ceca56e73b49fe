#include <gtest/gtest.h>

#include <cmath>

#include "micromix/physics.hpp"
#include "oracles.hpp"

using namespace micromix;

namespace {

// Fully developed channel flow between y*=0 and y*=1 with uniform concentration.
FieldSample<double> poiseuille(double x, double y, double Re) {
  FieldSample<double> s;
  const double p = 12.0 / Re * (7.0 - x);
  s.value = {6.0 * y * (1.0 - y), 0.0, p, -p, -p, (6.0 - 12.0 * y) / Re, 0.5, 0.0, 0.0};
  s.d_dx = {0.0, 0.0, -12.0 / Re, 12.0 / Re, 12.0 / Re, 0.0, 0.0, 0.0, 0.0};
  s.d_dy = {6.0 - 12.0 * y, 0.0, 0.0, 0.0, 0.0, -12.0 / Re, 0.0, 0.0, 0.0};
  return s;
}

diffnet::Network constant_network(const std::array<double, kFieldCount>& out) {
  auto spec = diffnet::NetworkSpec::field_approximator(SampleBounds::for_channel(ChannelDims::reference()), {4});
  auto net = diffnet::make_network(spec, 1);
  std::fill(net.params.values.begin(), net.params.values.end(), 0.0);
  const auto& last = net.params.shapes.back();
  for (std::size_t k = 0; k < kFieldCount; ++k) net.params.values[last.bias_offset + k] = out[k];
  return net;
}

}  // namespace

TEST(Residuals, PoiseuilleSatisfiesEverything) {
  for (double Re : {5.0, 17.0, 40.0})
    for (double y : {0.0, 0.2, 0.5, 0.93})
      for (double r : pde_residuals(poiseuille(3.1, y, Re), Re, 10.0).as_array()) EXPECT_NEAR(r, 0.0, 1e-13);
}

TEST(Residuals, PureDiffusion) {
  // Quiescent fluid, c = x*^2 and J = -grad c: only transport is nonzero,
  // equal to (1/(Re Sc)) dJx/dx = -2/(Re Sc).
  FieldSample<double> s;
  const double x = 1.7;
  s.value[kC] = x * x;
  s.value[kJx] = -2.0 * x;
  s.d_dx[kC] = 2.0 * x;
  s.d_dx[kJx] = -2.0;
  const auto r = pde_residuals(s, 8.0, 4.0);
  EXPECT_NEAR(r.transport, -2.0 / 32.0, 1e-15);
  EXPECT_EQ(r.flux_x, 0.0);
  EXPECT_EQ(r.flux_y, 0.0);
  EXPECT_EQ(r.cont, 0.0);
  EXPECT_EQ(r.mom_x, 0.0);
}

TEST(Residuals, PerturbedFlowBreaksMomentum) {
  auto s = poiseuille(2.0, 0.3, 10.0);
  s.d_dx[kTxx] += 0.1;
  const auto r = pde_residuals(s, 10.0, 10.0);
  EXPECT_NEAR(r.mom_x, -0.1, 1e-14);
  EXPECT_NEAR(r.mom_y, 0.0, 1e-14);
  s = poiseuille(2.0, 0.3, 10.0);
  s.value[kU] += 0.05;
  EXPECT_NEAR(pde_residuals(s, 10.0, 10.0).mom_x, 0.0, 1e-14);  // du/dx = 0 keeps advection zero
}

TEST(Residuals, InvalidInputs) {
  const auto s = poiseuille(1.0, 0.5, 10.0);
  EXPECT_THROW(pde_residuals(s, 0.0, 1.0), DomainError);
  EXPECT_THROW(pde_residuals(s, 10.0, -1.0), DomainError);
  auto bad = s;
  bad.d_dy[kV] = std::nan("");
  EXPECT_THROW(pde_residuals(bad, 10.0, 1.0), NumericalError);
}

TEST(Residuals, TapeMatchesDoublesAndFiniteDifferences) {
  FieldSample<double> s;
  Rng rng = make_rng(4);
  for (std::size_t k = 0; k < kFieldCount; ++k) {
    s.value[k] = standard_normal(rng);
    s.d_dx[k] = standard_normal(rng);
    s.d_dy[k] = standard_normal(rng);
  }
  const double Re = 13.0, Sc = 3.0;
  auto scalar = [&](const FieldSample<double>& q) {
    double acc = 0.0;
    for (double r : pde_residuals(q, Re, Sc).as_array()) acc += r * r;
    return acc;
  };

  ad::Tape tape;
  FieldSample<ad::Var> v;
  for (std::size_t k = 0; k < kFieldCount; ++k) {
    v.value[k] = tape.variable(s.value[k]);
    v.d_dx[k] = tape.variable(s.d_dx[k]);
    v.d_dy[k] = tape.variable(s.d_dy[k]);
  }
  ad::Var acc = 0.0;
  for (const auto& r : pde_residuals(v, Re, Sc).as_array()) acc = acc + r * r;
  EXPECT_NEAR(acc.value(), scalar(s), 1e-12);
  const std::vector<double> g = tape.gradient(acc);
  for (std::size_t k = 0; k < kFieldCount; ++k) {
    auto fd = [&](auto member) {
      return oracle::central_difference(
          [&](double t) {
            auto q = s;
            (q.*member)[k] = t;
            return scalar(q);
          },
          (s.*member)[k], 1e-6);
    };
    EXPECT_NEAR(g[v.value[k].index()], fd(&FieldSample<double>::value), 1e-6);
    EXPECT_NEAR(g[v.d_dx[k].index()], fd(&FieldSample<double>::d_dx), 1e-6);
    EXPECT_NEAR(g[v.d_dy[k].index()], fd(&FieldSample<double>::d_dy), 1e-6);
  }
}

TEST(BoundaryResiduals, PerKind) {
  FieldSample<double> s;
  s.value = {1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.4, 0.5, -0.25};
  const auto in = boundary_residuals(s, SegmentKind::inlet_top, {0.0, 1.0}, {0.0, -1.5, 1.0});
  ASSERT_EQ(in.count, 3u);
  EXPECT_DOUBLE_EQ(in.r[0], 1.0);
  EXPECT_DOUBLE_EQ(in.r[1], 3.5);
  EXPECT_DOUBLE_EQ(in.r[2], -0.6);

  const Vec2 n{0.6, 0.8};
  const auto wall = boundary_residuals(s, SegmentKind::baffle, n, {});
  ASSERT_EQ(wall.count, 3u);
  EXPECT_DOUBLE_EQ(wall.r[0], 1.0);
  EXPECT_DOUBLE_EQ(wall.r[1], 2.0);
  EXPECT_NEAR(wall.r[2], 0.5 * 0.6 - 0.25 * 0.8, 1e-15);

  const auto out = boundary_residuals(s, SegmentKind::outlet, {1.0, 0.0}, {});
  ASSERT_EQ(out.count, 2u);
  EXPECT_DOUBLE_EQ(out.r[0], 3.0);
  EXPECT_DOUBLE_EQ(out.r[1], 0.5);
}

TEST(Penalty, ParabolaCarriesUnitFlux) {
  const std::size_t n = 401;
  std::vector<double> w(n, 1.0 / double(n - 1)), u(n);
  w.front() *= 0.5;
  w.back() *= 0.5;
  for (std::size_t k = 0; k < n; ++k) {
    const double y = double(k) / double(n - 1);
    u[k] = 6.0 * y * (1.0 - y);
  }
  EXPECT_LT(massflow_penalty(w, u, 1.0), 1e-9);
  std::vector<double> two(n, 2.0);
  EXPECT_NEAR(massflow_penalty(w, two, 1.0), 1.0, 1e-12);
  EXPECT_THROW(massflow_penalty(std::vector<double>{1.0}, std::vector<double>{1.0}, 1.0), DomainError);
}

TEST(Groups, FromPhysicalProperties) {
  // water-like fluid, 1 mm/s mean velocity in a 0.3 mm channel
  const auto g = DimensionlessGroups::from_physical(1000.0, 1e-3, 1e-9, 1e-3, 3e-4);
  EXPECT_NEAR(g.Re, 0.3, 1e-12);
  EXPECT_NEAR(g.Sc, 1000.0, 1e-9);
}

TEST(LossWeights, Validation) {
  LossWeights w;
  EXPECT_NO_THROW(w.validate());
  EXPECT_EQ(w.of(LossFamily::transport), 1.0);
  EXPECT_EQ(w.of(LossFamily::baffle), 10.0);
  w.wall = -1.0;
  EXPECT_THROW(w.validate(), DomainError);
  LossWeights zero{0, 0, 0, 0, 0, 0};
  EXPECT_THROW(zero.validate(), DomainError);
}

TEST(Loss, HandComputedConstantNetwork) {
  const auto net = constant_network({1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.5, 0.25, -0.5});
  LossBatch b;
  b.interior.resize(2, 7);
  b.interior << 1.5, 0.5, 0, 0, 0, 10, 10,
                4.0, 0.2, 0.1, 0.2, 0.3, 20, 50;
  b.boundary.resize(2, 7);
  b.boundary << 5.0, 1.0, 0, 0, 0, 10, 10,
                7.0, 0.5, 0, 0, 0, 10, 10;
  b.boundary_kind = {SegmentKind::wall, SegmentKind::outlet};
  b.boundary_normal = {{0.0, 1.0}, {1.0, 0.0}};
  b.boundary_target = {std::array<double, 3>{}, std::array<double, 3>{}};
  PenaltySlice slice{5.0, {0, 0, 0, 10, 10}, {{5.0, 0.0}, {5.0, 1.0}}, {0.5, 0.5}, 2.0};
  b.slices.resize(2, 7);
  b.slices << 5.0, 0.0, 0, 0, 0, 10, 10,
              5.0, 1.0, 0, 0, 0, 10, 10;
  b.slice_refs.push_back({0, 2, &slice});

  const LossReport r = evaluate_loss(net, b, LossWeights{});
  EXPECT_NEAR(r[LossFamily::stress_xx], 49.0, 1e-12);
  EXPECT_NEAR(r[LossFamily::stress_yy], 64.0, 1e-12);
  EXPECT_NEAR(r[LossFamily::stress_xy], 36.0, 1e-12);
  EXPECT_NEAR(r[LossFamily::flux_x], 0.0625, 1e-12);
  EXPECT_NEAR(r[LossFamily::flux_y], 0.25, 1e-12);
  EXPECT_EQ(r[LossFamily::cont], 0.0);
  EXPECT_EQ(r[LossFamily::inlet], 0.0);
  EXPECT_NEAR(r[LossFamily::wall], 1.75, 1e-12);
  EXPECT_NEAR(r[LossFamily::outlet], 4.53125, 1e-12);
  EXPECT_NEAR(r[LossFamily::penalty], 1.0, 1e-12);
  EXPECT_NEAR(r.total, 222.125, 1e-10);

  const LossGradient g = loss_gradient(net, b, LossWeights{});
  EXPECT_NEAR(g.report.total, r.total, 1e-10);
  for (std::size_t f = 0; f < kLossFamilyCount; ++f) EXPECT_NEAR(g.report.terms[f], r.terms[f], 1e-10);

  // d total / d (output bias of p): interior 2*(-7)*(-1) + 2*(-8)*(-1) = 30, outlet 10 * 2*3/2 = 30.
  const auto& last = net.params.shapes.back();
  EXPECT_NEAR(g.gradient[last.bias_offset + kP], 60.0, 1e-9);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  auto spec = diffnet::NetworkSpec::field_approximator(SampleBounds::for_channel(ChannelDims::reference()), {6, 6});
  const auto net = diffnet::make_network(spec, 21);
  CollocationOptions opt;
  opt.counts = {12, 3, 5, 1};
  opt.seed = 3;
  const auto set = generate_collocation(opt);
  const auto batch = full_loss_batch(set);
  const LossWeights w{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  const auto g = loss_gradient(net, batch, w);
  EXPECT_NEAR(g.report.total, evaluate_loss(net, batch, w).total, 1e-10 * g.report.total);

  Rng rng = make_rng(8);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t k = uniform_index(rng, net.params.values.size());
    const double fd = oracle::central_difference(
        [&](double t) {
          auto n2 = net;
          n2.params.values[k] = t;
          return evaluate_loss(n2, batch, w).total;
        },
        net.params.values[k], 1e-6);
    EXPECT_NEAR(g.gradient[k], fd, 1e-5 * std::max(1.0, std::abs(fd))) << "param " << k;
  }
}

TEST(Loss, ReportJsonOrder) {
  LossReport r;
  r.terms[3] = 0.5;
  r.total = 2.0;
  const auto j = r.to_json(7);
  EXPECT_EQ(j.begin().key(), "step");
  EXPECT_EQ(j["stress_xx"], 0.5);
  EXPECT_EQ((--j.end()).key(), "total");
  EXPECT_EQ(j.size(), kLossFamilyCount + 2);
}
