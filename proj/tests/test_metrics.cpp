#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "micromix/metrics.hpp"

using namespace micromix;

namespace {

FieldModel constant_model(double c, double p) {
  const auto dims = ChannelDims::reference();
  auto spec = diffnet::NetworkSpec::field_approximator(SampleBounds::for_channel(dims), {4});
  auto net = diffnet::make_network(spec, 1);
  std::fill(net.params.values.begin(), net.params.values.end(), 0.0);
  const auto& last = net.params.shapes.back();
  net.params.values[last.bias_offset + kC] = c;
  net.params.values[last.bias_offset + kP] = p;
  return {net, dims, 1};
}

FieldModel random_model(std::uint64_t seed) {
  const auto dims = ChannelDims::reference();
  auto spec = diffnet::NetworkSpec::field_approximator(SampleBounds::for_channel(dims), {12, 12});
  spec.output_bias_init = {0, 0, 3.0, 0, 0, 0, 0.5, 0, 0};
  spec.output_init_scale = 0.1;
  return {diffnet::make_network(spec, seed), dims, seed};
}

}  // namespace

TEST(MixingIndex, Identities) {
  const std::vector<double> mixed(101, 0.5);
  EXPECT_EQ(mixing_index(mixed), 1.0);
  std::vector<double> seg(100, 0.0);
  std::fill(seg.begin() + 50, seg.end(), 1.0);
  EXPECT_EQ(mixing_index(seg), 0.0);
  EXPECT_EQ(mixing_index(std::vector<double>{0.25, 0.75}), 0.5);
  EXPECT_THROW(mixing_index(std::vector<double>{}), DomainError);
}

TEST(MixingIndex, PermutationInvariantAndMonotone) {
  Rng rng = make_rng(2);
  std::vector<double> c(40);
  for (auto& v : c) v = uniform01(rng);
  const double mi = mixing_index(c);
  auto shuffled = c;
  shuffle(shuffled, rng);
  EXPECT_NEAR(mixing_index(shuffled), mi, 1e-15);
  for (std::size_t k = 0; k < c.size(); ++k) {
    auto moved = c;
    moved[k] += c[k] >= 0.5 ? 0.01 : -0.01;
    EXPECT_LT(mixing_index(moved), mi);
  }
}

TEST(PressureCost, Means) {
  EXPECT_EQ(pressure_cost(std::vector<double>(7, 2.0)), 2.0);
  EXPECT_EQ(pressure_cost(std::vector<double>{1.0, 3.0}), 2.0);
  EXPECT_EQ(pressure_cost(std::vector<double>{-1.5, 1.5, -0.25, 0.25}), 0.0);
  EXPECT_THROW(pressure_cost(std::vector<double>{}), DomainError);
}

TEST(MixingEfficiency, ExamplesAndScaleLaw) {
  EXPECT_EQ(mixing_efficiency(0.4, 3.0, 0.4, 3.0), 1.0);
  EXPECT_EQ(mixing_efficiency(0.8, 24.0, 0.4, 3.0), 1.0);
  EXPECT_NEAR(mixing_efficiency(0.48, 3.0, 0.4, 3.0), 1.2, 1e-15);
  Rng rng = make_rng(7);
  for (int t = 0; t < 200; ++t) {
    const double MI = uniform(rng, 0.1, 1), Cp = uniform(rng, 0.1, 10), MI0 = uniform(rng, 0.1, 1), Cp0 = uniform(rng, 0.1, 10);
    const double k = uniform(rng, 0.1, 5), m = uniform(rng, 0.1, 5);
    const double lhs = mixing_efficiency(k * MI, m * Cp, MI0, Cp0);
    const double rhs = k / std::cbrt(m) * mixing_efficiency(MI, Cp, MI0, Cp0);
    EXPECT_NEAR(lhs, rhs, 4e-16 * std::abs(rhs) * 8);
  }
  EXPECT_THROW(mixing_efficiency(0.5, 1.0, 0.0, 1.0), DomainError);
  EXPECT_THROW(mixing_efficiency(0.5, 1.0, 0.5, -1.0), DomainError);
  EXPECT_THROW(mixing_efficiency(0.5, 0.0, 0.5, 1.0), DomainError);
}

TEST(DesignCandidate, BoundsAtConstruction) {
  EXPECT_NO_THROW(DesignCandidate(-0.5, 0.5, 0.0, 5.0));
  EXPECT_NO_THROW(DesignCandidate(0.0, 0.0, 0.0, 40.0));
  EXPECT_THROW(DesignCandidate(0.0, 0.0, 0.0, 4.99), DomainError);
  EXPECT_THROW(DesignCandidate(0.0, 0.51, 0.0, 10.0), DomainError);
  try {
    DesignCandidate(0.0, 0.0, 0.7, 10.0);
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("cp3"), std::string::npos);
  }
  const DesignCandidate d;
  EXPECT_EQ(d.Re(), 22.5);
  EXPECT_EQ(d.cp1(), 0.0);
}

TEST(Measure, ConstantFieldsGiveClosedForms) {
  const auto m = measure(constant_model(0.5, 2.0), DesignCandidate(0.2, -0.1, 0.3, 10.0), 10.0);
  EXPECT_NEAR(m.MI, 1.0, 1e-15);
  EXPECT_NEAR(m.Cp, 2.0, 1e-14);
  EXPECT_EQ(m.N, 101u);
  EXPECT_EQ(m.clamped, 0u);

  const auto over = measure(constant_model(1.3, 2.0), DesignCandidate::flat(10.0), 10.0);
  EXPECT_EQ(over.clamped, 101u);
  EXPECT_NEAR(over.MI, 0.0, 1e-15);
}

TEST(EvaluateDesign, SelfBaselineGivesUnitEfficiency) {
  const auto model = random_model(4);
  for (double Re : {5.0, 22.0, 40.0}) {
    const auto r = evaluate_design(model, DesignCandidate::flat(Re), 13.3);
    EXPECT_EQ(r.ME, 1.0);
    EXPECT_EQ(r.MI, r.MI0);
    EXPECT_EQ(r.Cp, r.Cp0);
  }
  const auto r = evaluate_design(model, DesignCandidate(0.3, 0.3, -0.2, 12.0), 50.0);
  EXPECT_TRUE(std::isfinite(r.ME));
  const auto j = r.to_json();
  EXPECT_EQ(j.begin().key(), "MI");
  for (const char* k : {"MI", "Cp", "MI0", "Cp0", "ME"}) EXPECT_TRUE(std::isfinite(j[k].get<double>()));
}

TEST(EvaluateDesign, DegenerateBaselineRaises) {
  EXPECT_THROW(evaluate_design(constant_model(0.3, 0.0), DesignCandidate::flat(10.0), 10.0), DomainError);
}

TEST(Baseline, InterpolationIsExactAtNodesAndBilinear) {
  const std::vector<double> re{5, 10, 40}, sc{1, 50, 100};
  std::vector<BaselineEntry> e;
  auto f = [](double R, double S) { return BaselineEntry{0.1 + 0.01 * R + 0.002 * S, 1.0 + 0.5 * R - 0.01 * S + 0.001 * R * S}; };
  for (double R : re)
    for (double S : sc) e.push_back(f(R, S));
  const BaselineTable t(re, sc, e);
  for (double R : re)
    for (double S : sc) {
      EXPECT_EQ(t.at(R, S).MI0, f(R, S).MI0);
      EXPECT_EQ(t.at(R, S).Cp0, f(R, S).Cp0);
    }
  // bilinear functions are reproduced exactly inside a cell
  EXPECT_NEAR(t.at(7.5, 30).Cp0, f(7.5, 30).Cp0, 1e-12);
  EXPECT_NEAR(t.at(33, 77).MI0, f(33, 77).MI0, 1e-12);
  // clamped outside the grid
  EXPECT_NEAR(t.at(50, 120).Cp0, f(40, 100).Cp0, 1e-12);
  EXPECT_THROW(BaselineTable({5, 5}, {1}, {{1, 1}, {1, 1}}), DomainError);
  EXPECT_THROW(BaselineTable({5}, {1}, {}), DomainError);
}

TEST(Baseline, CsvRoundTrip) {
  const BaselineTable t({5, 40}, {1, 100}, {{0.1, 2.5}, {0.2, 3.25}, {0.3, 1.0 / 3.0}, {0.4, 7.0}});
  std::stringstream ss;
  t.write_csv(ss);
  const BaselineTable back = BaselineTable::read_csv(ss);
  EXPECT_EQ(back.re_axis(), t.re_axis());
  EXPECT_EQ(back.sc_axis(), t.sc_axis());
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_EQ(back.node(i, j).MI0, t.node(i, j).MI0);
      EXPECT_EQ(back.node(i, j).Cp0, t.node(i, j).Cp0);
    }
  std::stringstream bad1("Re,Sc,MI,Cp0\n"), bad2("Re,Sc,MI0,Cp0\n5,1,0.1,x\n"), bad3("Re,Sc,MI0,Cp0\n5,1,0.1,1\n5,2,0.1,1\n6,1,0.1,1\n");
  EXPECT_THROW(BaselineTable::read_csv(bad1), FormatError);
  EXPECT_THROW(BaselineTable::read_csv(bad2), FormatError);
  EXPECT_THROW(BaselineTable::read_csv(bad3), FormatError);
}

TEST(Baseline, GridFromModelIsFiniteAndMatchesDirectEvaluation) {
  const auto model = random_model(9);
  const auto t = baseline_table(model, linspace(5, 40, 3), linspace(1, 100, 2));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_TRUE(std::isfinite(t.node(i, j).MI0));
      const auto m = measure(model, DesignCandidate::flat(t.re_axis()[i]), t.sc_axis()[j]);
      EXPECT_EQ(t.node(i, j).Cp0, m.Cp);
    }
  const auto r = evaluate_design(model, DesignCandidate::flat(5.0), 100.0, &t);
  EXPECT_EQ(r.ME, 1.0);
}
