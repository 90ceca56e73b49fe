#pragma once

// Real-valued genetic algorithm over DesignCandidate for one Sc at a time,
// and the timing harness comparing it with policy queries.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <vector>

#include "micromix/errors.hpp"
#include "micromix/metrics.hpp"
#include "micromix/random.hpp"
#include "micromix/rl.hpp"

namespace micromix {

struct GAConfig {
  std::size_t population = 32;
  std::size_t generations = 60;
  std::size_t tournament = 3;
  double crossover_rate = 0.9;
  double mutation_rate = 0.25;  // per gene
  double mutation_scale = 0.1;  // std as a fraction of each gene's range
  double blend_alpha = 0.5;
  std::size_t elitism = 2;
  std::uint64_t seed = 1;

  void validate() const {
    if (population < 2) throw DomainError("GA population must be at least 2");
    if (tournament < 1) throw DomainError("GA tournament size must be at least 1");
    if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0)) throw DomainError("GA crossover_rate must lie in [0, 1]");
    if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) throw DomainError("GA mutation_rate must lie in [0, 1]");
    if (!(mutation_scale >= 0.0)) throw DomainError("GA mutation_scale must be nonnegative");
    if (!(blend_alpha >= 0.0)) throw DomainError("GA blend_alpha must be nonnegative");
    if (elitism > population) throw DomainError("GA elitism cannot exceed the population");
  }
};

struct GAResult {
  DesignCandidate best;
  double best_fitness = -std::numeric_limits<double>::infinity();
  std::size_t evaluations = 0;
  std::size_t nonfinite = 0;               // evaluations scored as -inf
  double seconds = 0.0;
  std::vector<double> best_per_generation;  // index 0 is the initial population
};

using Genome = std::array<double, kActionDim>;  // unit design coordinates

inline GAResult run_ga(const Environment& env, double Sc, const GAConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng = make_rng(cfg.seed, 0x6761);
  GAResult res;
  const std::size_t P = cfg.population;

  auto score = [&](const Genome& g) {
    const DesignCandidate d = from_unit_coordinates(g);
    double f = env.evaluate(d, Sc);
    ++res.evaluations;
    if (!std::isfinite(f)) {
      ++res.nonfinite;
      f = -std::numeric_limits<double>::infinity();
    }
    if (f > res.best_fitness || res.evaluations == 1) {
      res.best_fitness = f;
      res.best = d;
    }
    return f;
  };

  std::vector<Genome> pop(P);
  std::vector<double> fit(P);
  for (std::size_t i = 0; i < P; ++i) {
    for (auto& x : pop[i]) x = uniform01(rng);
    fit[i] = score(pop[i]);
  }
  res.best_per_generation.push_back(res.best_fitness);

  std::vector<std::size_t> order(P);
  auto tournament = [&]() {
    std::size_t win = uniform_index(rng, P);
    for (std::size_t k = 1; k < cfg.tournament; ++k) {
      const std::size_t c = uniform_index(rng, P);
      if (fit[c] > fit[win]) win = c;
    }
    return win;
  };

  for (std::size_t gen = 0; gen < cfg.generations; ++gen) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fit[a] > fit[b]; });
    std::vector<Genome> next;
    std::vector<double> next_fit;
    for (std::size_t e = 0; e < cfg.elitism; ++e) {
      next.push_back(pop[order[e]]);
      next_fit.push_back(fit[order[e]]);
    }
    while (next.size() < P) {
      const Genome& a = pop[tournament()];
      const Genome& b = pop[tournament()];
      Genome child = a;
      if (uniform01(rng) < cfg.crossover_rate) {
        for (std::size_t k = 0; k < kActionDim; ++k) {
          const double lo = std::min(a[k], b[k]), hi = std::max(a[k], b[k]), ext = cfg.blend_alpha * (hi - lo);
          child[k] = uniform(rng, lo - ext, hi + ext);
        }
      }
      for (auto& x : child) {
        if (uniform01(rng) < cfg.mutation_rate) x += cfg.mutation_scale * standard_normal(rng);
        x = std::clamp(x, 0.0, 1.0);
      }
      next_fit.push_back(score(child));
      next.push_back(child);
    }
    pop = std::move(next);
    fit = std::move(next_fit);
    res.best_per_generation.push_back(*std::max_element(fit.begin(), fit.end()));
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// ---------------------------------------------------------------------------
// Scaling comparison
// ---------------------------------------------------------------------------

struct ScalingRow {
  std::size_t m = 0;
  double ga_seconds = 0.0;   // cumulative over the first m Sc values
  double rl_seconds = 0.0;   // cumulative policy-query time for the same m
  double ga_best_mean = 0.0;
};

struct TimingOptions {
  std::size_t query_repeats = 5;  // each query timed as the fastest of this many calls
};

inline std::vector<std::size_t> doubling_counts(std::size_t n) {
  std::vector<std::size_t> m;
  for (std::size_t k = 1; k < n; k *= 2) m.push_back(k);
  if (n > 0) m.push_back(n);
  return m;
}

// GA is rerun for every Sc (its cost scales with the sample count); the policy
// answers each Sc with one forward pass.
inline std::vector<ScalingRow> compare_timing(const Environment& env, const std::vector<double>& sc_list,
                                              const GAConfig& cfg, const diffnet::Network& actor,
                                              const TimingOptions& opt = {}) {
  if (sc_list.empty()) throw DomainError("compare_timing needs at least one Sc value");
  if (opt.query_repeats == 0) throw DomainError("query_repeats must be at least 1");
  using clock = std::chrono::steady_clock;
  // warm caches and allocator before timing
  (void)query_policy(actor, sc_list.front());

  std::vector<double> ga_t, rl_t, best;
  for (std::size_t i = 0; i < sc_list.size(); ++i) {
    GAConfig c = cfg;
    c.seed = mix_seed(cfg.seed, i);
    const GAResult g = run_ga(env, sc_list[i], c);
    ga_t.push_back(g.seconds);
    best.push_back(g.best_fitness);

    double fastest = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < opt.query_repeats; ++r) {
      const auto t0 = clock::now();
      const PolicyQuery q = query_policy(actor, sc_list[i]);
      fastest = std::min(fastest, std::chrono::duration<double>(clock::now() - t0).count());
      (void)q;
    }
    rl_t.push_back(fastest);
  }

  std::vector<ScalingRow> rows;
  for (std::size_t m : doubling_counts(sc_list.size())) {
    ScalingRow r{m, 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < m; ++i) {
      r.ga_seconds += ga_t[i];
      r.rl_seconds += rl_t[i];
      r.ga_best_mean += best[i];
    }
    r.ga_best_mean /= double(m);
    rows.push_back(r);
  }
  return rows;
}

inline void write_scaling_csv(std::ostream& os, const std::vector<ScalingRow>& rows) {
  os << "m,ga_cumulative_seconds,rl_cumulative_seconds,ga_best_fitness_mean\n" << std::setprecision(10);
  for (const auto& r : rows) os << r.m << ',' << r.ga_seconds << ',' << r.rl_seconds << ',' << r.ga_best_mean << '\n';
}

// Coefficient of determination of a least-squares line y = a + b x.
inline double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("linear fit needs at least 2 paired points");
  const double n = double(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n, my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw DomainError("linear fit needs distinct x values");
  if (syy == 0.0) return 1.0;
  return sxy * sxy / (sxx * syy);
}

}  // namespace micromix
