#pragma once

// PPO actor-critic over a one-step (contextual bandit) design problem:
// state Sc, action (cp1, cp2, cp3, Re), reward from an Environment.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "micromix/diffnet/checkpoint.hpp"
#include "micromix/diffnet/network.hpp"
#include "micromix/diffnet/tape.hpp"
#include "micromix/errors.hpp"
#include "micromix/metrics.hpp"
#include "micromix/random.hpp"

namespace micromix {

inline constexpr std::size_t kActionDim = 4;
inline constexpr Interval kScRange = SampleBounds::kScRange;

// ---------------------------------------------------------------------------
// Environments
// ---------------------------------------------------------------------------

class Environment {
 public:
  virtual ~Environment() = default;
  virtual double evaluate(const DesignCandidate& design, double Sc) const = 0;
  virtual std::string name() const = 0;
};

// Design coordinates rescaled to [0, 1]^4.
inline std::array<double, kActionDim> unit_coordinates(const DesignCandidate& d) {
  const auto a = d.as_array();
  return {DesignCandidate::kCp.to_unit(a[0]), DesignCandidate::kCp.to_unit(a[1]), DesignCandidate::kCp.to_unit(a[2]),
          DesignCandidate::kRe.to_unit(a[3])};
}

inline DesignCandidate from_unit_coordinates(const std::array<double, kActionDim>& u) {
  return {DesignCandidate::kCp.map(u[0]), DesignCandidate::kCp.map(u[1]), DesignCandidate::kCp.map(u[2]),
          DesignCandidate::kRe.map(u[3])};
}

// Synthetic environment with a known optimum: reward = 1 - |u - u*(Sc)|^2 in
// unit design coordinates, u*(Sc) smooth and inside [0.2, 0.8]^4.
class QuadEnv final : public Environment {
 public:
  static std::array<double, kActionDim> optimum_unit(double Sc) {
    const double s = std::clamp(kScRange.to_unit(Sc), 0.0, 1.0);
    return {0.2 + 0.6 * s, 0.8 - 0.6 * s * s, 0.5 + 0.3 * std::sin(std::numbers::pi * s),
            0.35 + 0.3 * (1.0 - s) * (1.0 - s)};
  }

  static DesignCandidate optimum(double Sc) { return from_unit_coordinates(optimum_unit(Sc)); }

  double evaluate(const DesignCandidate& design, double Sc) const override {
    const auto u = unit_coordinates(design), t = optimum_unit(Sc);
    double d2 = 0.0;
    for (std::size_t k = 0; k < kActionDim; ++k) d2 += (u[k] - t[k]) * (u[k] - t[k]);
    return 1.0 - d2;
  }

  std::string name() const override { return "quad"; }
};

// Mixing efficiency from a trained field model. Degenerate flows (nonpositive
// pressure cost) and non-finite fields come back as NaN.
class PinnEnv final : public Environment {
 public:
  PinnEnv(FieldModel model, std::optional<BaselineTable> baseline, MetricSettings settings = {})
      : model_(std::move(model)), baseline_(std::move(baseline)), settings_(settings) {}

  double evaluate(const DesignCandidate& design, double Sc) const override {
    try {
      return evaluate_design(model_, design, Sc, baseline_ ? &*baseline_ : nullptr, settings_).ME;
    } catch (const DomainError&) {
      return std::numeric_limits<double>::quiet_NaN();
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  }

  std::string name() const override { return "pinn"; }
  const FieldModel& model() const { return model_; }

 private:
  FieldModel model_;
  std::optional<BaselineTable> baseline_;
  MetricSettings settings_;
};

// ---------------------------------------------------------------------------
// Configuration and networks
// ---------------------------------------------------------------------------

struct PPOConfig {
  double gamma = 0.99;  // kept for completeness; one-step episodes never discount
  double clip = 0.2;
  std::size_t epochs = 10;
  double actor_step = 3e-4;
  double critic_step = 1e-3;
  std::size_t batch = 64;
  std::size_t episodes = 100;
  double value_coef = 1.0;
  double entropy_coef = 0.01;
  bool sampled_entropy = false;
  std::vector<std::size_t> hidden{64, 64};
  double initial_std = 0.5;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("gamma must lie in (0, 1]");
    if (!(clip > 0.0)) throw DomainError("clip must be positive");
    if (epochs == 0 || batch == 0) throw DomainError("epochs and batch must be at least 1");
    if (!(actor_step > 0.0) || !(critic_step > 0.0)) throw DomainError("step sizes must be positive");
    if (!(value_coef >= 0.0) || !(entropy_coef >= 0.0)) throw DomainError("loss coefficients must be nonnegative");
    if (!(initial_std > 0.0)) throw DomainError("initial_std must be positive");
    for (std::size_t w : hidden)
      if (w == 0) throw DomainError("hidden widths must be at least 1");
  }
};

inline diffnet::NetworkSpec actor_spec(const PPOConfig& cfg) {
  diffnet::NetworkSpec s;
  s.input_dim = 1;
  s.output_dim = 2 * kActionDim;
  s.hidden = cfg.hidden;
  s.input_bounds = {kScRange};
  s.spatial_inputs = 0;
  s.output_init_scale = 0.01;
  s.output_bias_init.assign(2 * kActionDim, 0.0);
  for (std::size_t k = kActionDim; k < 2 * kActionDim; ++k) s.output_bias_init[k] = std::log(cfg.initial_std);
  return s;
}

inline diffnet::NetworkSpec critic_spec(const PPOConfig& cfg) {
  diffnet::NetworkSpec s;
  s.input_dim = 1;
  s.output_dim = 1;
  s.hidden = cfg.hidden;
  s.input_bounds = {kScRange};
  s.spatial_inputs = 0;
  return s;
}

inline Eigen::MatrixXd state_matrix(std::span<const double> sc) {
  Eigen::MatrixXd x(Eigen::Index(sc.size()), 1);
  for (std::size_t i = 0; i < sc.size(); ++i) x(Eigen::Index(i), 0) = sc[i];
  return x;
}

struct PolicyOutput {
  Eigen::MatrixXd mu;     // n x 4
  Eigen::MatrixXd sigma;  // n x 4
};

inline PolicyOutput policy_forward(const diffnet::Network& actor, std::span<const double> states) {
  if (actor.spec.input_dim != 1 || actor.spec.output_dim != 2 * kActionDim)
    throw DomainError("actor network must map 1 input to 8 outputs");
  const Eigen::MatrixXd out = diffnet::forward(actor, state_matrix(states));
  return {out.leftCols(kActionDim), out.rightCols(kActionDim).array().exp().matrix()};
}

inline const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

template <typename T>
T gaussian_log_prob(const T* mu, const T* log_sigma, const double* a) {
  T lp = T(0.0);
  for (std::size_t k = 0; k < kActionDim; ++k) {
    using std::exp;
    const T z = (a[k] - mu[k]) * exp(-log_sigma[k]);
    lp = lp - 0.5 * z * z - log_sigma[k] - kHalfLog2Pi;
  }
  return lp;
}

struct ActionSample {
  Eigen::MatrixXd raw;       // n x 4
  std::vector<double> log_prob;
};

inline ActionSample sample_actions(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& sigma, Rng& rng) {
  if (mu.rows() != sigma.rows() || mu.cols() != Eigen::Index(kActionDim) || sigma.cols() != Eigen::Index(kActionDim))
    throw DomainError("sample_actions: mu and sigma must both be n x 4");
  ActionSample s{Eigen::MatrixXd(mu.rows(), mu.cols()), std::vector<double>(std::size_t(mu.rows()))};
  for (Eigen::Index i = 0; i < mu.rows(); ++i) {
    std::array<double, kActionDim> m{}, ls{}, a{};
    for (std::size_t k = 0; k < kActionDim; ++k) {
      const auto kk = Eigen::Index(k);
      if (!(sigma(i, kk) > 0.0)) throw DomainError("sample_actions: sigma must be positive");
      a[k] = mu(i, kk) + sigma(i, kk) * standard_normal(rng);
      s.raw(i, kk) = a[k];
      m[k] = mu(i, kk);
      ls[k] = std::log(sigma(i, kk));
    }
    s.log_prob[std::size_t(i)] = gaussian_log_prob(m.data(), ls.data(), a.data());
  }
  return s;
}

inline ActionSample sample_actions(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& sigma, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x616374);
  return sample_actions(mu, sigma, rng);
}

// Clip each raw coordinate to [-1, 1], then map affinely onto the design box.
inline DesignCandidate scale_action(std::span<const double> raw) {
  if (raw.size() != kActionDim) throw DomainError("scale_action needs 4 coordinates");
  std::array<double, kActionDim> u{};
  for (std::size_t k = 0; k < kActionDim; ++k) {
    const double r = std::isnan(raw[k]) ? 0.0 : std::clamp(raw[k], -1.0, 1.0);
    u[k] = 0.5 * (r + 1.0);
  }
  return from_unit_coordinates(u);
}

// A = r - V, standardized over the batch.
inline std::vector<double> compute_advantages(std::span<const double> rewards, std::span<const double> values,
                                              double eps = 1e-8) {
  if (rewards.size() != values.size()) throw DomainError("rewards and values differ in length");
  if (rewards.size() < 2) throw DomainError("advantage normalization needs at least 2 samples");
  const std::size_t n = rewards.size();
  std::vector<double> a(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += (a[i] = rewards[i] - values[i]);
  mean /= double(n);
  double var = 0.0;
  for (double v : a) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / double(n));
  for (auto& v : a) v = (v - mean) / (sd + eps);
  return a;
}

template <typename T>
struct PPOLosses {
  T clip_objective, value_loss, entropy, total;  // total is maximized
};

namespace detail {
inline double clip_ratio(double r, double lo, double hi) { return std::clamp(r, lo, hi); }
inline ad::Var clip_ratio(const ad::Var& r, double lo, double hi) { return ad::clamp(r, lo, hi); }
inline double smaller(double a, double b) { return std::min(a, b); }
inline ad::Var smaller(const ad::Var& a, const ad::Var& b) { return ad::min(a, b); }
}  // namespace detail

// L_clip = mean(min(r A, clip(r, 1-e, 1+e) A)), L_vf = mean((V - R)^2),
// total = L_clip - c1 L_vf + c2 H.
template <typename TPol, typename TVal>
auto ppo_losses(std::span<const double> old_logp, std::span<const TPol> new_logp, std::span<const double> adv,
                std::span<const double> rewards, std::span<const TVal> values, std::span<const TPol> entropy,
                const PPOConfig& cfg) {
  const std::size_t n = old_logp.size();
  if (new_logp.size() != n || adv.size() != n || entropy.size() != n)
    throw DomainError("ppo_losses: policy inputs differ in length");
  if (rewards.size() != values.size()) throw DomainError("ppo_losses: rewards and values differ in length");
  if (n == 0) throw DomainError("ppo_losses: empty batch");
  using std::exp;
  TPol clip_sum = TPol(0.0), ent_sum = TPol(0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const TPol r = exp(new_logp[i] - old_logp[i]);
    clip_sum = clip_sum + detail::smaller(r * adv[i], detail::clip_ratio(r, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv[i]);
    ent_sum = ent_sum + entropy[i];
  }
  TVal vf = TVal(0.0);
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    const TVal e = values[i] - rewards[i];
    vf = vf + e * e;
  }
  if (!rewards.empty()) vf = vf * (1.0 / double(rewards.size()));
  const TPol lc = clip_sum * (1.0 / double(n));
  const TPol h = ent_sum * (1.0 / double(n));
  struct Out {
    TPol clip_objective;
    TVal value_loss;
    TPol entropy;
    double total;
  };
  return Out{lc, vf, h, ad::value_of(lc) - cfg.value_coef * ad::value_of(vf) + cfg.entropy_coef * ad::value_of(h)};
}

// Closed-form differential entropy of a diagonal Gaussian.
inline double gaussian_entropy(std::span<const double> log_sigma) {
  double h = 0.0;
  for (double ls : log_sigma) h += 0.5 + kHalfLog2Pi + ls;
  return h;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct RewardRecord {
  std::size_t episode = 0;
  double mean_reward = 0.0;
  double smoothed = 0.0;  // trailing mean over up to 50 recorded episodes
};

struct AgentResult {
  diffnet::Network actor;
  diffnet::Network critic;
  std::vector<RewardRecord> history;
  std::vector<std::size_t> aborted;  // episodes dropped for non-finite rewards
};

inline constexpr std::size_t kSmoothingWindow = 50;

inline std::vector<double> trailing_mean(std::span<const double> v, std::size_t window) {
  std::vector<double> out(v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc += v[i];
    if (i >= window) acc -= v[i - window];
    out[i] = acc / double(std::min(i + 1, window));
  }
  return out;
}

struct EpisodeBatch {
  std::vector<double> states;
  ActionSample actions;
  std::vector<DesignCandidate> designs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<double> advantages;
};

using EpisodeObserver = std::function<void(std::size_t episode, const EpisodeBatch&, bool aborted)>;

namespace detail {

// One actor step on -(L_clip + c2 H).
inline void actor_update(diffnet::Network& actor, diffnet::OptimizerState& opt, const EpisodeBatch& b,
                         const PPOConfig& cfg) {
  const diffnet::BatchInput in{state_matrix(b.states), false};
  auto loss = [&](ad::Tape&, std::span<const diffnet::VarBlock> blocks) {
    const auto& out = blocks[0];
    const std::size_t n = b.states.size();
    std::vector<ad::Var> logp(n), ent(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::array<ad::Var, kActionDim> mu, ls;
      std::array<double, kActionDim> a{};
      for (std::size_t k = 0; k < kActionDim; ++k) {
        mu[k] = out.value(Eigen::Index(i), Eigen::Index(k));
        ls[k] = out.value(Eigen::Index(i), Eigen::Index(kActionDim + k));
        a[k] = b.actions.raw(Eigen::Index(i), Eigen::Index(k));
      }
      logp[i] = gaussian_log_prob(mu.data(), ls.data(), a.data());
      if (cfg.sampled_entropy) {
        ent[i] = -logp[i];
      } else {
        ad::Var h = 0.0;
        for (const auto& l : ls) h = h + (0.5 + kHalfLog2Pi) + l;
        ent[i] = h;
      }
    }
    const std::vector<double> none;
    const auto L = ppo_losses<ad::Var, double>(b.actions.log_prob, logp, b.advantages, none, std::span<const double>(none),
                                              ent, cfg);
    return -(L.clip_objective + cfg.entropy_coef * L.entropy);
  };
  const auto g = diffnet::param_gradient(actor, in, loss);
  diffnet::adam_step(actor.params, g.gradient, opt);
}

// One critic step on c1 L_vf.
inline void critic_update(diffnet::Network& critic, diffnet::OptimizerState& opt, const EpisodeBatch& b,
                          const PPOConfig& cfg) {
  if (cfg.value_coef == 0.0) return;
  const diffnet::BatchInput in{state_matrix(b.states), false};
  auto loss = [&](ad::Tape&, std::span<const diffnet::VarBlock> blocks) {
    ad::Var acc = 0.0;
    for (std::size_t i = 0; i < b.states.size(); ++i) {
      const ad::Var e = blocks[0].value(Eigen::Index(i), 0) - b.rewards[i];
      acc = acc + e * e;
    }
    return cfg.value_coef * acc * (1.0 / double(b.states.size()));
  };
  const auto g = diffnet::param_gradient(critic, in, loss);
  diffnet::adam_step(critic.params, g.gradient, opt);
}

}  // namespace detail

inline AgentResult train_agent(const Environment& env, const PPOConfig& cfg, const EpisodeObserver& observer = {}) {
  cfg.validate();
  if (cfg.batch < 2) throw DomainError("PPO batch must hold at least 2 states");
  AgentResult res{diffnet::make_network(actor_spec(cfg), mix_seed(cfg.seed, 1)),
                  diffnet::make_network(critic_spec(cfg), mix_seed(cfg.seed, 2)), {}, {}};
  auto actor_opt = diffnet::OptimizerState::for_params(res.actor.params, {cfg.actor_step});
  auto critic_opt = diffnet::OptimizerState::for_params(res.critic.params, {cfg.critic_step});
  std::vector<double> means;

  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    Rng rng = make_rng(cfg.seed, 1000 + ep);
    EpisodeBatch b;
    for (std::size_t i = 0; i < cfg.batch; ++i) b.states.push_back(uniform(rng, kScRange.lo, kScRange.hi));
    const PolicyOutput pol = policy_forward(res.actor, b.states);
    b.actions = sample_actions(pol.mu, pol.sigma, rng);
    bool finite = true;
    for (std::size_t i = 0; i < cfg.batch; ++i) {
      const Eigen::RowVectorXd raw = b.actions.raw.row(Eigen::Index(i));
      b.designs.push_back(scale_action(std::span<const double>(raw.data(), kActionDim)));
      b.rewards.push_back(env.evaluate(b.designs.back(), b.states[i]));
      finite = finite && std::isfinite(b.rewards.back());
    }
    if (!finite) {
      res.aborted.push_back(ep);
      if (observer) observer(ep, b, true);
      continue;
    }
    const Eigen::MatrixXd v = diffnet::forward(res.critic, state_matrix(b.states));
    b.values.assign(v.data(), v.data() + v.size());
    b.advantages = compute_advantages(b.rewards, b.values);

    for (std::size_t k = 0; k < cfg.epochs; ++k) {
      detail::actor_update(res.actor, actor_opt, b, cfg);
      detail::critic_update(res.critic, critic_opt, b, cfg);
    }

    double mean = 0.0;
    for (double r : b.rewards) mean += r;
    means.push_back(mean / double(cfg.batch));
    res.history.push_back({ep, means.back(), trailing_mean(means, kSmoothingWindow).back()});
    if (observer) observer(ep, b, false);
  }
  return res;
}

struct PolicyQuery {
  DesignCandidate design;
  bool extrapolated = false;  // Sc outside the training range
};

inline PolicyQuery query_policy(const diffnet::Network& actor, double Sc) {
  if (!std::isfinite(Sc)) throw DomainError("Sc must be finite");
  const PolicyOutput p = policy_forward(actor, std::span<const double>(&Sc, 1));
  const Eigen::RowVectorXd mu = p.mu.row(0);
  return {scale_action(std::span<const double>(mu.data(), kActionDim)), Sc < kScRange.lo || Sc > kScRange.hi};
}

inline void write_reward_history_csv(std::ostream& os, const std::vector<RewardRecord>& h) {
  os << "episode,mean_reward,smoothed_reward\n" << std::setprecision(17);
  for (const auto& r : h) os << r.episode << ',' << r.mean_reward << ',' << r.smoothed << '\n';
}

// Actor at `path`, critic next to it at `path + ".critic"`.
inline void save_policy(const AgentResult& r, std::uint64_t seed, const std::string& path) {
  diffnet::save_checkpoint({r.actor, "actor", seed, {}}, path);
  diffnet::save_checkpoint({r.critic, "critic", seed, {}}, path + ".critic");
}

inline diffnet::Network load_actor(const std::string& path) {
  diffnet::Checkpoint c = diffnet::load_checkpoint(path);
  if (c.role != "actor") throw FormatError("checkpoint '" + path + "' holds a " + c.role + " network, not an actor");
  if (c.net.spec.input_dim != 1 || c.net.spec.output_dim != 2 * kActionDim)
    throw FormatError("actor checkpoint has the wrong input/output width");
  return std::move(c.net);
}

}  // namespace micromix
