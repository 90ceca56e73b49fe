#pragma once

// Run configuration: one JSON document with a schema version. Every section
// and key is optional and falls back to the defaults below; unknown keys are
// errors so typos never pass silently.

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "micromix/errors.hpp"
#include "micromix/ga.hpp"
#include "micromix/metrics.hpp"
#include "micromix/pinn_train.hpp"
#include "micromix/rl.hpp"

namespace micromix {

inline constexpr int kConfigSchemaVersion = 1;

struct BaselineGrid {
  std::size_t re_points = 8;
  std::size_t sc_points = 8;
};

struct RunPaths {
  std::string field_checkpoint = "field.ckpt";
  std::string train_log = "train_log.jsonl";
  std::string baseline = "baseline.csv";
  std::string policy = "policy.ckpt";
  std::string reward_history = "reward_history.csv";
  std::string scaling = "scaling.csv";
};

struct RunConfig {
  std::uint64_t seed = 1;
  TrainConfig train;  // includes channel dims and collocation options
  MetricSettings metrics;
  BaselineGrid baseline;
  PPOConfig ppo;
  GAConfig ga;
  std::vector<double> compare_sc;  // empty: 64 values spread over [1, 100]
  RunPaths paths;

  // Seeds, bounds and derived defaults made consistent with the top-level seed
  // and channel.
  void finalize() {
    train.seed = seed;
    train.collocation.bounds = SampleBounds::for_channel(train.collocation.dims);
    train.collocation.slice_stations = default_slice_stations(train.collocation.dims);
    ppo.seed = seed;
    ga.seed = seed;
    if (compare_sc.empty()) compare_sc = linspace(1.0, 100.0, 64);
  }

  void validate() const {
    train.validate();
    metrics.validate();
    ppo.validate();
    ga.validate();
    if (baseline.re_points == 0 || baseline.sc_points == 0) throw DomainError("baseline grid needs at least one point per axis");
  }
};

namespace detail {

using Json = nlohmann::ordered_json;

// Reads keys out of one JSON object and rejects whatever is left over.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  std::optional<Section> sub(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Section(j_.at(key), where(key));
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ConfigError("unknown key '" + where(item.key().c_str()) + "'");
  }

  std::string where(const char* key = nullptr) const {
    if (!key) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_config(const nlohmann::ordered_json& j) {
  RunConfig c;
  detail::Section root(j, "");
  int version = kConfigSchemaVersion;
  root.get("schema_version", version);
  if (!j.contains("schema_version")) throw ConfigError("config needs a schema_version field");
  if (version != kConfigSchemaVersion)
    throw ConfigError("schema_version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kConfigSchemaVersion) + ")");
  root.get("seed", c.seed);

  if (auto s = root.sub("channel")) {
    auto& d = c.train.collocation.dims;
    s->get("L", d.L);
    s->get("L0", d.L0);
    s->get("L1", d.L1);
    s->get("H", d.H);
    s->get("W", d.W);
    s->get("d", d.d);
    s->get("h_d", d.h_d);
    s->get("l_d", d.l_d);
    s->finish();
  }
  if (auto s = root.sub("collocation")) {
    auto& k = c.train.collocation.counts;
    s->get("interior", k.interior);
    s->get("per_boundary", k.per_boundary);
    s->get("per_slice", k.per_slice);
    s->get("slice_designs", k.slice_designs);
    if (s->has("fixed_design")) {
      std::vector<double> v;
      s->get("fixed_design", v);
      if (v.size() != 5) throw ConfigError("collocation.fixed_design needs [cp1, cp2, cp3, Re, Sc]");
      c.train.collocation.fixed_design = CaseVector{v[0], v[1], v[2], v[3], v[4]};
    }
    s->finish();
  }
  if (auto s = root.sub("train")) {
    auto& t = c.train;
    s->get("steps", t.steps);
    s->get("batch_interior", t.batch.interior);
    s->get("batch_boundary_per_kind", t.batch.boundary_per_kind);
    s->get("batch_slices", t.batch.slices);
    s->get("step_size", t.adam.step_size);
    s->get("beta1", t.adam.beta1);
    s->get("beta2", t.adam.beta2);
    s->get("epsilon", t.adam.epsilon);
    s->get("hidden", t.hidden);
    std::string act = diffnet::to_string(t.activation);
    s->get("activation", act);
    try {
      t.activation = diffnet::activation_from_string(act);
    } catch (const DomainError& e) {
      throw ConfigError(std::string("train.activation: ") + e.what());
    }
    s->get("log_interval", t.log_interval);
    s->get("checkpoint_interval", t.checkpoint_interval);
    if (auto w = s->sub("weights")) {
      w->get("pde", t.weights.pde);
      w->get("inlet", t.weights.inlet);
      w->get("wall", t.weights.wall);
      w->get("baffle", t.weights.baffle);
      w->get("outlet", t.weights.outlet);
      w->get("penalty", t.weights.penalty);
      w->finish();
    }
    s->finish();
  }
  if (auto s = root.sub("metrics")) {
    s->get("outlet_points", c.metrics.outlet_points);
    s->get("inlet_points", c.metrics.inlet_points);
    s->get("baseline_re_points", c.baseline.re_points);
    s->get("baseline_sc_points", c.baseline.sc_points);
    s->finish();
  }
  if (auto s = root.sub("ppo")) {
    auto& p = c.ppo;
    s->get("gamma", p.gamma);
    s->get("clip", p.clip);
    s->get("epochs", p.epochs);
    s->get("actor_step", p.actor_step);
    s->get("critic_step", p.critic_step);
    s->get("batch", p.batch);
    s->get("episodes", p.episodes);
    s->get("value_coef", p.value_coef);
    s->get("entropy_coef", p.entropy_coef);
    s->get("sampled_entropy", p.sampled_entropy);
    s->get("hidden", p.hidden);
    s->get("initial_std", p.initial_std);
    s->finish();
  }
  if (auto s = root.sub("ga")) {
    auto& g = c.ga;
    s->get("population", g.population);
    s->get("generations", g.generations);
    s->get("tournament", g.tournament);
    s->get("crossover_rate", g.crossover_rate);
    s->get("mutation_rate", g.mutation_rate);
    s->get("mutation_scale", g.mutation_scale);
    s->get("blend_alpha", g.blend_alpha);
    s->get("elitism", g.elitism);
    s->finish();
  }
  root.get("compare_sc", c.compare_sc);
  if (auto s = root.sub("paths")) {
    auto& p = c.paths;
    s->get("field_checkpoint", p.field_checkpoint);
    s->get("train_log", p.train_log);
    s->get("baseline", p.baseline);
    s->get("policy", p.policy);
    s->get("reward_history", p.reward_history);
    s->get("scaling", p.scaling);
    s->finish();
  }
  root.finish();

  try {
    c.finalize();
    c.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

inline RunConfig default_config() { return parse_config({{"schema_version", kConfigSchemaVersion}}); }

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

// Fully populated document for the current defaults; `micromix config` prints it.
inline nlohmann::ordered_json config_to_json(const RunConfig& c) {
  const auto& d = c.train.collocation.dims;
  const auto& k = c.train.collocation.counts;
  const auto& t = c.train;
  nlohmann::ordered_json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["seed"] = c.seed;
  j["channel"] = dims_to_json(d);
  j["collocation"] = {{"interior", k.interior},
                      {"per_boundary", k.per_boundary},
                      {"per_slice", k.per_slice},
                      {"slice_designs", k.slice_designs},
                      {"fixed_design", nullptr}};
  if (const auto& f = c.train.collocation.fixed_design) j["collocation"]["fixed_design"] = std::vector<double>(f->begin(), f->end());
  j["train"] = {{"steps", t.steps},
                {"batch_interior", t.batch.interior},
                {"batch_boundary_per_kind", t.batch.boundary_per_kind},
                {"batch_slices", t.batch.slices},
                {"step_size", t.adam.step_size},
                {"beta1", t.adam.beta1},
                {"beta2", t.adam.beta2},
                {"epsilon", t.adam.epsilon},
                {"hidden", t.hidden},
                {"activation", diffnet::to_string(t.activation)},
                {"log_interval", t.log_interval},
                {"checkpoint_interval", t.checkpoint_interval},
                {"weights",
                 {{"pde", t.weights.pde},
                  {"inlet", t.weights.inlet},
                  {"wall", t.weights.wall},
                  {"baffle", t.weights.baffle},
                  {"outlet", t.weights.outlet},
                  {"penalty", t.weights.penalty}}}};
  j["metrics"] = {{"outlet_points", c.metrics.outlet_points},
                  {"inlet_points", c.metrics.inlet_points},
                  {"baseline_re_points", c.baseline.re_points},
                  {"baseline_sc_points", c.baseline.sc_points}};
  const auto& p = c.ppo;
  j["ppo"] = {{"gamma", p.gamma},           {"clip", p.clip},
              {"epochs", p.epochs},         {"actor_step", p.actor_step},
              {"critic_step", p.critic_step}, {"batch", p.batch},
              {"episodes", p.episodes},     {"value_coef", p.value_coef},
              {"entropy_coef", p.entropy_coef}, {"sampled_entropy", p.sampled_entropy},
              {"hidden", p.hidden},         {"initial_std", p.initial_std}};
  const auto& g = c.ga;
  j["ga"] = {{"population", g.population},       {"generations", g.generations},
             {"tournament", g.tournament},       {"crossover_rate", g.crossover_rate},
             {"mutation_rate", g.mutation_rate}, {"mutation_scale", g.mutation_scale},
             {"blend_alpha", g.blend_alpha},     {"elitism", g.elitism}};
  j["compare_sc"] = c.compare_sc;
  j["paths"] = {{"field_checkpoint", c.paths.field_checkpoint}, {"train_log", c.paths.train_log},
                {"baseline", c.paths.baseline},                 {"policy", c.paths.policy},
                {"reward_history", c.paths.reward_history},     {"scaling", c.paths.scaling}};
  return j;
}

}  // namespace micromix
