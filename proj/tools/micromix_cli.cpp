// micromix: geometry export, field-model training and evaluation, policy
// optimization, policy queries and the GA scaling comparison.
//
// Exit codes: 0 success, 1 numerical failure, 2 invalid input or config.
// Errors are reported on stderr as one JSON object.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "micromix/config.hpp"
#include "micromix/ga.hpp"
#include "micromix/geometry.hpp"
#include "micromix/metrics.hpp"
#include "micromix/pinn_train.hpp"
#include "micromix/rl.hpp"
#include "micromix/sampling.hpp"

namespace fs = std::filesystem;
using namespace micromix;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw UsageError(std::string(what) + ": '" + cell + "' is not a number");
    }
  }
  return out;
}

ControlPolygon parse_cp(const std::string& text) {
  const auto v = parse_list(text, "--cp");
  if (v.size() != 3) throw UsageError("--cp needs exactly three comma-separated values cp1,cp2,cp3");
  ControlPolygon cp{v[0], v[1], v[2]};
  cp.validate();
  return cp;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw FormatError("cannot open '" + p.string() + "' for writing");
  return os;
}

RunConfig load_or_default(const std::string& path) { return path.empty() ? default_config() : load_config(path); }

// Environment chosen on the command line: a trained field model or the synthetic quadratic.
std::unique_ptr<Environment> make_env(const std::string& kind, const std::string& checkpoint,
                                      const std::string& baseline_path, const RunConfig& cfg) {
  if (kind == "quad") return std::make_unique<QuadEnv>();
  if (kind != "pinn") throw UsageError("--env must be 'pinn' or 'quad'");
  if (checkpoint.empty()) throw UsageError("--checkpoint is required with --env pinn");
  FieldModel model = load_field_model(checkpoint);
  BaselineTable table;
  if (!baseline_path.empty()) {
    std::ifstream in(baseline_path);
    if (!in) throw FormatError("cannot open baseline '" + baseline_path + "'");
    table = BaselineTable::read_csv(in);
  } else {
    table = baseline_table(model, linspace(5.0, 40.0, cfg.baseline.re_points), linspace(1.0, 100.0, cfg.baseline.sc_points),
                           cfg.metrics);
  }
  return std::make_unique<PinnEnv>(std::move(model), std::move(table), cfg.metrics);
}

void print_json(const nlohmann::ordered_json& j) { std::cout << j.dump() << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"micromix: physics-informed micromixer design optimization"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "run configuration (JSON)");

  // geometry
  auto* geo = app.add_subcommand("geometry", "export the channel boundary polyline for one control polygon");
  std::string geo_cp = "0,0,0", geo_out = "geometry.csv";
  std::size_t geo_samples = 65;
  geo->add_option("--cp", geo_cp, "cp1,cp2,cp3 in [-0.5, 0.5]");
  geo->add_option("--out", geo_out, "output CSV");
  geo->add_option("--curve-samples", geo_samples, "points per baffle curve");

  // collocation
  auto* col = app.add_subcommand("collocation", "write the collocation set used for training");
  std::string col_dir = ".";
  col->add_option("--out-dir", col_dir);

  // train
  auto* tr = app.add_subcommand("train", "train the parametric field model");
  std::string tr_dir = ".";
  std::optional<std::size_t> tr_steps;
  tr->add_option("--out-dir", tr_dir, "directory for checkpoint and log");
  tr->add_option("--steps", tr_steps, "override train.steps");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "field table and mixing report for one design");
  std::string ev_ckpt, ev_cp = "0,0,0", ev_fields = "fields.csv", ev_report = "report.json", ev_baseline;
  double ev_re = 22.5, ev_sc = 10.0;
  std::size_t ev_nx = 140, ev_ny = 40;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--cp", ev_cp);
  ev->add_option("--re", ev_re);
  ev->add_option("--sc", ev_sc);
  ev->add_option("--fields", ev_fields);
  ev->add_option("--report", ev_report);
  ev->add_option("--baseline", ev_baseline, "baseline CSV; default evaluates the flat channel directly");
  ev->add_option("--nx", ev_nx);
  ev->add_option("--ny", ev_ny);

  // baseline
  auto* bl = app.add_subcommand("baseline", "tabulate flat-channel MI0 and Cp0 over (Re, Sc)");
  std::string bl_ckpt, bl_out = "baseline.csv";
  bl->add_option("--checkpoint", bl_ckpt)->required();
  bl->add_option("--out", bl_out);

  // optimize-rl
  auto* rl = app.add_subcommand("optimize-rl", "train the PPO design policy");
  std::string rl_env = "pinn", rl_ckpt, rl_baseline, rl_dir = ".";
  rl->add_option("--env", rl_env, "pinn or quad");
  rl->add_option("--checkpoint", rl_ckpt, "field checkpoint (pinn environment)");
  rl->add_option("--baseline", rl_baseline);
  rl->add_option("--out-dir", rl_dir);

  // query
  auto* q = app.add_subcommand("query", "recommended designs for a list of Sc values");
  std::string q_policy, q_sc = "10,50,90", q_env = "pinn", q_ckpt, q_baseline, q_out = "designs.csv";
  q->add_option("--policy", q_policy)->required();
  q->add_option("--sc", q_sc, "comma-separated Sc values");
  q->add_option("--env", q_env, "environment scoring the relative_ME column: pinn or quad");
  q->add_option("--checkpoint", q_ckpt);
  q->add_option("--baseline", q_baseline);
  q->add_option("--out", q_out);

  // compare
  auto* cmp = app.add_subcommand("compare", "GA vs policy timing over growing Sc sample counts");
  std::string cmp_policy, cmp_env = "pinn", cmp_ckpt, cmp_baseline, cmp_dir = ".";
  cmp->add_option("--policy", cmp_policy)->required();
  cmp->add_option("--env", cmp_env);
  cmp->add_option("--checkpoint", cmp_ckpt);
  cmp->add_option("--baseline", cmp_baseline);
  cmp->add_option("--out-dir", cmp_dir);

  // config
  auto* cf = app.add_subcommand("config", "print the fully populated configuration");

  auto fail = [](const char* kind, const std::string& msg, int code) {
    nlohmann::ordered_json j{{"error", kind}, {"message", msg}};
    std::cerr << j.dump() << std::endl;
    return code;
  };

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      return fail("usage_error", e.what(), 2);
    }

    const RunConfig cfg = load_or_default(config_path);
    const ChannelDims& dims = cfg.train.collocation.dims;

    if (*cf) {
      std::cout << config_to_json(cfg).dump(2) << std::endl;
    } else if (*geo) {
      const ChannelLayout layout(parse_cp(geo_cp), dims);
      auto os = open_out(geo_out);
      const auto rows = boundary_polyline(layout, geo_samples);
      write_polyline_csv(os, rows);
      print_json({{"command", "geometry"}, {"rows", rows.size()}, {"out", geo_out}});
    } else if (*col) {
      CollocationOptions opt = cfg.train.collocation;
      opt.seed = mix_seed(cfg.seed, 100);
      const CollocationSet set = generate_collocation(opt);
      const fs::path dir(col_dir);
      auto a = open_out(dir / "interior.csv");
      write_interior_csv(a, set);
      auto b = open_out(dir / "boundary.csv");
      write_boundary_csv(b, set);
      auto c = open_out(dir / "slices.csv");
      write_slices_csv(c, set);
      print_json({{"command", "collocation"}, {"interior", set.interior.rows()}, {"rejections", set.rejections}});
    } else if (*tr) {
      TrainConfig t = cfg.train;
      if (tr_steps) t.steps = *tr_steps;
      const fs::path dir(tr_dir);
      fs::create_directories(dir);
      t.checkpoint_path = (dir / cfg.paths.field_checkpoint).string();
      t.log_path = (dir / cfg.paths.train_log).string();
      const TrainResult r = train(t);
      print_json({{"command", "train"},
                  {"steps", t.steps},
                  {"initial_loss", r.history.initial.total},
                  {"final_loss", r.history.final.total},
                  {"checkpoint", t.checkpoint_path},
                  {"log", t.log_path}});
    } else if (*ev) {
      const FieldModel model = load_field_model(ev_ckpt);
      const ControlPolygon cp = parse_cp(ev_cp);
      const DesignCandidate design(cp.cp1, cp.cp2, cp.cp3, ev_re);
      if (!(ev_sc > 0.0)) throw DomainError("--sc must be positive");
      const FieldTable table = evaluate_fields(model.net, model.dims, design.with_sc(ev_sc),
                                               GridSpec::main_channel(model.dims, ev_nx, ev_ny));
      auto fo = open_out(ev_fields);
      write_field_csv(fo, table);
      std::optional<BaselineTable> bt;
      if (!ev_baseline.empty()) {
        std::ifstream in(ev_baseline);
        if (!in) throw FormatError("cannot open baseline '" + ev_baseline + "'");
        bt = BaselineTable::read_csv(in);
      }
      MixingReport rep;
      try {
        rep = evaluate_design(model, design, ev_sc, bt ? &*bt : nullptr, cfg.metrics);
      } catch (const DomainError& e) {
        // inputs were already validated, so this is the model producing a degenerate flow
        throw NumericalError(e.what());
      }
      auto j = rep.to_json();
      j["masked_cells"] = table.masked_count();
      auto ro = open_out(ev_report);
      ro << j.dump(2) << '\n';
      print_json(j);
    } else if (*bl) {
      const FieldModel model = load_field_model(bl_ckpt);
      const BaselineTable t = baseline_table(model, linspace(5.0, 40.0, cfg.baseline.re_points),
                                             linspace(1.0, 100.0, cfg.baseline.sc_points), cfg.metrics);
      auto os = open_out(bl_out);
      t.write_csv(os);
      print_json({{"command", "baseline"}, {"out", bl_out}});
    } else if (*rl) {
      const auto env = make_env(rl_env, rl_ckpt, rl_baseline, cfg);
      const fs::path dir(rl_dir);
      fs::create_directories(dir);
      std::size_t aborted = 0;
      const AgentResult r = train_agent(*env, cfg.ppo, [&](std::size_t ep, const EpisodeBatch&, bool was_aborted) {
        if (was_aborted) {
          ++aborted;
          std::cerr << nlohmann::ordered_json{{"warning", "episode_aborted"}, {"episode", ep}}.dump() << std::endl;
        }
      });
      const std::string policy = (dir / cfg.paths.policy).string();
      save_policy(r, cfg.seed, policy);
      auto os = open_out(dir / cfg.paths.reward_history);
      write_reward_history_csv(os, r.history);
      print_json({{"command", "optimize-rl"},
                  {"env", env->name()},
                  {"episodes", r.history.size()},
                  {"aborted", aborted},
                  {"final_smoothed_reward", r.history.empty() ? 0.0 : r.history.back().smoothed},
                  {"policy", policy}});
    } else if (*q) {
      const diffnet::Network actor = load_actor(q_policy);
      const auto env = make_env(q_env, q_ckpt, q_baseline, cfg);
      auto os = open_out(q_out);
      os << "Sc,cp1,cp2,cp3,Re,relative_ME\n" << std::setprecision(10);
      for (double sc : parse_list(q_sc, "--sc")) {
        const PolicyQuery pq = query_policy(actor, sc);
        if (pq.extrapolated)
          std::cerr << nlohmann::ordered_json{{"warning", "sc_outside_training_range"}, {"Sc", sc}}.dump() << std::endl;
        const auto& d = pq.design;
        os << sc << ',' << d.cp1() << ',' << d.cp2() << ',' << d.cp3() << ',' << d.Re() << ',' << env->evaluate(d, sc)
           << '\n';
      }
      print_json({{"command", "query"}, {"out", q_out}});
    } else if (*cmp) {
      const diffnet::Network actor = load_actor(cmp_policy);
      const auto env = make_env(cmp_env, cmp_ckpt, cmp_baseline, cfg);
      const auto rows = compare_timing(*env, cfg.compare_sc, cfg.ga, actor);
      const fs::path out = fs::path(cmp_dir) / cfg.paths.scaling;
      auto os = open_out(out);
      write_scaling_csv(os, rows);
      print_json({{"command", "compare"}, {"rows", rows.size()}, {"out", out.string()}});
    }
    return 0;
  } catch (const UsageError& e) {
    return fail("usage_error", e.what(), 2);
  } catch (const ConfigError& e) {
    return fail("config_error", e.what(), 2);
  } catch (const GeometryError& e) {
    return fail("geometry_error", e.what(), 2);
  } catch (const DomainError& e) {
    return fail("domain_error", e.what(), 2);
  } catch (const FormatError& e) {
    return fail("format_error", e.what(), 2);
  } catch (const SamplingError& e) {
    return fail("sampling_error", e.what(), 1);
  } catch (const NumericalError& e) {
    return fail("numerical_error", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal_error", e.what(), 1);
  }
}
