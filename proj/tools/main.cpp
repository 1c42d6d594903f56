#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "mulearn/envs.hpp"
#include "mulearn/parser.hpp"
#include "mulearn/printer.hpp"
#include "mulearn/qlearn.hpp"
#include "mulearn/runconfig.hpp"
#include "mulearn/runtime.hpp"
#include "mulearn/vpmu.hpp"

namespace fs = std::filesystem;
using namespace mulearn;

namespace {

constexpr int kOk = 0;
constexpr int kDomainFailure = 1;
constexpr int kIoFailure = 2;

bool readable(const std::string& path) { return std::ifstream(path).good(); }

std::string fnv1a64(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 1469598103934665603ull;
  for (char c; in.get(c);) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

std::uint64_t episode_seed(std::uint64_t base, int episode) {
  return base ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(episode + 1));
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

int cmd_check(const std::string& path) {
  if (!readable(path)) {
    std::cerr << "error: cannot open '" << path << "'\n";
    return kIoFailure;
  }
  try {
    Model m = load_model(path);
    std::cout << "ok: model '" << m.name << "'";
    std::set<std::string> params = parameters(m);
    if (!params.empty()) {
      std::cout << " (parameters:";
      for (const auto& p : params) std::cout << ' ' << p;
      std::cout << ")";
    }
    std::cout << "\n";
    return kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainFailure;
  }
}

// ---------------------------------------------------------------------------
// update
// ---------------------------------------------------------------------------

int cmd_update(const std::string& model_path, const std::string& op,
               const std::vector<std::string>& params, const std::string& data_path,
               const std::string& out_path, std::string report_path, int samples,
               std::uint64_t seed) {
  if (!readable(model_path)) {
    std::cerr << "error: cannot open '" << model_path << "'\n";
    return kIoFailure;
  }
  ModelUpdate update;
  update.name = op;
  for (const std::string& p : params) {
    std::size_t eq = p.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: --param '" << p << "' must be key=value\n";
      return kIoFailure;
    }
    update.params[p.substr(0, eq)] = p.substr(eq + 1);
  }

  TrajectoryData data;
  bool have_data = false;
  if (!data_path.empty()) {
    if (!readable(data_path)) {
      std::cerr << "error: cannot open '" << data_path << "'\n";
      return kIoFailure;
    }
    try {
      data = load_trajectories(data_path);
      have_data = true;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kDomainFailure;
    }
  }

  Model result;
  try {
    Model base = load_model(model_path);
    result = apply_update(base, update, have_data ? &data : nullptr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainFailure;
  }

  try {
    save_model(result, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  }

  if (report_path.empty()) {
    report_path = fs::path(out_path).replace_extension(".report.json").string();
  }
  try {
    ValidateOptions opts;
    opts.update_name = op;
    ValidationReport report = validate_update(result, samples, seed, opts);
    std::ofstream out(report_path);
    if (!out) throw std::runtime_error("cannot open for writing: " + report_path);
    out << report.to_json() << "\n";
    std::cout << "wrote " << out_path << "\n"
              << "validation: " << (report.pass ? "pass" : "fail") << " ("
              << report.samples << " samples, " << report.safety_violations
              << " safety violations)\n";
    return report.pass ? kOk : kDomainFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainFailure;
  }
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct Stage {
  std::string name;
  std::string base_path;
  std::vector<Model> models;
  std::vector<MonitoredModel> monitored;
  FormulaPtr termination;
};

int count_violations(const RunConfig& cfg, const LearningTrace& tr) {
  int n = 0;
  bool was_crashed = false;
  for (std::size_t i = 0; i < tr.states.size(); ++i) {
    bool env_bad = false;
    if (cfg.env_kind == "acc") {
      env_bad = acc_crashed(cfg.acc, tr.states[i]);
    } else {
      bool crashed = hier_crashed(tr.states[i]);
      env_bad = crashed && !was_crashed;
      was_crashed = crashed;
    }
    if (tr.violations[i] || env_bad) ++n;
  }
  return n;
}

int steps_to_singleton(const LearningTrace& tr) {
  for (std::size_t i = 0; i < tr.feasible_sets.size(); ++i) {
    if (tr.feasible_sets[i].size() <= 1) return static_cast<int>(i);
  }
  return -1;
}

int cmd_run(const std::string& config_path) {
  RunConfig cfg;
  try {
    cfg = load_run_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  }
  const char* out_override = std::getenv("MULEARN_OUT");
  std::string out_dir = out_override ? out_override : cfg.output_dir;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    std::cerr << "error: cannot create output directory '" << out_dir << "'\n";
    return kIoFailure;
  }

  TrajectoryData data;
  bool have_data = false;
  if (!cfg.data_path.empty()) {
    try {
      data = load_trajectories(cfg.data_path);
      have_data = true;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kDomainFailure;
    }
  }

  double env_dt = cfg.env_kind == "acc" ? cfg.acc.dt : cfg.hier.dt;
  double duration = cfg.duration >= 0 ? cfg.duration : env_dt;

  // Assemble each block's model family. rk4 at dt/16 is exact for the
  // polynomial flows these families produce and never rejects a model the
  // way the closed form would.
  std::vector<Stage> stages;
  try {
    std::vector<std::string> order =
        cfg.algorithm == "hierarchical" ? cfg.order : std::vector<std::string>{"main"};
    for (const std::string& name : order) {
      const SubtaskConfig* block = nullptr;
      for (const SubtaskConfig& b : cfg.subtasks) {
        if (b.name == name) block = &b;
      }
      Stage st;
      st.name = name;
      st.base_path = block->base_model;
      st.models = apply_pipeline(load_model(block->base_model), block->pipeline,
                                 have_data ? &data : nullptr);
      if (!block->termination.empty()) st.termination = parse_formula(block->termination);
      for (const Model& m : st.models) {
        Tolerance tol;
        tol.abs = cfg.tolerance;
        st.monitored.push_back(
            MonitoredModel{m, {}, {FlowConfig::Method::rk4, env_dt / 16}, tol});
      }
      stages.push_back(std::move(st));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainFailure;
  }

  std::vector<Action> actions;
  for (const std::string& text : cfg.action_text) {
    actions.push_back(parse_action_text(text));
  }

  QTable table(cfg.qtable);
  std::ofstream csv(out_dir + "/summary.csv");
  if (!csv) {
    std::cerr << "error: cannot open for writing: " << out_dir << "/summary.csv\n";
    return kIoFailure;
  }
  csv << "episode,cumulative_reward,violations,final_feasible,steps_to_singleton\n";

  Environment hier_env;
  if (cfg.env_kind == "hier") hier_env = hier_environment(cfg.hier, cfg.seed);
  std::mt19937_64 p_rng(cfg.seed);

  int total_violations = 0;
  try {
    for (int ep = 0; ep < cfg.episodes; ++ep) {
      std::uint64_t seed = episode_seed(cfg.seed, ep);

      Environment env;
      if (cfg.env_kind == "acc") {
        AccEnvConfig acc = cfg.acc;
        if (!cfg.p_grid.empty()) {
          std::uniform_int_distribution<std::size_t> pick(0, cfg.p_grid.size() - 1);
          acc.p_true = cfg.p_grid[pick(p_rng)];
        }
        env = acc_environment(acc, seed);
      } else {
        env = hier_env;
      }

      LearnerHooks hooks;
      std::shared_ptr<std::mt19937_64> uni;
      if (cfg.learner == "qtable") {
        hooks = table.hooks();
      } else {
        uni = std::make_shared<std::mt19937_64>(seed ^ 0xda3e39cb94b95bdbull);
        hooks.choose = [uni](const std::vector<Action>& avail, const State&) {
          std::uniform_int_distribution<std::size_t> pick(0, avail.size() - 1);
          return avail[pick(*uni)];
        };
      }

      LearningTrace tr;
      if (cfg.algorithm == "mu") {
        ModelSet set;
        for (const MonitoredModel& mm : stages[0].monitored) set.push_back(&mm);
        tr = mu_learn(set, actions, env, hooks, cfg.step_limit, cfg.duration, seed);
      } else if (cfg.algorithm == "active-mu") {
        ModelSet set;
        for (const MonitoredModel& mm : stages[0].monitored) set.push_back(&mm);
        tr = active_mu_learn(set, actions, env, hooks, {cfg.er, duration},
                             cfg.step_limit, seed);
      } else {
        std::map<std::string, ModelSet> sets;
        std::map<std::string, FormulaPtr> termination;
        for (const Stage& st : stages) {
          ModelSet set;
          for (const MonitoredModel& mm : st.monitored) set.push_back(&mm);
          sets[st.name] = set;
          if (st.termination) termination[st.name] = st.termination;
        }
        tr = hierarchical_mu_learn(sets, termination, cfg.order, actions, env, hooks,
                                   {cfg.er, duration}, cfg.step_limit, seed);
      }

      std::ostringstream name;
      name << out_dir << "/trace_ep" << std::setw(4) << std::setfill('0') << ep
           << ".jsonl";
      save_trace_jsonl(tr, name.str());

      int violations = count_violations(cfg, tr);
      total_violations += violations;
      double ret = std::accumulate(tr.rewards.begin(), tr.rewards.end(), 0.0);
      // same shortest-round-trip rendering the JSONL traces use
      csv << ep << ',' << nlohmann::json(ret).dump() << ',' << violations << ','
          << tr.feasible_sets.back().size() << ',' << steps_to_singleton(tr) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainFailure;
  }

  nlohmann::json manifest;
  manifest["config"] = config_path;
  manifest["seed"] = cfg.seed;
  manifest["algorithm"] = cfg.algorithm;
  manifest["episodes"] = cfg.episodes;
  manifest["step_limit"] = cfg.step_limit;
  if (cfg.er_set) manifest["er"] = cfg.er;
  manifest["env"] = cfg.env_kind;
  manifest["learner"] = cfg.learner;
  manifest["actions"] = cfg.action_text;
  manifest["total_violations"] = total_violations;
  manifest["stages"] = nlohmann::json::array();
  for (const Stage& st : stages) {
    nlohmann::json js;
    js["name"] = st.name;
    js["base"] = st.base_path;
    js["fnv1a64"] = fnv1a64(st.base_path);
    js["members"] = nlohmann::json::array();
    for (const Model& m : st.models) js["members"].push_back(m.name);
    manifest["stages"].push_back(js);
  }
  std::ofstream mf(out_dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";

  std::cout << "episodes: " << cfg.episodes << ", violations: " << total_violations
            << ", output: " << out_dir << "\n";
  if (cfg.expect_safe && total_violations > 0) {
    std::cerr << "error: expected a violation-free run, counted " << total_violations
              << "\n";
    return kDomainFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid-model tooling: check models, apply updates, run monitored learning"};
  app.require_subcommand(1);

  std::string model_path, op, data_path, out_path, report_path, config_path;
  std::vector<std::string> params;
  int samples = 1000;
  std::uint64_t seed = 0;

  CLI::App* check = app.add_subcommand("check", "parse and validate a model file");
  check->add_option("model", model_path, "model file")->required();

  CLI::App* update = app.add_subcommand("update", "apply one model update and validate it");
  update->add_option("model", model_path, "model file")->required();
  update->add_option("--op", op, "update name")->required();
  update->add_option("--param", params, "update parameter key=value");
  update->add_option("--data", data_path, "trajectory data file");
  update->add_option("-o,--out", out_path, "output model file")->required();
  update->add_option("--report", report_path, "validation report file");
  update->add_option("--samples", samples, "validation sample count");
  update->add_option("--seed", seed, "validation seed");

  CLI::App* run = app.add_subcommand("run", "execute a configured experiment");
  run->add_option("config", config_path, "run configuration file")->required();

  CLI11_PARSE(app, argc, argv);

  if (check->parsed()) return cmd_check(model_path);
  if (update->parsed()) {
    return cmd_update(model_path, op, params, data_path, out_path, report_path,
                      samples, seed);
  }
  return cmd_run(config_path);
}
