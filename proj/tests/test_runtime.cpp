#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <random>
#include <sstream>

#include <json.hpp>

#include "mulearn/parser.hpp"
#include "mulearn/runtime.hpp"
#include "mulearn/vpmu.hpp"

using namespace mulearn;

namespace {

std::string root() {
  const char* r = std::getenv("MULEARN_ROOT");
  REQUIRE(r != nullptr);
  return r;
}

Model corpus(const std::string& name) {
  return load_model(root() + "/models/" + name + ".hpmodel");
}

Action make_action(const std::map<std::string, double>& values) {
  Action u;
  for (const auto& [v, value] : values) {
    u.effect[v] = num(value);
    u.resolved[v] = value;
  }
  return u;
}

// One-dimensional test family: x advances by k*u per cycle of length T, with
// the k-pessimistic guard keeping x at or below 10.
Model gain_model(const std::string& name, double k) {
  std::ostringstream txt;
  txt << "model: " << name << ";\n"
      << "clock: t;\n"
      << "init: T = 0.5 & t = 0 & u = 0 & x >= 0 & x <= 1;\n"
      << "ctrl: {?(x + " << k << "*T <= 10); u := *; t := 0} ++ {u := 0; t := 0};\n"
      << "plant: {x' = " << k << " * u, t' = 1 & t <= T};\n"
      << "safe: x <= 10;\n";
  return parse_model(txt.str());
}

MonitoredModel monitored(Model m, const std::vector<double>& u_grid,
                         double tol_abs = 1e-6) {
  MonitoredModel mm;
  mm.model = std::move(m);
  mm.discretization.grids["u"] = u_grid;
  mm.flow_cfg = {FlowConfig::Method::closed_form, 1e-3};
  mm.tol.abs = tol_abs;
  return mm;
}

// The true world: exact integration of x' = g*u over one cycle.
Environment gain_env(double g, double x0 = 0.0, double done_at = 1e18) {
  Environment env;
  env.initial_state = [x0] {
    return State{{"x", x0}, {"u", 0.0}, {"t", 0.0}, {"T", 0.5}};
  };
  env.step = [g](const State& s, const Action& a) {
    State post = apply_action(a, s);
    double u = post.at("u");
    post["x"] += g * u * 0.5;
    post["t"] = 0.5;
    return std::pair<State, double>(post, u);
  };
  env.done = [done_at](const State& s) { return s.at("x") >= done_at; };
  return env;
}

LearnerHooks uniform_hooks(std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  LearnerHooks hooks;
  hooks.choose = [rng](const std::vector<Action>& avail, const State&) {
    std::uniform_int_distribution<std::size_t> pick(0, avail.size() - 1);
    return avail[pick(*rng)];
  };
  return hooks;
}

LearnerHooks coasting_hooks() {
  LearnerHooks hooks;
  hooks.choose = [](const std::vector<Action>& avail, const State&) {
    for (const Action& a : avail) {
      if (a.resolved.count("u") && a.resolved.at("u") == 0.0) return a;
    }
    return avail.front();
  };
  return hooks;
}

int steps_to_singleton(const LearningTrace& tr) {
  for (std::size_t i = 0; i < tr.feasible_sets.size(); ++i) {
    if (tr.feasible_sets[i].size() <= 1) return static_cast<int>(i);
  }
  return static_cast<int>(tr.feasible_sets.size());
}

bool subset(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  for (const auto& x : a) {
    if (std::find(b.begin(), b.end(), x) == b.end()) return false;
  }
  return true;
}

std::string thrown_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

}  // namespace

// ---------------------------------------------------------------------------
// update_feasible / available_actions
// ---------------------------------------------------------------------------

TEST_CASE("update_feasible keeps exactly the models explaining the step") {
  Model p1 = instantiate_parameter(corpus("acc_wide"), {{"p", 1.0}});
  p1.name = "acc_p1";
  Model p05 = instantiate_parameter(corpus("acc_wide"), {{"p", 0.5}});
  p05.name = "acc_p05";
  MonitoredModel m1{p1, {}, {FlowConfig::Method::closed_form, 1e-3}, {}};
  MonitoredModel m2{p05, {}, {FlowConfig::Method::closed_form, 1e-3}, {}};
  ModelSet both{&m1, &m2};

  State pre{{"pos_rel", 5.0}, {"vel_rel", 0.0}, {"acc_rel", 0.0}, {"t", 0.0}, {"T", 0.1}};
  Action brake = make_action({{"acc_rel", -1.0}, {"t", 0.0}});
  // The world has gain 1: vel drops by 0.1 over the cycle.
  State post{{"pos_rel", 4.995}, {"vel_rel", -0.1}, {"acc_rel", -1.0}, {"t", 0.1}, {"T", 0.1}};
  ModelSet kept = update_feasible(both, pre, brake, post);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0]->model.name == "acc_p1");

  // A zero-acceleration cycle tells the two gains apart not at all.
  Action coast = make_action({{"acc_rel", 0.0}, {"t", 0.0}});
  State post0{{"pos_rel", 5.0}, {"vel_rel", 0.0}, {"acc_rel", 0.0}, {"t", 0.1}, {"T", 0.1}};
  CHECK(update_feasible(both, pre, coast, post0).size() == 2);

  // A singleton accurate set survives its own transitions.
  ModelSet solo{&m1};
  CHECK(update_feasible(solo, pre, brake, post).size() == 1);

  // Explicit duration agrees with the clock-recovered one.
  CHECK(update_feasible(both, pre, brake, post, 0.1).size() == 1);
}

TEST_CASE("available_actions intersects the controller monitors") {
  MonitoredModel m1 = monitored(gain_model("gain_1", 1.0), {0.0, 1.0});
  MonitoredModel m2 = monitored(gain_model("gain_2", 2.0), {0.0, 1.0});
  std::vector<Action> all{make_action({{"u", 1.0}, {"t", 0.0}}),
                          make_action({{"u", 0.0}, {"t", 0.0}})};

  State deep{{"x", 3.0}, {"u", 0.0}, {"t", 0.5}, {"T", 0.5}};
  CHECK(available_actions({&m1, &m2}, deep, all).size() == 2);

  // At x = 9.2 the cautious model vetoes driving, the loose one does not.
  State edge{{"x", 9.2}, {"u", 0.0}, {"t", 0.5}, {"T", 0.5}};
  CHECK(available_actions({&m1}, edge, all).size() == 2);
  std::vector<Action> guarded = available_actions({&m1, &m2}, edge, all);
  REQUIRE(guarded.size() == 1);
  CHECK(guarded[0].resolved.at("u") == 0.0);

  // No models, no constraints.
  CHECK(available_actions({}, edge, all).size() == 2);
}

// ---------------------------------------------------------------------------
// mu_learn
// ---------------------------------------------------------------------------

TEST_CASE("mu_learn with the accurate model in the set never violates safety") {
  MonitoredModel m1 = monitored(gain_model("gain_1", 1.0), {0.0, 1.0});
  MonitoredModel m2 = monitored(gain_model("gain_2", 2.0), {0.0, 1.0});
  std::map<std::string, const MonitoredModel*> by_name{{"gain_1", &m1}, {"gain_2", &m2}};
  std::vector<Action> all{make_action({{"u", 1.0}, {"t", 0.0}}),
                          make_action({{"u", 0.0}, {"t", 0.0}})};
  Environment env = gain_env(1.0);
  LearnerHooks hooks = uniform_hooks(99);
  LearningTrace tr = mu_learn({&m1, &m2}, all, env, hooks, 100, -1, 7);

  CHECK(tr.halted_reason == HaltReason::step_limit);
  CHECK(tr.seed == 7);
  REQUIRE(tr.states.size() == 101);
  CHECK(tr.actions.size() == 100);
  CHECK(tr.rewards.size() == 100);
  CHECK(tr.feasible_sets.size() == 101);
  CHECK(tr.warnings.empty());

  // Full set at entry; the accurate model retained throughout; elimination
  // monotone; everything inside the true safe region.
  CHECK(tr.feasible_sets[0] == std::vector<std::string>{"gain_1", "gain_2"});
  for (std::size_t i = 0; i < tr.states.size(); ++i) {
    CHECK_FALSE(tr.violations[i]);
    CHECK(tr.states[i].at("x") <= 10.0);
    CHECK(std::find(tr.feasible_sets[i].begin(), tr.feasible_sets[i].end(), "gain_1") !=
          tr.feasible_sets[i].end());
    if (i > 0) CHECK(subset(tr.feasible_sets[i], tr.feasible_sets[i - 1]));
  }
  // Safe-action discipline, replayed from the trace alone.
  for (std::size_t i = 0; i < tr.actions.size(); ++i) {
    for (const auto& name : tr.feasible_sets[i]) {
      CHECK(controller_monitor(*by_name.at(name), tr.states[i], tr.actions[i]));
    }
  }
  // The wrong gain is gone after the first driving step.
  bool drove = false;
  for (std::size_t i = 0; i < tr.actions.size() && !drove; ++i) {
    if (tr.actions[i].resolved.at("u") == 1.0) {
      drove = true;
      CHECK(tr.feasible_sets[i + 1] == std::vector<std::string>{"gain_1"});
    }
  }
  CHECK(drove);

  // Determinism: the same run again produces the identical trace.
  LearnerHooks again = uniform_hooks(99);
  CHECK(trace_to_jsonl(mu_learn({&m1, &m2}, all, env, again, 100, -1, 7)) ==
        trace_to_jsonl(tr));
}

TEST_CASE("mu_learn halts when no action is safe") {
  Model blocked = parse_model(
      "model: blocked;\n"
      "clock: t;\n"
      "init: T = 0.5 & t = 0 & u = 0 & x >= 0 & x <= 1;\n"
      "ctrl: {?(x <= -100); u := 0; t := 0};\n"
      "plant: {x' = u, t' = 1 & t <= T};\n"
      "safe: x <= 10;\n");
  MonitoredModel mb = monitored(blocked, {0.0, 1.0});
  std::vector<Action> all{make_action({{"u", 0.0}, {"t", 0.0}})};
  LearnerHooks hooks = coasting_hooks();
  LearningTrace tr = mu_learn({&mb}, all, gain_env(1.0), hooks, 50);
  CHECK(tr.halted_reason == HaltReason::no_safe_action);
  CHECK(tr.states.size() == 1);
  CHECK(tr.actions.empty());
}

TEST_CASE("mu_learn edge cases") {
  MonitoredModel m1 = monitored(gain_model("gain_1", 1.0), {0.0, 1.0});
  std::vector<Action> all{make_action({{"u", 1.0}, {"t", 0.0}}),
                          make_action({{"u", 0.0}, {"t", 0.0}})};
  LearnerHooks hooks = coasting_hooks();

  // Step limit zero: one state, no actions.
  LearningTrace zero = mu_learn({&m1}, all, gain_env(1.0), hooks, 0);
  CHECK(zero.states.size() == 1);
  CHECK(zero.actions.empty());
  CHECK(zero.halted_reason == HaltReason::step_limit);

  // The done predicate ends the episode with reason done.
  LearnerHooks driver;
  driver.choose = [](const std::vector<Action>& avail, const State&) {
    for (const Action& a : avail) {
      if (a.resolved.at("u") == 1.0) return a;
    }
    return avail.front();
  };
  LearningTrace done = mu_learn({&m1}, all, gain_env(1.0, 0.0, 2.0), driver, 50);
  CHECK(done.halted_reason == HaltReason::done);
  CHECK(done.states.back().at("x") >= 2.0);

  // An initial state outside a model's init is flagged, not fatal.
  LearningTrace off = mu_learn({&m1}, all, gain_env(1.0, 5.0), hooks, 3);
  REQUIRE(off.warnings.size() == 1);
  CHECK(contains(off.warnings[0], "does not satisfy init"));

  // A choose hook that invents actions is an error.
  LearnerHooks rogue;
  rogue.choose = [](const std::vector<Action>&, const State&) {
    return make_action({{"u", 7.0}});
  };
  CHECK_THROWS_AS(mu_learn({&m1}, all, gain_env(1.0), rogue, 5), RunError);

  // No models at all is a configuration error.
  CHECK_THROWS_AS(mu_learn({}, all, gain_env(1.0), hooks, 5), RunError);
}

TEST_CASE("mu_learn flags a run whose every model is falsified") {
  MonitoredModel m2 = monitored(gain_model("gain_2", 2.0), {0.0, 1.0});
  std::vector<Action> all{make_action({{"u", 1.0}, {"t", 0.0}}),
                          make_action({{"u", 0.0}, {"t", 0.0}})};
  LearnerHooks driver;
  driver.choose = [](const std::vector<Action>& avail, const State&) {
    for (const Action& a : avail) {
      if (a.resolved.at("u") == 1.0) return a;
    }
    return avail.front();
  };
  LearningTrace tr = mu_learn({&m2}, all, gain_env(1.0), driver, 5);
  CHECK(tr.states.size() == 6);  // the run continues, unconstrained
  REQUIRE(!tr.warnings.empty());
  CHECK(contains(tr.warnings[0], "empty from step 1"));
  CHECK(tr.feasible_sets[1].empty());
}

// ---------------------------------------------------------------------------
// active_mu_learn
// ---------------------------------------------------------------------------

TEST_CASE("experiments fire at the configured rate") {
  MonitoredModel m1 = monitored(gain_model("gain_1", 1.0), {0.0, 1.0});
  MonitoredModel m2 = monitored(gain_model("gain_2", 2.0), {0.0, 1.0});
  std::vector<Action> all{make_action({{"u", 1.0}, {"t", 0.0}}),
                          make_action({{"u", 0.0}, {"t", 0.0}})};
  Environment env = gain_env(1.0);
  ActiveConfig cfg{0.3, 0.5};
  LearnerHooks coast = coasting_hooks();  // the fallback never experiments

  int eliminated_at_one = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    LearningTrace tr = active_mu_learn({&m1, &m2}, all, env, coast, cfg, 1, seed);
    REQUIRE(tr.feasible_sets.size() == 2);
    if (tr.feasible_sets[1].size() == 1) ++eliminated_at_one;
    // Whenever the distinguishing action ran, the wrong model died with it.
    if (tr.actions[0].resolved.at("u") == 1.0) {
      CHECK(tr.feasible_sets[1] == std::vector<std::string>{"gain_1"});
    } else {
      CHECK(tr.feasible_sets[1].size() == 2);
    }
  }
  double rate = eliminated_at_one / 1000.0;
  CHECK(rate > 0.25);
  CHECK(rate < 0.35);
}

TEST_CASE("a singleton model set makes active and basic runs identical") {
  MonitoredModel m1 = monitored(gain_model("gain_1", 1.0), {0.0, 1.0});
  std::vector<Action> all{make_action({{"u", 1.0}, {"t", 0.0}}),
                          make_action({{"u", 0.0}, {"t", 0.0}})};
  Environment env = gain_env(1.0);
  LearnerHooks a = uniform_hooks(5), b = uniform_hooks(5);
  LearningTrace basic = mu_learn({&m1}, all, env, a, 40, 0.5, 17);
  LearningTrace active = active_mu_learn({&m1}, all, env, b, {0.9, 0.5}, 40, 17);
  CHECK(trace_to_jsonl(basic) == trace_to_jsonl(active));
}

TEST_CASE("active experimentation converges faster than luck") {
  // Four near-idle actions drown the one informative action, so a passive
  // uniform learner identifies the gain slowly; insisting on experiments
  // with er = 0.9 ends the search almost immediately.
  std::vector<double> grid{0.0, 0.01, 0.02, 0.03, 1.0};
  MonitoredModel m1 = monitored(gain_model("gain_1", 1.0), grid, 0.1);
  MonitoredModel m2 = monitored(gain_model("gain_2", 2.0), grid, 0.1);
  std::vector<Action> all;
  for (double u : grid) all.push_back(make_action({{"u", u}, {"t", 0.0}}));
  Environment env = gain_env(1.0);

  std::vector<int> passive, active;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    LearnerHooks pa = uniform_hooks(1000 + seed), ac = uniform_hooks(1000 + seed);
    passive.push_back(steps_to_singleton(mu_learn({&m1, &m2}, all, env, pa, 30, 0.5, seed)));
    active.push_back(
        steps_to_singleton(active_mu_learn({&m1, &m2}, all, env, ac, {0.9, 0.5}, 30, seed)));
  }
  std::sort(passive.begin(), passive.end());
  std::sort(active.begin(), active.end());
  CHECK(active[50] < passive[50]);
  CHECK(active[50] <= 2);
}

TEST_CASE("elimination converges under er-active experimentation") {
  MonitoredModel m1 = monitored(gain_model("gain_1", 1.0), {0.0, 1.0});
  MonitoredModel m2 = monitored(gain_model("gain_2", 2.0), {0.0, 1.0});
  std::vector<Action> all{make_action({{"u", 1.0}, {"t", 0.0}}),
                          make_action({{"u", 0.0}, {"t", 0.0}})};
  Environment env = gain_env(1.0);
  ActiveConfig cfg{0.5, 0.5};
  LearnerHooks coast = coasting_hooks();

  int survived5 = 0, survived10 = 0, survived20 = 0, singleton = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    LearningTrace tr = active_mu_learn({&m1, &m2}, all, env, coast, cfg, 50, seed);
    int hit = steps_to_singleton(tr);
    if (hit > 5) ++survived5;
    if (hit > 10) ++survived10;
    if (hit > 20) ++survived20;
    if (hit <= 50) ++singleton;
  }
  CHECK(singleton == 200);
  CHECK(survived5 >= survived10);
  CHECK(survived10 >= survived20);
  CHECK(survived20 == 0);
  CHECK(survived5 < 30);  // expectation 200/32
}

TEST_CASE("indistinguishable models never converge, and that is safe") {
  Model a = instantiate_parameter(corpus("nonconv"), {{"p", 1.0}});
  a.name = "nonconv_p1";
  Model b = instantiate_parameter(corpus("nonconv"), {{"p", 2.0}});
  b.name = "nonconv_p2";
  MonitoredModel ma{a, {}, {FlowConfig::Method::closed_form, 1e-3}, {}};
  MonitoredModel mb{b, {}, {FlowConfig::Method::closed_form, 1e-3}, {}};
  std::vector<Action> all{make_action({{"acc", 0.0}})};

  Environment env;
  env.initial_state = [] { return State{{"x", 0.5}, {"acc", 0.0}}; };
  env.step = [](const State& s, const Action& u) {
    return std::pair<State, double>(apply_action(u, s), 0.0);
  };
  env.done = [](const State&) { return false; };

  State probe = env.initial_state();
  CHECK_FALSE(is_distinguishing(all[0], {&ma, &mb}, probe, 0.1));

  LearnerHooks hooks = coasting_hooks();
  hooks.choose = [](const std::vector<Action>& avail, const State&) { return avail.front(); };
  LearningTrace tr = active_mu_learn({&ma, &mb}, all, env, hooks, {0.9, 0.1}, 30, 4);
  CHECK(tr.feasible_sets.back().size() == 2);
  for (bool v : tr.violations) CHECK_FALSE(v);
}

TEST_CASE("active configuration is validated") {
  MonitoredModel m1 = monitored(gain_model("gain_1", 1.0), {0.0, 1.0});
  std::vector<Action> all{make_action({{"u", 0.0}, {"t", 0.0}})};
  LearnerHooks hooks = coasting_hooks();
  CHECK_THROWS_AS(active_mu_learn({&m1}, all, gain_env(1.0), hooks, {0.0, 0.5}, 5), RunError);
  CHECK_THROWS_AS(active_mu_learn({&m1}, all, gain_env(1.0), hooks, {1.0, 0.5}, 5), RunError);
}

// ---------------------------------------------------------------------------
// hierarchical_mu_learn
// ---------------------------------------------------------------------------

namespace {

Model stage_model(const std::string& name, double k, const std::string& init) {
  std::ostringstream txt;
  txt << "model: " << name << ";\n"
      << "clock: t;\n"
      << "init: " << init << ";\n"
      << "ctrl: {?(x + " << k << "*T <= 10); u := *; t := 0} ++ {u := 0; t := 0};\n"
      << "plant: {x' = " << k << " * u, t' = 1 & t <= T};\n"
      << "safe: x <= 10;\n";
  return parse_model(txt.str());
}

}  // namespace

TEST_CASE("hierarchical runs reset the feasible set at subtask boundaries") {
  MonitoredModel a1 = monitored(stage_model("ga1", 1.0, "T = 0.5 & t = 0 & u = 0 & x >= 0 & x <= 1"), {0.0, 1.0});
  MonitoredModel a2 = monitored(stage_model("ga2", 2.0, "T = 0.5 & t = 0 & u = 0 & x >= 0 & x <= 1"), {0.0, 1.0});
  MonitoredModel b1 = monitored(stage_model("gb1", 1.0, "x >= 0 & x <= 10"), {0.0, 1.0});
  MonitoredModel b2 = monitored(stage_model("gb2", 2.0, "x >= 0 & x <= 10"), {0.0, 1.0});
  std::map<std::string, ModelSet> sets{{"a", {&a1, &a2}}, {"b", {&b1, &b2}}};
  std::map<std::string, FormulaPtr> term{{"a", parse_formula("x >= 2 & x <= 3")},
                                         {"b", parse_formula("x >= 4")}};
  std::vector<Action> all{make_action({{"u", 1.0}, {"t", 0.0}}),
                          make_action({{"u", 0.0}, {"t", 0.0}})};
  LearnerHooks hooks = uniform_hooks(12);
  LearningTrace tr = hierarchical_mu_learn(sets, term, {"a", "b"}, all, gain_env(1.0),
                                           hooks, {0.5, 0.5}, 60, 3);

  CHECK(tr.warnings.empty());  // x in [2,3] is a legal start for the b models
  CHECK(tr.halted_reason == HaltReason::done);
  REQUIRE(tr.subtasks.size() == tr.states.size());
  CHECK(tr.subtasks.front() == "a");
  CHECK(tr.subtasks.back() == "b");

  std::size_t boundary = 0;
  for (std::size_t i = 1; i < tr.subtasks.size(); ++i) {
    if (tr.subtasks[i] == "b" && tr.subtasks[i - 1] == "a") boundary = i;
  }
  REQUIRE(boundary > 0);
  CHECK(tr.states[boundary].at("x") >= 2.0);
  // Reset to the maximal set for the new subtask, whatever was left of a's.
  CHECK(tr.feasible_sets[boundary] == std::vector<std::string>{"gb1", "gb2"});
  for (std::size_t i = boundary + 1; i < tr.feasible_sets.size(); ++i) {
    CHECK(subset(tr.feasible_sets[i], tr.feasible_sets[i - 1]));
  }
  for (bool v : tr.violations) CHECK_FALSE(v);
}

TEST_CASE("handoff spot check warns when termination states miss the next init") {
  MonitoredModel a1 = monitored(stage_model("ga1", 1.0, "T = 0.5 & t = 0 & u = 0 & x >= 0 & x <= 1"), {0.0, 1.0});
  MonitoredModel b1 = monitored(stage_model("gb1", 1.0, "x >= 0 & x <= 1"), {0.0, 1.0});
  std::map<std::string, ModelSet> sets{{"a", {&a1}}, {"b", {&b1}}};
  std::map<std::string, FormulaPtr> term{{"a", parse_formula("x >= 2 & x <= 3")}};
  std::vector<Action> all{make_action({{"u", 0.0}, {"t", 0.0}})};
  LearnerHooks hooks = coasting_hooks();
  LearningTrace tr = hierarchical_mu_learn(sets, term, {"a", "b"}, all, gain_env(1.0),
                                           hooks, {0.5, 0.5}, 2, 3);
  REQUIRE(!tr.warnings.empty());
  CHECK(contains(tr.warnings[0], "termination condition of 'a'"));
  CHECK(contains(tr.warnings[0], "fails init of model 'gb1'"));
}

TEST_CASE("a missing successor subtask is an error when its turn comes") {
  MonitoredModel a1 = monitored(stage_model("ga1", 1.0, "T = 0.5 & t = 0 & u = 0 & x >= 0 & x <= 1"), {0.0, 1.0});
  std::map<std::string, ModelSet> sets{{"a", {&a1}}};
  std::map<std::string, FormulaPtr> term{{"a", parse_formula("x >= 1")}};
  std::vector<Action> all{make_action({{"u", 1.0}, {"t", 0.0}}),
                          make_action({{"u", 0.0}, {"t", 0.0}})};
  LearnerHooks driver;
  driver.choose = [](const std::vector<Action>& avail, const State&) {
    for (const Action& a : avail) {
      if (a.resolved.at("u") == 1.0) return a;
    }
    return avail.front();
  };
  std::string msg = thrown_message([&] {
    hierarchical_mu_learn(sets, term, {"a", "b"}, all, gain_env(1.0), driver,
                          {0.5, 0.5}, 10, 3);
  });
  CHECK(contains(msg, "no next subtask"));
  CHECK_THROWS_AS(hierarchical_mu_learn(sets, term, {}, all, gain_env(1.0), driver,
                                        {0.5, 0.5}, 10, 3),
                  RunError);
}

TEST_CASE("a single subtask behaves exactly like an active run") {
  MonitoredModel a1 = monitored(stage_model("solo1", 1.0, "T = 0.5 & t = 0 & u = 0 & x >= 0 & x <= 1"), {0.0, 1.0});
  MonitoredModel a2 = monitored(stage_model("solo2", 2.0, "T = 0.5 & t = 0 & u = 0 & x >= 0 & x <= 1"), {0.0, 1.0});
  std::map<std::string, ModelSet> sets{{"solo", {&a1, &a2}}};
  std::map<std::string, FormulaPtr> term{{"solo", parse_formula("x >= 100")}};
  std::vector<Action> all{make_action({{"u", 1.0}, {"t", 0.0}}),
                          make_action({{"u", 0.0}, {"t", 0.0}})};
  Environment env = gain_env(1.0);
  LearnerHooks h1 = uniform_hooks(3), h2 = uniform_hooks(3);
  LearningTrace hier =
      hierarchical_mu_learn(sets, term, {"solo"}, all, env, h1, {0.5, 0.5}, 25, 11);
  LearningTrace flat = active_mu_learn({&a1, &a2}, all, env, h2, {0.5, 0.5}, 25, 11);
  CHECK(hier.states == flat.states);
  CHECK(hier.feasible_sets == flat.feasible_sets);
  CHECK(hier.rewards == flat.rewards);
  CHECK(hier.halted_reason == flat.halted_reason);
  for (const auto& s : hier.subtasks) CHECK(s == "solo");
}

// ---------------------------------------------------------------------------
// trace serialization
// ---------------------------------------------------------------------------

TEST_CASE("traces serialize one JSON object per visited state") {
  MonitoredModel m1 = monitored(gain_model("gain_1", 1.0), {0.0, 1.0});
  MonitoredModel m2 = monitored(gain_model("gain_2", 2.0), {0.0, 1.0});
  std::vector<Action> all{make_action({{"u", 1.0}, {"t", 0.0}}),
                          make_action({{"u", 0.0}, {"t", 0.0}})};
  LearnerHooks hooks = uniform_hooks(8);
  LearningTrace tr = mu_learn({&m1, &m2}, all, gain_env(1.0), hooks, 6, -1, 21);

  std::string jsonl = trace_to_jsonl(tr);
  std::vector<std::string> lines;
  std::istringstream in(jsonl);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  REQUIRE(lines.size() == tr.states.size());

  nlohmann::json first = nlohmann::json::parse(lines.front());
  CHECK(first["feasible"].size() == 2);
  CHECK(first["violation"] == false);
  CHECK(first["state"]["x"] == 0.0);
  CHECK(first.contains("action"));
  CHECK(first.contains("reward"));
  nlohmann::json last = nlohmann::json::parse(lines.back());
  CHECK_FALSE(last.contains("action"));
  CHECK_FALSE(last.contains("reward"));

  std::string path = "trace_runtime_test.jsonl";
  save_trace_jsonl(tr, path);
  std::ifstream back(path);
  std::stringstream buf;
  buf << back.rdbuf();
  CHECK(buf.str() == jsonl);
  std::remove(path.c_str());
}
