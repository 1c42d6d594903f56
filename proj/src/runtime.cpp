#include "mulearn/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

#include <json.hpp>

#include "mulearn/vpmu.hpp"

namespace mulearn {

std::string to_string(HaltReason r) {
  switch (r) {
    case HaltReason::done: return "done";
    case HaltReason::no_safe_action: return "no_safe_action";
    default: return "step_limit";
  }
}

std::string trace_to_jsonl(const LearningTrace& trace) {
  std::ostringstream out;
  for (std::size_t i = 0; i < trace.states.size(); ++i) {
    nlohmann::json j;
    j["state"] = trace.states[i];
    j["feasible"] = trace.feasible_sets[i];
    j["violation"] = static_cast<bool>(trace.violations[i]);
    if (i < trace.subtasks.size()) j["subtask"] = trace.subtasks[i];
    if (i < trace.actions.size()) {
      j["action"] = trace.actions[i].resolved;
      j["reward"] = trace.rewards[i];
    }
    out << j.dump() << "\n";
  }
  return out.str();
}

void save_trace_jsonl(const LearningTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw RunError("cannot write '" + path + "'");
  out << trace_to_jsonl(trace);
}

ModelSet update_feasible(const ModelSet& models, const State& s_pre, const Action& u,
                         const State& s_curr, double duration) {
  ModelSet kept;
  for (const MonitoredModel* m : models) {
    bool ok = duration >= 0 ? model_monitor(*m, s_pre, u, s_curr, duration)
                            : model_monitor(*m, s_pre, u, s_curr);
    if (ok) kept.push_back(m);
  }
  return kept;
}

std::vector<Action> available_actions(const ModelSet& models, const State& s,
                                      const std::vector<Action>& all) {
  std::vector<Action> avail;
  for (const Action& a : all) {
    bool ok = true;
    for (const MonitoredModel* m : models) ok = ok && controller_monitor(*m, s, a);
    if (ok) avail.push_back(a);
  }
  return avail;
}

namespace {

bool violates(const ModelSet& models, const State& s) {
  for (const MonitoredModel* m : models) {
    if (!eval_formula(m->model.safe, s)) return true;
  }
  return false;
}

Action checked_choose(const LearnerHooks& hooks, const std::vector<Action>& avail,
                      const State& s) {
  if (!hooks.choose) throw RunError("no choose hook given");
  Action act = hooks.choose(avail, s);
  for (const Action& a : avail) {
    if (same_effect(a, act)) return act;
  }
  throw RunError("choose returned an action outside the offered set");
}

// Largest guaranteed disagreement between two feasible models' predictions
// for u; infinite when one model refuses to evolve that long.
double prediction_gap(const Action& u, const ModelSet& feasible, const State& s,
                      double duration) {
  std::vector<std::optional<State>> preds;
  preds.reserve(feasible.size());
  for (const MonitoredModel* m : feasible) {
    try {
      preds.push_back(predict(*m, s, u, duration));
    } catch (const DomainError&) {
      preds.push_back(std::nullopt);
    }
  }
  double gap = 0;
  for (std::size_t i = 0; i < feasible.size(); ++i) {
    for (std::size_t j = i + 1; j < feasible.size(); ++j) {
      if (!preds[i] && !preds[j]) continue;
      if (!preds[i] || !preds[j]) return std::numeric_limits<double>::infinity();
      for (const auto& e : feasible[i]->model.plant->odes) {
        auto a = preds[i]->find(e.var);
        auto b = preds[j]->find(e.var);
        if (a == preds[i]->end() || b == preds[j]->end()) continue;
        bool shared = false;
        for (const auto& f : feasible[j]->model.plant->odes) shared |= f.var == e.var;
        if (shared) gap = std::max(gap, std::fabs(a->second - b->second));
      }
    }
  }
  return gap;
}

using Chooser =
    std::function<Action(const State&, const std::vector<Action>&, const ModelSet&,
                         std::mt19937_64&)>;
// Invoked on each freshly observed state; may advance the subtask and swap
// the feasible set, and may declare the run complete.
using Boundary = std::function<void(const State&, ModelSet&, std::string&, bool&)>;

LearningTrace run_loop(ModelSet feasible, const std::vector<Action>& all,
                       const Environment& env, const LearnerHooks& hooks, int step_limit,
                       double duration, std::uint64_t seed, const Chooser& choose_action,
                       const Boundary* boundary, std::string subtask,
                       std::vector<std::string> preflight_warnings) {
  if (feasible.empty()) throw RunError("no models given");
  LearningTrace tr;
  tr.seed = seed;
  tr.warnings = std::move(preflight_warnings);
  std::mt19937_64 rng(seed);

  State s = env.initial_state();
  for (const MonitoredModel* m : feasible) {
    try {
      if (!eval_formula(m->model.init, s)) {
        tr.warnings.push_back("initial state does not satisfy init of model '" +
                              m->model.name + "'");
      }
    } catch (const EvalError& e) {
      tr.warnings.push_back("cannot check init of model '" + m->model.name +
                            "' at the initial state: " + e.what());
    }
  }

  auto record_state = [&](const State& st) {
    tr.states.push_back(st);
    std::vector<std::string> names;
    names.reserve(feasible.size());
    for (const MonitoredModel* m : feasible) names.push_back(m->model.name);
    tr.feasible_sets.push_back(std::move(names));
    tr.violations.push_back(violates(feasible, st));
    if (boundary) tr.subtasks.push_back(subtask);
  };
  record_state(s);
  std::vector<Action> avail = available_actions(feasible, s, all);
  if (hooks.on_avail) hooks.on_avail(s, avail);

  bool went_empty = false;
  int step = 0;
  for (; step < step_limit; ++step) {
    if (env.done(s)) {
      tr.halted_reason = HaltReason::done;
      break;
    }
    if (avail.empty()) {
      tr.halted_reason = HaltReason::no_safe_action;
      break;
    }
    Action act = choose_action(s, avail, feasible, rng);
    auto [next, reward] = env.step(s, act);
    feasible = update_feasible(feasible, s, act, next, duration);
    if (feasible.empty() && !went_empty) {
      went_empty = true;
      tr.warnings.push_back("feasible model set is empty from step " +
                            std::to_string(step + 1) + " on");
    }
    bool chain_done = false;
    if (boundary) (*boundary)(next, feasible, subtask, chain_done);
    tr.actions.push_back(act);
    tr.rewards.push_back(reward);
    record_state(next);
    avail = available_actions(feasible, next, all);
    if (hooks.on_avail) hooks.on_avail(next, avail);
    if (hooks.update) hooks.update(s, act, next, reward);
    s = next;
    if (chain_done) {
      tr.halted_reason = HaltReason::done;
      break;
    }
  }
  if (step == step_limit) {
    tr.halted_reason = env.done(s) ? HaltReason::done : HaltReason::step_limit;
  }
  return tr;
}

Chooser passive_chooser(const LearnerHooks& hooks) {
  return [&hooks](const State& s, const std::vector<Action>& avail, const ModelSet&,
                  std::mt19937_64&) { return checked_choose(hooks, avail, s); };
}

Chooser active_chooser(const LearnerHooks& hooks, const ActiveConfig& cfg) {
  return [&hooks, cfg](const State& s, const std::vector<Action>& avail,
                       const ModelSet& feasible, std::mt19937_64& rng) {
    if (feasible.size() > 1) {
      std::bernoulli_distribution experiment(cfg.er);
      if (experiment(rng)) {
        if (cfg.duration < 0) {
          throw RunError("active experimentation needs an explicit cycle duration");
        }
        std::vector<std::size_t> idx;
        std::vector<double> gap;
        for (std::size_t i = 0; i < avail.size(); ++i) {
          if (is_distinguishing(avail[i], feasible, s, cfg.duration)) {
            idx.push_back(i);
            gap.push_back(prediction_gap(avail[i], feasible, s, cfg.duration));
          }
        }
        if (!idx.empty()) {
          double best = *std::max_element(gap.begin(), gap.end());
          std::vector<std::size_t> top;
          for (std::size_t j = 0; j < idx.size(); ++j) {
            if (gap[j] >= best - 1e-12 * std::max(1.0, std::fabs(best))) {
              top.push_back(idx[j]);
            }
          }
          std::uniform_int_distribution<std::size_t> pick(0, top.size() - 1);
          return avail[top[pick(rng)]];
        }
      }
    }
    return checked_choose(hooks, avail, s);
  };
}

void check_active(const ActiveConfig& cfg) {
  if (!(cfg.er > 0 && cfg.er < 1)) throw RunError("elimination rate must lie in (0, 1)");
}

// Sampled spot check of a subtask handoff: states satisfying the finished
// subtask's termination condition should be initial states for the next one.
std::vector<std::string> handoff_warnings(
    const std::map<std::string, ModelSet>& model_sets,
    const std::map<std::string, FormulaPtr>& termination,
    const std::vector<std::string>& ordering, std::uint64_t seed) {
  std::vector<std::string> warnings;
  std::mt19937_64 rng(seed ^ 0x5bf03635dc1e8cull);
  for (std::size_t i = 0; i + 1 < ordering.size(); ++i) {
    auto t = termination.find(ordering[i]);
    if (t == termination.end() || !t->second) continue;
    auto ms = model_sets.find(ordering[i + 1]);
    if (ms == model_sets.end()) continue;
    std::set<std::string> vars = free_vars(t->second);
    for (const MonitoredModel* m : ms->second) {
      for (const auto& v : free_vars(m->model.init)) vars.insert(v);
    }
    InitSampler sampler(t->second, vars, {}, {-10.0, 10.0});
    for (int k = 0; k < 25; ++k) {
      State probe;
      try {
        probe = sampler.sample(rng, 2000);
      } catch (const UpdateError&) {
        break;  // termination region empty on the box: nothing to check
      }
      const MonitoredModel* bad = nullptr;
      for (const MonitoredModel* m : ms->second) {
        if (!eval_formula(m->model.init, probe)) bad = m;
      }
      if (bad) {
        warnings.push_back("a state satisfying the termination condition of '" +
                           ordering[i] + "' fails init of model '" + bad->model.name +
                           "' for subtask '" + ordering[i + 1] + "'");
        break;
      }
    }
  }
  return warnings;
}

}  // namespace

LearningTrace mu_learn(const ModelSet& models, const std::vector<Action>& actions,
                       const Environment& env, const LearnerHooks& hooks, int step_limit,
                       double duration, std::uint64_t seed) {
  return run_loop(models, actions, env, hooks, step_limit, duration, seed,
                  passive_chooser(hooks), nullptr, "", {});
}

LearningTrace active_mu_learn(const ModelSet& models, const std::vector<Action>& actions,
                              const Environment& env, const LearnerHooks& hooks,
                              const ActiveConfig& cfg, int step_limit, std::uint64_t seed) {
  check_active(cfg);
  return run_loop(models, actions, env, hooks, step_limit, cfg.duration, seed,
                  active_chooser(hooks, cfg), nullptr, "", {});
}

LearningTrace hierarchical_mu_learn(const std::map<std::string, ModelSet>& model_sets,
                                    const std::map<std::string, FormulaPtr>& termination,
                                    const std::vector<std::string>& ordering,
                                    const std::vector<Action>& actions,
                                    const Environment& env, const LearnerHooks& hooks,
                                    const ActiveConfig& cfg, int step_limit,
                                    std::uint64_t seed) {
  check_active(cfg);
  if (ordering.empty()) throw RunError("no subtasks given");
  auto first = model_sets.find(ordering.front());
  if (first == model_sets.end()) {
    throw RunError("no model set for subtask '" + ordering.front() + "'");
  }

  std::size_t idx = 0;
  Boundary boundary = [&](const State& s, ModelSet& feasible, std::string& subtask,
                          bool& chain_done) {
    while (true) {
      auto t = termination.find(subtask);
      if (t == termination.end() || !t->second) return;
      if (!eval_formula(t->second, s)) return;
      if (idx + 1 >= ordering.size()) {
        chain_done = true;
        return;
      }
      const std::string& next = ordering[idx + 1];
      auto ms = model_sets.find(next);
      if (ms == model_sets.end()) {
        throw RunError("termination of '" + subtask +
                       "' satisfied but no next subtask is defined ('" + next +
                       "' has no model set)");
      }
      ++idx;
      subtask = next;
      feasible = ms->second;  // re-initialize to the maximal set
    }
  };

  return run_loop(first->second, actions, env, hooks, step_limit, cfg.duration, seed,
                  active_chooser(hooks, cfg), &boundary, ordering.front(),
                  handoff_warnings(model_sets, termination, ordering, seed));
}

}  // namespace mulearn
