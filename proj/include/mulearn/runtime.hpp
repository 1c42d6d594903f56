#pragma once

#include <cstdint>
#include <functional>

#include "mulearn/monitor.hpp"

namespace mulearn {

struct RunError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class HaltReason { done, no_safe_action, step_limit };
std::string to_string(HaltReason r);

// Everything a learning run leaves behind. Parallel sequences: one entry per
// visited state for states / feasible_sets / violations / subtasks, one per
// executed action for actions / rewards (so |actions| = |states| - 1).
// feasible_sets[0] names the full model set; violations[i] is true when some
// model feasible at step i rejects states[i] as unsafe.
struct LearningTrace {
  std::vector<State> states;
  std::vector<Action> actions;
  std::vector<std::vector<std::string>> feasible_sets;
  std::vector<double> rewards;
  std::vector<bool> violations;
  std::vector<std::string> subtasks;  // empty unless hierarchical
  HaltReason halted_reason = HaltReason::step_limit;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

// One JSON object per visited state: {"state": ..., "feasible": [names],
// "violation": bool} plus "action"/"reward" when a step was taken from it
// and "subtask" when the run was hierarchical.
std::string trace_to_jsonl(const LearningTrace& trace);
void save_trace_jsonl(const LearningTrace& trace, const std::string& path);

// A black-box world the learner acts in. Deterministic given whatever seed
// its closures captured; never inspected beyond these three calls.
struct Environment {
  std::function<std::pair<State, double>(const State&, const Action&)> step;
  std::function<bool(const State&)> done;
  std::function<State()> initial_state;
};

struct ActiveConfig {
  double er = 0.5;       // elimination rate, in (0, 1)
  double duration = -1;  // cycle length for predictions; < 0: model clocks
};

// The learner under the safety shield. choose must return an element of the
// offered set; update and on_avail are optional. on_avail fires whenever the
// safe-action set for a state is computed, before choose / update see it, so
// value updates can take the action restriction into account.
struct LearnerHooks {
  std::function<Action(const std::vector<Action>&, const State&)> choose;
  std::function<void(const State&, const Action&, const State&, double)> update;
  std::function<void(const State&, const std::vector<Action>&)> on_avail;
};

using ModelSet = std::vector<const MonitoredModel*>;

// The models whose monitor accepts the observed transition. duration < 0
// recovers the elapsed time from each model's clock.
ModelSet update_feasible(const ModelSet& models, const State& s_pre, const Action& u,
                         const State& s_curr, double duration = -1);

// Actions every feasible model's controller monitor permits at s. An empty
// model set constrains nothing.
std::vector<Action> available_actions(const ModelSet& models, const State& s,
                                      const std::vector<Action>& all);

// Shielded learning: restrict to actions all feasible models permit, act,
// observe, drop the models the observation falsifies. Halts on env.done, on
// an empty safe-action set, or at step_limit.
LearningTrace mu_learn(const ModelSet& models, const std::vector<Action>& actions,
                       const Environment& env, const LearnerHooks& hooks, int step_limit,
                       double duration = -1, std::uint64_t seed = 0);

// As mu_learn, but while several models are feasible: with probability
// cfg.er insist on a safe action whose predicted outcomes separate some pair
// of feasible models (uniform over those with the largest prediction gap),
// falling back to hooks.choose when none exists.
LearningTrace active_mu_learn(const ModelSet& models, const std::vector<Action>& actions,
                              const Environment& env, const LearnerHooks& hooks,
                              const ActiveConfig& cfg, int step_limit,
                              std::uint64_t seed = 0);

// Chained subtasks: runs the er-active loop against the current subtask's
// models; when that subtask's termination formula holds, advances along
// `ordering` and re-initializes the feasible set to the next subtask's full
// model set. Termination of the final subtask ends the run as done. Each
// consecutive handoff is spot-checked by sampling: termination states that
// fail the next models' init are reported as trace warnings.
LearningTrace hierarchical_mu_learn(const std::map<std::string, ModelSet>& model_sets,
                                    const std::map<std::string, FormulaPtr>& termination,
                                    const std::vector<std::string>& ordering,
                                    const std::vector<Action>& actions,
                                    const Environment& env, const LearnerHooks& hooks,
                                    const ActiveConfig& cfg, int step_limit,
                                    std::uint64_t seed = 0);

}  // namespace mulearn
