#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mulearn/ast.hpp"

namespace mulearn {

// Total assignment of reals to the variables in play.
using State = std::map<std::string, double>;

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Evolution-domain violation during flow; `time` is the first checked time
// point at which the domain formula failed.
struct DomainError : std::runtime_error {
  double time;
  DomainError(double time, const std::string& what)
      : std::runtime_error(what), time(time) {}
};

double eval_term(const TermPtr& t, const State& s);
bool eval_formula(const FormulaPtr& f, const State& s);

// The effect of one loop-free deterministic discrete program without tests:
// a simultaneous assignment block. `resolved` is the effect evaluated in the
// state the action was enumerated at (kept for reporting and deduplication).
struct Action {
  std::map<std::string, TermPtr> effect;
  std::map<std::string, double> resolved;
};

bool same_effect(const Action& a, const Action& b);
// "a := 2, t := 0" — resolved values, sorted by variable.
std::string describe(const Action& a);

// Finite grids that resolve nondeterministic assignments x := *.
struct Discretization {
  std::map<std::string, std::vector<double>> grids;
};

// All actions u with (s, u(s)) in the semantics of ctrl, with x := * drawn
// from the discretization grid. Tests prune; actions are deduplicated by
// their resolved effect; branches with an empty effect are dropped.
std::vector<Action> enumerate_actions(const HpPtr& ctrl, const State& s,
                                      const Discretization& d);

// u(s): pointwise update; all effect terms evaluate in the original s.
State apply_action(const Action& u, const State& s);

struct FlowConfig {
  enum class Method { rk4, closed_form };
  Method method = Method::rk4;
  double step_size = 1e-3;
};

// Integrates the plant ODE for `duration` starting at s. The evolution
// domain is checked at t=0, at every step boundary, and at t=duration;
// violation raises DomainError. closed_form requires a nilpotent linear
// system (with coefficients constant over the flow) and is exact.
State flow(const HpPtr& plant, const State& s, double duration, const FlowConfig& cfg);

// True if the plant is linear in its ODE variables with a nilpotent
// coefficient matrix at state s (closed_form would succeed).
bool is_nilpotent_linear(const HpPtr& plant, const State& s);

}  // namespace mulearn
