#pragma once

#include "mulearn/semantics.hpp"

namespace mulearn {

// Numeric band for comparing predicted against observed states. Defaults
// suit model/environment pairs that share one integrator; use abs ~1e-2
// when comparing across integrators. abs_override widens (or tightens) the
// band for individual variables, which is how deliberately coarse models
// absorb bounded nondeterminism in a single variable.
struct Tolerance {
  double abs = 1e-6;
  double rel = 1e-9;
  std::map<std::string, double> abs_override;

  double band(const std::string& var, double magnitude) const {
    auto it = abs_override.find(var);
    double a = it == abs_override.end() ? abs : it->second;
    return a + rel * magnitude;
  }
};

// A model bundled with everything needed to run its monitors.
struct MonitoredModel {
  Model model;
  Discretization discretization;
  FlowConfig flow_cfg;
  Tolerance tol;
};

// True iff (s, u(s)) is in the semantics of the model's ctrl: some
// enumerated branch produces exactly the same successor state.
bool controller_monitor(const MonitoredModel& mm, const State& s, const Action& u);

// True iff the controller monitor accepts (s_pre, u) and flowing the plant
// from u(s_pre) for `duration` lands within tolerance of s_post on every
// plant variable. A domain violation during the flow counts as a mismatch.
bool model_monitor(const MonitoredModel& mm, const State& s_pre, const Action& u,
                   const State& s_post, double duration);

// Same, recovering duration from the model's clock: ctrl resets the clock
// to 0, so s_post(clock) is the elapsed time.
bool model_monitor(const MonitoredModel& mm, const State& s_pre, const Action& u,
                   const State& s_post);

// The model's prediction of the next state: flow(plant, u(s), duration).
State predict(const MonitoredModel& mm, const State& s, const Action& u, double duration);

// True iff some pair of feasible models is guaranteed to disagree about the
// outcome of u: their predictions differ on a shared plant variable by more
// than the combined tolerance, so observing the true next state must
// falsify at least one of them.
bool is_distinguishing(const Action& u, const std::vector<const MonitoredModel*>& feasible,
                       const State& s, double duration);

}  // namespace mulearn
