#pragma once

#include <cstdint>
#include <random>

#include "mulearn/monitor.hpp"
#include "mulearn/trajectory.hpp"

namespace mulearn {

struct UpdateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Model updates: source-to-source transformations on Models. Each one either
// returns a valid canonical model or throws UpdateError; validate_update is
// the falsification harness that stands in for a safety proof of the result.
// ---------------------------------------------------------------------------

// Substitutes each bound parameter by its value throughout init/ctrl/plant/
// safe and records the binding in Model.constants. Bindings must satisfy the
// init conjuncts that mention only parameters and constants (e.g. A > 0).
Model instantiate_parameter(const Model& m, const std::map<std::string, double>& bindings);

// Detects parameters appearing in plant right-hand sides, fits them by least
// squares against finite-difference derivative estimates from `data`, then
// instantiates. A model with no plant parameters is returned unchanged.
Model auto_instantiate(const Model& m, const TrajectoryData& data);

enum class DisturbanceKind { additive, multiplicative };

struct DisturbanceSpec {
  std::string ode_var;
  DisturbanceKind kind = DisturbanceKind::multiplicative;
  double bound = 0;  // >= 0
};

// x' = theta becomes x' = theta + d (additive) or x' = d * theta
// (multiplicative) for a fresh parameter d range-constrained in init.
// Comparisons in ctrl guards and init that mention the rate's inputs are
// strengthened occurrence-by-occurrence with the worst-case d, where the
// conservative direction per occurrence is identified by margin sampling
// over the init region.
Model add_disturbance(const Model& m, const DisturbanceSpec& spec);

struct RelaxSpec {
  std::string quantity_var;   // ODE variable whose future value the bound caps
  TermPtr bound_term;         // worst-case bound term appearing in ctrl guards
  int order = 1;              // Taylor expansion order, >= 1
  double horizon = 0;         // validity interval [0, horizon]
  int sample_states = 100;    // init samples for the dominance check
  int sample_times = 40;      // time grid resolution on [0, horizon]
  std::uint64_t seed = 1234;
  // Extra probe settings: each sampled state is also checked with these
  // variables overridden (e.g. the values ctrl could assign before the flow).
  std::map<std::string, std::vector<double>> probe_values;
};

// Replaces the worst-case bound term with a Taylor polynomial of the
// quantity along the plant plus a Lagrange remainder whose coefficient is
// estimated at the sampled expansion points. The replacement is accepted
// only if it dominates the true quantity over a dense (state, time) sample;
// otherwise the witnessing sample is reported.
Model relax_worst_case(const Model& m, const RelaxSpec& spec);

// Gives a static obstacle (x, y) the dynamics {x' = -y, y' = -x} and
// rewrites squared-distance separation guards in ctrl to separation from
// the circle of radius sqrt(x0^2 + y0^2) traced around the origin, where
// (x0, y0) is pinned by init equalities. Purely polynomial rewriting:
//   (a-x)^2 + (b-y)^2 > E   becomes   K > 0 & K^2 > 4*R2*S
// with S = a^2 + b^2 and K = S + R2 - E.
Model static_to_circular(const Model& m, const std::string& x_var,
                         const std::string& y_var,
                         std::vector<std::string>* warnings = nullptr);

struct LearnSpec {
  FormulaPtr safe;
  Discretization action_grid;   // one grid per input variable
  double horizon = 0;           // control cycle length, > 0
  double zero_tol = 1e-9;       // fitted coefficients below this are dropped
  std::string name = "learned";
};

// Fits x' = A*x + B*u to the data, requires the fitted A to be nilpotent,
// and synthesizes a guarded controller: each grid action is admissible iff
// the closed-form safety margin (a polynomial in t of degree <= 2) stays on
// the right side of zero for all t in [0, horizon], expressed through the
// margin's endpoints and interior critical point. init is the disjunction
// of the guards.
Model learn_linear_dynamics(const TrajectoryData& data, const LearnSpec& spec);

// ---------------------------------------------------------------------------
// Falsification harness
// ---------------------------------------------------------------------------

struct ValidationReport {
  std::string update = "manual";
  int samples = 0;
  int safety_violations = 0;
  int monitor_rejections = 0;
  bool pass = false;  // pass iff safety_violations == 0
  std::uint64_t seed = 0;

  std::string to_json() const;
};

struct ValidateOptions {
  std::map<std::string, std::pair<double, double>> box;  // per-var sampling range
  std::pair<double, double> default_box{-10.0, 10.0};
  int episode_steps = 20;
  double duration = -1;  // < 0: clock domain bound if present, else 0.1
  Discretization discretization;
  Tolerance tol;
  std::string update_name = "manual";
};

// Samples initial states satisfying m.init, rolls out the model's own
// ctrl;plant loop, and counts safe-violations plus transitions the model's
// own monitor rejects. Deterministic for a fixed seed.
ValidationReport validate_update(const Model& m, int n_samples, std::uint64_t seed,
                                 const ValidateOptions& opts = {});

// Rejection sampler for states satisfying a formula: equality conjuncts pin
// variables, interval conjuncts shrink the box, everything else filters.
class InitSampler {
 public:
  InitSampler(FormulaPtr constraint, std::set<std::string> vars,
              std::map<std::string, std::pair<double, double>> box,
              std::pair<double, double> default_box = {-10.0, 10.0});

  // Throws UpdateError once the attempt budget is exhausted.
  State sample(std::mt19937_64& rng, int budget = 10000) const;

 private:
  FormulaPtr constraint_;
  std::vector<std::string> free_;                      // sampled uniformly
  std::map<std::string, double> pinned_;               // equality conjuncts
  std::map<std::string, std::pair<double, double>> range_;
};

// Splits nested conjunctions into their leaves.
void conjuncts(const FormulaPtr& f, std::vector<FormulaPtr>& out);

// ---------------------------------------------------------------------------
// CLI plumbing: a named update with string parameters.
// ---------------------------------------------------------------------------

struct ModelUpdate {
  std::string name;  // one of the six update names
  std::map<std::string, std::string> params;
};

// Dispatches to the update named in `u`. Updates that consume trajectories
// read them from `data`; passing nullptr when one is required throws.
Model apply_update(const Model& m, const ModelUpdate& u,
                   const TrajectoryData* data = nullptr);

}  // namespace mulearn
