#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "mulearn/runtime.hpp"

namespace mulearn {

// Ground truth for the relative-coordinate cruise-control task. The hidden
// gain p_true multiplies every commanded acceleration; candidate models carry
// their own guesses, the environment keeps the real one. pos_rel is the gap
// to the lead vehicle, so shrinking it is progress and reaching crash_below
// is a crash.
struct AccEnvConfig {
  double p_true = 1.0;
  double dt = 0.1;
  double crash_below = 0.0;
  double progress_weight = 1.0;
  double crash_penalty = 10.0;
  std::pair<double, double> pos0 = {2.0, 10.0};
  std::pair<double, double> vel0 = {-2.0, 2.0};
  // Copied into every initial state so guards with symbolic constants can
  // evaluate; T is set from dt and t from the cycle.
  std::map<std::string, double> pins = {{"A", 1.0}, {"B", 2.0}};
};

bool acc_crashed(const AccEnvConfig& cfg, const State& s);

// One control cycle of the true plant pos_rel' = vel_rel,
// vel_rel' = p_true * acc_rel, integrated with the shared flow machinery.
std::pair<State, double> acc_env_step(const AccEnvConfig& cfg, const State& s,
                                      const Action& u);

// Packaged for the run loop. Initial states are drawn from the configured
// boxes, rejecting starts whose stopping distance is already hopeless under
// the halved braking authority (B * pos_rel > vel_rel^2). Each call to
// initial_state advances the captured generator, so one environment reused
// across episodes varies its starts while staying a function of the seed.
Environment acc_environment(const AccEnvConfig& cfg, std::uint64_t seed);

// Two-stage ground truth: drive through an intersection crossed by another
// car, then past a crosswalk a pedestrian walks toward. Both agents move at
// constant per-episode speeds drawn from the same grids the candidate model
// sets instantiate; the pedestrian's start is drawn from [c_min, c_max].
struct HierEnvConfig {
  double dt = 1.0;
  // Intersection box in ego coordinates, and the crossing car, which is in
  // the way while it sits inside (-1, 1).
  double int_lo = 4.0, int_hi = 5.0;
  double car_start = -3.0;
  std::vector<double> car_speeds = {0.0, 0.5, 1.0};
  // Crosswalk box and the pedestrian, in the way while inside (-1, 1).
  double cross_lo = 9.0, cross_hi = 10.0;
  double c_min = 2.0, c_max = 4.0;
  std::vector<double> ped_speeds = {0.0, 0.25, 0.5};
  // never: the pedestrian stands still all episode. sampled: walks from the
  // start at a grid speed. scripted: stands at c_max and starts walking at
  // pace walk_speed once elapsed time reaches scripted_entry; the switch is
  // recorded in the post-state of the preceding cycle, so monitors always
  // see a per-cycle-constant pace.
  enum class Entry { never, scripted, sampled };
  Entry entry = Entry::sampled;
  double scripted_entry = 3.0;
  double walk_speed = 0.5;
  // Ego start band, the position where the crosswalk subtask takes over,
  // and the goal that ends the episode.
  std::pair<double, double> x0 = {0.0, 2.0};
  double handoff_x = 6.0;
  double goal_x = 10.0;
  double progress_weight = 1.0;
  double crash_penalty = 10.0;
  std::map<std::string, double> progress_scale;  // optional per-subtask factor
};

// The sticky crash flag the environment writes into its states. A crash is
// sharing a box with another agent at any instant of a cycle, not just at
// its endpoints.
bool hier_crashed(const State& s);

std::tuple<State, double, std::string> hier_env_step(const HierEnvConfig& cfg,
                                                     const State& s,
                                                     const Action& u);

Environment hier_environment(const HierEnvConfig& cfg, std::uint64_t seed);

}  // namespace mulearn
