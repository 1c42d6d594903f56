#pragma once

#include "mulearn/semantics.hpp"

namespace mulearn {

// One recorded control step: the state the action was taken in, the action,
// and the continuous-evolution duration that followed. Episodes end with a
// sentinel carrying the terminal state (empty action, duration 0).
struct TrajectoryStep {
  State state;
  Action action;
  double duration = 0;
};

using Episode = std::vector<TrajectoryStep>;

struct TrajectoryData {
  std::vector<Episode> episodes;
};

// JSON layout:
//   {"episodes": [[{"state": {...}, "action": {...}, "duration": 0.1}, ...]]}
// Actions are stored by their resolved values; loading rebuilds constant
// effect terms. Validation: durations >= 0 and a shared variable set.
TrajectoryData load_trajectories(const std::string& path);
void save_trajectories(const TrajectoryData& data, const std::string& path);

std::string trajectories_to_json(const TrajectoryData& data);
TrajectoryData trajectories_from_json(const std::string& text);

}  // namespace mulearn
