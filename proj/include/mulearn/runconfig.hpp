#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mulearn/envs.hpp"
#include "mulearn/qlearn.hpp"
#include "mulearn/vpmu.hpp"

namespace mulearn {

// Schema violations, missing files, malformed values.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One model block: a base model plus an ordered update pipeline. Pipeline
// entries may fan out by listing parameter values with '|', which turns one
// model into a family. Hierarchical runs give each block a termination
// formula and list the execution order in [run].
struct SubtaskConfig {
  std::string name;
  std::string base_model;
  std::vector<ModelUpdate> pipeline;
  std::string termination;
};

struct RunConfig {
  std::string algorithm = "mu";  // mu | active-mu | hierarchical
  int episodes = 1;
  int step_limit = 100;
  std::uint64_t seed = 0;
  double er = 0.5;
  bool er_set = false;
  double duration = -1;  // explicit cycle length; < 0 relies on model clocks
  std::string output_dir = "out";
  bool expect_safe = true;
  double tolerance = 1e-6;

  std::vector<SubtaskConfig> subtasks;  // exactly one for flat runs
  std::vector<std::string> order;
  std::vector<std::string> action_text;

  std::string env_kind = "acc";  // acc | hier
  AccEnvConfig acc;
  std::vector<double> p_grid;  // per-episode resample grid for acc p_true
  HierEnvConfig hier;

  std::string learner = "uniform";  // uniform | qtable
  QTableConfig qtable;

  std::string data_path;    // trajectory file for data-driven updates
  std::string source_path;  // where this config was loaded from
};

// Parses the INI-style run config and validates the schema; paths are
// resolved relative to the config file. Throws ConfigError.
RunConfig load_run_config(const std::string& path);

// "acc_rel := -1, t := 0" -> a resolved constant-effect action.
Action parse_action_text(const std::string& text);

// Splits '|'-listed parameter values into concrete updates; at most one
// parameter of an entry may fan out.
std::vector<ModelUpdate> expand_update(const ModelUpdate& u);

// Applies a pipeline to a base model, following every fan-out branch; the
// resulting models get unique names derived from the fanned-out values.
std::vector<Model> apply_pipeline(const Model& base,
                                  const std::vector<ModelUpdate>& pipeline,
                                  const TrajectoryData* data = nullptr);

}  // namespace mulearn
