#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mulearn/runtime.hpp"

namespace mulearn {

// Tabular action-value learning over uniformly binned states. Only variables
// with a configured bin width enter the state key, so the table generalizes
// over everything else (clocks, bookkeeping fields).
struct QTableConfig {
  std::map<std::string, double> bin_widths;
  double learning_rate = 0.5;  // (0, 1]
  double discount = 0.9;       // [0, 1)
  double epsilon = 0.1;        // exploration probability
  std::uint64_t seed = 0;
};

class QTable {
 public:
  explicit QTable(QTableConfig cfg);

  // Epsilon-greedy over the offered actions, ties broken by a seeded draw;
  // deterministic for a fixed seed.
  Action choose(const std::vector<Action>& avail, const State& s);

  // One-step temporal-difference update. The bootstrap maximum runs over
  // the actions last reported safe at s_next (fed in through the on_avail
  // hook), not the whole action set, so the target never leans on actions
  // the monitors forbid.
  void update(const State& s, const Action& u, const State& s_next, double reward);

  // Wires choose/update/on_avail into the run loop; the table must outlive
  // the returned hooks.
  LearnerHooks hooks();

  double value(const State& s, const Action& u) const;
  std::size_t entries() const { return table_.size(); }

 private:
  std::string state_key(const State& s) const;

  QTableConfig cfg_;
  std::map<std::pair<std::string, std::string>, double> table_;
  std::string last_key_;
  std::vector<Action> last_avail_;
  std::mt19937_64 rng_;
};

}  // namespace mulearn
