#include "mulearn/qlearn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mulearn {

QTable::QTable(QTableConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) {
  if (cfg_.discount < 0 || cfg_.discount >= 1) {
    throw RunError("discount must lie in [0, 1)");
  }
  if (cfg_.learning_rate <= 0 || cfg_.learning_rate > 1) {
    throw RunError("learning rate must lie in (0, 1]");
  }
  if (cfg_.epsilon < 0 || cfg_.epsilon > 1) {
    throw RunError("epsilon must lie in [0, 1]");
  }
}

std::string QTable::state_key(const State& s) const {
  std::ostringstream key;
  for (const auto& [v, width] : cfg_.bin_widths) {
    auto it = s.find(v);
    double value = it == s.end() ? 0.0 : it->second;
    key << v << ':' << static_cast<long long>(std::floor(value / width)) << ';';
  }
  return key.str();
}

Action QTable::choose(const std::vector<Action>& avail, const State& s) {
  if (avail.empty()) throw RunError("no actions offered to choose from");
  if (std::bernoulli_distribution(cfg_.epsilon)(rng_)) {
    std::uniform_int_distribution<std::size_t> pick(0, avail.size() - 1);
    return avail[pick(rng_)];
  }
  std::string sk = state_key(s);
  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> ties;
  for (std::size_t i = 0; i < avail.size(); ++i) {
    auto it = table_.find({sk, describe(avail[i])});
    double q = it == table_.end() ? 0.0 : it->second;
    if (q > best) {
      best = q;
      ties.clear();
    }
    if (q == best) ties.push_back(i);
  }
  std::uniform_int_distribution<std::size_t> pick(0, ties.size() - 1);
  return avail[ties[pick(rng_)]];
}

void QTable::update(const State& s, const Action& u, const State& s_next,
                    double reward) {
  std::string nk = state_key(s_next);
  double bootstrap = 0.0;
  if (nk == last_key_ && !last_avail_.empty()) {
    bootstrap = -std::numeric_limits<double>::infinity();
    for (const Action& a : last_avail_) {
      auto it = table_.find({nk, describe(a)});
      bootstrap = std::max(bootstrap, it == table_.end() ? 0.0 : it->second);
    }
  }
  double& q = table_[{state_key(s), describe(u)}];
  q += cfg_.learning_rate * (reward + cfg_.discount * bootstrap - q);
}

LearnerHooks QTable::hooks() {
  LearnerHooks h;
  h.choose = [this](const std::vector<Action>& avail, const State& s) {
    return choose(avail, s);
  };
  h.update = [this](const State& s, const Action& u, const State& s_next, double r) {
    update(s, u, s_next, r);
  };
  h.on_avail = [this](const State& s, const std::vector<Action>& avail) {
    last_key_ = state_key(s);
    last_avail_ = avail;
  };
  return h;
}

double QTable::value(const State& s, const Action& u) const {
  auto it = table_.find({state_key(s), describe(u)});
  return it == table_.end() ? 0.0 : it->second;
}

}  // namespace mulearn
