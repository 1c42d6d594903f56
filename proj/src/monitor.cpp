#include "mulearn/monitor.hpp"

#include <cmath>
#include <optional>

namespace mulearn {

bool controller_monitor(const MonitoredModel& mm, const State& s, const Action& u) {
  State target = apply_action(u, s);
  for (const Action& w : enumerate_actions(mm.model.ctrl, s, mm.discretization))
    if (apply_action(w, s) == target) return true;
  return false;
}

State predict(const MonitoredModel& mm, const State& s, const Action& u, double duration) {
  return flow(mm.model.plant, apply_action(u, s), duration, mm.flow_cfg);
}

bool model_monitor(const MonitoredModel& mm, const State& s_pre, const Action& u,
                   const State& s_post, double duration) {
  if (!controller_monitor(mm, s_pre, u)) return false;
  State pred;
  try {
    pred = predict(mm, s_pre, u, duration);
  } catch (const DomainError&) {
    return false;  // the model cannot evolve that long from here
  }
  for (auto& e : mm.model.plant->odes) {
    auto pit = pred.find(e.var);
    auto oit = s_post.find(e.var);
    if (oit == s_post.end())
      throw EvalError("observed state lacks plant variable '" + e.var + "'");
    double p = pit->second, o = oit->second;
    if (std::fabs(p - o) > mm.tol.band(e.var, std::max(std::fabs(p), std::fabs(o))))
      return false;
  }
  return true;
}

bool model_monitor(const MonitoredModel& mm, const State& s_pre, const Action& u,
                   const State& s_post) {
  if (!mm.model.clock)
    throw EvalError("duration unrecoverable for a non-time-aware model");
  auto it = s_post.find(*mm.model.clock);
  if (it == s_post.end())
    throw EvalError("unbound variable '" + *mm.model.clock + "'");
  return model_monitor(mm, s_pre, u, s_post, it->second);
}

bool is_distinguishing(const Action& u, const std::vector<const MonitoredModel*>& feasible,
                       const State& s, double duration) {
  if (feasible.size() < 2) return false;
  std::vector<std::optional<State>> preds;
  preds.reserve(feasible.size());
  for (const MonitoredModel* m : feasible) {
    try {
      preds.push_back(predict(*m, s, u, duration));
    } catch (const DomainError&) {
      // The model rules out evolving this long, so any observation of that
      // duration falsifies it.
      preds.push_back(std::nullopt);
    }
  }
  for (size_t i = 0; i < feasible.size(); ++i) {
    for (size_t j = i + 1; j < feasible.size(); ++j) {
      if (!preds[i] && !preds[j]) continue;
      if (!preds[i] || !preds[j]) return true;  // one must be falsified
      const MonitoredModel &mi = *feasible[i], &mj = *feasible[j];
      for (auto& e : mi.model.plant->odes) {
        auto a = preds[i]->find(e.var);
        auto b = preds[j]->find(e.var);
        if (a == preds[i]->end() || b == preds[j]->end()) continue;
        bool shared = false;
        for (auto& f : mj.model.plant->odes) shared |= f.var == e.var;
        if (!shared) continue;
        double diff = std::fabs(a->second - b->second);
        double thresh = mi.tol.band(e.var, std::fabs(a->second)) +
                        mj.tol.band(e.var, std::fabs(b->second));
        if (diff > thresh) return true;
      }
    }
  }
  return false;
}

}  // namespace mulearn
