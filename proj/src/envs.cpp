#include "mulearn/envs.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

namespace mulearn {

namespace {

TermPtr lit(double v) { return v < 0 ? neg(num(-v)) : num(v); }

double get(const State& s, const std::string& k, double fallback = 0.0) {
  auto it = s.find(k);
  return it == s.end() ? fallback : it->second;
}

}  // namespace

bool acc_crashed(const AccEnvConfig& cfg, const State& s) {
  return get(s, "pos_rel") <= cfg.crash_below;
}

std::pair<State, double> acc_env_step(const AccEnvConfig& cfg, const State& s,
                                      const Action& u) {
  if (cfg.dt <= 0) throw RunError("dt must be positive");
  State post = apply_action(u, s);
  HpPtr plant = ode({{"pos_rel", var("vel_rel")},
                     {"vel_rel", mul(lit(cfg.p_true), var("acc_rel"))},
                     {"t", num(1)}},
                    truth());
  // rk4 is exact here (quadratic trajectories); a handful of substeps is
  // only there to honor the shared-machinery contract cheaply.
  post = flow(plant, post, cfg.dt, {FlowConfig::Method::rk4, cfg.dt / 4});
  double reward = cfg.progress_weight * (get(s, "pos_rel") - post.at("pos_rel"));
  if (acc_crashed(cfg, post) && !acc_crashed(cfg, s)) reward -= cfg.crash_penalty;
  return {post, reward};
}

Environment acc_environment(const AccEnvConfig& cfg, std::uint64_t seed) {
  if (cfg.dt <= 0) throw RunError("dt must be positive");
  auto rng = std::make_shared<std::mt19937_64>(seed);
  Environment env;
  env.initial_state = [cfg, rng] {
    std::uniform_real_distribution<double> pos(cfg.pos0.first, cfg.pos0.second);
    std::uniform_real_distribution<double> vel(cfg.vel0.first, cfg.vel0.second);
    double b = cfg.pins.count("B") ? cfg.pins.at("B") : 1.0;
    double p = 0, v = 0;
    for (int tries = 0;; ++tries) {
      if (tries >= 10000) {
        throw RunError(
            "cannot sample a recoverable start: B*pos_rel > vel_rel^2 never "
            "holds on the configured box");
      }
      p = pos(*rng);
      v = vel(*rng);
      if (b * p > v * v && p > cfg.crash_below) break;
    }
    State s{{"pos_rel", p}, {"vel_rel", v}, {"acc_rel", 0.0},
            {"t", 0.0},     {"T", cfg.dt}};
    for (const auto& [k, value] : cfg.pins) s[k] = value;
    return s;
  };
  env.step = [cfg](const State& s, const Action& u) { return acc_env_step(cfg, s, u); };
  env.done = [cfg](const State& s) { return acc_crashed(cfg, s); };
  return env;
}

namespace {

struct Window {
  double lo = 0, hi = 0;
  bool empty = true;
};

// Times tau in [0, dt] at which a + b*tau lies strictly inside (lo, hi).
Window inside_box(double a, double b, double lo, double hi, double dt) {
  if (b == 0) {
    if (a > lo && a < hi) return {0, dt, false};
    return {};
  }
  double t1 = (lo - a) / b, t2 = (hi - a) / b;
  if (t1 > t2) std::swap(t1, t2);
  double wlo = std::max(t1, 0.0), whi = std::min(t2, dt);
  if (wlo < whi) return {wlo, whi, false};
  return {};
}

bool overlap(const Window& a, const Window& b) {
  if (a.empty || b.empty) return false;
  return std::max(a.lo, b.lo) < std::min(a.hi, b.hi);
}

}  // namespace

bool hier_crashed(const State& s) { return get(s, "crashed") > 0.5; }

std::tuple<State, double, std::string> hier_env_step(const HierEnvConfig& cfg,
                                                     const State& s,
                                                     const Action& u) {
  std::string subtask = get(s, "x") >= cfg.handoff_x ? "crosswalk" : "intersection";
  State post = apply_action(u, s);
  double v = get(post, "v"), w = get(post, "w"), wp = get(post, "wp");
  double x0 = get(post, "x"), o0 = get(post, "o"), c0 = get(post, "c");
  double dt = cfg.dt;

  post["x"] = x0 + v * dt;
  post["o"] = o0 + w * dt;
  post["c"] = c0 - wp * dt;
  post["t"] = get(post, "t") + dt;
  post["elapsed"] = get(s, "elapsed") + dt;

  bool hit = overlap(inside_box(x0, v, cfg.int_lo, cfg.int_hi, dt),
                     inside_box(o0, w, -1.0, 1.0, dt)) ||
             overlap(inside_box(x0, v, cfg.cross_lo, cfg.cross_hi, dt),
                     inside_box(c0, -wp, -1.0, 1.0, dt));
  post["crashed"] = (hit || hier_crashed(s)) ? 1.0 : 0.0;

  if (cfg.entry == HierEnvConfig::Entry::scripted &&
      post.at("elapsed") >= cfg.scripted_entry) {
    post["wp"] = cfg.walk_speed;
  }

  double scale = 1.0;
  auto it = cfg.progress_scale.find(subtask);
  if (it != cfg.progress_scale.end()) scale = it->second;
  double reward = cfg.progress_weight * scale * (post.at("x") - get(s, "x"));
  if (hit && !hier_crashed(s)) reward -= cfg.crash_penalty;
  return {post, reward, subtask};
}

Environment hier_environment(const HierEnvConfig& cfg, std::uint64_t seed) {
  if (cfg.dt <= 0) throw RunError("dt must be positive");
  if (cfg.c_min > cfg.c_max) throw RunError("pedestrian start band is empty (c_min > c_max)");
  if (cfg.car_speeds.empty() || cfg.ped_speeds.empty()) {
    throw RunError("speed grids must be non-empty");
  }
  auto rng = std::make_shared<std::mt19937_64>(seed);
  Environment env;
  env.initial_state = [cfg, rng] {
    std::uniform_real_distribution<double> xs(cfg.x0.first, cfg.x0.second);
    std::uniform_real_distribution<double> cs(cfg.c_min, cfg.c_max);
    std::uniform_int_distribution<std::size_t> wi(0, cfg.car_speeds.size() - 1);
    std::uniform_int_distribution<std::size_t> wpi(0, cfg.ped_speeds.size() - 1);
    // Draw everything regardless of mode so the stream is mode-independent.
    double x = xs(*rng);
    double w = cfg.car_speeds[wi(*rng)];
    double c_draw = cs(*rng);
    double wp_draw = cfg.ped_speeds[wpi(*rng)];
    double c = cfg.entry == HierEnvConfig::Entry::scripted ? cfg.c_max : c_draw;
    double wp = cfg.entry == HierEnvConfig::Entry::sampled ? wp_draw : 0.0;
    return State{{"x", x},   {"v", 0.0}, {"o", cfg.car_start}, {"w", w},
                 {"c", c},   {"wp", wp}, {"t", 0.0},           {"T", cfg.dt},
                 {"elapsed", 0.0},       {"crashed", 0.0}};
  };
  env.step = [cfg](const State& s, const Action& u) {
    auto [post, reward, subtask] = hier_env_step(cfg, s, u);
    (void)subtask;
    return std::pair<State, double>(post, reward);
  };
  env.done = [cfg](const State& s) {
    return get(s, "x") >= cfg.goal_x || hier_crashed(s);
  };
  return env;
}

}  // namespace mulearn
