#include "mulearn/vpmu.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "mulearn/fit.hpp"
#include "mulearn/printer.hpp"
#include "mulearn/parser.hpp"
#include "mulearn/rewrite.hpp"
#include "json.hpp"

namespace mulearn {

namespace {

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw UpdateError("parameter '" + key + "' is not a number: " + text);
  }
}

// Portable uniform double in [0, 1): the distribution classes in <random>
// are implementation-defined, and reports promise bit-identical replay.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t pick_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

std::set<std::string> model_state_vars(const Model& m) {
  std::set<std::string> vars = free_vars(m);
  for (const auto& v : ode_vars(m.plant)) vars.insert(v);
  for (const auto& v : assigned_vars(m.ctrl)) vars.insert(v);
  return vars;
}

// Duration of one control cycle: an explicit clock bound in the evolution
// domain if the model has one, else a default.
double cycle_duration(const Model& m, const State& probe, double fallback) {
  if (!m.clock) return fallback;
  std::vector<FormulaPtr> parts;
  conjuncts(m.plant->domain, parts);
  for (const auto& c : parts) {
    if (c->kind != Formula::Kind::Cmp) continue;
    if (c->op != CmpOp::Le && c->op != CmpOp::Lt) continue;
    if (c->term_lhs->kind != Term::Kind::Var || c->term_lhs->name != *m.clock) continue;
    try {
      return eval_term(c->term_rhs, probe);
    } catch (const EvalError&) {
      continue;
    }
  }
  return fallback;
}

FlowConfig pick_flow_config(const Model& m, const State& probe) {
  FlowConfig cfg;
  cfg.method = is_nilpotent_linear(m.plant, probe) ? FlowConfig::Method::closed_form
                                                   : FlowConfig::Method::rk4;
  return cfg;
}

// ---- occurrence-level term surgery ----------------------------------------

int count_var(const TermPtr& t, const std::string& x) {
  if (!t) return 0;
  if (t->kind == Term::Kind::Var) return t->name == x ? 1 : 0;
  return count_var(t->lhs, x) + count_var(t->rhs, x);
}

// Replaces the occurrence of x with in-order index `k` (0-based); k counts
// down across the traversal and ends negative once the replacement happened.
TermPtr replace_occurrence(const TermPtr& t, const std::string& x, int& k,
                           const std::function<TermPtr(const TermPtr&)>& wrap) {
  if (!t || k < 0) return t;
  if (t->kind == Term::Kind::Var) {
    if (t->name != x) return t;
    if (k-- == 0) return wrap(t);
    return t;
  }
  TermPtr l = replace_occurrence(t->lhs, x, k, wrap);
  TermPtr r = replace_occurrence(t->rhs, x, k, wrap);
  if (l == t->lhs && r == t->rhs) return t;
  switch (t->kind) {
    case Term::Kind::Neg: return neg(l);
    case Term::Kind::Add: return add(l, r);
    case Term::Kind::Sub: return sub(l, r);
    case Term::Kind::Mul: return mul(l, r);
    case Term::Kind::Div: return div(l, r);
    case Term::Kind::Pow: return pow(l, t->exponent);
    default: return t;
  }
}

// Signed satisfaction margin of a comparison: positive iff it holds, and
// larger means "more comfortably true".
double margin_of(CmpOp op, double l, double r) {
  switch (op) {
    case CmpOp::Lt:
    case CmpOp::Le: return r - l;
    case CmpOp::Gt:
    case CmpOp::Ge: return l - r;
    default: throw UpdateError("no monotone margin for an equality comparison");
  }
}

CmpOp negate_op(CmpOp op) {
  switch (op) {
    case CmpOp::Lt: return CmpOp::Ge;
    case CmpOp::Le: return CmpOp::Gt;
    case CmpOp::Gt: return CmpOp::Le;
    case CmpOp::Ge: return CmpOp::Lt;
    case CmpOp::Eq: return CmpOp::Ne;
    case CmpOp::Ne: return CmpOp::Eq;
  }
  return CmpOp::Eq;
}

TermPtr replace_term(const TermPtr& t, const TermPtr& pattern, const TermPtr& repl,
                     int& count) {
  if (!t) return t;
  if (equal(t, pattern)) {
    ++count;
    return repl;
  }
  TermPtr l = replace_term(t->lhs, pattern, repl, count);
  TermPtr r = replace_term(t->rhs, pattern, repl, count);
  if (l == t->lhs && r == t->rhs) return t;
  switch (t->kind) {
    case Term::Kind::Neg: return neg(l);
    case Term::Kind::Add: return add(l, r);
    case Term::Kind::Sub: return sub(l, r);
    case Term::Kind::Mul: return mul(l, r);
    case Term::Kind::Div: return div(l, r);
    case Term::Kind::Pow: return pow(l, t->exponent);
    default: return t;
  }
}

FormulaPtr map_formula_cmps(const FormulaPtr& f,
                            const std::function<FormulaPtr(const FormulaPtr&)>& fn) {
  if (!f) return f;
  switch (f->kind) {
    case Formula::Kind::Cmp: return fn(f);
    case Formula::Kind::Not: return lnot(map_formula_cmps(f->lhs, fn));
    case Formula::Kind::And:
      return land(map_formula_cmps(f->lhs, fn), map_formula_cmps(f->rhs, fn));
    case Formula::Kind::Or:
      return lor(map_formula_cmps(f->lhs, fn), map_formula_cmps(f->rhs, fn));
    case Formula::Kind::Imply:
      return imply(map_formula_cmps(f->lhs, fn), map_formula_cmps(f->rhs, fn));
    default: return f;
  }
}

HpPtr map_tests(const HpPtr& p, const std::function<FormulaPtr(const FormulaPtr&)>& fn) {
  if (!p) return p;
  switch (p->kind) {
    case HybridProgram::Kind::Test: return test(fn(p->formula));
    case HybridProgram::Kind::Seq: return seq(map_tests(p->first, fn), map_tests(p->second, fn));
    case HybridProgram::Kind::Choice:
      return choice(map_tests(p->first, fn), map_tests(p->second, fn));
    case HybridProgram::Kind::Loop: return loop(map_tests(p->first, fn));
    default: return p;
  }
}

void collect_assignments(const HpPtr& p, std::vector<std::pair<std::string, TermPtr>>& out) {
  if (!p) return;
  switch (p->kind) {
    case HybridProgram::Kind::Assign: out.emplace_back(p->var, p->term); return;
    case HybridProgram::Kind::Seq:
    case HybridProgram::Kind::Choice:
      collect_assignments(p->first, out);
      collect_assignments(p->second, out);
      return;
    case HybridProgram::Kind::Loop: collect_assignments(p->first, out); return;
    default: return;
  }
}

std::string fresh_name(const std::string& base, const std::set<std::string>& taken) {
  if (!taken.count(base)) return base;
  for (int i = 1;; ++i) {
    std::string cand = base + std::to_string(i);
    if (!taken.count(cand)) return cand;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// conjuncts / InitSampler
// ---------------------------------------------------------------------------

void conjuncts(const FormulaPtr& f, std::vector<FormulaPtr>& out) {
  if (!f) return;
  if (f->kind == Formula::Kind::And) {
    conjuncts(f->lhs, out);
    conjuncts(f->rhs, out);
    return;
  }
  out.push_back(f);
}

InitSampler::InitSampler(FormulaPtr constraint, std::set<std::string> vars,
                         std::map<std::string, std::pair<double, double>> box,
                         std::pair<double, double> default_box)
    : constraint_(std::move(constraint)) {
  for (const auto& v : vars) {
    auto it = box.find(v);
    range_[v] = it == box.end() ? default_box : it->second;
  }
  std::vector<FormulaPtr> parts;
  conjuncts(constraint_, parts);
  for (const auto& c : parts) {
    if (c->kind != Formula::Kind::Cmp) continue;
    TermPtr l = c->term_lhs, r = c->term_rhs;
    CmpOp op = c->op;
    // Normalize to var-on-the-left.
    if (l->kind != Term::Kind::Var && r->kind == Term::Kind::Var) {
      std::swap(l, r);
      if (op == CmpOp::Lt) op = CmpOp::Gt;
      else if (op == CmpOp::Le) op = CmpOp::Ge;
      else if (op == CmpOp::Gt) op = CmpOp::Lt;
      else if (op == CmpOp::Ge) op = CmpOp::Le;
    }
    if (l->kind != Term::Kind::Var) continue;
    auto it = range_.find(l->name);
    if (it == range_.end()) continue;
    auto value = const_value(r);
    if (!value) continue;
    if (op == CmpOp::Eq) {
      pinned_[l->name] = *value;
    } else if (op == CmpOp::Le || op == CmpOp::Lt) {
      it->second.second = std::min(it->second.second, *value);
    } else if (op == CmpOp::Ge || op == CmpOp::Gt) {
      it->second.first = std::max(it->second.first, *value);
    }
  }
  for (const auto& [v, lohi] : range_) {
    (void)lohi;
    if (!pinned_.count(v)) free_.push_back(v);
  }
}

State InitSampler::sample(std::mt19937_64& rng, int budget) const {
  for (int attempt = 0; attempt < budget; ++attempt) {
    State s;
    for (const auto& [v, value] : pinned_) s[v] = value;
    for (const auto& v : free_) {
      auto [lo, hi] = range_.at(v);
      s[v] = lo >= hi ? lo : lo + uniform01(rng) * (hi - lo);
    }
    try {
      if (eval_formula(constraint_, s)) return s;
    } catch (const EvalError&) {
      // e.g. division by zero on an unlucky draw: reject and retry
    }
  }
  throw UpdateError("init unsatisfiable within the sampling budget (" +
                    std::to_string(budget) + " attempts)");
}

// ---------------------------------------------------------------------------
// instantiate_parameter
// ---------------------------------------------------------------------------

Model instantiate_parameter(const Model& m, const std::map<std::string, double>& bindings) {
  std::set<std::string> params = parameters(m);
  for (const auto& [name, value] : bindings) {
    (void)value;
    if (!params.count(name)) {
      throw UpdateError("'" + name + "' is not a parameter of the model");
    }
  }

  // Check the init conjuncts that only mention bound parameters/constants.
  State env;
  for (const auto& [name, value] : m.constants) env[name] = value;
  for (const auto& [name, value] : bindings) env[name] = value;
  std::vector<FormulaPtr> parts;
  conjuncts(m.init, parts);
  for (const auto& c : parts) {
    bool closed = true;
    for (const auto& v : free_vars(c)) {
      if (!env.count(v)) {
        closed = false;
        break;
      }
    }
    if (!closed) continue;
    bool holds = false;
    try {
      holds = eval_formula(c, env);
    } catch (const EvalError&) {
      continue;
    }
    if (!holds) {
      throw UpdateError("bindings violate '" + print_formula(c) + "' from init");
    }
  }

  Substitution sub;
  for (const auto& [name, value] : bindings) sub[name] = num(value);
  Model out = m;
  out.init = substitute(m.init, sub);
  out.ctrl = substitute(m.ctrl, sub);
  out.plant = substitute(m.plant, sub);
  out.safe = substitute(m.safe, sub);
  for (const auto& [name, value] : bindings) out.constants[name] = value;
  validate_model(out);
  return out;
}

// ---------------------------------------------------------------------------
// auto_instantiate
// ---------------------------------------------------------------------------

Model auto_instantiate(const Model& m, const TrajectoryData& data) {
  std::set<std::string> params = parameters(m);
  // Only parameters occurring in plant right-hand sides can be fitted.
  std::set<std::string> fit_params;
  for (const auto& eq : m.plant->odes) {
    for (const auto& v : free_vars(eq.rhs)) {
      if (params.count(v)) fit_params.insert(v);
    }
  }
  if (fit_params.empty()) return m;
  if (data.episodes.empty()) throw UpdateError("auto_instantiate needs non-empty data");

  std::vector<std::string> cols(fit_params.begin(), fit_params.end());
  Substitution zero;
  for (const auto& p : cols) zero[p] = num(0.0);

  // Per equation: rhs = base + sum coeff_p * p, required linear in params.
  struct EqFit {
    std::string var;
    TermPtr base;
    std::vector<TermPtr> coeffs;  // aligned with cols
  };
  std::vector<EqFit> fits;
  for (const auto& eq : m.plant->odes) {
    std::set<std::string> fv = free_vars(eq.rhs);
    bool mentions = false;
    for (const auto& p : cols) mentions |= fv.count(p) > 0;
    if (!mentions) continue;
    EqFit fit;
    fit.var = eq.var;
    fit.base = simplify(substitute(eq.rhs, zero));
    for (const auto& p : cols) {
      TermPtr coeff = simplify(derivative(eq.rhs, p));
      for (const auto& v : free_vars(coeff)) {
        if (fit_params.count(v)) {
          throw UpdateError("parameter '" + p + "' does not appear linearly in plant");
        }
      }
      fit.coeffs.push_back(coeff);
    }
    fits.push_back(std::move(fit));
  }

  std::vector<std::string> targets;
  for (const auto& fit : fits) targets.push_back(fit.var);
  std::vector<DerivativeSample> samples = derivative_samples(data, targets);
  if (samples.empty()) throw UpdateError("auto_instantiate needs non-empty data");

  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  for (const auto& sample : samples) {
    State at = sample.at;
    for (const auto& [name, value] : m.constants) at.emplace(name, value);
    for (const auto& fit : fits) {
      std::vector<double> row;
      row.reserve(cols.size());
      for (const auto& coeff : fit.coeffs) row.push_back(eval_term(coeff, at));
      rows.push_back(std::move(row));
      y.push_back(sample.rate.at(fit.var) - eval_term(fit.base, at));
    }
  }

  int bad_col = -1;
  std::vector<double> beta = least_squares(rows, y, 1e-9, &bad_col);
  if (bad_col >= 0) {
    throw UpdateError("insufficient excitation for parameter '" + cols[bad_col] + "'");
  }
  std::map<std::string, double> bindings;
  for (std::size_t i = 0; i < cols.size(); ++i) bindings[cols[i]] = beta[i];
  return instantiate_parameter(m, bindings);
}

// ---------------------------------------------------------------------------
// add_disturbance
// ---------------------------------------------------------------------------

namespace {

// Chooses, per occurrence of a scaled variable inside a comparison, the
// worst-case disturbance factor: the candidate that never increases the
// comparison's satisfaction margin on the sampled states.
FormulaPtr strengthen_cmp(const FormulaPtr& c, const std::set<std::string>& scale_vars,
                          DisturbanceKind kind, double bound,
                          const std::vector<State>& probes) {
  bool touches = false;
  for (const auto& v : free_vars(c)) touches |= scale_vars.count(v) > 0;
  if (!touches) return c;
  if (c->op == CmpOp::Eq || c->op == CmpOp::Ne) {
    // A bare pin like "A = 1" defines a parameter rather than bounding a
    // reachable quantity; leave it alone. Anything more structured has no
    // monotone direction to exploit.
    bool lhs_var = c->term_lhs->kind == Term::Kind::Var;
    bool rhs_var = c->term_rhs->kind == Term::Kind::Var;
    if ((lhs_var && const_value(c->term_rhs)) || (rhs_var && const_value(c->term_lhs))) {
      return c;
    }
    throw UpdateError("cannot identify the monotone direction of the disturbance in guard '" +
                      print_formula(c) + "'");
  }

  double hi = kind == DisturbanceKind::multiplicative ? 1.0 + bound : bound;
  double lo = kind == DisturbanceKind::multiplicative ? 1.0 - bound : -bound;
  auto wrap_with = [&](double factor) {
    return [factor, kind](const TermPtr& o) -> TermPtr {
      if (kind == DisturbanceKind::multiplicative) return mul(num(factor), o);
      return add(o, num(factor));
    };
  };

  auto margins = [&](const FormulaPtr& f) {
    std::vector<double> out;
    for (const auto& s : probes) {
      try {
        out.push_back(margin_of(f->op, eval_term(f->term_lhs, s), eval_term(f->term_rhs, s)));
      } catch (const EvalError&) {
        out.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
    return out;
  };

  FormulaPtr current = c;
  for (const auto& x : scale_vars) {
    int total = count_var(current->term_lhs, x) + count_var(current->term_rhs, x);
    for (int occ = 0; occ < total; ++occ) {
      std::vector<double> base = margins(current);
      // The conservative direction only matters where the comparison holds:
      // those are the states the rewritten guard may no longer admit. Judge
      // candidates on the accept region when it is populated.
      bool any_accept = false;
      for (double b : base) any_accept |= !std::isnan(b) && b > 0;
      FormulaPtr cand[2];
      double total_gain[2] = {0, 0};
      double max_weaken[2] = {0, 0};
      bool weakens[2] = {false, false};
      double factors[2] = {hi, lo};
      for (int side = 0; side < 2; ++side) {
        int k = occ;
        TermPtr l = replace_occurrence(current->term_lhs, x, k, wrap_with(factors[side]));
        TermPtr r = replace_occurrence(current->term_rhs, x, k, wrap_with(factors[side]));
        cand[side] = cmp(current->op, l, r);
        std::vector<double> got = margins(cand[side]);
        for (std::size_t i = 0; i < got.size(); ++i) {
          if (std::isnan(base[i]) || std::isnan(got[i])) continue;
          if (any_accept && !(base[i] > 0)) continue;
          double delta = got[i] - base[i];
          if (delta > 1e-9 * (1 + std::fabs(base[i]))) weakens[side] = true;
          max_weaken[side] = std::max(max_weaken[side], delta);
          total_gain[side] += base[i] - got[i];
        }
      }
      int pick;
      if (!weakens[0] && !weakens[1]) {
        pick = total_gain[0] >= total_gain[1] ? 0 : 1;
      } else if (!weakens[0]) {
        pick = 0;
      } else if (!weakens[1]) {
        pick = 1;
      } else {
        // Neither factor is conservative pointwise; this happens inside
        // even powers, where the monotone direction flips with the sign of
        // the base. Take the smaller worst-case giveaway — the admission
        // check below is the gate that decides whether the result stands.
        pick = max_weaken[0] <= max_weaken[1] ? 0 : 1;
      }
      current = cand[pick];
    }
  }
  // Occurrence-level choices are heuristic; what the update owes the caller
  // is that the rewritten comparison admits no state the original rejected.
  for (const auto& s : probes) {
    bool now, was;
    try {
      now = eval_formula(current, s);
      was = eval_formula(c, s);
    } catch (const EvalError&) {
      continue;
    }
    if (now && !was) {
      throw UpdateError(
          "cannot identify the monotone direction of the disturbance in guard '" +
          print_formula(c) + "'");
    }
  }
  return simplify(current);
}

}  // namespace

Model add_disturbance(const Model& m, const DisturbanceSpec& spec) {
  if (!(spec.bound >= 0)) throw UpdateError("disturbance bound must be >= 0");
  int eq_index = -1;
  for (std::size_t i = 0; i < m.plant->odes.size(); ++i) {
    if (m.plant->odes[i].var == spec.ode_var) eq_index = static_cast<int>(i);
  }
  if (eq_index < 0) throw UpdateError("no ODE for variable '" + spec.ode_var + "'");
  const TermPtr theta = m.plant->odes[eq_index].rhs;

  std::set<std::string> taken = model_state_vars(m);
  for (const auto& [name, value] : m.constants) {
    (void)value;
    taken.insert(name);
  }
  std::string d = fresh_name("d", taken);

  // Variables whose occurrences in guards stand for the disturbed rate: the
  // rate's own inputs plus whatever ctrl assigns into those inputs.
  std::set<std::string> odes = ode_vars(m.plant);
  std::set<std::string> scale_vars;
  for (const auto& v : free_vars(theta)) {
    if (!odes.count(v)) scale_vars.insert(v);
  }
  std::vector<std::pair<std::string, TermPtr>> assigns;
  collect_assignments(m.ctrl, assigns);
  for (const auto& [target, rhs] : assigns) {
    if (!free_vars(theta).count(target)) continue;
    for (const auto& v : free_vars(rhs)) {
      if (!odes.count(v)) scale_vars.insert(v);
    }
  }

  // Probe states for the direction choice, drawn from the init region.
  std::vector<State> probes;
  {
    std::mt19937_64 rng(0x9e3779b97f4a7c15ull);
    std::set<std::string> vars = model_state_vars(m);
    InitSampler strict(m.init, vars, {}, {-10.0, 10.0});
    InitSampler loose(truth(), vars, {}, {-10.0, 10.0});
    for (int i = 0; i < 48; ++i) {
      try {
        probes.push_back(strict.sample(rng, 500));
      } catch (const UpdateError&) {
        probes.push_back(loose.sample(rng, 10));
      }
    }
  }

  auto strengthen = [&](const FormulaPtr& f) {
    return map_formula_cmps(f, [&](const FormulaPtr& c) {
      return strengthen_cmp(c, scale_vars, spec.kind, spec.bound, probes);
    });
  };

  Model out = m;
  out.init = strengthen(m.init);
  out.ctrl = map_tests(m.ctrl, strengthen);

  std::vector<OdeEquation> eqs = m.plant->odes;
  eqs[eq_index].rhs = spec.kind == DisturbanceKind::multiplicative
                          ? mul(var(d), theta)
                          : add(theta, var(d));
  out.plant = ode(std::move(eqs), m.plant->domain);

  double lo = spec.kind == DisturbanceKind::multiplicative ? 1.0 - spec.bound : -spec.bound;
  double hi = spec.kind == DisturbanceKind::multiplicative ? 1.0 + spec.bound : spec.bound;
  out.init = land(out.init, land(cmp(CmpOp::Ge, var(d), num(lo)),
                                 cmp(CmpOp::Le, var(d), num(hi))));
  validate_model(out);
  return out;
}

// ---------------------------------------------------------------------------
// relax_worst_case
// ---------------------------------------------------------------------------

Model relax_worst_case(const Model& m, const RelaxSpec& spec) {
  if (spec.order < 1) throw UpdateError("expansion order must be >= 1");
  if (!(spec.horizon > 0)) throw UpdateError("validity interval must have positive length");
  if (!spec.bound_term) throw UpdateError("no bound term given");
  bool has_eq = false;
  for (const auto& eq : m.plant->odes) has_eq |= eq.var == spec.quantity_var;
  if (!has_eq) throw UpdateError("no ODE for variable '" + spec.quantity_var + "'");

  // Taylor polynomial of the quantity along the plant vector field.
  std::vector<TermPtr> lie{var(spec.quantity_var)};
  for (int k = 0; k < spec.order + 1; ++k) {
    lie.push_back(simplify(lie_derivative(lie.back(), m.plant->odes)));
  }
  double fact = 1.0;
  TermPtr poly = lie[0];
  for (int k = 1; k <= spec.order; ++k) {
    fact *= k;
    poly = add(poly, mul(num(std::pow(spec.horizon, k) / fact), lie[k]));
  }
  poly = simplify(poly);

  // Sampled expansion points (init region, optionally fanned out over probe
  // values for variables ctrl would overwrite before the flow).
  std::mt19937_64 rng(spec.seed);
  std::set<std::string> vars = model_state_vars(m);
  InitSampler sampler(m.init, vars, {}, {-10.0, 10.0});
  std::vector<State> points;
  for (int i = 0; i < spec.sample_states; ++i) {
    State base = sampler.sample(rng);
    std::vector<State> fan{base};
    for (const auto& [v, values] : spec.probe_values) {
      std::vector<State> next;
      for (const auto& s : fan) {
        for (double value : values) {
          State t = s;
          t[v] = value;
          next.push_back(std::move(t));
        }
      }
      fan = std::move(next);
    }
    points.insert(points.end(), fan.begin(), fan.end());
  }
  if (points.empty()) throw UpdateError("no sample points for the dominance check");

  // Remainder coefficient: the (order+1)-th derivative's magnitude at the
  // expansion points. The dominance check below is the actual soundness
  // gate; an order too low for the dynamics fails there.
  double m_coeff = 0.0;
  TermPtr next_lie = lie[spec.order + 1];
  bool next_zero = false;
  if (auto v = const_value(next_lie)) next_zero = *v == 0.0;
  if (!next_zero) {
    for (const auto& s : points) m_coeff = std::max(m_coeff, std::fabs(eval_term(next_lie, s)));
  }
  double remainder = m_coeff * std::pow(spec.horizon, spec.order + 1) / (fact * (spec.order + 1));
  TermPtr replacement = simplify(add(poly, num(remainder)));

  FlowConfig cfg = pick_flow_config(m, points.front());
  double worst = 0.0, worst_t = 0.0;
  bool dominated = true;
  for (const auto& s : points) {
    double bound_val;
    try {
      bound_val = eval_term(replacement, s);
    } catch (const EvalError&) {
      continue;
    }
    for (int i = 0; i <= spec.sample_times; ++i) {
      double t = spec.horizon * i / spec.sample_times;
      State at;
      try {
        at = flow(m.plant, s, t, cfg);
      } catch (const DomainError&) {
        break;  // flow left the evolution domain; later times are unreachable
      }
      double actual = at.at(spec.quantity_var);
      double gap = actual - bound_val;
      if (gap > 1e-9 * (1 + std::fabs(bound_val))) {
        dominated = false;
        if (gap > worst) {
          worst = gap;
          worst_t = t;
        }
      }
    }
  }
  if (!dominated) {
    std::ostringstream msg;
    msg << "remainder bound cannot be established on [0, " << spec.horizon
        << "] (max violation " << worst << " at t = " << worst_t << ")";
    throw UpdateError(msg.str());
  }

  int replaced = 0;
  auto relax = [&](const FormulaPtr& c) {
    TermPtr l = replace_term(c->term_lhs, spec.bound_term, replacement, replaced);
    TermPtr r = replace_term(c->term_rhs, spec.bound_term, replacement, replaced);
    return cmp(c->op, l, r);
  };
  Model out = m;
  out.ctrl = map_tests(m.ctrl, [&](const FormulaPtr& f) { return map_formula_cmps(f, relax); });
  if (replaced == 0) {
    throw UpdateError("term '" + print_term(spec.bound_term) + "' does not appear in any ctrl guard");
  }
  validate_model(out);
  return out;
}

// ---------------------------------------------------------------------------
// static_to_circular
// ---------------------------------------------------------------------------

namespace {

struct SepMatch {
  TermPtr ax, ay;  // the controlled point's coordinates
  TermPtr rhs;     // squared separation bound
  bool strict = true;
};

bool is_squared_diff(const TermPtr& t, const std::string& v, TermPtr& other) {
  if (!t || t->kind != Term::Kind::Pow || t->exponent != 2) return false;
  const TermPtr& base = t->lhs;
  if (!base || base->kind != Term::Kind::Sub) return false;
  if (base->lhs->kind == Term::Kind::Var && base->lhs->name == v &&
      !free_vars(base->rhs).count(v)) {
    other = base->rhs;
    return true;
  }
  if (base->rhs->kind == Term::Kind::Var && base->rhs->name == v &&
      !free_vars(base->lhs).count(v)) {
    other = base->lhs;
    return true;
  }
  return false;
}

bool match_dist2(const TermPtr& t, const std::string& x, const std::string& y,
                 TermPtr& ax, TermPtr& ay) {
  if (!t || t->kind != Term::Kind::Add) return false;
  if (is_squared_diff(t->lhs, x, ax) && is_squared_diff(t->rhs, y, ay)) return true;
  if (is_squared_diff(t->lhs, y, ay) && is_squared_diff(t->rhs, x, ax)) return true;
  return false;
}

std::optional<SepMatch> match_separation(const FormulaPtr& c, const std::string& x,
                                         const std::string& y) {
  if (c->kind != Formula::Kind::Cmp) return std::nullopt;
  SepMatch match;
  std::set<std::string> obstacle{x, y};
  auto free_of_obstacle = [&](const TermPtr& t) {
    for (const auto& v : free_vars(t)) {
      if (obstacle.count(v)) return false;
    }
    return true;
  };
  if ((c->op == CmpOp::Gt || c->op == CmpOp::Ge) &&
      match_dist2(c->term_lhs, x, y, match.ax, match.ay) && free_of_obstacle(c->term_rhs)) {
    match.rhs = c->term_rhs;
    match.strict = c->op == CmpOp::Gt;
    if (free_of_obstacle(match.ax) && free_of_obstacle(match.ay)) return match;
  }
  if ((c->op == CmpOp::Lt || c->op == CmpOp::Le) &&
      match_dist2(c->term_rhs, x, y, match.ax, match.ay) && free_of_obstacle(c->term_lhs)) {
    match.rhs = c->term_lhs;
    match.strict = c->op == CmpOp::Lt;
    if (free_of_obstacle(match.ax) && free_of_obstacle(match.ay)) return match;
  }
  return std::nullopt;
}

double pinned_value(const FormulaPtr& init, const std::string& v, const char* why) {
  std::vector<FormulaPtr> parts;
  conjuncts(init, parts);
  for (const auto& c : parts) {
    if (c->kind != Formula::Kind::Cmp || c->op != CmpOp::Eq) continue;
    if (c->term_lhs->kind == Term::Kind::Var && c->term_lhs->name == v) {
      if (auto value = const_value(c->term_rhs)) return *value;
    }
    if (c->term_rhs->kind == Term::Kind::Var && c->term_rhs->name == v) {
      if (auto value = const_value(c->term_lhs)) return *value;
    }
  }
  throw UpdateError("initial value of '" + v + "' is not pinned by init (" + why + ")");
}

}  // namespace

Model static_to_circular(const Model& m, const std::string& x_var, const std::string& y_var,
                         std::vector<std::string>* warnings) {
  std::set<std::string> fv = model_state_vars(m);
  if (!fv.count(x_var)) throw UpdateError("'" + x_var + "' does not occur in the model");
  if (!fv.count(y_var)) throw UpdateError("'" + y_var + "' does not occur in the model");
  std::set<std::string> odes = ode_vars(m.plant);
  if (odes.count(x_var)) throw UpdateError("variable '" + x_var + "' already has an ODE");
  if (odes.count(y_var)) throw UpdateError("variable '" + y_var + "' already has an ODE");

  double x0 = pinned_value(m.init, x_var, "needed for the circle radius");
  double y0 = pinned_value(m.init, y_var, "needed for the circle radius");
  double r2 = x0 * x0 + y0 * y0;

  int rewritten = 0;
  auto rewrite = [&](const FormulaPtr& c) -> FormulaPtr {
    auto match = match_separation(c, x_var, y_var);
    if (!match) return c;
    ++rewritten;
    // Separation from the whole circle of radius R about the origin:
    //   (rho - R)^2 > E   <=>   K > 0 and K^2 > 4 R^2 S
    // with S = a^2 + b^2, rho = sqrt(S), K = S + R^2 - E.
    TermPtr s_term = add(pow(match->ax, 2), pow(match->ay, 2));
    TermPtr k_term = simplify(sub(add(s_term, num(r2)), match->rhs));
    CmpOp op = match->strict ? CmpOp::Gt : CmpOp::Ge;
    return land(cmp(op, k_term, num(0.0)),
                cmp(op, pow(k_term, 2), simplify(mul(num(4 * r2), s_term))));
  };

  Model out = m;
  out.ctrl = map_tests(m.ctrl, [&](const FormulaPtr& f) { return map_formula_cmps(f, rewrite); });
  if (rewritten == 0 && warnings) {
    warnings->push_back("no separation guard over (" + x_var + ", " + y_var +
                        ") found; dynamics added unchanged");
  }

  std::vector<OdeEquation> eqs = m.plant->odes;
  eqs.push_back({x_var, neg(var(y_var))});
  eqs.push_back({y_var, neg(var(x_var))});
  out.plant = ode(std::move(eqs), m.plant->domain);
  validate_model(out);
  return out;
}

// ---------------------------------------------------------------------------
// learn_linear_dynamics
// ---------------------------------------------------------------------------

namespace {

// Polynomial in t with symbolic term coefficients, index = power of t.
struct TPoly {
  std::vector<TermPtr> c;

  static TPoly constant(TermPtr t) { return TPoly{{std::move(t)}}; }
  TermPtr coeff(std::size_t k) const { return k < c.size() ? c[k] : num(0.0); }
  std::size_t degree() const {
    std::size_t d = 0;
    for (std::size_t k = 0; k < c.size(); ++k) {
      auto v = const_value(c[k]);
      if (!(v && *v == 0.0)) d = k;
    }
    return d;
  }
};

TPoly tp_add(const TPoly& a, const TPoly& b) {
  TPoly out;
  out.c.resize(std::max(a.c.size(), b.c.size()));
  for (std::size_t k = 0; k < out.c.size(); ++k) {
    out.c[k] = simplify(add(a.coeff(k), b.coeff(k)));
  }
  return out;
}

TPoly tp_neg(const TPoly& a) {
  TPoly out;
  out.c.reserve(a.c.size());
  for (const auto& t : a.c) out.c.push_back(simplify(neg(t)));
  return out;
}

TPoly tp_sub(const TPoly& a, const TPoly& b) { return tp_add(a, tp_neg(b)); }

TPoly tp_mul(const TPoly& a, const TPoly& b) {
  TPoly out;
  if (a.c.empty() || b.c.empty()) return out;
  out.c.assign(a.c.size() + b.c.size() - 1, num(0.0));
  for (std::size_t i = 0; i < a.c.size(); ++i) {
    for (std::size_t j = 0; j < b.c.size(); ++j) {
      out.c[i + j] = simplify(add(out.c[i + j], mul(a.c[i], b.c[j])));
    }
  }
  return out;
}

TPoly term_to_tpoly(const TermPtr& t, const std::map<std::string, TPoly>& flows) {
  switch (t->kind) {
    case Term::Kind::Number: return TPoly::constant(t);
    case Term::Kind::Var: {
      auto it = flows.find(t->name);
      if (it != flows.end()) return it->second;
      return TPoly::constant(t);
    }
    case Term::Kind::Neg: return tp_neg(term_to_tpoly(t->lhs, flows));
    case Term::Kind::Add:
      return tp_add(term_to_tpoly(t->lhs, flows), term_to_tpoly(t->rhs, flows));
    case Term::Kind::Sub:
      return tp_sub(term_to_tpoly(t->lhs, flows), term_to_tpoly(t->rhs, flows));
    case Term::Kind::Mul:
      return tp_mul(term_to_tpoly(t->lhs, flows), term_to_tpoly(t->rhs, flows));
    case Term::Kind::Div: {
      TPoly denom = term_to_tpoly(t->rhs, flows);
      if (denom.degree() != 0) {
        throw UpdateError("cannot synthesize a guard: time-dependent divisor in safe");
      }
      TPoly numer = term_to_tpoly(t->lhs, flows);
      TPoly out;
      out.c.reserve(numer.c.size());
      for (const auto& ck : numer.c) out.c.push_back(simplify(div(ck, denom.coeff(0))));
      return out;
    }
    case Term::Kind::Pow: {
      TPoly base = term_to_tpoly(t->lhs, flows);
      TPoly out = TPoly::constant(num(1.0));
      for (int k = 0; k < t->exponent; ++k) out = tp_mul(out, base);
      return out;
    }
  }
  throw UpdateError("unsupported term in safe");
}

// Necessary and sufficient condition for a margin polynomial of degree <= 2
// to stay positive (or nonnegative) over [0, horizon]: both endpoints plus
// the interior critical point when it lies inside the interval.
FormulaPtr margin_condition(const TPoly& margin, bool strict, double horizon) {
  if (margin.degree() > 2) {
    throw UpdateError("safety margin has degree " + std::to_string(margin.degree()) +
                      " in time; guard synthesis supports degree <= 2");
  }
  CmpOp op = strict ? CmpOp::Gt : CmpOp::Ge;
  TermPtr c0 = margin.coeff(0), c1 = margin.coeff(1), c2 = margin.coeff(2);
  FormulaPtr at0 = cmp(op, c0, num(0.0));
  TermPtr at_h = simplify(
      add(c0, add(mul(num(horizon), c1), mul(num(horizon * horizon), c2))));
  FormulaPtr ath = cmp(op, at_h, num(0.0));

  auto zero = [](const TermPtr& t) {
    auto v = const_value(t);
    return v && *v == 0.0;
  };
  if (zero(c2) && zero(c1)) return simplify(at0);
  if (zero(c2)) return simplify(land(at0, ath));

  // Interior minimum exists iff c2 > 0 and the vertex -c1/(2 c2) is in
  // (0, horizon); there the margin is (4 c2 c0 - c1^2) / (4 c2).
  FormulaPtr no_vertex = lor(
      lor(cmp(CmpOp::Le, c2, num(0.0)), cmp(CmpOp::Ge, c1, num(0.0))),
      cmp(CmpOp::Ge, simplify(neg(c1)), simplify(mul(num(2 * horizon), c2))));
  FormulaPtr vertex_ok =
      cmp(op, simplify(sub(mul(num(4.0), mul(c2, c0)), pow(c1, 2))), num(0.0));
  return simplify(land(land(at0, ath), lor(no_vertex, vertex_ok)));
}

FormulaPtr guard_for(const FormulaPtr& f, bool positive,
                     const std::map<std::string, TPoly>& flows, double horizon) {
  switch (f->kind) {
    case Formula::Kind::True: return positive ? truth() : falsity();
    case Formula::Kind::False: return positive ? falsity() : truth();
    case Formula::Kind::Not: return guard_for(f->lhs, !positive, flows, horizon);
    case Formula::Kind::And: {
      FormulaPtr l = guard_for(f->lhs, positive, flows, horizon);
      FormulaPtr r = guard_for(f->rhs, positive, flows, horizon);
      return positive ? land(l, r) : lor(l, r);
    }
    case Formula::Kind::Or: {
      FormulaPtr l = guard_for(f->lhs, positive, flows, horizon);
      FormulaPtr r = guard_for(f->rhs, positive, flows, horizon);
      return positive ? lor(l, r) : land(l, r);
    }
    case Formula::Kind::Imply:
      return guard_for(lor(lnot(f->lhs), f->rhs), positive, flows, horizon);
    case Formula::Kind::Cmp: {
      CmpOp op = positive ? f->op : negate_op(f->op);
      if (op == CmpOp::Eq || op == CmpOp::Ne) {
        throw UpdateError("equality comparisons in safe are not supported for guard synthesis");
      }
      TPoly l = term_to_tpoly(f->term_lhs, flows);
      TPoly r = term_to_tpoly(f->term_rhs, flows);
      bool strict = op == CmpOp::Lt || op == CmpOp::Gt;
      TPoly margin = (op == CmpOp::Lt || op == CmpOp::Le) ? tp_sub(r, l) : tp_sub(l, r);
      return margin_condition(margin, strict, horizon);
    }
  }
  throw UpdateError("unsupported formula in safe");
}

}  // namespace

Model learn_linear_dynamics(const TrajectoryData& data, const LearnSpec& spec) {
  if (!spec.safe) throw UpdateError("learn_linear_dynamics needs a safe formula");
  if (!(spec.horizon > 0)) throw UpdateError("horizon must be > 0");
  if (data.episodes.empty()) throw UpdateError("learn_linear_dynamics needs non-empty data");

  // Inputs are the action-assigned variables; states are everything else.
  std::set<std::string> input_set, state_set;
  for (const auto& episode : data.episodes) {
    for (const auto& step : episode) {
      for (const auto& [v, value] : step.action.resolved) {
        (void)value;
        input_set.insert(v);
      }
      for (const auto& [v, value] : step.state) {
        (void)value;
        state_set.insert(v);
      }
    }
  }
  for (const auto& v : input_set) state_set.erase(v);
  std::vector<std::string> states(state_set.begin(), state_set.end());
  std::vector<std::string> inputs(input_set.begin(), input_set.end());
  const std::size_t n = states.size(), mdim = inputs.size();
  if (n == 0) throw UpdateError("no state variables in the data");
  for (const auto& u : inputs) {
    if (!spec.action_grid.grids.count(u)) {
      throw UpdateError("no action grid for input '" + u + "'");
    }
  }
  for (const auto& [v, values] : spec.action_grid.grids) {
    (void)values;
    if (!input_set.count(v)) {
      throw UpdateError("grid variable '" + v + "' does not appear in the data");
    }
  }

  std::vector<DerivativeSample> samples = derivative_samples(data, states);
  if (samples.empty()) throw UpdateError("no usable transitions in the data");
  std::vector<std::vector<double>> rows;
  rows.reserve(samples.size());
  for (const auto& sample : samples) {
    std::vector<double> row;
    row.reserve(n + mdim);
    for (const auto& v : states) row.push_back(sample.at.at(v));
    for (const auto& v : inputs) {
      auto it = sample.input.find(v);
      row.push_back(it == sample.input.end() ? sample.at.at(v) : it->second);
    }
    rows.push_back(std::move(row));
  }

  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
  std::vector<std::vector<double>> b(n, std::vector<double>(mdim, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> y;
    y.reserve(samples.size());
    for (const auto& sample : samples) y.push_back(sample.rate.at(states[i]));
    int bad_col = -1;
    std::vector<double> beta = least_squares(rows, y, 1e-9, &bad_col);
    if (bad_col >= 0) {
      std::string who = bad_col < static_cast<int>(n) ? states[bad_col]
                                                      : inputs[bad_col - n];
      throw UpdateError("insufficient excitation for '" + who + "'");
    }
    for (std::size_t j = 0; j < n; ++j) {
      a[i][j] = std::fabs(beta[j]) <= spec.zero_tol ? 0.0 : beta[j];
    }
    for (std::size_t k = 0; k < mdim; ++k) {
      b[i][k] = std::fabs(beta[n + k]) <= spec.zero_tol ? 0.0 : beta[n + k];
    }
  }

  // Nilpotency = the dependency digraph of A is acyclic (then A^n is exactly
  // zero: every length-n walk repeats a node).
  {
    std::vector<int> mark(n, 0);  // 0 unseen, 1 on stack, 2 done
    std::function<bool(std::size_t)> cyclic = [&](std::size_t i) -> bool {
      mark[i] = 1;
      for (std::size_t j = 0; j < n; ++j) {
        if (a[i][j] == 0.0) continue;
        if (mark[j] == 1) return true;
        if (mark[j] == 0 && cyclic(j)) return true;
      }
      mark[i] = 2;
      return false;
    };
    for (std::size_t i = 0; i < n; ++i) {
      if (mark[i] == 0 && cyclic(i)) {
        throw UpdateError("fitted dynamics are not nilpotent");
      }
    }
  }

  // Plant right-hand sides from the cleaned coefficients.
  std::vector<OdeEquation> eqs;
  for (std::size_t i = 0; i < n; ++i) {
    TermPtr rhs = num(0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (a[i][j] != 0.0) rhs = add(rhs, mul(num(a[i][j]), var(states[j])));
    }
    for (std::size_t k = 0; k < mdim; ++k) {
      if (b[i][k] != 0.0) rhs = add(rhs, mul(num(b[i][k]), var(inputs[k])));
    }
    eqs.push_back({states[i], simplify(rhs)});
  }

  // Symbolic powers A^j z with z the state variables.
  std::vector<std::vector<TermPtr>> az{std::vector<TermPtr>()};
  for (std::size_t i = 0; i < n; ++i) az[0].push_back(var(states[i]));
  for (std::size_t j = 1; j < n; ++j) {
    std::vector<TermPtr> next(n, num(0.0));
    bool all_zero = true;
    for (std::size_t i = 0; i < n; ++i) {
      TermPtr acc = num(0.0);
      for (std::size_t k = 0; k < n; ++k) {
        if (a[i][k] != 0.0) acc = add(acc, mul(num(a[i][k]), az[j - 1][k]));
      }
      next[i] = simplify(acc);
      auto v = const_value(next[i]);
      all_zero &= v && *v == 0.0;
    }
    az.push_back(std::move(next));
    if (all_zero) break;
  }

  // One guarded branch per grid action.
  std::vector<std::vector<double>> combos{{}};
  for (const auto& u : inputs) {
    std::vector<std::vector<double>> next;
    for (const auto& combo : combos) {
      for (double value : spec.action_grid.grids.at(u)) {
        auto ext = combo;
        ext.push_back(value);
        next.push_back(std::move(ext));
      }
    }
    combos = std::move(next);
  }

  HpPtr ctrl;
  FormulaPtr init;
  for (const auto& combo : combos) {
    // Closed-form flow under this action: z(t) = sum t^j/j! A^j z0
    //                                          + sum t^{j+1}/(j+1)! A^j B u.
    std::vector<double> c(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < mdim; ++k) c[i] += b[i][k] * combo[k];
    }
    std::map<std::string, TPoly> flows;
    std::vector<TPoly> per_var(n);
    double factorial = 1.0;
    std::vector<double> ac = c;
    for (std::size_t j = 0; j < az.size() || j < n; ++j) {
      if (j > 0) factorial *= j;
      if (j < az.size()) {
        for (std::size_t i = 0; i < n; ++i) {
          auto& poly = per_var[i].c;
          if (poly.size() <= j + 1) poly.resize(j + 2, num(0.0));
          poly[j] = simplify(add(poly[j], mul(num(1.0 / factorial), az[j][i])));
        }
      }
      if (j < n) {
        for (std::size_t i = 0; i < n; ++i) {
          auto& poly = per_var[i].c;
          if (poly.size() <= j + 1) poly.resize(j + 2, num(0.0));
          poly[j + 1] =
              simplify(add(poly[j + 1], num(ac[i] / (factorial * (j + 1)))));
        }
        std::vector<double> next(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t k = 0; k < n; ++k) next[i] += a[i][k] * ac[k];
        }
        ac = std::move(next);
      }
    }
    for (std::size_t i = 0; i < n; ++i) flows[states[i]] = per_var[i];

    FormulaPtr guard = guard_for(spec.safe, true, flows, spec.horizon);
    HpPtr branch;
    for (std::size_t k = 0; k < mdim; ++k) {
      HpPtr step = assign(inputs[k], num(combo[k]));
      branch = branch ? seq(branch, step) : step;
    }
    if (guard->kind != Formula::Kind::True) {
      branch = branch ? seq(test(guard), branch) : test(guard);
    }
    if (!branch) branch = test(truth());
    ctrl = ctrl ? choice(ctrl, branch) : branch;
    init = init ? lor(init, guard) : guard;
  }
  init = simplify(init);

  Model out;
  out.name = spec.name;
  out.init = init;
  out.ctrl = ctrl;
  out.plant = ode(std::move(eqs), truth());
  out.safe = spec.safe;

  if (init->kind == Formula::Kind::False) {
    throw UpdateError("no action is safe anywhere on the sampled region");
  }
  if (init->kind != Formula::Kind::True) {
    std::mt19937_64 rng(0xda3e39cb94b95bdbull);
    std::set<std::string> vars = model_state_vars(out);
    InitSampler sampler(truth(), vars, {}, {-10.0, 10.0});
    bool satisfiable = false;
    for (int i = 0; i < 500 && !satisfiable; ++i) {
      try {
        satisfiable = eval_formula(init, sampler.sample(rng, 10));
      } catch (const EvalError&) {
      }
    }
    if (!satisfiable) {
      throw UpdateError("no action is safe anywhere on the sampled region");
    }
  }
  validate_model(out);
  return out;
}

// ---------------------------------------------------------------------------
// validate_update
// ---------------------------------------------------------------------------

std::string ValidationReport::to_json() const {
  nlohmann::json j;
  j["update"] = update;
  j["samples"] = samples;
  j["safety_violations"] = safety_violations;
  j["monitor_rejections"] = monitor_rejections;
  j["verdict"] = pass ? "pass" : "fail";
  j["seed"] = seed;
  return j.dump(2);
}

ValidationReport validate_update(const Model& m, int n_samples, std::uint64_t seed,
                                 const ValidateOptions& opts) {
  if (n_samples < 1) throw UpdateError("n_samples must be >= 1");
  ValidationReport report;
  report.update = opts.update_name;
  report.samples = n_samples;
  report.seed = seed;

  std::mt19937_64 rng(seed);
  std::set<std::string> vars = model_state_vars(m);
  InitSampler sampler(m.init, vars, opts.box, opts.default_box);

  State probe = sampler.sample(rng);
  double duration = opts.duration >= 0 ? opts.duration : cycle_duration(m, probe, 0.1);
  MonitoredModel monitored{m, opts.discretization, pick_flow_config(m, probe), opts.tol};

  for (int k = 0; k < n_samples; ++k) {
    State s = k == 0 ? probe : sampler.sample(rng);
    if (!eval_formula(m.safe, s)) ++report.safety_violations;
    for (int step = 0; step < opts.episode_steps; ++step) {
      std::vector<Action> actions = enumerate_actions(m.ctrl, s, opts.discretization);
      if (actions.empty()) break;
      const Action& u = actions[pick_index(rng, actions.size())];
      State post;
      try {
        post = flow(m.plant, apply_action(u, s), duration, monitored.flow_cfg);
      } catch (const DomainError&) {
        break;
      }
      if (!model_monitor(monitored, s, u, post, duration)) ++report.monitor_rejections;
      if (!eval_formula(m.safe, post)) ++report.safety_violations;
      s = std::move(post);
    }
  }
  report.pass = report.safety_violations == 0;
  return report;
}

// ---------------------------------------------------------------------------
// apply_update
// ---------------------------------------------------------------------------

namespace {

std::vector<double> parse_grid_values(const std::string& key, const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) values.push_back(parse_double(key, item));
  }
  if (values.empty()) throw UpdateError("empty grid for '" + key + "'");
  return values;
}

}  // namespace

Model apply_update(const Model& m, const ModelUpdate& u, const TrajectoryData* data) {
  const auto& p = u.params;
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = p.find(key);
    if (it == p.end()) throw UpdateError("update '" + u.name + "' needs parameter '" + key + "'");
    return it->second;
  };
  auto get_or = [&](const std::string& key, const std::string& fallback) {
    auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
  };

  if (u.name == "instantiate_parameter") {
    std::map<std::string, double> bindings;
    for (const auto& [key, value] : p) bindings[key] = parse_double(key, value);
    if (bindings.empty()) throw UpdateError("instantiate_parameter needs at least one binding");
    return instantiate_parameter(m, bindings);
  }
  if (u.name == "auto_instantiate") {
    if (!data) throw UpdateError("auto_instantiate requires trajectory data");
    return auto_instantiate(m, *data);
  }
  if (u.name == "add_disturbance") {
    DisturbanceSpec spec;
    spec.ode_var = get("var");
    std::string kind = get_or("kind", "multiplicative");
    if (kind == "multiplicative") spec.kind = DisturbanceKind::multiplicative;
    else if (kind == "additive") spec.kind = DisturbanceKind::additive;
    else throw UpdateError("disturbance kind must be multiplicative or additive");
    spec.bound = parse_double("bound", get("bound"));
    return add_disturbance(m, spec);
  }
  if (u.name == "relax_worst_case") {
    RelaxSpec spec;
    spec.quantity_var = get("var");
    spec.bound_term = parse_term(get("term"));
    spec.order = static_cast<int>(parse_double("order", get_or("order", "1")));
    spec.horizon = parse_double("horizon", get("horizon"));
    for (const auto& [key, value] : p) {
      if (key.rfind("probe.", 0) == 0) {
        spec.probe_values[key.substr(6)] = parse_grid_values(key, value);
      }
    }
    return relax_worst_case(m, spec);
  }
  if (u.name == "static_to_circular") {
    return static_to_circular(m, get("x"), get("y"));
  }
  if (u.name == "learn_linear_dynamics") {
    if (!data) throw UpdateError("learn_linear_dynamics requires trajectory data");
    LearnSpec spec;
    auto it = p.find("safe");
    spec.safe = it == p.end() ? m.safe : parse_formula(it->second);
    spec.horizon = parse_double("horizon", get("horizon"));
    spec.name = get_or("name", "learned");
    for (const auto& [key, value] : p) {
      if (key.rfind("grid.", 0) == 0) {
        spec.action_grid.grids[key.substr(5)] = parse_grid_values(key, value);
      }
    }
    return learn_linear_dynamics(*data, spec);
  }
  throw UpdateError("unknown update '" + u.name + "'");
}

}  // namespace mulearn
