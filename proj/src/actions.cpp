#include <cmath>
#include <sstream>

#include "mulearn/printer.hpp"
#include "mulearn/rewrite.hpp"
#include "mulearn/semantics.hpp"

namespace mulearn {

bool same_effect(const Action& a, const Action& b) {
  return a.resolved == b.resolved;
}

std::string describe(const Action& a) {
  std::ostringstream os;
  bool first = true;
  for (auto& [v, x] : a.resolved) {
    if (!first) os << ", ";
    os << v << " := " << (x < 0 || std::signbit(x) ? "-" : "") << format_number(std::fabs(x));
    first = false;
  }
  return os.str();
}

namespace {

struct Branch {
  State concrete;        // state after the assignments so far
  Substitution effect;   // composed effect terms over the source state
};

// Walks every discrete path through ctrl, tracking both the concrete state
// (for test evaluation) and the composed symbolic effect.
void walk(const HpPtr& p, const Branch& b, const Discretization& d,
          std::vector<Branch>& out) {
  switch (p->kind) {
    case HybridProgram::Kind::Assign: {
      Branch nb = b;
      TermPtr composed = substitute(p->term, b.effect);
      nb.effect[p->var] = composed;
      nb.concrete[p->var] = eval_term(p->term, b.concrete);
      out.push_back(std::move(nb));
      return;
    }
    case HybridProgram::Kind::NondetAssign: {
      auto it = d.grids.find(p->var);
      if (it == d.grids.end() || it->second.empty())
        throw EvalError("no discretization grid for variable '" + p->var + "'");
      for (double v : it->second) {
        Branch nb = b;
        nb.effect[p->var] = num(v);
        nb.concrete[p->var] = v;
        out.push_back(nb);
      }
      return;
    }
    case HybridProgram::Kind::Test:
      if (eval_formula(p->formula, b.concrete)) out.push_back(b);
      return;
    case HybridProgram::Kind::Seq: {
      std::vector<Branch> mid;
      walk(p->first, b, d, mid);
      for (auto& m : mid) walk(p->second, m, d, out);
      return;
    }
    case HybridProgram::Kind::Choice:
      walk(p->first, b, d, out);
      walk(p->second, b, d, out);
      return;
    case HybridProgram::Kind::Loop:
      throw StructureError("loop-free ctrl violated");
    case HybridProgram::Kind::Ode:
      throw StructureError("ODE-free ctrl violated");
  }
}

}  // namespace

std::vector<Action> enumerate_actions(const HpPtr& ctrl, const State& s,
                                      const Discretization& d) {
  std::vector<Branch> branches;
  walk(ctrl, Branch{s, {}}, d, branches);
  std::vector<Action> actions;
  for (auto& b : branches) {
    if (b.effect.empty()) continue;  // pure-test path: no action to take
    Action a;
    a.effect = b.effect;
    for (auto& [v, t] : b.effect) {
      (void)t;
      a.resolved[v] = b.concrete.at(v);
    }
    bool dup = false;
    for (auto& seen : actions)
      if (same_effect(seen, a)) { dup = true; break; }
    if (!dup) actions.push_back(std::move(a));
  }
  return actions;
}

State apply_action(const Action& u, const State& s) {
  if (u.effect.empty()) throw EvalError("action with empty effect");
  State out = s;
  for (auto& [v, t] : u.effect) out[v] = eval_term(t, s);
  return out;
}

}  // namespace mulearn
