#include "mulearn/ast.hpp"

#include <cmath>

namespace mulearn {

// --- term factories --------------------------------------------------------

TermPtr num(double v) {
  if (std::isnan(v)) throw StructureError("numeric literal is NaN");
  if (v < 0 || std::signbit(v)) return neg(num(-v));
  auto t = std::make_shared<Term>();
  t->kind = Term::Kind::Number;
  t->value = v;
  return t;
}

TermPtr var(std::string name) {
  if (name.empty()) throw StructureError("variable name is empty");
  auto t = std::make_shared<Term>();
  t->kind = Term::Kind::Var;
  t->name = std::move(name);
  return t;
}

static TermPtr unary(Term::Kind k, TermPtr a) {
  auto t = std::make_shared<Term>();
  t->kind = k;
  t->lhs = std::move(a);
  return t;
}

static TermPtr binary(Term::Kind k, TermPtr a, TermPtr b) {
  auto t = std::make_shared<Term>();
  t->kind = k;
  t->lhs = std::move(a);
  t->rhs = std::move(b);
  return t;
}

TermPtr neg(TermPtr t) { return unary(Term::Kind::Neg, std::move(t)); }
TermPtr add(TermPtr a, TermPtr b) { return binary(Term::Kind::Add, std::move(a), std::move(b)); }
TermPtr sub(TermPtr a, TermPtr b) { return binary(Term::Kind::Sub, std::move(a), std::move(b)); }
TermPtr mul(TermPtr a, TermPtr b) { return binary(Term::Kind::Mul, std::move(a), std::move(b)); }

TermPtr div(TermPtr a, TermPtr b) {
  if (b->kind == Term::Kind::Number && b->value == 0)
    throw StructureError("division by constant zero");
  return binary(Term::Kind::Div, std::move(a), std::move(b));
}

TermPtr pow(TermPtr base, int exponent) {
  if (exponent < 0) throw StructureError("negative exponent");
  auto t = unary(Term::Kind::Pow, std::move(base));
  const_cast<Term&>(*t).exponent = exponent;
  return t;
}

bool equal(const TermPtr& a, const TermPtr& b) {
  if (a == b) return true;
  if (!a || !b || a->kind != b->kind) return false;
  switch (a->kind) {
    case Term::Kind::Number: return a->value == b->value;
    case Term::Kind::Var: return a->name == b->name;
    case Term::Kind::Neg: return equal(a->lhs, b->lhs);
    case Term::Kind::Pow: return a->exponent == b->exponent && equal(a->lhs, b->lhs);
    default: return equal(a->lhs, b->lhs) && equal(a->rhs, b->rhs);
  }
}

// --- formula factories -----------------------------------------------------

static FormulaPtr mk_formula(Formula::Kind k) {
  auto f = std::make_shared<Formula>();
  f->kind = k;
  return f;
}

FormulaPtr truth() { return mk_formula(Formula::Kind::True); }
FormulaPtr falsity() { return mk_formula(Formula::Kind::False); }

FormulaPtr cmp(CmpOp op, TermPtr l, TermPtr r) {
  auto f = std::make_shared<Formula>();
  f->kind = Formula::Kind::Cmp;
  f->op = op;
  f->term_lhs = std::move(l);
  f->term_rhs = std::move(r);
  return f;
}

FormulaPtr lnot(FormulaPtr f) {
  auto r = mk_formula(Formula::Kind::Not);
  const_cast<Formula&>(*r).lhs = std::move(f);
  return r;
}

static FormulaPtr fbinary(Formula::Kind k, FormulaPtr a, FormulaPtr b) {
  auto f = mk_formula(k);
  const_cast<Formula&>(*f).lhs = std::move(a);
  const_cast<Formula&>(*f).rhs = std::move(b);
  return f;
}

FormulaPtr land(FormulaPtr a, FormulaPtr b) { return fbinary(Formula::Kind::And, std::move(a), std::move(b)); }
FormulaPtr lor(FormulaPtr a, FormulaPtr b) { return fbinary(Formula::Kind::Or, std::move(a), std::move(b)); }
FormulaPtr imply(FormulaPtr a, FormulaPtr b) { return fbinary(Formula::Kind::Imply, std::move(a), std::move(b)); }

bool equal(const FormulaPtr& a, const FormulaPtr& b) {
  if (a == b) return true;
  if (!a || !b || a->kind != b->kind) return false;
  switch (a->kind) {
    case Formula::Kind::True:
    case Formula::Kind::False: return true;
    case Formula::Kind::Cmp:
      return a->op == b->op && equal(a->term_lhs, b->term_lhs) && equal(a->term_rhs, b->term_rhs);
    case Formula::Kind::Not: return equal(a->lhs, b->lhs);
    default: return equal(a->lhs, b->lhs) && equal(a->rhs, b->rhs);
  }
}

// --- program factories -----------------------------------------------------

static HpPtr mk_hp(HybridProgram::Kind k) {
  auto p = std::make_shared<HybridProgram>();
  p->kind = k;
  return p;
}

HpPtr assign(std::string v, TermPtr t) {
  auto p = mk_hp(HybridProgram::Kind::Assign);
  auto& m = const_cast<HybridProgram&>(*p);
  m.var = std::move(v);
  m.term = std::move(t);
  return p;
}

HpPtr nondet_assign(std::string v) {
  auto p = mk_hp(HybridProgram::Kind::NondetAssign);
  const_cast<HybridProgram&>(*p).var = std::move(v);
  return p;
}

HpPtr test(FormulaPtr f) {
  auto p = mk_hp(HybridProgram::Kind::Test);
  const_cast<HybridProgram&>(*p).formula = std::move(f);
  return p;
}

HpPtr seq(HpPtr a, HpPtr b) {
  auto p = mk_hp(HybridProgram::Kind::Seq);
  auto& m = const_cast<HybridProgram&>(*p);
  m.first = std::move(a);
  m.second = std::move(b);
  return p;
}

HpPtr choice(HpPtr a, HpPtr b) {
  auto p = mk_hp(HybridProgram::Kind::Choice);
  auto& m = const_cast<HybridProgram&>(*p);
  m.first = std::move(a);
  m.second = std::move(b);
  return p;
}

HpPtr loop(HpPtr body) {
  auto p = mk_hp(HybridProgram::Kind::Loop);
  const_cast<HybridProgram&>(*p).first = std::move(body);
  return p;
}

HpPtr ode(std::vector<OdeEquation> eqs, FormulaPtr domain) {
  if (eqs.empty()) throw StructureError("ODE system is empty");
  std::set<std::string> seen;
  for (auto& e : eqs)
    if (!seen.insert(e.var).second)
      throw StructureError("duplicate ODE variable '" + e.var + "'");
  auto p = mk_hp(HybridProgram::Kind::Ode);
  auto& m = const_cast<HybridProgram&>(*p);
  m.odes = std::move(eqs);
  m.domain = domain ? std::move(domain) : truth();
  return p;
}

bool equal(const HpPtr& a, const HpPtr& b) {
  if (a == b) return true;
  if (!a || !b || a->kind != b->kind) return false;
  switch (a->kind) {
    case HybridProgram::Kind::Assign:
      return a->var == b->var && equal(a->term, b->term);
    case HybridProgram::Kind::NondetAssign: return a->var == b->var;
    case HybridProgram::Kind::Test: return equal(a->formula, b->formula);
    case HybridProgram::Kind::Seq:
    case HybridProgram::Kind::Choice:
      return equal(a->first, b->first) && equal(a->second, b->second);
    case HybridProgram::Kind::Loop: return equal(a->first, b->first);
    case HybridProgram::Kind::Ode: {
      if (a->odes.size() != b->odes.size()) return false;
      for (size_t i = 0; i < a->odes.size(); ++i)
        if (a->odes[i].var != b->odes[i].var || !equal(a->odes[i].rhs, b->odes[i].rhs))
          return false;
      return equal(a->domain, b->domain);
    }
  }
  return false;
}

bool equal(const Model& a, const Model& b) {
  return a.name == b.name && equal(a.init, b.init) && equal(a.ctrl, b.ctrl) &&
         equal(a.plant, b.plant) && equal(a.safe, b.safe) && a.constants == b.constants &&
         a.clock == b.clock;
}

// --- structural queries ----------------------------------------------------

void collect_free_vars(const TermPtr& t, std::set<std::string>& out) {
  if (!t) return;
  if (t->kind == Term::Kind::Var) out.insert(t->name);
  collect_free_vars(t->lhs, out);
  collect_free_vars(t->rhs, out);
}

void collect_free_vars(const FormulaPtr& f, std::set<std::string>& out) {
  if (!f) return;
  collect_free_vars(f->term_lhs, out);
  collect_free_vars(f->term_rhs, out);
  collect_free_vars(f->lhs, out);
  collect_free_vars(f->rhs, out);
}

void collect_free_vars(const HpPtr& p, std::set<std::string>& out) {
  if (!p) return;
  switch (p->kind) {
    case HybridProgram::Kind::Assign:
      out.insert(p->var);
      collect_free_vars(p->term, out);
      break;
    case HybridProgram::Kind::NondetAssign:
      out.insert(p->var);
      break;
    case HybridProgram::Kind::Test:
      collect_free_vars(p->formula, out);
      break;
    case HybridProgram::Kind::Ode:
      for (auto& e : p->odes) {
        out.insert(e.var);
        collect_free_vars(e.rhs, out);
      }
      collect_free_vars(p->domain, out);
      break;
    default:
      collect_free_vars(p->first, out);
      collect_free_vars(p->second, out);
  }
}

std::set<std::string> free_vars(const TermPtr& t) {
  std::set<std::string> out;
  collect_free_vars(t, out);
  return out;
}

std::set<std::string> free_vars(const FormulaPtr& f) {
  std::set<std::string> out;
  collect_free_vars(f, out);
  return out;
}

std::set<std::string> free_vars(const Model& m) {
  std::set<std::string> out;
  collect_free_vars(m.init, out);
  collect_free_vars(m.ctrl, out);
  collect_free_vars(m.plant, out);
  collect_free_vars(m.safe, out);
  return out;
}

static void collect_assigned(const HpPtr& p, std::set<std::string>& out) {
  if (!p) return;
  switch (p->kind) {
    case HybridProgram::Kind::Assign:
    case HybridProgram::Kind::NondetAssign:
      out.insert(p->var);
      break;
    case HybridProgram::Kind::Test:
    case HybridProgram::Kind::Ode:
      break;
    default:
      collect_assigned(p->first, out);
      collect_assigned(p->second, out);
  }
}

std::set<std::string> assigned_vars(const HpPtr& p) {
  std::set<std::string> out;
  collect_assigned(p, out);
  return out;
}

std::set<std::string> ode_vars(const HpPtr& plant) {
  std::set<std::string> out;
  if (plant && plant->kind == HybridProgram::Kind::Ode)
    for (auto& e : plant->odes) out.insert(e.var);
  return out;
}

bool contains_loop(const HpPtr& p) {
  if (!p) return false;
  if (p->kind == HybridProgram::Kind::Loop) return true;
  return contains_loop(p->first) || contains_loop(p->second);
}

bool contains_ode(const HpPtr& p) {
  if (!p) return false;
  if (p->kind == HybridProgram::Kind::Ode) return true;
  return contains_ode(p->first) || contains_ode(p->second);
}

std::set<std::string> parameters(const Model& m) {
  std::set<std::string> params = free_vars(m);
  for (auto& v : assigned_vars(m.ctrl)) params.erase(v);
  for (auto& v : ode_vars(m.plant)) params.erase(v);
  return params;
}

// --- ctrl must reset the clock on every execution path ---------------------

static bool every_path_resets(const HpPtr& p, const std::string& clock) {
  if (!p) return false;
  switch (p->kind) {
    case HybridProgram::Kind::Assign:
      return p->var == clock && p->term->kind == Term::Kind::Number && p->term->value == 0;
    case HybridProgram::Kind::Seq:
      return every_path_resets(p->first, clock) || every_path_resets(p->second, clock);
    case HybridProgram::Kind::Choice:
      return every_path_resets(p->first, clock) && every_path_resets(p->second, clock);
    default:
      return false;
  }
}

void validate_model(const Model& m) {
  if (!m.init || !m.ctrl || !m.plant || !m.safe)
    throw StructureError("model is missing a section");
  if (contains_loop(m.ctrl)) throw StructureError("loop-free ctrl violated");
  if (contains_ode(m.ctrl)) throw StructureError("ODE-free ctrl violated");
  if (m.plant->kind != HybridProgram::Kind::Ode)
    throw StructureError("plant must be a single ODE system");
  if (contains_loop(m.plant)) throw StructureError("loop inside plant");

  std::set<std::string> declared;
  collect_free_vars(m.init, declared);
  collect_free_vars(m.ctrl, declared);
  collect_free_vars(m.plant, declared);
  for (auto& v : free_vars(m.safe))
    if (!declared.count(v))
      throw StructureError("safe references unknown variable '" + v + "'");

  if (m.clock) {
    const std::string& c = *m.clock;
    bool in_plant = false;
    for (auto& e : m.plant->odes)
      if (e.var == c)
        in_plant = e.rhs->kind == Term::Kind::Number && e.rhs->value == 1;
    if (!in_plant)
      throw StructureError("clock '" + c + "' must evolve with " + c + "'=1 in plant");
    if (!every_path_resets(m.ctrl, c))
      throw StructureError("clock '" + c + "' must be reset to 0 on every ctrl path");
  }
}

}  // namespace mulearn
