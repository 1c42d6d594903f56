#include "mulearn/rewrite.hpp"

#include <cmath>

namespace mulearn {

TermPtr substitute(const TermPtr& t, const Substitution& sm) {
  if (!t) return t;
  switch (t->kind) {
    case Term::Kind::Number: return t;
    case Term::Kind::Var: {
      auto it = sm.find(t->name);
      return it == sm.end() ? t : it->second;
    }
    case Term::Kind::Neg: return neg(substitute(t->lhs, sm));
    case Term::Kind::Pow: return pow(substitute(t->lhs, sm), t->exponent);
    case Term::Kind::Add: return add(substitute(t->lhs, sm), substitute(t->rhs, sm));
    case Term::Kind::Sub: return sub(substitute(t->lhs, sm), substitute(t->rhs, sm));
    case Term::Kind::Mul: return mul(substitute(t->lhs, sm), substitute(t->rhs, sm));
    case Term::Kind::Div: return div(substitute(t->lhs, sm), substitute(t->rhs, sm));
  }
  return t;
}

FormulaPtr substitute(const FormulaPtr& f, const Substitution& sm) {
  if (!f) return f;
  switch (f->kind) {
    case Formula::Kind::True:
    case Formula::Kind::False: return f;
    case Formula::Kind::Cmp:
      return cmp(f->op, substitute(f->term_lhs, sm), substitute(f->term_rhs, sm));
    case Formula::Kind::Not: return lnot(substitute(f->lhs, sm));
    case Formula::Kind::And: return land(substitute(f->lhs, sm), substitute(f->rhs, sm));
    case Formula::Kind::Or: return lor(substitute(f->lhs, sm), substitute(f->rhs, sm));
    case Formula::Kind::Imply: return imply(substitute(f->lhs, sm), substitute(f->rhs, sm));
  }
  return f;
}

HpPtr substitute(const HpPtr& p, const Substitution& sm) {
  if (!p) return p;
  switch (p->kind) {
    case HybridProgram::Kind::Assign:
      if (sm.count(p->var))
        throw StructureError("cannot substitute assigned variable '" + p->var + "'");
      return assign(p->var, substitute(p->term, sm));
    case HybridProgram::Kind::NondetAssign:
      if (sm.count(p->var))
        throw StructureError("cannot substitute assigned variable '" + p->var + "'");
      return p;
    case HybridProgram::Kind::Test: return test(substitute(p->formula, sm));
    case HybridProgram::Kind::Seq: return seq(substitute(p->first, sm), substitute(p->second, sm));
    case HybridProgram::Kind::Choice:
      return choice(substitute(p->first, sm), substitute(p->second, sm));
    case HybridProgram::Kind::Loop: return loop(substitute(p->first, sm));
    case HybridProgram::Kind::Ode: {
      std::vector<OdeEquation> eqs;
      for (auto& e : p->odes) {
        if (sm.count(e.var))
          throw StructureError("cannot substitute ODE variable '" + e.var + "'");
        eqs.push_back({e.var, substitute(e.rhs, sm)});
      }
      return ode(std::move(eqs), substitute(p->domain, sm));
    }
  }
  return p;
}

std::optional<double> const_value(const TermPtr& t) {
  switch (t->kind) {
    case Term::Kind::Number: return t->value;
    case Term::Kind::Var: return std::nullopt;
    case Term::Kind::Neg: {
      auto v = const_value(t->lhs);
      return v ? std::optional<double>(-*v) : std::nullopt;
    }
    case Term::Kind::Pow: {
      auto v = const_value(t->lhs);
      if (!v) return std::nullopt;
      double r = 1;
      for (int i = 0; i < t->exponent; ++i) r *= *v;
      return r;
    }
    default: {
      auto a = const_value(t->lhs), b = const_value(t->rhs);
      if (!a || !b) return std::nullopt;
      switch (t->kind) {
        case Term::Kind::Add: return *a + *b;
        case Term::Kind::Sub: return *a - *b;
        case Term::Kind::Mul: return *a * *b;
        case Term::Kind::Div: return *b == 0 ? std::nullopt : std::optional<double>(*a / *b);
        default: return std::nullopt;
      }
    }
  }
}

static bool is_num(const TermPtr& t, double v) {
  return t->kind == Term::Kind::Number && t->value == v;
}

TermPtr simplify(const TermPtr& t) {
  if (!t) return t;
  if (auto v = const_value(t); v && std::isfinite(*v)) return num(*v);
  switch (t->kind) {
    case Term::Kind::Number:
    case Term::Kind::Var: return t;
    case Term::Kind::Neg: {
      TermPtr a = simplify(t->lhs);
      if (a->kind == Term::Kind::Neg) return a->lhs;
      return neg(a);
    }
    case Term::Kind::Pow: {
      TermPtr a = simplify(t->lhs);
      if (t->exponent == 0) return num(1);
      if (t->exponent == 1) return a;
      return pow(a, t->exponent);
    }
    case Term::Kind::Add: {
      TermPtr a = simplify(t->lhs), b = simplify(t->rhs);
      if (is_num(a, 0)) return b;
      if (is_num(b, 0)) return a;
      return add(a, b);
    }
    case Term::Kind::Sub: {
      TermPtr a = simplify(t->lhs), b = simplify(t->rhs);
      if (is_num(b, 0)) return a;
      if (is_num(a, 0)) return simplify(neg(b));
      return sub(a, b);
    }
    case Term::Kind::Mul: {
      TermPtr a = simplify(t->lhs), b = simplify(t->rhs);
      if (is_num(a, 0) || is_num(b, 0)) return num(0);
      if (is_num(a, 1)) return b;
      if (is_num(b, 1)) return a;
      return mul(a, b);
    }
    case Term::Kind::Div: {
      TermPtr a = simplify(t->lhs), b = simplify(t->rhs);
      if (is_num(b, 1)) return a;
      if (is_num(a, 0)) return num(0);
      return div(a, b);
    }
  }
  return t;
}

FormulaPtr simplify(const FormulaPtr& f) {
  if (!f) return f;
  switch (f->kind) {
    case Formula::Kind::True:
    case Formula::Kind::False: return f;
    case Formula::Kind::Cmp:
      return cmp(f->op, simplify(f->term_lhs), simplify(f->term_rhs));
    case Formula::Kind::Not: {
      FormulaPtr a = simplify(f->lhs);
      if (a->kind == Formula::Kind::True) return falsity();
      if (a->kind == Formula::Kind::False) return truth();
      return lnot(a);
    }
    case Formula::Kind::And: {
      FormulaPtr a = simplify(f->lhs), b = simplify(f->rhs);
      if (a->kind == Formula::Kind::False || b->kind == Formula::Kind::False) return falsity();
      if (a->kind == Formula::Kind::True) return b;
      if (b->kind == Formula::Kind::True) return a;
      return land(a, b);
    }
    case Formula::Kind::Or: {
      FormulaPtr a = simplify(f->lhs), b = simplify(f->rhs);
      if (a->kind == Formula::Kind::True || b->kind == Formula::Kind::True) return truth();
      if (a->kind == Formula::Kind::False) return b;
      if (b->kind == Formula::Kind::False) return a;
      return lor(a, b);
    }
    case Formula::Kind::Imply: {
      FormulaPtr a = simplify(f->lhs), b = simplify(f->rhs);
      if (a->kind == Formula::Kind::False || b->kind == Formula::Kind::True) return truth();
      if (a->kind == Formula::Kind::True) return b;
      return imply(a, b);
    }
  }
  return f;
}

TermPtr derivative(const TermPtr& t, const std::string& x) {
  switch (t->kind) {
    case Term::Kind::Number: return num(0);
    case Term::Kind::Var: return num(t->name == x ? 1 : 0);
    case Term::Kind::Neg: return neg(derivative(t->lhs, x));
    case Term::Kind::Add: return add(derivative(t->lhs, x), derivative(t->rhs, x));
    case Term::Kind::Sub: return sub(derivative(t->lhs, x), derivative(t->rhs, x));
    case Term::Kind::Mul:
      return add(mul(derivative(t->lhs, x), t->rhs), mul(t->lhs, derivative(t->rhs, x)));
    case Term::Kind::Div:
      return div(sub(mul(derivative(t->lhs, x), t->rhs), mul(t->lhs, derivative(t->rhs, x))),
                 pow(t->rhs, 2));
    case Term::Kind::Pow: {
      if (t->exponent == 0) return num(0);
      return mul(mul(num(t->exponent), pow(t->lhs, t->exponent - 1)), derivative(t->lhs, x));
    }
  }
  return num(0);
}

TermPtr lie_derivative(const TermPtr& t, const std::vector<OdeEquation>& odes) {
  TermPtr acc = num(0);
  for (auto& e : odes) acc = add(acc, mul(derivative(t, e.var), e.rhs));
  return simplify(acc);
}

}  // namespace mulearn
