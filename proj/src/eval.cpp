#include "mulearn/semantics.hpp"

#include <cmath>

namespace mulearn {

double eval_term(const TermPtr& t, const State& s) {
  switch (t->kind) {
    case Term::Kind::Number: return t->value;
    case Term::Kind::Var: {
      auto it = s.find(t->name);
      if (it == s.end()) throw EvalError("unbound variable '" + t->name + "'");
      return it->second;
    }
    case Term::Kind::Neg: return -eval_term(t->lhs, s);
    case Term::Kind::Add: return eval_term(t->lhs, s) + eval_term(t->rhs, s);
    case Term::Kind::Sub: return eval_term(t->lhs, s) - eval_term(t->rhs, s);
    case Term::Kind::Mul: return eval_term(t->lhs, s) * eval_term(t->rhs, s);
    case Term::Kind::Div: {
      double d = eval_term(t->rhs, s);
      if (d == 0) throw EvalError("division by zero");
      return eval_term(t->lhs, s) / d;
    }
    case Term::Kind::Pow: {
      double b = eval_term(t->lhs, s), r = 1;
      for (int i = 0; i < t->exponent; ++i) r *= b;
      return r;
    }
  }
  throw EvalError("malformed term");
}

bool eval_formula(const FormulaPtr& f, const State& s) {
  switch (f->kind) {
    case Formula::Kind::True: return true;
    case Formula::Kind::False: return false;
    case Formula::Kind::Cmp: {
      double l = eval_term(f->term_lhs, s), r = eval_term(f->term_rhs, s);
      switch (f->op) {
        case CmpOp::Eq: return l == r;
        case CmpOp::Ne: return l != r;
        case CmpOp::Ge: return l >= r;
        case CmpOp::Gt: return l > r;
        case CmpOp::Le: return l <= r;
        case CmpOp::Lt: return l < r;
      }
      return false;
    }
    case Formula::Kind::Not: return !eval_formula(f->lhs, s);
    case Formula::Kind::And: return eval_formula(f->lhs, s) && eval_formula(f->rhs, s);
    case Formula::Kind::Or: return eval_formula(f->lhs, s) || eval_formula(f->rhs, s);
    case Formula::Kind::Imply: return !eval_formula(f->lhs, s) || eval_formula(f->rhs, s);
  }
  throw EvalError("malformed formula");
}

}  // namespace mulearn
