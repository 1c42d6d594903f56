#include "mulearn/printer.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mulearn {

std::string format_number(double v) {
  if (!std::isfinite(v)) throw StructureError("cannot print non-finite number");
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

namespace {

// Precedence levels; a child is parenthesized when its level is below the
// minimum its position requires.
constexpr int kTermAdd = 1, kTermMul = 2, kTermNeg = 3, kTermPow = 4, kTermAtom = 5;

int term_level(const Term& t) {
  switch (t.kind) {
    case Term::Kind::Add:
    case Term::Kind::Sub: return kTermAdd;
    case Term::Kind::Mul:
    case Term::Kind::Div: return kTermMul;
    case Term::Kind::Neg: return kTermNeg;
    case Term::Kind::Pow: return kTermPow;
    default: return kTermAtom;
  }
}

void emit(std::ostream& os, const TermPtr& t, int min_level) {
  bool paren = term_level(*t) < min_level;
  if (paren) os << '(';
  switch (t->kind) {
    case Term::Kind::Number: os << format_number(t->value); break;
    case Term::Kind::Var: os << t->name; break;
    case Term::Kind::Neg:
      os << '-';
      emit(os, t->lhs, kTermNeg);
      break;
    case Term::Kind::Add:
      emit(os, t->lhs, kTermAdd);
      os << " + ";
      emit(os, t->rhs, kTermMul);
      break;
    case Term::Kind::Sub:
      emit(os, t->lhs, kTermAdd);
      os << " - ";
      emit(os, t->rhs, kTermMul);
      break;
    case Term::Kind::Mul:
      emit(os, t->lhs, kTermMul);
      os << " * ";
      emit(os, t->rhs, kTermNeg);
      break;
    case Term::Kind::Div:
      emit(os, t->lhs, kTermMul);
      os << " / ";
      emit(os, t->rhs, kTermNeg);
      break;
    case Term::Kind::Pow:
      emit(os, t->lhs, kTermAtom);
      os << '^' << t->exponent;
      break;
  }
  if (paren) os << ')';
}

const char* cmp_text(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return " = ";
    case CmpOp::Ne: return " != ";
    case CmpOp::Ge: return " >= ";
    case CmpOp::Gt: return " > ";
    case CmpOp::Le: return " <= ";
    case CmpOp::Lt: return " < ";
  }
  return "?";
}

constexpr int kFmlImply = 1, kFmlOr = 2, kFmlAnd = 3, kFmlNot = 4, kFmlAtom = 5;

int formula_level(const Formula& f) {
  switch (f.kind) {
    case Formula::Kind::Imply: return kFmlImply;
    case Formula::Kind::Or: return kFmlOr;
    case Formula::Kind::And: return kFmlAnd;
    case Formula::Kind::Not: return kFmlNot;
    default: return kFmlAtom;
  }
}

void emit(std::ostream& os, const FormulaPtr& f, int min_level) {
  bool paren = formula_level(*f) < min_level;
  if (paren) os << '(';
  switch (f->kind) {
    case Formula::Kind::True: os << "true"; break;
    case Formula::Kind::False: os << "false"; break;
    case Formula::Kind::Cmp:
      emit(os, f->term_lhs, kTermAdd);
      os << cmp_text(f->op);
      emit(os, f->term_rhs, kTermAdd);
      break;
    case Formula::Kind::Not:
      os << '!';
      if (f->lhs->kind == Formula::Kind::Cmp) {
        os << '(';
        emit(os, f->lhs, kFmlImply);
        os << ')';
      } else {
        emit(os, f->lhs, kFmlNot);
      }
      break;
    case Formula::Kind::And:
      emit(os, f->lhs, kFmlAnd);
      os << " & ";
      emit(os, f->rhs, kFmlNot);
      break;
    case Formula::Kind::Or:
      emit(os, f->lhs, kFmlOr);
      os << " | ";
      emit(os, f->rhs, kFmlAnd);
      break;
    case Formula::Kind::Imply:
      emit(os, f->lhs, kFmlOr);
      os << " -> ";
      emit(os, f->rhs, kFmlImply);
      break;
  }
  if (paren) os << ')';
}

constexpr int kHpChoice = 1, kHpSeq = 2, kHpAtom = 3;

int hp_level(const HybridProgram& p) {
  switch (p.kind) {
    case HybridProgram::Kind::Choice: return kHpChoice;
    case HybridProgram::Kind::Seq: return kHpSeq;
    default: return kHpAtom;
  }
}

void emit(std::ostream& os, const HpPtr& p, int min_level) {
  bool paren = hp_level(*p) < min_level;
  if (paren) os << '{';
  switch (p->kind) {
    case HybridProgram::Kind::Assign:
      os << p->var << " := ";
      emit(os, p->term, kTermAdd);
      break;
    case HybridProgram::Kind::NondetAssign:
      os << p->var << " := *";
      break;
    case HybridProgram::Kind::Test:
      os << '?';
      emit(os, p->formula, kFmlImply);
      break;
    case HybridProgram::Kind::Seq:
      emit(os, p->first, kHpSeq);
      os << "; ";
      emit(os, p->second, kHpAtom);
      break;
    case HybridProgram::Kind::Choice:
      emit(os, p->first, kHpChoice);
      os << " ++ ";
      emit(os, p->second, kHpSeq);
      break;
    case HybridProgram::Kind::Loop:
      os << '{';
      emit(os, p->first, kHpChoice);
      os << "}*";
      break;
    case HybridProgram::Kind::Ode: {
      os << '{';
      bool first = true;
      for (auto& e : p->odes) {
        if (!first) os << ", ";
        os << e.var << "' = ";
        emit(os, e.rhs, kTermAdd);
        first = false;
      }
      if (p->domain->kind != Formula::Kind::True) {
        os << " & ";
        emit(os, p->domain, kFmlNot);
      }
      os << '}';
      break;
    }
  }
  if (paren) os << '}';
}

}  // namespace

std::string print_term(const TermPtr& t) {
  std::ostringstream os;
  emit(os, t, kTermAdd);
  return os.str();
}

std::string print_formula(const FormulaPtr& f) {
  std::ostringstream os;
  emit(os, f, kFmlImply);
  return os.str();
}

std::string print_program(const HpPtr& p) {
  std::ostringstream os;
  emit(os, p, kHpChoice);
  return os.str();
}

std::string print_model(const Model& m) {
  std::ostringstream os;
  os << "model: " << m.name << ";\n";
  if (!m.constants.empty()) {
    os << "constants: ";
    bool first = true;
    for (auto& [name, value] : m.constants) {
      if (!first) os << ", ";
      os << name << " = " << (value < 0 ? "-" : "") << format_number(std::fabs(value));
      first = false;
    }
    os << ";\n";
  }
  if (m.clock) os << "clock: " << *m.clock << ";\n";
  os << "init: " << print_formula(m.init) << ";\n";
  os << "ctrl: " << print_program(m.ctrl) << ";\n";
  os << "plant: " << print_program(m.plant) << ";\n";
  os << "safe: " << print_formula(m.safe) << ";\n";
  return os.str();
}

void save_model(const Model& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << print_model(m);
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace mulearn
