#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace mulearn {

// ---------------------------------------------------------------------------
// Terms: arithmetic expressions over the reals.
// Trees are immutable and shared; all factories canonicalize so that
// structural equality is well defined (e.g. no negative Number nodes).
// ---------------------------------------------------------------------------

struct Term;
using TermPtr = std::shared_ptr<const Term>;

struct Term {
  enum class Kind { Number, Var, Neg, Add, Sub, Mul, Div, Pow };

  Kind kind;
  double value = 0.0;     // Number (always >= 0; negatives use Neg)
  std::string name;       // Var
  TermPtr lhs, rhs;       // binary nodes; Neg/Pow use lhs only
  int exponent = 0;       // Pow, >= 0
};

TermPtr num(double v);
TermPtr var(std::string name);
TermPtr neg(TermPtr t);
TermPtr add(TermPtr a, TermPtr b);
TermPtr sub(TermPtr a, TermPtr b);
TermPtr mul(TermPtr a, TermPtr b);
TermPtr div(TermPtr a, TermPtr b);  // throws StructureError on literal zero denominator
TermPtr pow(TermPtr base, int exponent);

bool equal(const TermPtr& a, const TermPtr& b);

// ---------------------------------------------------------------------------
// Formulas: quantifier-free real arithmetic.
// ---------------------------------------------------------------------------

enum class CmpOp { Eq, Ne, Ge, Gt, Le, Lt };

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Formula {
  enum class Kind { True, False, Cmp, Not, And, Or, Imply };

  Kind kind;
  CmpOp op = CmpOp::Eq;   // Cmp
  TermPtr term_lhs, term_rhs;
  FormulaPtr lhs, rhs;    // Not uses lhs only
};

FormulaPtr truth();
FormulaPtr falsity();
FormulaPtr cmp(CmpOp op, TermPtr l, TermPtr r);
FormulaPtr lnot(FormulaPtr f);
FormulaPtr land(FormulaPtr a, FormulaPtr b);
FormulaPtr lor(FormulaPtr a, FormulaPtr b);
FormulaPtr imply(FormulaPtr a, FormulaPtr b);

bool equal(const FormulaPtr& a, const FormulaPtr& b);

// ---------------------------------------------------------------------------
// Hybrid programs.
// ---------------------------------------------------------------------------

struct HybridProgram;
using HpPtr = std::shared_ptr<const HybridProgram>;

struct OdeEquation {
  std::string var;
  TermPtr rhs;
};

struct HybridProgram {
  enum class Kind { Assign, NondetAssign, Test, Seq, Choice, Loop, Ode };

  Kind kind;
  std::string var;               // Assign / NondetAssign
  TermPtr term;                  // Assign rhs
  FormulaPtr formula;            // Test
  HpPtr first, second;           // Seq / Choice; Loop uses first
  std::vector<OdeEquation> odes; // Ode
  FormulaPtr domain;             // Ode evolution domain (default true)
};

HpPtr assign(std::string v, TermPtr t);
HpPtr nondet_assign(std::string v);
HpPtr test(FormulaPtr f);
HpPtr seq(HpPtr a, HpPtr b);
HpPtr choice(HpPtr a, HpPtr b);
HpPtr loop(HpPtr body);
HpPtr ode(std::vector<OdeEquation> eqs, FormulaPtr domain);

bool equal(const HpPtr& a, const HpPtr& b);

// ---------------------------------------------------------------------------
// Model: canonical form  init -> [{ctrl; plant}*] safe
// ---------------------------------------------------------------------------

struct Model {
  std::string name = "model";
  FormulaPtr init;
  HpPtr ctrl;
  HpPtr plant;                         // single Ode node
  FormulaPtr safe;
  std::map<std::string, double> constants;  // bound symbolic parameters
  std::optional<std::string> clock;         // time-aware local clock variable
};

bool equal(const Model& a, const Model& b);

// Raised when a structurally invalid AST is built or a model violates the
// canonical-form invariants; the message names the violated invariant.
struct StructureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checks every canonical-form invariant; throws StructureError on the first
// violation. Parsers and model updates both funnel through this.
void validate_model(const Model& m);

// --- structural queries ----------------------------------------------------

void collect_free_vars(const TermPtr& t, std::set<std::string>& out);
void collect_free_vars(const FormulaPtr& f, std::set<std::string>& out);
void collect_free_vars(const HpPtr& p, std::set<std::string>& out);

std::set<std::string> free_vars(const TermPtr& t);
std::set<std::string> free_vars(const FormulaPtr& f);
std::set<std::string> free_vars(const Model& m);

// Variables written by := or :=* anywhere in the program.
std::set<std::string> assigned_vars(const HpPtr& p);
// Left-hand variables of the plant ODE system.
std::set<std::string> ode_vars(const HpPtr& plant);

bool contains_loop(const HpPtr& p);
bool contains_ode(const HpPtr& p);

// Free variables of the model that are never assigned and have no ODE:
// the syntactic parameters (candidates for instantiation).
std::set<std::string> parameters(const Model& m);

}  // namespace mulearn
