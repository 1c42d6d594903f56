#pragma once

#include <map>
#include <optional>

#include "mulearn/ast.hpp"

namespace mulearn {

using Substitution = std::map<std::string, TermPtr>;

// Capture-free simultaneous substitution of variables by terms.
TermPtr substitute(const TermPtr& t, const Substitution& sub);
FormulaPtr substitute(const FormulaPtr& f, const Substitution& sub);
// Substitutes in right-hand sides, tests and domains. Variables that are
// assignment targets or ODE left-hand sides must not appear in `sub`.
HpPtr substitute(const HpPtr& p, const Substitution& sub);

// Value of a closed term, if it is one (no free variables, no 0-division).
std::optional<double> const_value(const TermPtr& t);

// Constant folding plus unit/zero identities; result is semantically equal
// wherever the input evaluates.
TermPtr simplify(const TermPtr& t);
FormulaPtr simplify(const FormulaPtr& f);

// Symbolic partial derivative d t / d x.
TermPtr derivative(const TermPtr& t, const std::string& x);

// Lie derivative of t along the vector field of an ODE system:
// sum over equations of (d t / d x_i) * rhs_i.
TermPtr lie_derivative(const TermPtr& t, const std::vector<OdeEquation>& odes);

}  // namespace mulearn
