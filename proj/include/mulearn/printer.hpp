#pragma once

#include <string>

#include "mulearn/ast.hpp"

namespace mulearn {

// Shortest decimal string that parses back to exactly the same double.
std::string format_number(double v);

std::string print_term(const TermPtr& t);
std::string print_formula(const FormulaPtr& f);
std::string print_program(const HpPtr& p);

// Canonical textual form; parse_model(print_model(m)) reproduces m exactly.
std::string print_model(const Model& m);

void save_model(const Model& m, const std::string& path);

}  // namespace mulearn
