#pragma once

#include <stdexcept>
#include <string>

#include "mulearn/ast.hpp"

namespace mulearn {

// Parse failure with 1-based source position.
struct ParseError : std::runtime_error {
  int line;
  int column;
  ParseError(int line, int column, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ", column " +
                           std::to_string(column) + ": " + what),
        line(line),
        column(column) {}
};

// Parses the textual model format:
//
//   model:     name;          (optional)
//   constants: B = 2, T = 0.1; (optional)
//   clock:     t;             (optional)
//   init:  formula;
//   ctrl:  program;
//   plant: {x'=term, ... & formula};
//   safe:  formula;
//
// Sections may appear in any order; init/ctrl/plant/safe are required.
// Canonical-form invariants are checked (see validate_model) and violations
// surface as ParseError at the section's position.
Model parse_model(const std::string& text);

// Stand-alone entry points used by the CLI and tests.
TermPtr parse_term(const std::string& text);
FormulaPtr parse_formula(const std::string& text);
HpPtr parse_program(const std::string& text);

// Reads a file and parses it; wraps I/O failure in std::runtime_error.
Model load_model(const std::string& path);

}  // namespace mulearn
