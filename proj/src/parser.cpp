#include "mulearn/parser.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

namespace mulearn {
namespace {

enum class Tok {
  Ident, Number, End,
  Semi, Colon, Walrus, Comma, Question, Prime,
  LParen, RParen, LBrace, RBrace,
  Plus, Minus, Star, Slash, Caret, PlusPlus,
  Amp, Pipe, Bang, Arrow,
  Eq, Ne, Ge, Gt, Le, Lt,
};

const char* tok_name(Tok t) {
  switch (t) {
    case Tok::Ident: return "identifier";
    case Tok::Number: return "number";
    case Tok::End: return "end of input";
    case Tok::Semi: return "';'";
    case Tok::Colon: return "':'";
    case Tok::Walrus: return "':='";
    case Tok::Comma: return "','";
    case Tok::Question: return "'?'";
    case Tok::Prime: return "'''";
    case Tok::LParen: return "'('";
    case Tok::RParen: return "')'";
    case Tok::LBrace: return "'{'";
    case Tok::RBrace: return "'}'";
    case Tok::Plus: return "'+'";
    case Tok::Minus: return "'-'";
    case Tok::Star: return "'*'";
    case Tok::Slash: return "'/'";
    case Tok::Caret: return "'^'";
    case Tok::PlusPlus: return "'++'";
    case Tok::Amp: return "'&'";
    case Tok::Pipe: return "'|'";
    case Tok::Bang: return "'!'";
    case Tok::Arrow: return "'->'";
    case Tok::Eq: return "'='";
    case Tok::Ne: return "'!='";
    case Tok::Ge: return "'>='";
    case Tok::Gt: return "'>'";
    case Tok::Le: return "'<='";
    case Tok::Lt: return "'<'";
  }
  return "?";
}

struct Token {
  Tok kind;
  std::string text;   // Ident
  double value = 0;   // Number
  int line = 1, column = 1;
};

std::vector<Token> lex(const std::string& src) {
  std::vector<Token> out;
  int line = 1, col = 1;
  size_t i = 0;
  auto push = [&](Tok k, int l, int c) { out.push_back({k, "", 0, l, c}); };
  while (i < src.size()) {
    char ch = src[i];
    if (ch == '\n') { ++line; col = 1; ++i; continue; }
    if (std::isspace(static_cast<unsigned char>(ch))) { ++col; ++i; continue; }
    if (ch == '#' || (ch == '/' && i + 1 < src.size() && src[i + 1] == '/')) {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    int l = line, c = col;
    if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
      size_t j = i;
      while (j < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_'))
        ++j;
      out.push_back({Tok::Ident, src.substr(i, j - i), 0, l, c});
      col += int(j - i);
      i = j;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(ch))) {
      const char* start = src.c_str() + i;
      char* end = nullptr;
      double v = std::strtod(start, &end);
      size_t n = size_t(end - start);
      out.push_back({Tok::Number, src.substr(i, n), v, l, c});
      col += int(n);
      i += n;
      continue;
    }
    auto two = [&](char next) { return i + 1 < src.size() && src[i + 1] == next; };
    switch (ch) {
      case ';': push(Tok::Semi, l, c); break;
      case ',': push(Tok::Comma, l, c); break;
      case '?': push(Tok::Question, l, c); break;
      case '\'': push(Tok::Prime, l, c); break;
      case '(': push(Tok::LParen, l, c); break;
      case ')': push(Tok::RParen, l, c); break;
      case '{': push(Tok::LBrace, l, c); break;
      case '}': push(Tok::RBrace, l, c); break;
      case '*': push(Tok::Star, l, c); break;
      case '/': push(Tok::Slash, l, c); break;
      case '^': push(Tok::Caret, l, c); break;
      case '&': push(Tok::Amp, l, c); break;
      case '|': push(Tok::Pipe, l, c); break;
      case '=': push(Tok::Eq, l, c); break;
      case ':':
        if (two('=')) { push(Tok::Walrus, l, c); ++i; ++col; }
        else push(Tok::Colon, l, c);
        break;
      case '+':
        if (two('+')) { push(Tok::PlusPlus, l, c); ++i; ++col; }
        else push(Tok::Plus, l, c);
        break;
      case '-':
        if (two('>')) { push(Tok::Arrow, l, c); ++i; ++col; }
        else push(Tok::Minus, l, c);
        break;
      case '!':
        if (two('=')) { push(Tok::Ne, l, c); ++i; ++col; }
        else push(Tok::Bang, l, c);
        break;
      case '>':
        if (two('=')) { push(Tok::Ge, l, c); ++i; ++col; }
        else push(Tok::Gt, l, c);
        break;
      case '<':
        if (two('=')) { push(Tok::Le, l, c); ++i; ++col; }
        else push(Tok::Lt, l, c);
        break;
      default:
        throw ParseError(l, c, std::string("unexpected character '") + ch + "'");
    }
    ++i;
    ++col;
  }
  out.push_back({Tok::End, "", 0, line, col});
  return out;
}

const std::set<std::string> kSections = {"model", "constants", "clock",
                                         "init", "ctrl", "plant", "safe"};

class Parser {
 public:
  explicit Parser(const std::string& src) : toks_(lex(src)) {}

  Model model() {
    Model m;
    std::set<std::string> seen;
    bool named = false;
    while (peek().kind != Tok::End) {
      Token head = expect(Tok::Ident, "section name");
      if (!kSections.count(head.text))
        throw ParseError(head.line, head.column, "unknown section '" + head.text + "'");
      expect(Tok::Colon, "':' after section name");
      if (!seen.insert(head.text).second)
        throw ParseError(head.line, head.column, "duplicate section '" + head.text + "'");
      if (head.text == "model") {
        m.name = expect(Tok::Ident, "model name").text;
        named = true;
      } else if (head.text == "clock") {
        m.clock = expect(Tok::Ident, "clock variable").text;
      } else if (head.text == "constants") {
        for (;;) {
          std::string name = expect(Tok::Ident, "constant name").text;
          expect(Tok::Eq, "'=' in constant definition");
          m.constants[name] = signed_number();
          if (peek().kind != Tok::Comma) break;
          next();
        }
      } else if (head.text == "init") {
        m.init = formula();
      } else if (head.text == "safe") {
        m.safe = formula();
      } else if (head.text == "ctrl") {
        m.ctrl = program();
      } else {  // plant
        Token at = peek();
        HpPtr p = statement();
        if (p->kind != HybridProgram::Kind::Ode)
          throw ParseError(at.line, at.column, "plant must be a single ODE system");
        m.plant = p;
      }
      if (peek().kind != Tok::End) expect(Tok::Semi, "';' to close section");
    }
    Token end = peek();
    for (const char* s : {"init", "ctrl", "plant", "safe"})
      if (!seen.count(s))
        throw ParseError(end.line, end.column, std::string("missing section '") + s + "'");
    if (!named) m.name = "model";
    validate_model(m);
    return m;
  }

  TermPtr term_all() {
    TermPtr t = term();
    expect(Tok::End, "end of input");
    return t;
  }

  FormulaPtr formula_all() {
    FormulaPtr f = formula();
    expect(Tok::End, "end of input");
    return f;
  }

  HpPtr program_all() {
    HpPtr p = program();
    expect(Tok::End, "end of input");
    return p;
  }

 private:
  std::vector<Token> toks_;
  size_t pos_ = 0;

  const Token& peek(size_t ahead = 0) const {
    size_t i = pos_ + ahead;
    return i < toks_.size() ? toks_[i] : toks_.back();
  }
  Token next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  Token expect(Tok k, const char* what) {
    if (peek().kind != k)
      throw ParseError(peek().line, peek().column,
                       std::string("expected ") + what + ", got " + tok_name(peek().kind));
    return next();
  }
  [[noreturn]] void fail(const std::string& msg) {
    throw ParseError(peek().line, peek().column, msg);
  }

  bool at_section_start(size_t ahead) const {
    return peek(ahead).kind == Tok::Ident && kSections.count(peek(ahead).text) &&
           peek(ahead + 1).kind == Tok::Colon;
  }

  double signed_number() {
    bool negative = false;
    if (peek().kind == Tok::Minus) { next(); negative = true; }
    Token n = expect(Tok::Number, "number");
    return negative ? -n.value : n.value;
  }

  // --- programs ------------------------------------------------------------

  HpPtr program() {  // choice level: seq ('++' seq)*
    HpPtr p = sequence();
    while (peek().kind == Tok::PlusPlus) {
      next();
      p = choice(p, sequence());
    }
    return p;
  }

  HpPtr sequence() {
    HpPtr p = statement();
    while (peek().kind == Tok::Semi) {
      // A ';' directly before another section (or the end) terminates the
      // section instead of separating statements; leave it for the caller.
      if (peek(1).kind == Tok::End || at_section_start(1)) break;
      next();
      p = seq(p, statement());
    }
    return p;
  }

  HpPtr statement() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::Question: {
        next();
        return test(formula());
      }
      case Tok::LBrace:
        if (peek(1).kind == Tok::Ident && peek(2).kind == Tok::Prime) return ode_block();
        [[fallthrough]];
      case Tok::LParen: {
        Tok close = t.kind == Tok::LBrace ? Tok::RBrace : Tok::RParen;
        next();
        HpPtr p = program();
        expect(close, close == Tok::RBrace ? "'}'" : "')'");
        if (peek().kind == Tok::Star) {
          next();
          return loop(p);
        }
        return p;
      }
      case Tok::Ident: {
        std::string name = next().text;
        expect(Tok::Walrus, "':=' after variable");
        if (peek().kind == Tok::Star) {
          next();
          return nondet_assign(name);
        }
        return assign(name, term());
      }
      default:
        fail(std::string("expected statement, got ") + tok_name(t.kind));
    }
  }

  HpPtr ode_block() {
    Token open = expect(Tok::LBrace, "'{'");
    std::vector<OdeEquation> eqs;
    for (;;) {
      std::string v = expect(Tok::Ident, "ODE variable").text;
      expect(Tok::Prime, "' after ODE variable");
      expect(Tok::Eq, "'=' in ODE");
      eqs.push_back({v, term()});
      if (peek().kind != Tok::Comma) break;
      next();
    }
    FormulaPtr domain = truth();
    if (peek().kind == Tok::Amp) {
      next();
      domain = formula();
    }
    expect(Tok::RBrace, "'}' to close ODE system");
    try {
      return ode(std::move(eqs), domain);
    } catch (const StructureError& e) {
      throw ParseError(open.line, open.column, e.what());
    }
  }

  // --- formulas ------------------------------------------------------------

  FormulaPtr formula() {  // implication, right associative
    FormulaPtr f = disjunction();
    if (peek().kind == Tok::Arrow) {
      next();
      return imply(f, formula());
    }
    return f;
  }

  FormulaPtr disjunction() {
    FormulaPtr f = conjunction();
    while (peek().kind == Tok::Pipe) {
      next();
      f = lor(f, conjunction());
    }
    return f;
  }

  FormulaPtr conjunction() {
    FormulaPtr f = negation();
    while (peek().kind == Tok::Amp) {
      next();
      f = land(f, negation());
    }
    return f;
  }

  FormulaPtr negation() {
    if (peek().kind == Tok::Bang) {
      next();
      return lnot(negation());
    }
    return formula_atom();
  }

  FormulaPtr formula_atom() {
    if (peek().kind == Tok::Ident) {
      if (peek().text == "true") { next(); return truth(); }
      if (peek().text == "false") { next(); return falsity(); }
    }
    if (peek().kind == Tok::LParen) {
      // '(' may open a parenthesized formula or a parenthesized term of a
      // comparison; try the formula reading first and fall back.
      size_t save = pos_;
      try {
        next();
        FormulaPtr f = formula();
        expect(Tok::RParen, "')'");
        return f;
      } catch (const ParseError&) {
        pos_ = save;
      }
    }
    TermPtr l = term();
    CmpOp op = cmp_op();
    return cmp(op, l, term());
  }

  CmpOp cmp_op() {
    switch (peek().kind) {
      case Tok::Eq: next(); return CmpOp::Eq;
      case Tok::Ne: next(); return CmpOp::Ne;
      case Tok::Ge: next(); return CmpOp::Ge;
      case Tok::Gt: next(); return CmpOp::Gt;
      case Tok::Le: next(); return CmpOp::Le;
      case Tok::Lt: next(); return CmpOp::Lt;
      default: fail(std::string("expected comparison operator, got ") + tok_name(peek().kind));
    }
  }

  // --- terms ---------------------------------------------------------------

  TermPtr term() {
    TermPtr t = product();
    for (;;) {
      if (peek().kind == Tok::Plus) { next(); t = add(t, product()); }
      else if (peek().kind == Tok::Minus) { next(); t = sub(t, product()); }
      else return t;
    }
  }

  TermPtr product() {
    TermPtr t = unary();
    for (;;) {
      if (peek().kind == Tok::Star) { next(); t = mul(t, unary()); }
      else if (peek().kind == Tok::Slash) {
        Token at = next();
        try {
          t = div(t, unary());
        } catch (const StructureError& e) {
          throw ParseError(at.line, at.column, e.what());
        }
      } else return t;
    }
  }

  TermPtr unary() {
    if (peek().kind == Tok::Minus) {
      next();
      return neg(unary());
    }
    return power();
  }

  TermPtr power() {
    TermPtr base = term_atom();
    if (peek().kind == Tok::Caret) {
      next();
      Token e = expect(Tok::Number, "nonnegative integer exponent");
      double v = e.value;
      if (v != double(int(v)) || v < 0)
        throw ParseError(e.line, e.column, "exponent must be a nonnegative integer literal");
      return pow(base, int(v));
    }
    return base;
  }

  TermPtr term_atom() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::Number: return num(next().value);
      case Tok::Ident: return var(next().text);
      case Tok::LParen: {
        next();
        TermPtr inner = term();
        expect(Tok::RParen, "')'");
        return inner;
      }
      default:
        fail(std::string("expected term, got ") + tok_name(t.kind));
    }
  }
};

}  // namespace

Model parse_model(const std::string& text) { return Parser(text).model(); }
TermPtr parse_term(const std::string& text) { return Parser(text).term_all(); }
FormulaPtr parse_formula(const std::string& text) { return Parser(text).formula_all(); }
HpPtr parse_program(const std::string& text) { return Parser(text).program_all(); }

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_model(buf.str());
  } catch (const ParseError& e) {
    throw std::runtime_error(path + ": " + e.what());
  } catch (const StructureError& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace mulearn
