#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>

#include "mulearn/printer.hpp"
#include "mulearn/rewrite.hpp"
#include "mulearn/semantics.hpp"

namespace mulearn {
namespace {

// Terms are compiled to a tiny stack machine once per flow() call so the
// integrator's inner loop avoids tree walks and map lookups.
struct Prog {
  enum Op : std::uint8_t { Const, Slot, Neg, Add, Sub, Mul, Div, Pow };
  struct Ins {
    Op op;
    double k = 0;  // Const
    int idx = 0;   // Slot index or Pow exponent
  };
  std::vector<Ins> code;

  double eval(const double* slots) const {
    double st[64];
    int sp = 0;
    for (const Ins& ins : code) {
      switch (ins.op) {
        case Const: st[sp++] = ins.k; break;
        case Slot: st[sp++] = slots[ins.idx]; break;
        case Neg: st[sp - 1] = -st[sp - 1]; break;
        case Add: --sp; st[sp - 1] += st[sp]; break;
        case Sub: --sp; st[sp - 1] -= st[sp]; break;
        case Mul: --sp; st[sp - 1] *= st[sp]; break;
        case Div:
          --sp;
          if (st[sp] == 0) throw EvalError("division by zero");
          st[sp - 1] /= st[sp];
          break;
        case Pow: {
          double b = st[sp - 1], r = 1;
          for (int i = 0; i < ins.idx; ++i) r *= b;
          st[sp - 1] = r;
          break;
        }
      }
    }
    return st[0];
  }
};

using SlotMap = std::map<std::string, int>;

void compile_into(const TermPtr& t, const SlotMap& slots, Prog& p, int& depth, int cur) {
  switch (t->kind) {
    case Term::Kind::Number:
      p.code.push_back({Prog::Const, t->value, 0});
      depth = std::max(depth, cur + 1);
      return;
    case Term::Kind::Var: {
      auto it = slots.find(t->name);
      if (it == slots.end()) throw EvalError("unbound variable '" + t->name + "'");
      p.code.push_back({Prog::Slot, 0, it->second});
      depth = std::max(depth, cur + 1);
      return;
    }
    case Term::Kind::Neg:
      compile_into(t->lhs, slots, p, depth, cur);
      p.code.push_back({Prog::Neg, 0, 0});
      return;
    case Term::Kind::Pow:
      compile_into(t->lhs, slots, p, depth, cur);
      p.code.push_back({Prog::Pow, 0, t->exponent});
      return;
    default: {
      compile_into(t->lhs, slots, p, depth, cur);
      compile_into(t->rhs, slots, p, depth, cur + 1);
      Prog::Op op = t->kind == Term::Kind::Add   ? Prog::Add
                    : t->kind == Term::Kind::Sub ? Prog::Sub
                    : t->kind == Term::Kind::Mul ? Prog::Mul
                                                 : Prog::Div;
      p.code.push_back({op, 0, 0});
      return;
    }
  }
}

Prog compile(const TermPtr& t, const SlotMap& slots) {
  Prog p;
  int depth = 0;
  compile_into(t, slots, p, depth, 0);
  if (depth > 60) throw EvalError("term too deep to compile");
  return p;
}

// The compiled formula only ever evaluates the evolution domain, and the
// trajectory feeding it carries integration roundoff: a clock that should sit
// exactly on `t <= T` can land an ulp above it. Brushing the boundary within
// this relative slack is not a violation.
constexpr double kDomainSlack = 1e-9;

struct CFormula {
  Formula::Kind kind;
  CmpOp op = CmpOp::Eq;
  Prog l, r;
  std::unique_ptr<CFormula> a, b;

  bool eval(const double* slots) const {
    switch (kind) {
      case Formula::Kind::True: return true;
      case Formula::Kind::False: return false;
      case Formula::Kind::Cmp: {
        double x = l.eval(slots), y = r.eval(slots);
        double eps = kDomainSlack * std::max({1.0, std::fabs(x), std::fabs(y)});
        switch (op) {
          case CmpOp::Eq: return std::fabs(x - y) <= eps;
          case CmpOp::Ne: return x != y;
          case CmpOp::Ge: return x >= y - eps;
          case CmpOp::Gt: return x > y - eps;
          case CmpOp::Le: return x <= y + eps;
          case CmpOp::Lt: return x < y + eps;
        }
        return false;
      }
      case Formula::Kind::Not: return !a->eval(slots);
      case Formula::Kind::And: return a->eval(slots) && b->eval(slots);
      case Formula::Kind::Or: return a->eval(slots) || b->eval(slots);
      case Formula::Kind::Imply: return !a->eval(slots) || b->eval(slots);
    }
    return false;
  }
};

std::unique_ptr<CFormula> compile(const FormulaPtr& f, const SlotMap& slots) {
  auto c = std::make_unique<CFormula>();
  c->kind = f->kind;
  switch (f->kind) {
    case Formula::Kind::True:
    case Formula::Kind::False: break;
    case Formula::Kind::Cmp:
      c->op = f->op;
      c->l = compile(f->term_lhs, slots);
      c->r = compile(f->term_rhs, slots);
      break;
    case Formula::Kind::Not:
      c->a = compile(f->lhs, slots);
      break;
    default:
      c->a = compile(f->lhs, slots);
      c->b = compile(f->rhs, slots);
  }
  return c;
}

struct FlowSetup {
  int n = 0;                       // number of ODE variables
  std::vector<std::string> vars;   // ODE variables, declaration order
  std::vector<double> slots;       // [0, n): ODE vars; rest: frozen context
  SlotMap slot_of;
  std::vector<Prog> rhs;
  std::unique_ptr<CFormula> domain;
};

FlowSetup prepare(const HybridProgram& plant, const State& s) {
  FlowSetup fs;
  fs.n = int(plant.odes.size());
  for (auto& e : plant.odes) {
    fs.slot_of[e.var] = int(fs.vars.size());
    fs.vars.push_back(e.var);
  }
  std::set<std::string> others;
  for (auto& e : plant.odes) collect_free_vars(e.rhs, others);
  collect_free_vars(plant.domain, others);
  for (auto& v : fs.vars) others.erase(v);
  fs.slots.resize(fs.n);
  for (int i = 0; i < fs.n; ++i) {
    auto it = s.find(fs.vars[i]);
    if (it == s.end()) throw EvalError("unbound variable '" + fs.vars[i] + "'");
    fs.slots[i] = it->second;
  }
  for (auto& v : others) {
    auto it = s.find(v);
    if (it == s.end()) throw EvalError("unbound variable '" + v + "'");
    fs.slot_of[v] = int(fs.slots.size());
    fs.slots.push_back(it->second);
  }
  for (auto& e : plant.odes) fs.rhs.push_back(compile(e.rhs, fs.slot_of));
  fs.domain = compile(plant.domain, fs.slot_of);
  return fs;
}

void check_domain(FlowSetup& fs, const double* z, double t) {
  for (int i = 0; i < fs.n; ++i) fs.slots[i] = z[i];
  if (!fs.domain->eval(fs.slots.data()))
    throw DomainError(t, "evolution domain violated at t = " + format_number(t));
}

void derivs(FlowSetup& fs, const double* z, double* dz) {
  for (int i = 0; i < fs.n; ++i) fs.slots[i] = z[i];
  for (int i = 0; i < fs.n; ++i) dz[i] = fs.rhs[i].eval(fs.slots.data());
}

constexpr int kMaxDim = 16;

void rk4_step(FlowSetup& fs, double* z, double h) {
  int n = fs.n;
  double k1[kMaxDim], k2[kMaxDim], k3[kMaxDim], k4[kMaxDim], tmp[kMaxDim];
  derivs(fs, z, k1);
  for (int i = 0; i < n; ++i) tmp[i] = z[i] + 0.5 * h * k1[i];
  derivs(fs, tmp, k2);
  for (int i = 0; i < n; ++i) tmp[i] = z[i] + 0.5 * h * k2[i];
  derivs(fs, tmp, k3);
  for (int i = 0; i < n; ++i) tmp[i] = z[i] + h * k3[i];
  derivs(fs, tmp, k4);
  for (int i = 0; i < n; ++i) z[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
}

// Extracts z' = A z + c (throws if the system is not linear with
// state-independent coefficients, or A is not nilpotent).
struct LinearSystem {
  int n;
  std::vector<double> a;  // row-major n*n
  std::vector<double> c;
};

LinearSystem extract_nilpotent(const HybridProgram& plant, const State& s) {
  const char* kNotNilpotent = "closed_form requested for a non-nilpotent system";
  LinearSystem ls;
  ls.n = int(plant.odes.size());
  ls.a.assign(ls.n * ls.n, 0.0);
  ls.c.assign(ls.n, 0.0);
  std::set<std::string> ovars;
  for (auto& e : plant.odes) ovars.insert(e.var);
  State zeroed = s;
  for (auto& v : ovars) zeroed[v] = 0.0;
  int i = 0;
  for (auto& e : plant.odes) {
    int j = 0;
    for (auto& x : plant.odes) {
      TermPtr d = simplify(derivative(e.rhs, x.var));
      for (auto& fv : free_vars(d))
        if (ovars.count(fv)) throw StructureError(kNotNilpotent);
      ls.a[i * ls.n + j] = eval_term(d, s);
      ++j;
    }
    ls.c[i] = eval_term(e.rhs, zeroed);
    ++i;
  }
  // A^n must vanish exactly; structural zeros survive the products.
  std::vector<double> p = ls.a, next(ls.n * ls.n);
  for (int k = 1; k < ls.n; ++k) {
    for (int r = 0; r < ls.n; ++r)
      for (int cidx = 0; cidx < ls.n; ++cidx) {
        double acc = 0;
        for (int m = 0; m < ls.n; ++m) acc += p[r * ls.n + m] * ls.a[m * ls.n + cidx];
        next[r * ls.n + cidx] = acc;
      }
    p.swap(next);
  }
  for (double x : p)
    if (x != 0) throw StructureError(kNotNilpotent);
  return ls;
}

}  // namespace

bool is_nilpotent_linear(const HpPtr& plant, const State& s) {
  if (!plant || plant->kind != HybridProgram::Kind::Ode) return false;
  try {
    extract_nilpotent(*plant, s);
    return true;
  } catch (const StructureError&) {
    return false;
  } catch (const EvalError&) {
    return false;
  }
}

State flow(const HpPtr& plant, const State& s, double duration, const FlowConfig& cfg) {
  if (!plant || plant->kind != HybridProgram::Kind::Ode)
    throw StructureError("plant must be a single ODE system");
  if (duration < 0) throw EvalError("negative flow duration");
  if (cfg.step_size <= 0) throw EvalError("step_size must be positive");

  FlowSetup fs = prepare(*plant, s);
  if (fs.n > kMaxDim) throw EvalError("ODE system too large");

  std::vector<double> z(fs.slots.begin(), fs.slots.begin() + fs.n);
  check_domain(fs, z.data(), 0.0);

  if (duration > 0 && cfg.method == FlowConfig::Method::rk4) {
    double h = cfg.step_size;
    long steps = long(duration / h);
    // Guard against duration being an exact multiple up to roundoff.
    while ((steps + 1) * h <= duration) ++steps;
    double t = 0;
    for (long k = 0; k < steps; ++k) {
      rk4_step(fs, z.data(), h);
      t = (k + 1) * h;
      check_domain(fs, z.data(), t);
    }
    double rest = duration - t;
    if (rest > 1e-12 * std::max(1.0, duration)) {
      rk4_step(fs, z.data(), rest);
      check_domain(fs, z.data(), duration);
    }
  } else if (duration > 0) {
    LinearSystem ls = extract_nilpotent(*plant, s);
    int n = ls.n;
    // Precompute A^j z0 and A^j c for j < n; A^n = 0.
    std::vector<std::vector<double>> az{z}, ac{ls.c};
    for (int j = 1; j < n; ++j) {
      std::vector<double> nz(n, 0.0), nc(n, 0.0);
      for (int r = 0; r < n; ++r)
        for (int m = 0; m < n; ++m) {
          nz[r] += ls.a[r * n + m] * az[j - 1][m];
          nc[r] += ls.a[r * n + m] * ac[j - 1][m];
        }
      az.push_back(std::move(nz));
      ac.push_back(std::move(nc));
    }
    auto at_time = [&](double t, double* out) {
      for (int r = 0; r < n; ++r) out[r] = 0;
      double tp = 1.0;  // t^j / j!
      for (int j = 0; j < n; ++j) {
        double tc = tp * t / (j + 1);  // t^(j+1) / (j+1)!
        for (int r = 0; r < n; ++r) out[r] += tp * az[j][r] + tc * ac[j][r];
        tp = tc;
      }
    };
    std::vector<double> sample(n);
    for (double t = cfg.step_size; t < duration; t += cfg.step_size) {
      at_time(t, sample.data());
      check_domain(fs, sample.data(), t);
    }
    at_time(duration, sample.data());
    z = sample;
    check_domain(fs, z.data(), duration);
  }

  State out = s;
  for (int i = 0; i < fs.n; ++i) out[fs.vars[i]] = z[i];
  return out;
}

}  // namespace mulearn
