#include "mulearn/runconfig.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mulearn/parser.hpp"

namespace mulearn {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Entry {
  std::string section, key, value;
  int line = 0;
};

std::vector<Entry> read_ini(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run config '" + path + "'");
  std::vector<Entry> out;
  std::string section, line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError(path + ":" + std::to_string(lineno) +
                          ": unterminated section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key = value");
    }
    out.push_back({section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)), lineno});
  }
  return out;
}

[[noreturn]] void fail(const std::string& path, const Entry& e, const std::string& msg) {
  throw ConfigError(path + ":" + std::to_string(e.line) + ": " + msg);
}

double num_value(const std::string& path, const Entry& e, const std::string& text) {
  try {
    std::size_t pos = 0;
    double v = std::stod(text, &pos);
    if (pos == text.size()) return v;
  } catch (const std::exception&) {
  }
  fail(path, e, "'" + e.key + "' must be a number, got '" + text + "'");
}

double num_value(const std::string& path, const Entry& e) {
  return num_value(path, e, e.value);
}

int int_value(const std::string& path, const Entry& e) {
  double v = num_value(path, e);
  int i = static_cast<int>(v);
  if (i != v) fail(path, e, "'" + e.key + "' must be an integer");
  return i;
}

bool bool_value(const std::string& path, const Entry& e) {
  if (e.value == "true" || e.value == "1") return true;
  if (e.value == "false" || e.value == "0") return false;
  fail(path, e, "'" + e.key + "' must be true or false");
}

std::vector<double> list_value(const std::string& path, const Entry& e) {
  std::vector<double> out;
  for (const std::string& item : split(e.value, '|')) {
    out.push_back(num_value(path, e, item));
  }
  if (out.empty()) fail(path, e, "'" + e.key + "' must list at least one value");
  return out;
}

std::pair<double, double> range_value(const std::string& path, const Entry& e) {
  std::size_t dots = e.value.find("..");
  if (dots == std::string::npos) {
    fail(path, e, "'" + e.key + "' must be a range lo..hi");
  }
  double lo = num_value(path, e, trim(e.value.substr(0, dots)));
  double hi = num_value(path, e, trim(e.value.substr(dots + 2)));
  if (lo > hi) fail(path, e, "'" + e.key + "': range is empty");
  return {lo, hi};
}

ModelUpdate update_value(const std::string& path, const Entry& e) {
  std::istringstream in(e.value);
  ModelUpdate u;
  in >> u.name;
  if (u.name.empty()) fail(path, e, "empty update specification");
  std::string token;
  while (in >> token) {
    std::size_t eq = token.find('=');
    if (eq == std::string::npos) {
      fail(path, e, "update parameter '" + token + "' must be key=value");
    }
    u.params[token.substr(0, eq)] = token.substr(eq + 1);
  }
  return u;
}

}  // namespace

Action parse_action_text(const std::string& text) {
  Action u;
  for (const std::string& piece : split(text, ',')) {
    std::size_t at = piece.find(":=");
    if (at == std::string::npos) {
      throw ConfigError("malformed action '" + text + "': expected var := number");
    }
    std::string name = trim(piece.substr(0, at));
    std::string value_text = trim(piece.substr(at + 2));
    double value = 0;
    try {
      std::size_t pos = 0;
      value = std::stod(value_text, &pos);
      if (pos != value_text.size()) throw std::runtime_error("trailing text");
    } catch (const std::exception&) {
      throw ConfigError("malformed action '" + text + "': '" + value_text +
                        "' is not a number");
    }
    if (name.empty()) {
      throw ConfigError("malformed action '" + text + "': missing variable name");
    }
    u.effect[name] = value < 0 ? neg(num(-value)) : num(value);
    u.resolved[name] = value;
  }
  if (u.effect.empty()) throw ConfigError("empty action '" + text + "'");
  return u;
}

std::vector<ModelUpdate> expand_update(const ModelUpdate& u) {
  std::string fan_key;
  for (const auto& [k, v] : u.params) {
    if (v.find('|') == std::string::npos) continue;
    if (!fan_key.empty()) {
      throw ConfigError("update '" + u.name + "': only one parameter may fan out, got '" +
                        fan_key + "' and '" + k + "'");
    }
    fan_key = k;
  }
  if (fan_key.empty()) return {u};
  std::vector<ModelUpdate> out;
  for (const std::string& item : split(u.params.at(fan_key), '|')) {
    ModelUpdate c = u;
    c.params[fan_key] = item;
    out.push_back(std::move(c));
  }
  if (out.empty()) {
    throw ConfigError("update '" + u.name + "': empty fan-out for '" + fan_key + "'");
  }
  return out;
}

namespace {

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

}  // namespace

std::vector<Model> apply_pipeline(const Model& base,
                                  const std::vector<ModelUpdate>& pipeline,
                                  const TrajectoryData* data) {
  std::vector<Model> models{base};
  for (const ModelUpdate& entry : pipeline) {
    std::string fan_key;
    for (const auto& [k, v] : entry.params) {
      if (v.find('|') != std::string::npos) fan_key = k;
    }
    std::vector<ModelUpdate> expanded = expand_update(entry);
    std::vector<Model> next;
    for (const Model& m : models) {
      for (const ModelUpdate& e : expanded) {
        Model r = apply_update(m, e, data);
        if (expanded.size() > 1) {
          r.name = m.name + "_" + sanitize(fan_key) + "_" + sanitize(e.params.at(fan_key));
        }
        next.push_back(std::move(r));
      }
    }
    models = std::move(next);
  }
  return models;
}

RunConfig load_run_config(const std::string& path) {
  RunConfig cfg;
  cfg.source_path = path;
  std::vector<Entry> entries = read_ini(path);
  std::filesystem::path dir = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    if (p.empty() || std::filesystem::path(p).is_absolute()) return p;
    return (dir / p).string();
  };

  for (const Entry& e : entries) {
    if (e.section == "env" && e.key == "kind") cfg.env_kind = e.value;
  }

  auto block_index = [&](const std::string& name) -> SubtaskConfig& {
    for (SubtaskConfig& b : cfg.subtasks) {
      if (b.name == name) return b;
    }
    cfg.subtasks.push_back({name, "", {}, ""});
    return cfg.subtasks.back();
  };
  bool has_models_block = false, has_subtask_block = false;

  for (const Entry& e : entries) {
    if (e.section == "run") {
      if (e.key == "algorithm") cfg.algorithm = e.value;
      else if (e.key == "episodes") cfg.episodes = int_value(path, e);
      else if (e.key == "step_limit") cfg.step_limit = int_value(path, e);
      else if (e.key == "seed") cfg.seed = static_cast<std::uint64_t>(num_value(path, e));
      else if (e.key == "er") { cfg.er = num_value(path, e); cfg.er_set = true; }
      else if (e.key == "duration") cfg.duration = num_value(path, e);
      else if (e.key == "output") cfg.output_dir = resolve(e.value);
      else if (e.key == "expect_safe") cfg.expect_safe = bool_value(path, e);
      else if (e.key == "tolerance") cfg.tolerance = num_value(path, e);
      else if (e.key == "order") cfg.order = split(e.value, '|');
      else if (e.key == "data") cfg.data_path = resolve(e.value);
      else fail(path, e, "unknown key '" + e.key + "' in [run]");
    } else if (e.section == "models" || e.section.rfind("subtask ", 0) == 0) {
      std::string name = e.section == "models" ? "main" : trim(e.section.substr(8));
      if (name.empty()) fail(path, e, "subtask section needs a name");
      (e.section == "models" ? has_models_block : has_subtask_block) = true;
      SubtaskConfig& b = block_index(name);
      if (e.key == "base") b.base_model = resolve(e.value);
      else if (e.key == "update") b.pipeline.push_back(update_value(path, e));
      else if (e.key == "termination") b.termination = e.value;
      else fail(path, e, "unknown key '" + e.key + "' in [" + e.section + "]");
    } else if (e.section == "actions") {
      if (e.key == "action") cfg.action_text.push_back(e.value);
      else fail(path, e, "unknown key '" + e.key + "' in [actions]");
    } else if (e.section == "env") {
      bool acc = cfg.env_kind == "acc";
      if (e.key == "kind") continue;
      else if (e.key == "dt") (acc ? cfg.acc.dt : cfg.hier.dt) = num_value(path, e);
      else if (e.key == "progress_weight")
        (acc ? cfg.acc.progress_weight : cfg.hier.progress_weight) = num_value(path, e);
      else if (e.key == "crash_penalty")
        (acc ? cfg.acc.crash_penalty : cfg.hier.crash_penalty) = num_value(path, e);
      else if (acc && e.key == "p_true") cfg.acc.p_true = num_value(path, e);
      else if (acc && e.key == "p_grid") cfg.p_grid = list_value(path, e);
      else if (acc && e.key == "crash_below") cfg.acc.crash_below = num_value(path, e);
      else if (acc && e.key == "pos0") cfg.acc.pos0 = range_value(path, e);
      else if (acc && e.key == "vel0") cfg.acc.vel0 = range_value(path, e);
      else if (acc && e.key == "pin") {
        std::size_t eq = e.value.find('=');
        if (eq == std::string::npos) fail(path, e, "pin must be name=value");
        cfg.acc.pins[trim(e.value.substr(0, eq))] =
            num_value(path, e, trim(e.value.substr(eq + 1)));
      } else if (!acc && e.key == "int_lo") cfg.hier.int_lo = num_value(path, e);
      else if (!acc && e.key == "int_hi") cfg.hier.int_hi = num_value(path, e);
      else if (!acc && e.key == "cross_lo") cfg.hier.cross_lo = num_value(path, e);
      else if (!acc && e.key == "cross_hi") cfg.hier.cross_hi = num_value(path, e);
      else if (!acc && e.key == "car_start") cfg.hier.car_start = num_value(path, e);
      else if (!acc && e.key == "car_speeds") cfg.hier.car_speeds = list_value(path, e);
      else if (!acc && e.key == "c_min") cfg.hier.c_min = num_value(path, e);
      else if (!acc && e.key == "c_max") cfg.hier.c_max = num_value(path, e);
      else if (!acc && e.key == "ped_speeds") cfg.hier.ped_speeds = list_value(path, e);
      else if (!acc && e.key == "entry") {
        if (e.value == "never") cfg.hier.entry = HierEnvConfig::Entry::never;
        else if (e.value == "scripted") cfg.hier.entry = HierEnvConfig::Entry::scripted;
        else if (e.value == "sampled") cfg.hier.entry = HierEnvConfig::Entry::sampled;
        else fail(path, e, "entry must be never, scripted or sampled");
      } else if (!acc && e.key == "scripted_entry")
        cfg.hier.scripted_entry = num_value(path, e);
      else if (!acc && e.key == "walk_speed") cfg.hier.walk_speed = num_value(path, e);
      else if (!acc && e.key == "x0") cfg.hier.x0 = range_value(path, e);
      else if (!acc && e.key == "handoff_x") cfg.hier.handoff_x = num_value(path, e);
      else if (!acc && e.key == "goal_x") cfg.hier.goal_x = num_value(path, e);
      else fail(path, e, "unknown key '" + e.key + "' in [env] for kind " + cfg.env_kind);
    } else if (e.section == "learner") {
      if (e.key == "kind") cfg.learner = e.value;
      else if (e.key == "bin") {
        std::size_t eq = e.value.find('=');
        if (eq == std::string::npos) fail(path, e, "bin must be var=width");
        double width = num_value(path, e, trim(e.value.substr(eq + 1)));
        if (width <= 0) fail(path, e, "bin width must be positive");
        cfg.qtable.bin_widths[trim(e.value.substr(0, eq))] = width;
      } else if (e.key == "learning_rate") cfg.qtable.learning_rate = num_value(path, e);
      else if (e.key == "discount") cfg.qtable.discount = num_value(path, e);
      else if (e.key == "epsilon") cfg.qtable.epsilon = num_value(path, e);
      else fail(path, e, "unknown key '" + e.key + "' in [learner]");
    } else {
      fail(path, e, "unknown section '[" + e.section + "]'");
    }
  }
  cfg.qtable.seed = cfg.seed;

  // ---- schema validation -------------------------------------------------
  if (cfg.episodes < 1) throw ConfigError(path + ": episodes must be >= 1");
  if (cfg.step_limit < 0) throw ConfigError(path + ": step_limit must be >= 0");
  if (cfg.tolerance <= 0) throw ConfigError(path + ": tolerance must be positive");
  if (cfg.algorithm != "mu" && cfg.algorithm != "active-mu" &&
      cfg.algorithm != "hierarchical") {
    throw ConfigError(path + ": algorithm must be mu, active-mu or hierarchical");
  }
  bool active = cfg.algorithm != "mu";
  if (active && !cfg.er_set) {
    throw ConfigError(path + ": er is required for " + cfg.algorithm + " runs");
  }
  if (!active && cfg.er_set) {
    throw ConfigError(path + ": er is only meaningful for active-mu or hierarchical runs");
  }
  if (cfg.er_set && (cfg.er <= 0 || cfg.er >= 1)) {
    throw ConfigError(path + ": er must lie in (0, 1)");
  }
  if (cfg.algorithm == "hierarchical") {
    if (has_models_block) {
      throw ConfigError(path + ": hierarchical runs use [subtask X] blocks, not [models]");
    }
    if (cfg.order.empty()) {
      throw ConfigError(path + ": hierarchical runs need order = a|b|... in [run]");
    }
    for (const std::string& name : cfg.order) {
      bool found = false;
      for (const SubtaskConfig& b : cfg.subtasks) found |= b.name == name;
      if (!found) {
        throw ConfigError(path + ": no [subtask " + name + "] block for ordered name '" +
                          name + "'");
      }
    }
  } else {
    if (has_subtask_block) {
      throw ConfigError(path + ": [subtask] blocks require algorithm = hierarchical");
    }
    if (!has_models_block) throw ConfigError(path + ": a [models] block is required");
  }
  for (const SubtaskConfig& b : cfg.subtasks) {
    if (b.base_model.empty()) {
      throw ConfigError(path + ": block '" + b.name + "' needs base = <model file>");
    }
    if (!std::filesystem::exists(b.base_model)) {
      throw ConfigError(path + ": model file '" + b.base_model + "' does not exist");
    }
    if (!b.termination.empty()) {
      try {
        parse_formula(b.termination);
      } catch (const ParseError& pe) {
        throw ConfigError(path + ": termination of '" + b.name + "': " + pe.what());
      }
    }
  }
  if (!cfg.data_path.empty() && !std::filesystem::exists(cfg.data_path)) {
    throw ConfigError(path + ": data file '" + cfg.data_path + "' does not exist");
  }
  if (cfg.action_text.empty()) {
    throw ConfigError(path + ": at least one action = ... is required");
  }
  for (const std::string& a : cfg.action_text) parse_action_text(a);
  if (cfg.env_kind != "acc" && cfg.env_kind != "hier") {
    throw ConfigError(path + ": env kind must be acc or hier");
  }
  if (cfg.learner != "uniform" && cfg.learner != "qtable") {
    throw ConfigError(path + ": learner must be uniform or qtable");
  }
  return cfg;
}

}  // namespace mulearn
