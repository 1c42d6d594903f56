#include "mulearn/trajectory.hpp"

#include <fstream>
#include <sstream>

#include "mulearn/ast.hpp"
#include "json.hpp"

namespace mulearn {

namespace {

using nlohmann::json;

json step_to_json(const TrajectoryStep& step) {
  json j;
  j["state"] = json::object();
  for (const auto& [var, value] : step.state) j["state"][var] = value;
  j["action"] = json::object();
  for (const auto& [var, value] : step.action.resolved) j["action"][var] = value;
  j["duration"] = step.duration;
  return j;
}

TrajectoryStep step_from_json(const json& j) {
  if (!j.is_object() || !j.contains("state") || !j.contains("action") ||
      !j.contains("duration")) {
    throw std::runtime_error("trajectory step must have state, action, duration");
  }
  TrajectoryStep step;
  for (const auto& [var, value] : j.at("state").items()) {
    step.state[var] = value.get<double>();
  }
  for (const auto& [var, value] : j.at("action").items()) {
    double v = value.get<double>();
    step.action.resolved[var] = v;
    step.action.effect[var] = num(v);
  }
  step.duration = j.at("duration").get<double>();
  if (!(step.duration >= 0)) {
    throw std::runtime_error("trajectory step has negative duration");
  }
  return step;
}

}  // namespace

std::string trajectories_to_json(const TrajectoryData& data) {
  json j;
  j["episodes"] = json::array();
  for (const auto& episode : data.episodes) {
    json je = json::array();
    for (const auto& step : episode) je.push_back(step_to_json(step));
    j["episodes"].push_back(std::move(je));
  }
  return j.dump(2);
}

TrajectoryData trajectories_from_json(const std::string& text) {
  json j = json::parse(text);
  if (!j.is_object() || !j.contains("episodes") || !j.at("episodes").is_array()) {
    throw std::runtime_error("trajectory file must contain an 'episodes' array");
  }
  TrajectoryData data;
  for (const auto& je : j.at("episodes")) {
    if (!je.is_array()) throw std::runtime_error("episode must be an array of steps");
    Episode episode;
    for (const auto& js : je) episode.push_back(step_from_json(js));
    if (!episode.empty()) {
      const auto& vars = episode.front().state;
      for (const auto& step : episode) {
        if (step.state.size() != vars.size()) {
          throw std::runtime_error("episode states do not share a variable set");
        }
        for (const auto& [var, value] : step.state) {
          (void)value;
          if (!vars.count(var)) {
            throw std::runtime_error("episode states do not share a variable set");
          }
        }
      }
    }
    data.episodes.push_back(std::move(episode));
  }
  return data;
}

TrajectoryData load_trajectories(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return trajectories_from_json(buffer.str());
}

void save_trajectories(const TrajectoryData& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trajectory file: " + path);
  out << trajectories_to_json(data) << "\n";
}

}  // namespace mulearn
