#include "oreo/dataset.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oreo/errors.hpp"

namespace oreo {

namespace {

using Json = nlohmann::ordered_json;

Json tokens_to_json(std::span<const TokenId> tokens) {
  Json arr = Json::array();
  for (TokenId t : tokens) arr.push_back(t);
  return arr;
}

std::vector<TokenId> tokens_from_json(const Json& arr,
                                      const std::string& field) {
  if (!arr.is_array())
    throw IoError("dataset: field '" + field + "' must be an int array");
  std::vector<TokenId> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number_integer())
      throw IoError("dataset: field '" + field + "' must be an int array");
    out.push_back(v.get<TokenId>());
  }
  return out;
}

}  // namespace

double OfflineDataset::positive_fraction() const {
  if (trajectories.empty()) return 0.0;
  std::size_t positives = 0;
  for (const Trajectory& t : trajectories)
    if (t.terminal_reward() > 0.0) ++positives;
  return static_cast<double>(positives) /
         static_cast<double>(trajectories.size());
}

void validate_dataset(const TaskMdp& mdp, const OfflineDataset& dataset) {
  if (dataset.trajectories.size() != dataset.task_ids.size())
    throw ContractError("dataset: trajectories/task_ids size mismatch");
  const auto initial = mdp.initial_states();
  for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
    const Trajectory& traj = dataset.trajectories[i];
    validate_trajectory(mdp, traj);
    const double r = traj.terminal_reward();
    if (r != 0.0 && r != 1.0)
      throw ContractError("dataset: trajectory " + std::to_string(i) +
                          " has terminal reward outside {0, 1}");
    const int task = dataset.task_ids[i];
    if (task < 0 || static_cast<std::size_t>(task) >= initial.size())
      throw ContractError("dataset: trajectory " + std::to_string(i) +
                          " references unknown task " + std::to_string(task));
    if (!(traj.steps.front().state == initial[static_cast<std::size_t>(task)]))
      throw ContractError("dataset: trajectory " + std::to_string(i) +
                          " does not start at its task's initial state");
  }
}

std::string dataset_to_jsonl(const OfflineDataset& dataset) {
  if (dataset.trajectories.size() != dataset.task_ids.size())
    throw ContractError("dataset: trajectories/task_ids size mismatch");
  std::string out;
  for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
    const Trajectory& traj = dataset.trajectories[i];
    Json rec;
    rec["env_id"] = dataset.task_ids[i];
    rec["prompt"] = tokens_to_json(traj.steps.empty()
                                       ? traj.final_state.tokens
                                       : traj.steps.front().state.tokens);
    Json steps = Json::array();
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const TrajStep& step = traj.steps[t];
      const State& next =
          t + 1 < traj.steps.size() ? traj.steps[t + 1].state
                                    : traj.final_state;
      Json js;
      js["action"] = Json::array({step.action.token});
      // Everything the transition appended beyond the action token is an
      // environment observation.
      const std::size_t obs_begin = step.state.tokens.size() + 1;
      js["obs"] = tokens_to_json(std::span<const TokenId>(
          next.tokens.data() + obs_begin, next.tokens.size() - obs_begin));
      steps.push_back(std::move(js));
    }
    rec["steps"] = std::move(steps);
    rec["reward"] = traj.terminal_reward();
    out += rec.dump();
    out += '\n';
  }
  return out;
}

OfflineDataset parse_dataset_jsonl(const TaskMdp& mdp, std::string_view text) {
  OfflineDataset dataset;
  const auto initial = mdp.initial_states();
  std::istringstream lines{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    Json rec;
    try {
      rec = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw IoError("dataset line " + std::to_string(line_no) + ": " +
                    e.what());
    }
    for (const char* field : {"env_id", "prompt", "steps", "reward"}) {
      if (!rec.contains(field))
        throw IoError("dataset line " + std::to_string(line_no) +
                      ": missing field '" + std::string(field) + "'");
    }
    const int env_id = rec["env_id"].get<int>();
    const auto prompt = tokens_from_json(rec["prompt"], "prompt");
    if (env_id < 0 || static_cast<std::size_t>(env_id) >= initial.size())
      throw IoError("dataset line " + std::to_string(line_no) +
                    ": unknown env_id " + std::to_string(env_id));
    State cur = initial[static_cast<std::size_t>(env_id)];
    if (cur.tokens != prompt)
      throw IoError("dataset line " + std::to_string(line_no) +
                    ": prompt does not match task " + std::to_string(env_id));
    Trajectory traj;
    const double reward = rec["reward"].get<double>();
    const auto& steps = rec["steps"];
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const auto action = tokens_from_json(steps[t]["action"], "action");
      const auto obs = tokens_from_json(steps[t]["obs"], "obs");
      if (action.size() != 1)
        throw IoError("dataset line " + std::to_string(line_no) +
                      ": this MDP uses single-token actions");
      const Action a{action[0]};
      State next = mdp.transition(cur, a);  // validates legality
      const std::size_t obs_begin = cur.tokens.size() + 1;
      const std::span<const TokenId> replayed(
          next.tokens.data() + obs_begin, next.tokens.size() - obs_begin);
      if (!std::equal(replayed.begin(), replayed.end(), obs.begin(),
                      obs.end()))
        throw IoError("dataset line " + std::to_string(line_no) +
                      ": observation mismatch at step " + std::to_string(t));
      traj.steps.push_back({std::move(cur), a, 0.0});
      cur = std::move(next);
    }
    if (traj.steps.empty())
      throw IoError("dataset line " + std::to_string(line_no) +
                    ": trajectory has no steps");
    traj.steps.back().reward = reward;
    traj.final_state = std::move(cur);
    if (!traj.final_state.terminal)
      throw IoError("dataset line " + std::to_string(line_no) +
                    ": trajectory does not reach a terminal state");
    dataset.trajectories.push_back(std::move(traj));
    dataset.task_ids.push_back(env_id);
  }
  return dataset;
}

void write_dataset_jsonl(const OfflineDataset& dataset,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << dataset_to_jsonl(dataset);
  if (!out) throw IoError("write failed: " + path.string());
}

OfflineDataset read_dataset_jsonl(const TaskMdp& mdp,
                                  const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset_jsonl(mdp, buf.str());
}

}  // namespace oreo
