// Command-line front end: wires run configs, environments, training,
// oracle computation, evaluation, and artifact persistence into
// reproducible runs.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "oreo/baselines.hpp"
#include "oreo/checkpoint.hpp"
#include "oreo/dataset.hpp"
#include "oreo/envs.hpp"
#include "oreo/errors.hpp"
#include "oreo/inference.hpp"
#include "oreo/oracle.hpp"
#include "oreo/rng.hpp"
#include "oreo/trainer.hpp"

namespace fs = std::filesystem;

namespace {

std::string fmt_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

struct GlobalOpts {
  std::string out;
  std::uint64_t seed = 0;
  int threads = 1;

  std::string family = "keyhole";
  oreo::EnvSpec spec;

  fs::path out_root() const {
    if (!out.empty()) return out;
    if (const char* env = std::getenv("ORE0_OUT"); env && *env) return env;
    return "out";
  }

  fs::path ensure_dir(const char* sub) const {
    fs::path dir = out_root();
    if (sub != nullptr) dir /= sub;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw oreo::IoError("cannot create directory " + dir.string());
    return dir;
  }

  std::unique_ptr<oreo::TaskMdp> make_mdp() const {
    oreo::EnvSpec s = spec;
    s.family = oreo::env_family_from_string(family);
    return oreo::make_env(s);
  }
};

void add_global_options(CLI::App& app, GlobalOpts& g) {
  app.add_option("--out", g.out, "output root (default: $ORE0_OUT or ./out)");
  app.add_option("--seed", g.seed, "root seed for all randomness");
  app.add_option("--threads", g.threads, "worker cap for batch gradients")
      ->check(CLI::PositiveNumber);

  app.add_option("--env.family", g.family,
                 "digit-chain | keyhole | gridworld");
  app.add_option("--env.vocab", g.spec.vocab, "vocabulary size");
  app.add_option("--env.depth", g.spec.depth, "reasoning steps");
  app.add_option("--env.horizon", g.spec.horizon, "gridworld action cap");
  app.add_option("--env.instances", g.spec.instances, "task instances");
  app.add_option("--env.modulus", g.spec.modulus,
                 "digit-chain modulus (0 = vocab)");
  app.add_option("--env.tokens-per-step", g.spec.tokens_per_step,
                 "digit-chain tokens per reasoning step");
  app.add_option("--env.key-position", g.spec.key_position,
                 "keyhole key position");
  app.add_option("--env.key-token", g.spec.key_token, "keyhole key token");
  app.add_option("--env.grid-width", g.spec.grid_width, "gridworld width");
  app.add_option("--env.grid-height", g.spec.grid_height, "gridworld height");
  app.add_option("--env.goal-cell", g.spec.goal_cell,
                 "gridworld goal cell (-1 = last)");
  app.add_option("--env.start-cell", g.spec.start_cell,
                 "gridworld start cell of instance 0");
  app.add_option("--env.reward-scale", g.spec.reward_scale,
                 "terminal reward multiplier");
  app.add_option("--env.cap", g.spec.enumeration_cap,
                 "state/trajectory enumeration cap");
}

struct TrainOpts {
  std::string algo = "oreo";
  std::string variant = "token";
  std::string optimizer = "sgd";
  double beta = -1.0;  // negative = per-algo default
  double alpha = -1.0;
  double policy_lr = -1.0;
  double value_lr = -1.0;
  int epochs = 1;
  int batch_size = 16;
  int max_steps = 0;
  int log_every = 100;
  int eval_every = 0;
  bool alternating = false;
  bool paper_preset = false;
  int pair_cap = oreo::kDefaultPairCap;
};

void add_train_options(CLI::App& app, TrainOpts& t) {
  app.add_option("--algo", t.algo, "oreo | dpo | rft | sft");
  app.add_option("--variant", t.variant,
                 "oreo loss variant: token | step | response");
  app.add_option("--optimizer", t.optimizer, "sgd | adam");
  app.add_option("--beta", t.beta, "KL-regularization strength");
  app.add_option("--alpha", t.alpha, "KL regularizer weight (oreo)");
  app.add_option("--policy-lr", t.policy_lr, "policy learning rate");
  app.add_option("--value-lr", t.value_lr, "value learning rate");
  app.add_option("--epochs", t.epochs, "passes over the data");
  app.add_option("--batch-size", t.batch_size, "trajectories per update");
  app.add_option("--max-steps", t.max_steps, "cap on update steps (0 = off)");
  app.add_option("--log-every", t.log_every, "metrics cadence in steps");
  app.add_option("--eval-every", t.eval_every,
                 "greedy success probe cadence (0 = off)");
  app.add_flag("--alternating", t.alternating,
               "refresh policy gradient after the value step");
  app.add_flag("--paper-preset", t.paper_preset,
               "use the large-scale beta/alpha operating point");
  app.add_option("--pair-cap", t.pair_cap,
                 "max preference pairs per task (dpo)");
}

oreo::TrainConfig resolve_train_config(const GlobalOpts& g,
                                       const TrainOpts& t) {
  oreo::TrainConfig cfg =
      t.paper_preset ? oreo::TrainConfig::paper_preset() : oreo::TrainConfig{};
  const bool is_dpo = t.algo == "dpo";
  const bool policy_only = t.algo != "oreo";
  if (t.beta >= 0.0) cfg.beta = t.beta;
  else if (is_dpo) cfg.beta = 0.1;
  if (t.alpha >= 0.0) cfg.alpha = t.alpha;
  if (t.policy_lr >= 0.0) cfg.policy_lr = t.policy_lr;
  else if (policy_only) cfg.policy_lr = 0.05;
  if (t.value_lr >= 0.0) cfg.value_lr = t.value_lr;
  cfg.epochs = t.epochs;
  cfg.batch_size = t.batch_size;
  cfg.max_steps = t.max_steps;
  cfg.log_every = t.log_every;
  cfg.eval_every = t.eval_every;
  cfg.alternating = t.alternating;
  cfg.variant = oreo::variant_from_string(t.variant);
  cfg.optimizer = oreo::optimizer_from_string(t.optimizer);
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  cfg.state_cap = g.spec.enumeration_cap;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw oreo::IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw oreo::IoError("write failed: " + path.string());
}

void append_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw oreo::IoError("cannot open for append: " + path.string());
  out << text;
  if (!out) throw oreo::IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw oreo::IoError("cannot open for reading: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// ---------------------------------------------------------------------------
// subcommands

void cmd_oracle(const GlobalOpts& g, double beta, const std::string& name) {
  auto mdp = g.make_mdp();
  const oreo::PolicyTable ref =
      oreo::make_uniform_reference(*mdp, g.spec.enumeration_cap);
  oreo::OracleResult oracle =
      oreo::soft_backward_induction(*mdp, ref, beta, g.spec.enumeration_cap);
  const auto initial = mdp->initial_states();
  for (std::size_t i = 0; i < initial.size(); ++i)
    std::cout << "instance " << i
              << ": V*(s0) = " << fmt_g17(oracle.v_star.value(initial[i]))
              << "\n";
  const double residual =
      oreo::bellman_residual(oracle.pi_star, oracle.v_star, *mdp, ref, beta,
                             g.spec.enumeration_cap);
  std::cout << "max bellman residual = " << fmt_g17(residual) << "\n";

  oreo::augment_with_afterstates(oracle.v_star, *mdp, g.spec.enumeration_cap);
  const fs::path path = g.ensure_dir("ckpt") / name;
  oreo::write_checkpoint(oreo::make_checkpoint(oracle.pi_star, oracle.v_star),
                         path);
  std::cout << "checkpoint written to " << path.string() << "\n";
}

oreo::PolicyTable load_behavior(const GlobalOpts& g, const oreo::TaskMdp& mdp,
                                const std::string& behavior) {
  if (behavior == "ref")
    return oreo::make_uniform_reference(mdp, g.spec.enumeration_cap);
  return oreo::bind_policy(mdp, oreo::read_checkpoint(behavior),
                           g.spec.enumeration_cap);
}

void cmd_gen_data(const GlobalOpts& g, const std::string& behavior,
                  int n_per_task, const std::string& name, int balance) {
  auto mdp = g.make_mdp();
  const oreo::PolicyTable pi = load_behavior(g, *mdp, behavior);
  oreo::OfflineDataset dataset = oreo::generate_offline_dataset(
      *mdp, pi, n_per_task, oreo::derive_seed(g.seed, "gen-data"));
  if (balance > 0)
    dataset = oreo::balance_dataset(dataset, balance,
                                    oreo::derive_seed(g.seed, "balance"));
  const fs::path path = g.ensure_dir("data") / name;
  oreo::write_dataset_jsonl(dataset, path);
  std::cout << "trajectories: " << dataset.size() << "\n"
            << "positive fraction: " << fmt_g17(dataset.positive_fraction())
            << "\n"
            << "dataset written to " << path.string() << "\n";
}

void cmd_train(const GlobalOpts& g, const TrainOpts& t,
               const std::string& data, const std::string& pairs_path,
               const std::string& ckpt_name) {
  auto mdp = g.make_mdp();
  const oreo::PolicyTable ref =
      oreo::make_uniform_reference(*mdp, g.spec.enumeration_cap);
  const oreo::OfflineDataset dataset = oreo::read_dataset_jsonl(*mdp, data);
  const oreo::TrainConfig cfg = resolve_train_config(g, t);

  oreo::TrainedModel model;
  if (t.algo == "oreo") {
    model = oreo::train(dataset, *mdp, ref, cfg);
  } else if (t.algo == "rft") {
    model = oreo::rejection_sampling_train(dataset, *mdp, ref, cfg);
  } else if (t.algo == "sft") {
    model = oreo::sft_train(dataset, *mdp, ref, cfg);
  } else if (t.algo == "dpo") {
    std::vector<oreo::PreferencePair> pairs;
    if (!pairs_path.empty()) {
      pairs = oreo::parse_pairs_jsonl(dataset, read_text(pairs_path));
    } else {
      pairs = oreo::make_preference_pairs(dataset, t.pair_cap, g.seed);
      const fs::path out = g.ensure_dir("data") / "pairs.jsonl";
      write_text(out, oreo::pairs_to_jsonl(pairs));
      std::cout << "pairs written to " << out.string() << "\n";
    }
    if (pairs.empty())
      throw oreo::ContractError(
          "no preference pairs available; need tasks with both classes");
    model = oreo::dpo_train(pairs, *mdp, ref, cfg);
  } else {
    throw oreo::ConfigError("unknown algo '" + t.algo + "'");
  }

  const fs::path ckpt = g.ensure_dir("ckpt") / ckpt_name;
  oreo::write_checkpoint(oreo::make_checkpoint(model.policy, model.value),
                         ckpt);
  write_text(g.ensure_dir(nullptr) / "metrics.jsonl",
             oreo::metrics_to_jsonl(model.history));
  const double residual = oreo::bellman_residual(
      model.policy, model.value, *mdp, ref, cfg.beta, g.spec.enumeration_cap);
  const oreo::MetricsRecord& last = model.history.back();
  std::cout << "steps: " << last.step << "\n"
            << "final value loss = " << fmt_g17(last.value_loss) << "\n"
            << "final policy loss = " << fmt_g17(last.policy_loss) << "\n"
            << "max bellman residual = " << fmt_g17(residual) << "\n"
            << "checkpoint written to " << ckpt.string() << "\n";
}

void parse_mode(const std::string& mode, oreo::EvalMode& out, int& b_or_k) {
  std::string head = mode;
  std::string arg;
  if (const auto colon = mode.find(':'); colon != std::string::npos) {
    head = mode.substr(0, colon);
    arg = mode.substr(colon + 1);
  }
  if (head == "greedy") {
    out = oreo::EvalMode::kGreedy;
    b_or_k = 0;
    if (!arg.empty()) throw oreo::ConfigError("greedy mode takes no parameter");
    return;
  }
  if (head == "beam") {
    out = oreo::EvalMode::kBeam;
    b_or_k = 4;
  } else if (head == "bok") {
    out = oreo::EvalMode::kBestOfK;
    b_or_k = 5;
  } else {
    throw oreo::ConfigError("unknown eval mode '" + mode +
                            "' (greedy | beam:B | bok:K)");
  }
  if (!arg.empty()) {
    try {
      b_or_k = std::stoi(arg);
    } catch (const std::exception&) {
      throw oreo::ConfigError("bad mode parameter '" + arg + "'");
    }
  }
}

void cmd_eval(const GlobalOpts& g, const std::string& ckpt_path,
              const std::string& mode_str, int episodes) {
  auto mdp = g.make_mdp();
  oreo::EvalMode mode;
  int b_or_k = 0;
  parse_mode(mode_str, mode, b_or_k);
  if (mode == oreo::EvalMode::kBeam && mdp->has_observations())
    throw oreo::ConfigError(
        "beam search is not applicable: this environment's dynamics are "
        "unknown to the searcher; use bok:K");
  if (mode == oreo::EvalMode::kBestOfK && !mdp->has_observations())
    throw oreo::ConfigError(
        "best-of-k targets observation environments; use beam:B");

  const oreo::Checkpoint ckpt = oreo::read_checkpoint(ckpt_path);
  const oreo::PolicyTable policy =
      oreo::bind_policy(*mdp, ckpt, g.spec.enumeration_cap);
  const oreo::ValueTable value = oreo::bind_value(ckpt);
  const oreo::EvalReport report =
      oreo::evaluate(policy, &value, *mdp, mode, b_or_k, episodes,
                     oreo::derive_seed(g.seed, "eval"));
  append_text(g.ensure_dir(nullptr) / "report.jsonl",
              oreo::eval_report_to_jsonl(report));
  std::cout << "mode " << oreo::to_string(report.mode);
  if (report.b_or_k > 0) std::cout << ":" << report.b_or_k;
  std::cout << " episodes " << report.episodes << " success_rate "
            << fmt_g17(report.success_rate) << " mean_reward "
            << fmt_g17(report.mean_reward) << " mean_length "
            << fmt_g17(report.mean_length) << "\n";
}

void cmd_iterate(const GlobalOpts& g, const TrainOpts& t, int rounds,
                 int n_per_task) {
  auto mdp = g.make_mdp();
  const oreo::PolicyTable ref =
      oreo::make_uniform_reference(*mdp, g.spec.enumeration_cap);
  const oreo::TrainConfig cfg = resolve_train_config(g, t);

  oreo::TrainerFn trainer;
  if (t.algo == "oreo") {
    trainer = {};
  } else if (t.algo == "rft") {
    trainer = [](const oreo::OfflineDataset& d, const oreo::TaskMdp& m,
                 const oreo::PolicyTable& r, const oreo::TrainConfig& c) {
      return oreo::rejection_sampling_train(d, m, r, c);
    };
  } else if (t.algo == "sft") {
    trainer = [](const oreo::OfflineDataset& d, const oreo::TaskMdp& m,
                 const oreo::PolicyTable& r, const oreo::TrainConfig& c) {
      return oreo::sft_train(d, m, r, c);
    };
  } else if (t.algo == "dpo") {
    const int cap = t.pair_cap;
    trainer = [cap](const oreo::OfflineDataset& d, const oreo::TaskMdp& m,
                    const oreo::PolicyTable& r, const oreo::TrainConfig& c) {
      const auto pairs = oreo::make_preference_pairs(d, cap, c.seed);
      if (pairs.empty())
        throw oreo::TrainingError("iteration produced no preference pairs");
      return oreo::dpo_train(pairs, m, r, c);
    };
  } else {
    throw oreo::ConfigError("unknown algo '" + t.algo + "'");
  }

  const auto results =
      oreo::run_iterations(*mdp, ref, cfg, rounds, n_per_task, trainer);

  const fs::path ckpt_dir = g.ensure_dir("ckpt");
  const fs::path data_dir = g.ensure_dir("data");
  std::string summary;
  std::string metrics;
  std::cout << "round  positive_fraction  greedy_success\n";
  for (std::size_t k = 0; k < results.size(); ++k) {
    const auto& round = results[k];
    oreo::write_checkpoint(
        oreo::make_checkpoint(round.model.policy, round.model.value),
        ckpt_dir / ("round" + std::to_string(k) + ".ckpt"));
    oreo::write_dataset_jsonl(
        round.dataset, data_dir / ("round" + std::to_string(k) + ".jsonl"));
    nlohmann::ordered_json j;
    j["round"] = k;
    j["positive_fraction"] = round.positive_fraction;
    j["greedy_success"] = round.greedy_success;
    summary += j.dump();
    summary += '\n';
    metrics += oreo::metrics_to_jsonl(round.model.history);
    std::printf("%5zu  %17.4f  %14.4f\n", k, round.positive_fraction,
                round.greedy_success);
  }
  write_text(g.ensure_dir(nullptr) / "summary.jsonl", summary);
  write_text(g.ensure_dir(nullptr) / "metrics.jsonl", metrics);
}

void cmd_residual(const GlobalOpts& g, const std::string& ckpt_path,
                  double beta) {
  auto mdp = g.make_mdp();
  const oreo::PolicyTable ref =
      oreo::make_uniform_reference(*mdp, g.spec.enumeration_cap);
  const oreo::Checkpoint ckpt = oreo::read_checkpoint(ckpt_path);
  const oreo::PolicyTable policy =
      oreo::bind_policy(*mdp, ckpt, g.spec.enumeration_cap);
  const oreo::ValueTable value = oreo::bind_value(ckpt);
  std::cout << "max bellman residual = "
            << fmt_g17(oreo::bellman_residual(policy, value, *mdp, ref, beta,
                                              g.spec.enumeration_cap))
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tabular soft-consistency RL engine"};
  app.require_subcommand(1);
  app.set_config("--config", "", "declarative run config (INI sections)");

  GlobalOpts g;
  add_global_options(app, g);

  auto* oracle_cmd = app.add_subcommand(
      "oracle", "exact soft value/policy by backward induction");
  double oracle_beta = 1.0;
  std::string oracle_name = "oracle.ckpt";
  oracle_cmd->add_option("--beta", oracle_beta, "KL strength");
  oracle_cmd->add_option("--ckpt-name", oracle_name, "checkpoint file name");

  auto* gen_cmd =
      app.add_subcommand("gen-data", "sample an offline trajectory dataset");
  std::string gen_behavior = "ref";
  int gen_n = 10;
  std::string gen_name = "dataset.jsonl";
  int gen_balance = 0;
  gen_cmd->add_option("--behavior", gen_behavior,
                      "'ref' or a checkpoint path");
  gen_cmd->add_option("--n-per-task", gen_n, "rollouts per task instance");
  gen_cmd->add_option("--name", gen_name, "dataset file name");
  gen_cmd->add_option("--balance", gen_balance,
                      "per-class cap for the balancing filter (0 = off)");

  auto* train_cmd = app.add_subcommand("train", "offline training run");
  TrainOpts train_opts;
  std::string train_data;
  std::string train_pairs;
  std::string train_ckpt_name = "final.ckpt";
  train_cmd->add_option("--data", train_data, "dataset JSONL path")
      ->required();
  train_cmd->add_option("--pairs", train_pairs,
                        "preference pairs JSONL (dpo; built when absent)");
  train_cmd->add_option("--ckpt-name", train_ckpt_name,
                        "checkpoint file name");
  add_train_options(*train_cmd, train_opts);

  auto* eval_cmd = app.add_subcommand("eval", "decode and score a checkpoint");
  std::string eval_ckpt;
  std::string eval_mode = "greedy";
  int eval_episodes = 100;
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--mode", eval_mode, "greedy | beam:B | bok:K");
  eval_cmd->add_option("--episodes", eval_episodes, "episode count");

  auto* iter_cmd =
      app.add_subcommand("iterate", "alternate data collection and training");
  TrainOpts iter_opts;
  int iter_rounds = 3;
  int iter_n = 10;
  iter_cmd->add_option("--rounds", iter_rounds, "collection/training rounds");
  iter_cmd->add_option("--n-per-task", iter_n, "rollouts per task per round");
  add_train_options(*iter_cmd, iter_opts);

  auto* res_cmd =
      app.add_subcommand("residual", "soft-Bellman residual of a checkpoint");
  std::string res_ckpt;
  double res_beta = 0.5;
  res_cmd->add_option("--ckpt", res_ckpt, "checkpoint path")->required();
  res_cmd->add_option("--beta", res_beta, "KL strength");

  for (CLI::App* sub : app.get_subcommands({}))
    sub->fallthrough()->configurable();

  try {
    app.parse(argc, argv);
    if (oracle_cmd->parsed()) cmd_oracle(g, oracle_beta, oracle_name);
    if (gen_cmd->parsed())
      cmd_gen_data(g, gen_behavior, gen_n, gen_name, gen_balance);
    if (train_cmd->parsed())
      cmd_train(g, train_opts, train_data, train_pairs, train_ckpt_name);
    if (eval_cmd->parsed()) cmd_eval(g, eval_ckpt, eval_mode, eval_episodes);
    if (iter_cmd->parsed()) cmd_iterate(g, iter_opts, iter_rounds, iter_n);
    if (res_cmd->parsed()) cmd_residual(g, res_ckpt, res_beta);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "E_CONFIG\n";
    return app.exit(e);
  } catch (const oreo::Error& e) {
    std::cerr << e.code_name() << "\n" << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "E_INTERNAL\n" << e.what() << "\n";
    return 1;
  }
  return 0;
}
