// Command-line front end. Talks to the library only through cpsgame.h.

#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cpsgame/cpsgame.h"

namespace {

struct Failure {
  cpsg_status status;
  std::string context;
};

void check(cpsg_status s, const std::string& context) {
  if (s != CPSG_OK) throw Failure{s, context};
}

struct ConfigDeleter {
  void operator()(cpsg_config* c) const { cpsg_config_free(c); }
};
struct PolicyDeleter {
  void operator()(cpsg_policy* p) const { cpsg_policy_free(p); }
};
using ConfigPtr = std::unique_ptr<cpsg_config, ConfigDeleter>;
using PolicyPtr = std::unique_ptr<cpsg_policy, PolicyDeleter>;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> threads;
  std::vector<std::string> sets;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "master seed (overrides config)");
  cmd->add_option("--out", f.out, "existing output directory (overrides config output_dir)");
  cmd->add_option("--threads", f.threads, "worker threads (overrides config)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--set", f.sets, "override a config value, e.g. training.train_p=0.5")
      ->allow_extra_args(false);
  cmd->add_flag("-q,--quiet", f.quiet, "no progress output");
}

void set(cpsg_config* cfg, const std::string& key, const std::string& value) {
  check(cpsg_config_set(cfg, key.c_str(), value.c_str()), "--set " + key);
}

std::string number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

ConfigPtr resolve_config(const CommonFlags& f) {
  cpsg_config* raw = nullptr;
  if (f.config.empty()) {
    check(cpsg_config_default(&raw), "default config");
  } else {
    check(cpsg_config_load(f.config.c_str(), &raw), "--config");
  }
  ConfigPtr cfg(raw);
  for (const std::string& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw CLI::ValidationError("--set", "expected key=value, got '" + kv + "'");
    }
    set(cfg.get(), kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) set(cfg.get(), "seed", std::to_string(*f.seed));
  if (f.threads) set(cfg.get(), "threads", std::to_string(*f.threads));
  if (!f.out.empty()) set(cfg.get(), "output_dir", f.out);
  return cfg;
}

std::string get(const cpsg_config* cfg, const char* key) {
  size_t len = 0;
  check(cpsg_config_get(cfg, key, nullptr, 0, &len), key);
  std::string text(len + 1, '\0');
  check(cpsg_config_get(cfg, key, text.data(), text.size(), nullptr), key);
  text.resize(len);
  return text;
}

std::string output_dir(const cpsg_config* cfg) {
  const std::string dir = get(cfg, "output_dir");
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw Failure{CPSG_ERR_IO, "output directory '" + dir + "' does not exist"};
  }
  return dir;
}

std::string join(const std::string& dir, const char* name) {
  return (std::filesystem::path(dir) / name).string();
}

void progress(const char* message, void*) { std::fprintf(stderr, "%s\n", message); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attacker/defender game on a three-node distribution feeder"};
  app.require_subcommand(1);

  CommonFlags sim_flags, train_flags, sweep_flags, welfare_flags, config_flags;

  auto* sim = app.add_subcommand("simulate", "play episodes and write trajectory.csv");
  add_common(sim, sim_flags);
  std::string policy_path, attacker_path;
  bool level0 = false;
  std::optional<double> sim_p;
  std::optional<int> episodes, steps, attack_at;
  auto* pol_opt = sim->add_option("--policy", policy_path, "trained defender or attacker policy")
                      ->check(CLI::ExistingFile);
  auto* l0_opt = sim->add_flag("--level0", level0, "use level-0 players only");
  pol_opt->excludes(l0_opt);
  sim->add_option("--attacker-policy", attacker_path, "trained attacker policy")
      ->check(CLI::ExistingFile)
      ->excludes(l0_opt);
  sim->add_option("--p", sim_p, "probability that the attacker exists")->check(CLI::Range(0.0, 1.0));
  sim->add_option("--episodes", episodes, "number of episodes")->check(CLI::PositiveNumber);
  sim->add_option("--steps", steps, "steps per episode")->check(CLI::PositiveNumber);
  sim->add_option("--attack-at-step", attack_at, "step at which an existing attacker enters")
      ->check(CLI::NonNegativeNumber);

  auto* train = app.add_subcommand("train", "train a level-k policy; writes policy.txt and training_log.csv");
  add_common(train, train_flags);
  std::optional<int> level;
  std::string player;
  train->add_option("--level", level, "cognitive level k >= 1")->check(CLI::PositiveNumber);
  train->add_option("--player", player, "defender or attacker")
      ->check(CLI::IsMember({"defender", "attacker"}));

  auto* sweep = app.add_subcommand("sweep", "run a sweep; writes sweep_p.csv or sweep_design.csv");
  add_common(sweep, sweep_flags);
  std::string kind;
  sweep->add_option("--kind", kind, "p or design")->required()->check(CLI::IsMember({"p", "design"}));

  auto* welfare = app.add_subcommand("welfare", "slope and welfare analysis; writes welfare.csv");
  add_common(welfare, welfare_flags);
  std::string sweep_csv;
  welfare->add_option("--sweep", sweep_csv, "design sweep CSV")->required()->check(CLI::ExistingFile);

  auto* show = app.add_subcommand("config", "print the resolved configuration as JSON");
  add_common(show, config_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      if (!level0 && policy_path.empty() && attacker_path.empty()) {
        throw CLI::ValidationError("simulate", "give --policy FILE or --level0");
      }
      ConfigPtr cfg = resolve_config(sim_flags);
      if (sim_p) set(cfg.get(), "simulate.p", number(*sim_p));
      if (episodes) set(cfg.get(), "simulate.episodes", std::to_string(*episodes));
      if (steps) set(cfg.get(), "simulate.steps", std::to_string(*steps));
      if (attack_at) set(cfg.get(), "simulate.attack_at_step", std::to_string(*attack_at));
      const std::string dir = output_dir(cfg.get());

      PolicyPtr defender, attacker;
      for (const std::string* path : {&policy_path, &attacker_path}) {
        if (path->empty()) continue;
        cpsg_policy* raw = nullptr;
        check(cpsg_policy_load(path->c_str(), &raw), *path);
        PolicyPtr p(raw);
        cpsg_player role = CPSG_DEFENDER;
        check(cpsg_policy_info(p.get(), &role, nullptr), *path);
        PolicyPtr& slot = role == CPSG_DEFENDER ? defender : attacker;
        if (slot) throw Failure{CPSG_ERR_INVALID_ARGUMENT, "two policies for the same player"};
        slot = std::move(p);
      }
      const std::string out = join(dir, "trajectory.csv");
      check(cpsg_simulate(cfg.get(), defender.get(), attacker.get(), out.c_str()), "simulate");
      std::printf("wrote %s\n", out.c_str());
    } else if (*train) {
      ConfigPtr cfg = resolve_config(train_flags);
      if (level) set(cfg.get(), "train.level", std::to_string(*level));
      if (!player.empty()) set(cfg.get(), "train.player", player);
      const std::string dir = output_dir(cfg.get());
      if (!train_flags.quiet) cpsg_set_progress(progress, nullptr);
      const std::string log = join(dir, "training_log.csv");
      cpsg_policy* raw = nullptr;
      int converged = 0;
      check(cpsg_train(cfg.get(), log.c_str(), &raw, &converged), "train");
      PolicyPtr policy(raw);
      const std::string out = join(dir, "policy.txt");
      check(cpsg_policy_save(policy.get(), out.c_str()), "train");
      size_t n_states = 0;
      check(cpsg_policy_info(policy.get(), nullptr, &n_states), "train");
      std::printf("wrote %s (%zu states, %s)\n", out.c_str(), n_states,
                  converged ? "converged" : "NOT converged");
      std::printf("wrote %s\n", log.c_str());
    } else if (*sweep) {
      ConfigPtr cfg = resolve_config(sweep_flags);
      const std::string dir = output_dir(cfg.get());
      if (!sweep_flags.quiet) cpsg_set_progress(progress, nullptr);
      const bool design = kind == "design";
      const std::string out = join(dir, design ? "sweep_design.csv" : "sweep_p.csv");
      const std::string cells = join(dir, "cells");
      check(cpsg_sweep(cfg.get(), design ? CPSG_SWEEP_DESIGN : CPSG_SWEEP_P, out.c_str(),
                       design ? cells.c_str() : nullptr),
            "sweep");
      std::printf("wrote %s\n", out.c_str());
    } else if (*welfare) {
      ConfigPtr cfg = resolve_config(welfare_flags);
      const std::string dir = output_dir(cfg.get());
      const std::string out = join(dir, "welfare.csv");
      check(cpsg_welfare(cfg.get(), sweep_csv.c_str(), out.c_str()), "welfare");
      std::printf("wrote %s\n", out.c_str());
    } else if (*show) {
      ConfigPtr cfg = resolve_config(config_flags);
      size_t len = 0;
      check(cpsg_config_json(cfg.get(), nullptr, 0, &len), "config");
      std::string text(len + 1, '\0');
      check(cpsg_config_json(cfg.get(), text.data(), text.size(), nullptr), "config");
      std::fputs(text.c_str(), stdout);
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const Failure& f) {
    const char* detail = cpsg_last_error();
    std::fprintf(stderr, "cpsgame: %s: %s%s%s\n", f.context.c_str(), cpsg_status_name(f.status),
                 *detail ? ": " : "", detail);
    return 1;
  }
  return 0;
}
