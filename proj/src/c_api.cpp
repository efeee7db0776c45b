#include "cpsgame/cpsgame.h"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <mutex>
#include <new>
#include <string>

#include "cpsgame/config.hpp"
#include "cpsgame/csv.hpp"
#include "cpsgame/errors.hpp"

struct cpsg_config {
  cpsgame::RunConfig cfg;
};

struct cpsg_policy {
  cpsgame::TabularPolicy policy;
};

namespace {

thread_local std::string g_last_error;

std::mutex g_progress_mutex;
cpsg_progress_fn g_progress = nullptr;
void* g_progress_user = nullptr;

void report(const std::string& message) {
  std::lock_guard lock(g_progress_mutex);
  if (g_progress) g_progress(message.c_str(), g_progress_user);
}

cpsg_status fail(cpsg_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <class Fn>
cpsg_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return CPSG_OK;
  } catch (const cpsgame::ConfigError& e) {
    return fail(CPSG_ERR_CONFIG, e.what());
  } catch (const cpsgame::CodecMismatch& e) {
    return fail(CPSG_ERR_CODEC_MISMATCH, e.what());
  } catch (const cpsgame::IoError& e) {
    return fail(CPSG_ERR_IO, e.what());
  } catch (const cpsgame::InsufficientData& e) {
    return fail(CPSG_ERR_INSUFFICIENT_DATA, e.what());
  } catch (const cpsgame::DegenerateInput& e) {
    return fail(CPSG_ERR_DEGENERATE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(CPSG_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CPSG_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(CPSG_ERR_INTERNAL, "unknown error");
  }
}

#define CPSG_REQUIRE(cond, what) \
  if (!(cond)) return fail(CPSG_ERR_INVALID_ARGUMENT, what)

std::ofstream open_out(const char* path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw cpsgame::IoError(std::string("cannot open '") + path + "' for writing");
  return out;
}

void copy_out(const std::string& text, char* buf, size_t cap, size_t* len) {
  if (len) *len = text.size();
  if (cap > 0) {
    const size_t n = std::min(cap - 1, text.size());
    std::memcpy(buf, text.data(), n);
    buf[n] = '\0';
  }
}

}  // namespace

extern "C" {

uint32_t cpsg_abi_version(void) { return CPSG_ABI_VERSION; }

const char* cpsg_status_name(cpsg_status status) {
  switch (status) {
    case CPSG_OK: return "ok";
    case CPSG_ERR_INVALID_ARGUMENT: return "invalid argument";
    case CPSG_ERR_CONFIG: return "configuration error";
    case CPSG_ERR_IO: return "I/O error";
    case CPSG_ERR_CODEC_MISMATCH: return "codec mismatch";
    case CPSG_ERR_INSUFFICIENT_DATA: return "insufficient data";
    case CPSG_ERR_DEGENERATE: return "degenerate input";
    case CPSG_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* cpsg_last_error(void) { return g_last_error.c_str(); }

void cpsg_set_progress(cpsg_progress_fn fn, void* user) {
  std::lock_guard lock(g_progress_mutex);
  g_progress = fn;
  g_progress_user = user;
}

cpsg_status cpsg_config_default(cpsg_config** out) {
  CPSG_REQUIRE(out, "out is NULL");
  return guarded([&] { *out = new cpsg_config{}; });
}

cpsg_status cpsg_config_load(const char* path, cpsg_config** out) {
  CPSG_REQUIRE(path && out, "path or out is NULL");
  return guarded([&] { *out = new cpsg_config{cpsgame::load_config(path)}; });
}

cpsg_status cpsg_config_save(const cpsg_config* cfg, const char* path) {
  CPSG_REQUIRE(cfg && path, "config or path is NULL");
  return guarded([&] { cpsgame::save_config(cfg->cfg, path); });
}

cpsg_status cpsg_config_set(cpsg_config* cfg, const char* key, const char* value) {
  CPSG_REQUIRE(cfg && key && value, "config, key or value is NULL");
  // Leave the handle untouched when the new value is rejected.
  return guarded([&] {
    cpsgame::RunConfig next = cfg->cfg;
    cpsgame::set_config_value(next, key, value);
    cfg->cfg = std::move(next);
  });
}

cpsg_status cpsg_config_get(const cpsg_config* cfg, const char* key, char* buf, size_t cap,
                            size_t* len) {
  CPSG_REQUIRE(cfg && key, "config or key is NULL");
  CPSG_REQUIRE(buf || cap == 0, "buf is NULL with nonzero capacity");
  return guarded([&] { copy_out(cpsgame::get_config_value(cfg->cfg, key), buf, cap, len); });
}

cpsg_status cpsg_config_json(const cpsg_config* cfg, char* buf, size_t cap, size_t* len) {
  CPSG_REQUIRE(cfg, "config is NULL");
  CPSG_REQUIRE(buf || cap == 0, "buf is NULL with nonzero capacity");
  return guarded([&] { copy_out(cpsgame::config_to_json(cfg->cfg), buf, cap, len); });
}

void cpsg_config_free(cpsg_config* cfg) { delete cfg; }

cpsg_status cpsg_policy_load(const char* path, cpsg_policy** out) {
  CPSG_REQUIRE(path && out, "path or out is NULL");
  return guarded([&] { *out = new cpsg_policy{cpsgame::load_policy_file(path)}; });
}

cpsg_status cpsg_policy_save(const cpsg_policy* policy, const char* path) {
  CPSG_REQUIRE(policy && path, "policy or path is NULL");
  return guarded([&] { cpsgame::save_policy_file(policy->policy, path); });
}

cpsg_status cpsg_policy_info(const cpsg_policy* policy, cpsg_player* player, size_t* n_states) {
  CPSG_REQUIRE(policy, "policy is NULL");
  if (player) {
    *player = policy->policy.player == cpsgame::PlayerRole::kDefender ? CPSG_DEFENDER
                                                                       : CPSG_ATTACKER;
  }
  if (n_states) *n_states = policy->policy.table.size();
  g_last_error.clear();
  return CPSG_OK;
}

void cpsg_policy_free(cpsg_policy* policy) { delete policy; }

cpsg_status cpsg_train(const cpsg_config* cfg, const char* log_path, cpsg_policy** out,
                       int* converged) {
  CPSG_REQUIRE(cfg && out, "config or out is NULL");
  return guarded([&] {
    const cpsgame::RunConfig& c = cfg->cfg;
    cpsgame::LevelKOptions options = c.level_k_options();
    options.on_iteration = [](int level, cpsgame::PlayerRole role,
                              const cpsgame::IterationLog& l) {
      report("level " + std::to_string(level) + " " + cpsgame::to_string(role) +
             " iteration " + std::to_string(l.iteration) +
             " reward " + cpsgame::format_number(l.mean_reward) +
             " states " + std::to_string(l.states_visited));
    };
    cpsgame::TrainResult res =
        cpsgame::train_level_k(c.train.level, c.train.player, c.scenario, c.training, options);
    if (log_path) cpsgame::write_training_log(res.log, log_path);
    if (converged) *converged = res.converged ? 1 : 0;
    *out = new cpsg_policy{std::move(res.policy)};
  });
}

cpsg_status cpsg_simulate(const cpsg_config* cfg, const cpsg_policy* defender,
                          const cpsg_policy* attacker, const char* csv_path) {
  CPSG_REQUIRE(cfg && csv_path, "config or path is NULL");
  CPSG_REQUIRE(!defender || defender->policy.player == cpsgame::PlayerRole::kDefender,
               "defender policy belongs to an attacker");
  CPSG_REQUIRE(!attacker || attacker->policy.player == cpsgame::PlayerRole::kAttacker,
               "attacker policy belongs to a defender");
  return guarded([&] {
    const cpsgame::RunConfig& c = cfg->cfg;
    std::unique_ptr<cpsgame::DefenderStrategy> d;
    std::unique_ptr<cpsgame::AttackerStrategy> a;
    if (defender) {
      d = std::make_unique<cpsgame::TabularDefender>(
          std::make_shared<const cpsgame::TabularPolicy>(defender->policy), c.scenario);
    } else {
      d = std::make_unique<cpsgame::Level0Defender>(c.scenario);
    }
    if (attacker) {
      a = std::make_unique<cpsgame::TabularAttacker>(
          std::make_shared<const cpsgame::TabularPolicy>(attacker->policy), c.scenario);
    } else {
      a = std::make_unique<cpsgame::Level0Attacker>(c.scenario);
    }
    cpsgame::EpisodeOptions ep;
    ep.n_steps = c.simulate.steps;
    ep.attack_start = c.simulate.attack_at_step;
    std::ofstream out = open_out(csv_path);
    cpsgame::write_trajectories(*d, *a, c.scenario, c.observation, c.simulate.p,
                                c.simulate.episodes, ep, c.seed, c.threads, out);
    out.close();
    if (!out) throw cpsgame::IoError(std::string("failed writing '") + csv_path + "'");
  });
}

cpsg_status cpsg_sweep(const cpsg_config* cfg, cpsg_sweep_kind kind, const char* csv_path,
                       const char* cell_dir) {
  CPSG_REQUIRE(cfg && csv_path, "config or path is NULL");
  CPSG_REQUIRE(kind == CPSG_SWEEP_P || kind == CPSG_SWEEP_DESIGN, "unknown sweep kind");
  return guarded([&] {
    const cpsgame::RunConfig& c = cfg->cfg;
    cpsgame::StudyOptions options = c.study_options();
    options.progress = [](const std::string& what) { report("done " + what); };
    cpsgame::SweepResult result;
    if (kind == CPSG_SWEEP_P) {
      result = cpsgame::p_sweep(options, c.sweep.train_ps, c.sweep.sim_ps);
    } else {
      cpsgame::DesignSweepOptions design;
      design.hold_real_generation = c.sweep.hold_real_generation;
      if (cell_dir) design.cell_dir = cell_dir;
      design.fingerprint = cpsgame::config_fingerprint(c);
      result = cpsgame::design_sweep(options, c.sweep.p2_grid, c.sweep.p3_grid, design);
    }
    cpsgame::write_sweep_csv_file(result, csv_path);
  });
}

cpsg_status cpsg_welfare(const cpsg_config* cfg, const char* sweep_csv, const char* out_csv) {
  CPSG_REQUIRE(cfg && sweep_csv && out_csv, "config or path is NULL");
  return guarded([&] {
    const cpsgame::RunConfig& c = cfg->cfg;
    const cpsgame::SweepResult sweep = cpsgame::read_sweep_csv_file(sweep_csv);
    const auto rows = cpsgame::welfare_analysis(sweep, c.welfare, c.sweep.p3_cutoff);
    cpsgame::write_welfare_csv_file(rows, out_csv);
  });
}

cpsg_status cpsg_mix_rewards(double r_at_p0, double r_at_p1, double p, double* out) {
  CPSG_REQUIRE(out, "out is NULL");
  CPSG_REQUIRE(p >= 0.0 && p <= 1.0, "p must lie in [0, 1]");
  *out = cpsgame::mix_rewards(r_at_p0, r_at_p1, p);
  g_last_error.clear();
  return CPSG_OK;
}

cpsg_status cpsg_welfare_cost_rate(const cpsg_config* cfg, double slope, double* out) {
  CPSG_REQUIRE(cfg && out, "config or out is NULL");
  return guarded([&] { *out = cpsgame::welfare_cost_rate(slope, cfg->cfg.welfare); });
}

cpsg_status cpsg_break_even_cpq(const cpsg_config* cfg, double slope, double* out) {
  CPSG_REQUIRE(cfg && out, "config or out is NULL");
  return guarded([&] {
    *out = cpsgame::break_even_cpq(slope, cfg->cfg.welfare.energy_value, cfg->cfg.welfare);
  });
}

cpsg_status cpsg_solve_flows(const cpsg_config* cfg, double v1, double p2, double q2,
                             double p3, double q3, double out[7]) {
  CPSG_REQUIRE(cfg && out, "config or out is NULL");
  return guarded([&] {
    const cpsgame::FlowSolution s = cpsgame::solve_flows(v1, p2, q2, p3, q3, cfg->cfg.scenario);
    const double values[7] = {s.P1, s.Q1, s.P2, s.Q2, s.V1, s.V2, s.V3};
    std::memcpy(out, values, sizeof(values));
  });
}

}  // extern "C"
