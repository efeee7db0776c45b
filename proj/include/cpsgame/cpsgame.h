/* C interface to the cpsgame library. All functions return a status code;
 * on failure cpsg_last_error() describes the problem (per thread). Handles
 * are opaque and owned by the caller once returned. */
#ifndef CPSGAME_CPSGAME_H
#define CPSGAME_CPSGAME_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CPSG_API __declspec(dllexport)
#else
#define CPSG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

#define CPSG_ABI_VERSION 1

typedef enum cpsg_status {
  CPSG_OK = 0,
  CPSG_ERR_INVALID_ARGUMENT = 1,
  CPSG_ERR_CONFIG = 2,
  CPSG_ERR_IO = 3,
  CPSG_ERR_CODEC_MISMATCH = 4,
  CPSG_ERR_INSUFFICIENT_DATA = 5,
  CPSG_ERR_DEGENERATE = 6,
  CPSG_ERR_INTERNAL = 7
} cpsg_status;

typedef enum cpsg_player { CPSG_DEFENDER = 0, CPSG_ATTACKER = 1 } cpsg_player;

typedef enum cpsg_sweep_kind { CPSG_SWEEP_P = 0, CPSG_SWEEP_DESIGN = 1 } cpsg_sweep_kind;

typedef struct cpsg_config cpsg_config;
typedef struct cpsg_policy cpsg_policy;

typedef void (*cpsg_progress_fn)(const char* message, void* user);

CPSG_API uint32_t cpsg_abi_version(void);
CPSG_API const char* cpsg_status_name(cpsg_status status);
/* Message of the last failed call on this thread; "" if none. */
CPSG_API const char* cpsg_last_error(void);
/* Receives progress lines from long-running commands. NULL disables. */
CPSG_API void cpsg_set_progress(cpsg_progress_fn fn, void* user);

CPSG_API cpsg_status cpsg_config_default(cpsg_config** out);
CPSG_API cpsg_status cpsg_config_load(const char* path, cpsg_config** out);
CPSG_API cpsg_status cpsg_config_save(const cpsg_config* cfg, const char* path);
/* Dotted key, e.g. "training.train_p" or "seed". */
CPSG_API cpsg_status cpsg_config_set(cpsg_config* cfg, const char* key, const char* value);
/* Value of a dotted key: strings as-is, other values as JSON text. Copied
 * like cpsg_config_json. */
CPSG_API cpsg_status cpsg_config_get(const cpsg_config* cfg, const char* key, char* buf,
                                     size_t cap, size_t* len);
/* Copies the JSON text into buf (NUL-terminated, truncated to cap) and stores
 * the full length, without the NUL, in *len when len is not NULL. */
CPSG_API cpsg_status cpsg_config_json(const cpsg_config* cfg, char* buf, size_t cap,
                                      size_t* len);
CPSG_API void cpsg_config_free(cpsg_config* cfg);

CPSG_API cpsg_status cpsg_policy_load(const char* path, cpsg_policy** out);
CPSG_API cpsg_status cpsg_policy_save(const cpsg_policy* policy, const char* path);
CPSG_API cpsg_status cpsg_policy_info(const cpsg_policy* policy, cpsg_player* player,
                                      size_t* n_states);
CPSG_API void cpsg_policy_free(cpsg_policy* policy);

/* Trains the level and player named in the config's "train" section. The
 * training log CSV is written when log_path is not NULL. */
CPSG_API cpsg_status cpsg_train(const cpsg_config* cfg, const char* log_path,
                                cpsg_policy** out, int* converged);

/* Writes the trajectory CSV for the config's "simulate" section. A NULL
 * policy means the level-0 player for that role. */
CPSG_API cpsg_status cpsg_simulate(const cpsg_config* cfg, const cpsg_policy* defender,
                                   const cpsg_policy* attacker, const char* csv_path);

/* Runs a sweep and writes its CSV. For the design sweep, cell_dir (may be
 * NULL) holds per-cell results used to resume an interrupted run. */
CPSG_API cpsg_status cpsg_sweep(const cpsg_config* cfg, cpsg_sweep_kind kind,
                                const char* csv_path, const char* cell_dir);

/* Reads a design sweep CSV and writes the slope/welfare analysis CSV. */
CPSG_API cpsg_status cpsg_welfare(const cpsg_config* cfg, const char* sweep_csv,
                                  const char* out_csv);

/* Numeric helpers; the welfare ones use the config's "welfare" section. */
CPSG_API cpsg_status cpsg_mix_rewards(double r_at_p0, double r_at_p1, double p, double* out);
CPSG_API cpsg_status cpsg_welfare_cost_rate(const cpsg_config* cfg, double slope, double* out);
CPSG_API cpsg_status cpsg_break_even_cpq(const cpsg_config* cfg, double slope, double* out);
/* out receives P1, Q1, P2, Q2, V1, V2, V3. */
CPSG_API cpsg_status cpsg_solve_flows(const cpsg_config* cfg, double v1, double p2, double q2,
                                      double p3, double q3, double out[7]);

#ifdef __cplusplus
}
#endif

#endif
