#pragma once

// Experiment pipeline: matchup evaluation, the training-probability sweep,
// the (p2_max, p3_max) design sweep, slope extraction and welfare arithmetic.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cpsgame/learning.hpp"

namespace cpsgame {

struct SweepRecord {
  double p2_max = 0.0;
  double p3_max = 0.0;
  double train_p = 0.0;
  double sim_p = 0.0;
  double mean_reward = 0.0;
  double std_error = 0.0;
  std::uint64_t n_episodes = 0;
  bool converged = true;
};

/// Reward per step the attacker is present: mean / sim_p. Empty at sim_p = 0.
std::optional<double> normalized_reward(const SweepRecord& r);

struct SweepResult {
  std::vector<SweepRecord> records;
};

struct WelfareParams {
  double energy_value = 80.0;         ///< C_E, $/MW-hr
  double event_cost = 300.0;          ///< C_PQ, $/sensitive customer/event
  double sensitive_customers = 1.0;
  double step_minutes = 1.0;
  double attack_probability = 0.01;

  void validate() const;
};

struct MatchupResult {
  double mean_reward = 0.0;
  double std_error = 0.0;
  std::uint64_t n_episodes = 0;
  std::optional<double> normalized;
};

/// Plays `episodes` episodes on per-episode evaluation streams of `seed` and
/// reports the mean and standard error of the per-episode average defender
/// reward. Identical for any thread count.
MatchupResult evaluate_matchup(const DefenderStrategy& defender,
                               const AttackerStrategy& attacker,
                               const ScenarioParams& params,
                               const ObservationConfig& obs, double sim_p,
                               int episodes, const EpisodeOptions& episode,
                               std::uint64_t seed, int threads = 1);

double mix_rewards(double r_at_p0, double r_at_p1, double p);

/// Shared settings of the sweeps.
struct StudyOptions {
  ScenarioParams params;
  ObservationConfig observation;
  StateCodec codec;
  TrainConfig training;
  int eval_episodes = 2000;
  std::uint64_t seed = 0;
  int threads = 1;
  /// Called after each trained defender with a short description. May be
  /// called from worker threads, but never concurrently.
  std::function<void(const std::string& what)> progress;
};

/// Seven values from 0.01 to 1.0, evenly spaced in log.
std::vector<double> default_probability_grid();
std::vector<double> default_p2_grid();
std::vector<double> default_p3_grid();

/// One level-1 defender per training probability, each scored against the
/// level-0 attacker at every simulation probability. Training and evaluation
/// streams are shared by all rows.
SweepResult p_sweep(const StudyOptions& options, const std::vector<double>& train_ps,
                    const std::vector<double>& sim_ps);

struct DesignSweepOptions {
  /// Keep the generator's real output at the base scenario value while
  /// p3_max varies. When false, real output follows p3_max.
  bool hold_real_generation = true;
  /// Directory for per-cell result files; cells already present with a
  /// matching fingerprint are loaded instead of recomputed. Empty disables.
  std::string cell_dir;
  std::string fingerprint;
};

/// Trains a defender at options.training.train_p for every grid cell and
/// evaluates it at sim_p = 0 and 1. The p2 range width of the base scenario
/// is kept for every p2_max.
SweepResult design_sweep(const StudyOptions& options, const std::vector<double>& p2_grid,
                         const std::vector<double>& p3_grid,
                         const DesignSweepOptions& design = {});

/// Mixes the sim_p = 0 and sim_p = 1 records of each cell to probability p.
/// Throws InsufficientData when a cell lacks an endpoint.
std::vector<SweepRecord> mix_design(const SweepResult& result, double p);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  int points = 0;
};

/// Least-squares line of mean_reward against p3_max over the records with the
/// given p2_max and p3_max <= p3_cutoff. R^2 is 1 when the fit is exact.
SlopeFit extract_slope(const std::vector<SweepRecord>& records, double p2_max,
                       double p3_cutoff);

/// $/MW/hr of power-quality cost implied by a reward slope. Requires slope <= 0.
double welfare_cost_rate(double slope, const WelfareParams& w);

/// Event cost at which the welfare cost equals the energy value.
double break_even_cpq(double slope, double energy_value, const WelfareParams& w);

struct WelfareRow {
  double p2_max = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
  double cost_rate = 0.0;
  double break_even = 0.0;
};

/// Per p2_max: slope at w.attack_probability below the cutoff, cost rate and
/// break-even. Rows whose slope is not negative get cost 0 and an infinite
/// break-even. p2 values with too few points are skipped; throws
/// InsufficientData when nothing remains.
std::vector<WelfareRow> welfare_analysis(const SweepResult& result, const WelfareParams& w,
                                         double p3_cutoff);

void write_sweep_csv(const SweepResult& result, std::ostream& out);
void write_sweep_csv_file(const SweepResult& result, const std::string& path);
SweepResult read_sweep_csv(std::istream& in);
SweepResult read_sweep_csv_file(const std::string& path);

/// Plays `episodes` episodes on per-episode simulation streams of `seed` and
/// writes one CSV row per step. Output is identical for any thread count.
void write_trajectories(const DefenderStrategy& defender, const AttackerStrategy& attacker,
                        const ScenarioParams& params, const ObservationConfig& obs,
                        double p, int episodes, const EpisodeOptions& episode,
                        std::uint64_t seed, int threads, std::ostream& out);

void write_welfare_csv(const std::vector<WelfareRow>& rows, std::ostream& out);
void write_welfare_csv_file(const std::vector<WelfareRow>& rows, const std::string& path);

}  // namespace cpsgame
