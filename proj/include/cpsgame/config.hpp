#pragma once

// Run configuration: one JSON document with a section per component. Missing
// keys keep their defaults; unknown keys are rejected.

#include <cstdint>
#include <string>
#include <vector>

#include "cpsgame/studies.hpp"

namespace cpsgame {

struct SweepSettings {
  std::vector<double> train_ps = default_probability_grid();
  std::vector<double> sim_ps = default_probability_grid();
  std::vector<double> p2_grid = default_p2_grid();
  std::vector<double> p3_grid = default_p3_grid();
  double p3_cutoff = 1.5;
  bool hold_real_generation = true;
  int eval_episodes = 2000;
};

struct SimulateSettings {
  double p = 0.2;
  int episodes = 1;
  int steps = 100;
  /// Step at which an existing attacker becomes active.
  int attack_at_step = 0;
};

struct TrainSettings {
  int level = 1;
  PlayerRole player = PlayerRole::kDefender;
};

struct RunConfig {
  ScenarioParams scenario;
  ObservationConfig observation;
  /// Statistic binning and move-history flag of trained policies.
  StateCodec policy;
  TrainConfig training;
  WelfareParams welfare;
  SweepSettings sweep;
  SimulateSettings simulate;
  TrainSettings train;
  std::uint64_t seed = 1;
  std::string output_dir = ".";
  int threads = 1;

  void validate() const;
  StudyOptions study_options() const;
  LevelKOptions level_k_options() const;
};

RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::string& path);
void save_config(const RunConfig& cfg, const std::string& path);

/// Sets one dotted key ("training.train_p", "seed") from text. The value is
/// read as JSON when it parses, otherwise as a string. The result is validated.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Value of one dotted key: strings as-is, everything else as JSON.
std::string get_config_value(const RunConfig& cfg, const std::string& key);

/// Hex digest of everything that influences results (threads and output_dir
/// excluded).
std::string config_fingerprint(const RunConfig& cfg);

}  // namespace cpsgame
