#pragma once

// Iterated attacker/defender game engine: per-step state evolution, binned
// observations, memory statistics, move spaces and episode execution.

#include <array>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "cpsgame/powerflow.hpp"
#include "cpsgame/rng.hpp"

namespace cpsgame {

/// Bin widths for observed quantities and an optional uniform noise hook.
struct ObservationConfig {
  double voltage_bin = 0.01;
  double flow_bin = 0.05;
  /// Half-width of zero-mean uniform noise added before binning. Off when 0.
  double noise = 0.0;

  void validate() const;
};

struct BinnedValue {
  std::int32_t index = 0;
  double width = 1.0;

  static BinnedValue of(double x, double width);
  double value() const { return index * width; }
  bool operator==(const BinnedValue&) const = default;
};

struct DefenderObservation {
  BinnedValue v1, v2, v3, P1, Q1;
  bool operator==(const DefenderObservation&) const = default;
};

struct AttackerObservation {
  BinnedValue v2, v3, p3, q3;
  bool operator==(const AttackerObservation&) const = default;
};

enum class TapMove : std::int8_t { kDown = -1, kHold = 0, kUp = 1 };

/// Attacker move recorded when the attacker is absent.
inline constexpr int kNoAttackerMove = -1;

struct DefenderMemory {
  DefenderObservation observation;
  TapMove previous_move = TapMove::kHold;
  double statistic = 0.0;
};

struct AttackerMemory {
  AttackerObservation observation;
  /// q3 index chosen on the previous step (the current index if it held).
  int previous_move = 0;
  double statistic = 0.0;
};

struct GridState {
  int step_index = -1;
  int tap = 0;
  double v1 = 1.0;
  double p2 = 0.0;
  double q2 = 0.0;
  double q3 = 0.0;
  int q3_index = 0;
  FlowSolution flows;
};

struct StepRecord {
  GridState state;
  TapMove defender_move = TapMove::kHold;
  int attacker_move = kNoAttackerMove;
  double r_d = 0.0;
  double r_a = 0.0;
  bool attacker_present = false;
};

struct DefenderMove {
  TapMove step = TapMove::kHold;
  int tap = 0;
};

/// Candidate tap positions, ordered up, hold, down, with clamped duplicates
/// removed. Two entries at a rail, three otherwise.
struct DefenderMoveSpace {
  std::array<DefenderMove, 3> moves{};
  int size = 0;

  const DefenderMove& operator[](int i) const { return moves[i]; }
  int index_of(TapMove step) const;
};

bool sample_attacker_existence(double p, Rng& rng);

/// Uniform real load in [p2_min, p2_max] with q2 = q2_ratio * p2.
std::pair<double, double> sample_load(const ScenarioParams& params, Rng& rng);

DefenderMoveSpace defender_move_space(int tap, const ScenarioParams& params);
std::vector<double> defender_move_values(double v1, const ScenarioParams& params);

/// The q3 settings, evenly spaced over [-p3_max, p3_max].
std::vector<double> attacker_move_space(const ScenarioParams& params);

/// sign with sign(0) = 0.
inline int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

double update_defender_statistic(double m_prev, double v1_now, double v1_prev,
                                 double v3_now, double v3_prev,
                                 const ScenarioParams& params);

double update_attacker_statistic(double m_prev, double v3_now, double v3_prev,
                                 double q3_now, double q3_prev,
                                 const ScenarioParams& params);

DefenderObservation observe_defender(const GridState& state,
                                     const ObservationConfig& cfg, Rng& rng);
AttackerObservation observe_attacker(const GridState& state, double p3,
                                     const ObservationConfig& cfg, Rng& rng);

/// Decision rule of the defender. `u` is a uniform draw in [0, 1) supplied by
/// the engine so every step consumes the same number of random numbers.
class DefenderStrategy {
 public:
  virtual ~DefenderStrategy() = default;
  virtual int select(const DefenderMemory& memory,
                     const DefenderMoveSpace& moves, double u) const = 0;
  /// Observation binning the strategy was built for, if it depends on one.
  virtual const ObservationConfig* binning() const { return nullptr; }
};

class AttackerStrategy {
 public:
  virtual ~AttackerStrategy() = default;
  /// Returns the next q3 index.
  virtual int select(const AttackerMemory& memory, int q3_index,
                     double u) const = 0;
  virtual const ObservationConfig* binning() const { return nullptr; }
};

/// Step-by-step driver of one episode. Each step is
///   begin_step(): draw the load, observe the previous solved state, update
///                 both memories;
///   finish_step(d, a): apply both simultaneous moves, re-solve, score.
class EpisodeEngine {
 public:
  EpisodeEngine(const ScenarioParams& params, const ObservationConfig& obs,
                bool attacker_exists, int attack_start, Rng& rng);

  void begin_step();
  StepRecord finish_step(int defender_choice, int attacker_choice);

  bool attacker_active() const {
    return attacker_exists_ && step_ >= attack_start_;
  }
  bool attacker_exists() const { return attacker_exists_; }
  int step() const { return step_; }
  const GridState& state() const { return state_; }
  const DefenderMemory& defender_memory() const { return defender_; }
  const AttackerMemory& attacker_memory() const { return attacker_; }
  const DefenderMoveSpace& defender_moves() const { return moves_; }
  Rng& rng() { return rng_; }

 private:
  const ScenarioParams& params_;
  const ObservationConfig& obs_;
  bool attacker_exists_;
  int attack_start_;
  Rng& rng_;

  GridState state_;
  int step_ = 0;
  double next_p2_ = 0.0;
  double next_q2_ = 0.0;
  DefenderMemory defender_;
  AttackerMemory attacker_;
  DefenderObservation last_defender_obs_;
  AttackerObservation last_attacker_obs_;
  DefenderMoveSpace moves_;
};

struct EpisodeOptions {
  int n_steps = 100;
  /// Step at which an existing attacker becomes active. 0 = from the start.
  int attack_start = 0;
};

/// Runs one episode. The attacker's existence is drawn once, before step 0.
/// Throws CodecMismatch when a strategy's binning differs from `obs`.
std::vector<StepRecord> run_episode(const ScenarioParams& params,
                                    const ObservationConfig& obs, double p,
                                    const DefenderStrategy& defender,
                                    const AttackerStrategy& attacker,
                                    const EpisodeOptions& options, Rng& rng);

/// Same as run_episode, streaming each step to `sink` instead of storing it.
void play_episode(const ScenarioParams& params, const ObservationConfig& obs,
                  double p, const DefenderStrategy& defender,
                  const AttackerStrategy& attacker,
                  const EpisodeOptions& options, Rng& rng,
                  const std::function<void(const StepRecord&)>& sink);

void check_binning(const ObservationConfig& obs, const ObservationConfig* expected);

}  // namespace cpsgame
