#pragma once

#include <optional>

namespace cpsgame {

/// Physical and game constants of the three-node feeder. All quantities are
/// per-unit, normalized by the nominal voltage V0.
struct ScenarioParams {
  double r1 = 0.03;
  double x1 = 0.03;
  double r2 = 0.03;
  double x2 = 0.03;
  double p2_max = 1.4;
  double p2_min = 1.35;
  double q2_ratio = 0.5;
  /// Fixed real output of the generator at node 3. When unset the generator
  /// runs at its capability, p3_max.
  std::optional<double> p3;
  double p3_max = 1.0;
  double epsilon = 0.05;
  double v_min = 0.90;
  double v_max = 1.10;
  double delta_v = 0.02;
  double theta_a = 0.07;
  int n_memory = 10;
  int n_attacker_levels = 11;
  // Initial conditions.
  double v1_init = 1.0;
  double q3_init = 0.0;

  double real_generation() const { return p3.value_or(p3_max); }

  /// Number of tap positions above v_min.
  int tap_count() const;
  double tap_voltage(int tap) const { return v_min + tap * delta_v; }
  int tap_of(double v1) const;

  double q3_step() const;
  double q3_level(int index) const { return -p3_max + index * q3_step(); }
  /// Nearest attacker setting index for a reactive output value.
  int q3_index_of(double q3) const;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

struct FlowSolution {
  double P1 = 0.0;
  double Q1 = 0.0;
  double P2 = 0.0;
  double Q2 = 0.0;
  double V1 = 0.0;
  double V2 = 0.0;
  double V3 = 0.0;
};

/// LinDistFlow solution of the radial three-node feeder.
FlowSolution solve_flows(double v1, double p2, double q2, double p3, double q3,
                         const ScenarioParams& params);

/// Unit step with step(0) = 0: a voltage exactly on the band edge is no damage.
inline double unit_step(double x) { return x > 0.0 ? 1.0 : 0.0; }

/// 1 when V2 has crossed outside [1 - eps, 1 + eps], else 0.
double attacker_reward(double v2, double epsilon);

/// Quadratic penalty on V2 and V3 deviation, in units of the band halfwidth.
double defender_reward(double v2, double v3, double epsilon);

}  // namespace cpsgame
