#include "cpsgame/powerflow.hpp"

#include <cmath>
#include <sstream>

#include "cpsgame/errors.hpp"

namespace cpsgame {

namespace {

constexpr double kLatticeTol = 1e-9;

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(std::string("invalid scenario: ") + what);
}

}  // namespace

int ScenarioParams::tap_count() const {
  return static_cast<int>(std::lround((v_max - v_min) / delta_v));
}

int ScenarioParams::tap_of(double v1) const {
  return static_cast<int>(std::lround((v1 - v_min) / delta_v));
}

double ScenarioParams::q3_step() const {
  return 2.0 * p3_max / (n_attacker_levels - 1);
}

int ScenarioParams::q3_index_of(double q3) const {
  if (p3_max == 0.0) return (n_attacker_levels - 1) / 2;
  long idx = std::lround((q3 + p3_max) / q3_step());
  if (idx < 0) idx = 0;
  if (idx > n_attacker_levels - 1) idx = n_attacker_levels - 1;
  return static_cast<int>(idx);
}

void ScenarioParams::validate() const {
  for (double v : {r1, x1, r2, x2, p2_max, p2_min, q2_ratio, p3_max, epsilon,
                   v_min, v_max, delta_v, theta_a, v1_init, q3_init}) {
    require(std::isfinite(v), "all parameters must be finite");
  }
  if (p3) require(std::isfinite(*p3), "p3 must be finite");
  require(r1 >= 0 && r2 >= 0, "resistances must be nonnegative");
  require(x1 > 0 && x2 >= 0, "x1 must be positive and x2 nonnegative");
  require(p2_min <= p2_max, "p2_min <= p2_max");
  require(p3_max >= 0, "p3_max >= 0");
  require(epsilon > 0, "epsilon > 0");
  require(theta_a > epsilon, "theta_a > epsilon");
  require(v_min < v_max, "v_min < v_max");
  require(delta_v > 0 && delta_v <= v_max - v_min,
          "0 < delta_v <= v_max - v_min");
  double taps = (v_max - v_min) / delta_v;
  require(std::abs(taps - std::round(taps)) < kLatticeTol,
          "v_max - v_min must be a whole number of tap steps");
  require(n_memory >= 1, "n_memory >= 1");
  require(n_attacker_levels >= 3 && n_attacker_levels % 2 == 1,
          "n_attacker_levels must be odd and >= 3");
  require(v1_init >= v_min - kLatticeTol && v1_init <= v_max + kLatticeTol,
          "v1_init within [v_min, v_max]");
  double init_tap = (v1_init - v_min) / delta_v;
  require(std::abs(init_tap - std::round(init_tap)) < kLatticeTol,
          "v1_init must sit on a tap position");
  require(std::abs(q3_init) <= p3_max + kLatticeTol,
          "q3_init within [-p3_max, p3_max]");
  if (p3_max > 0) {
    double qi = (q3_init + p3_max) / q3_step();
    require(std::abs(qi - std::round(qi)) < kLatticeTol,
            "q3_init must be one of the attacker settings");
  }
}

FlowSolution solve_flows(double v1, double p2, double q2, double p3, double q3,
                         const ScenarioParams& params) {
  FlowSolution s;
  s.P2 = -p3;
  s.Q2 = -q3;
  s.P1 = s.P2 + p2;
  s.Q1 = s.Q2 + q2;
  s.V1 = v1;
  s.V2 = v1 - (params.r1 * s.P1 + params.x1 * s.Q1);
  s.V3 = s.V2 - (params.r2 * s.P2 + params.x2 * s.Q2);
  return s;
}

double attacker_reward(double v2, double epsilon) {
  return unit_step(v2 - (1.0 + epsilon)) + unit_step((1.0 - epsilon) - v2);
}

double defender_reward(double v2, double v3, double epsilon) {
  double d2 = (v2 - 1.0) / epsilon;
  double d3 = (v3 - 1.0) / epsilon;
  return -d2 * d2 - d3 * d3;
}

}  // namespace cpsgame
