#include "cpsgame/snfg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cpsgame/errors.hpp"

namespace cpsgame {

void ObservationConfig::validate() const {
  if (!(voltage_bin > 0) || !(flow_bin > 0) || !std::isfinite(voltage_bin) ||
      !std::isfinite(flow_bin)) {
    throw ConfigError("observation bin widths must be positive");
  }
  if (!(noise >= 0) || !std::isfinite(noise)) {
    throw ConfigError("observation noise must be nonnegative");
  }
}

BinnedValue BinnedValue::of(double x, double width) {
  return BinnedValue{static_cast<std::int32_t>(std::lround(x / width)), width};
}

int DefenderMoveSpace::index_of(TapMove step) const {
  for (int i = 0; i < size; ++i) {
    if (moves[i].step == step) return i;
  }
  // A clamped move collapses onto hold.
  for (int i = 0; i < size; ++i) {
    if (moves[i].step == TapMove::kHold) return i;
  }
  return 0;
}

bool sample_attacker_existence(double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError("attacker existence probability must lie in [0, 1]");
  }
  return std::bernoulli_distribution(p)(rng);
}

std::pair<double, double> sample_load(const ScenarioParams& params, Rng& rng) {
  double p2 = params.p2_min + (params.p2_max - params.p2_min) * uniform01(rng);
  return {p2, params.q2_ratio * p2};
}

DefenderMoveSpace defender_move_space(int tap, const ScenarioParams& params) {
  const int top = params.tap_count();
  DefenderMoveSpace space;
  if (tap < top) space.moves[space.size++] = {TapMove::kUp, tap + 1};
  space.moves[space.size++] = {TapMove::kHold, tap};
  if (tap > 0) space.moves[space.size++] = {TapMove::kDown, tap - 1};
  return space;
}

std::vector<double> defender_move_values(double v1, const ScenarioParams& params) {
  std::vector<double> out;
  for (double v : {std::min(params.v_max, v1 + params.delta_v), v1,
                   std::max(params.v_min, v1 - params.delta_v)}) {
    bool dup = std::any_of(out.begin(), out.end(),
                           [&](double w) { return std::abs(w - v) < 1e-12; });
    if (!dup) out.push_back(v);
  }
  return out;
}

std::vector<double> attacker_move_space(const ScenarioParams& params) {
  std::vector<double> out(params.n_attacker_levels);
  for (int i = 0; i < params.n_attacker_levels; ++i) out[i] = params.q3_level(i);
  // Exact symmetry: the middle setting is 0 and mirrored pairs cancel.
  const int mid = params.n_attacker_levels / 2;
  out[mid] = 0.0;
  for (int i = 0; i < mid; ++i) out[params.n_attacker_levels - 1 - i] = -out[i];
  return out;
}

double update_defender_statistic(double m_prev, double v1_now, double v1_prev,
                                 double v3_now, double v3_prev,
                                 const ScenarioParams& params) {
  const double decay = 1.0 - 1.0 / params.n_memory;
  return decay * m_prev + sign_of(v1_now - v1_prev) * sign_of(v3_now - v3_prev);
}

double update_attacker_statistic(double m_prev, double v3_now, double v3_prev,
                                 double q3_now, double q3_prev,
                                 const ScenarioParams& params) {
  const double decay = 1.0 - 1.0 / params.n_memory;
  const double residual =
      ((v3_now - v3_prev) - (q3_now - q3_prev) * params.x2) / params.delta_v;
  // Snap residuals that are integers up to rounding before taking the floor.
  const double snapped =
      std::abs(residual - std::round(residual)) < 1e-9 ? std::round(residual)
                                                       : residual;
  return decay * m_prev + sign_of(std::floor(snapped));
}

namespace {

double noisy(double x, const ObservationConfig& cfg, Rng& rng) {
  if (cfg.noise == 0.0) return x;
  return x + cfg.noise * (2.0 * uniform01(rng) - 1.0);
}

}  // namespace

DefenderObservation observe_defender(const GridState& state,
                                     const ObservationConfig& cfg, Rng& rng) {
  const FlowSolution& f = state.flows;
  DefenderObservation o;
  o.v1 = BinnedValue::of(noisy(f.V1, cfg, rng), cfg.voltage_bin);
  o.v2 = BinnedValue::of(noisy(f.V2, cfg, rng), cfg.voltage_bin);
  o.v3 = BinnedValue::of(noisy(f.V3, cfg, rng), cfg.voltage_bin);
  o.P1 = BinnedValue::of(noisy(f.P1, cfg, rng), cfg.flow_bin);
  o.Q1 = BinnedValue::of(noisy(f.Q1, cfg, rng), cfg.flow_bin);
  return o;
}

AttackerObservation observe_attacker(const GridState& state, double p3,
                                     const ObservationConfig& cfg, Rng& rng) {
  AttackerObservation o;
  o.v2 = BinnedValue::of(noisy(state.flows.V2, cfg, rng), cfg.voltage_bin);
  o.v3 = BinnedValue::of(noisy(state.flows.V3, cfg, rng), cfg.voltage_bin);
  o.p3 = BinnedValue::of(noisy(p3, cfg, rng), cfg.flow_bin);
  o.q3 = BinnedValue::of(noisy(state.q3, cfg, rng), cfg.flow_bin);
  return o;
}

EpisodeEngine::EpisodeEngine(const ScenarioParams& params,
                             const ObservationConfig& obs, bool attacker_exists,
                             int attack_start, Rng& rng)
    : params_(params),
      obs_(obs),
      attacker_exists_(attacker_exists),
      attack_start_(attack_start),
      rng_(rng) {
  state_.tap = params.tap_of(params.v1_init);
  state_.v1 = params.tap_voltage(state_.tap);
  state_.q3_index = params.q3_index_of(params.q3_init);
  state_.q3 = params.q3_level(state_.q3_index);
  auto [p2, q2] = sample_load(params, rng_);
  state_.p2 = p2;
  state_.q2 = q2;
  state_.flows = solve_flows(state_.v1, p2, q2, params.real_generation(),
                             state_.q3, params);
  attacker_.previous_move = state_.q3_index;
}

void EpisodeEngine::begin_step() {
  auto [p2, q2] = sample_load(params_, rng_);
  next_p2_ = p2;
  next_q2_ = q2;

  DefenderObservation dobs = observe_defender(state_, obs_, rng_);
  AttackerObservation aobs =
      observe_attacker(state_, params_.real_generation(), obs_, rng_);
  if (step_ > 0) {
    defender_.statistic = update_defender_statistic(
        defender_.statistic, dobs.v1.value(), last_defender_obs_.v1.value(),
        dobs.v3.value(), last_defender_obs_.v3.value(), params_);
    attacker_.statistic = update_attacker_statistic(
        attacker_.statistic, aobs.v3.value(), last_attacker_obs_.v3.value(),
        aobs.q3.value(), last_attacker_obs_.q3.value(), params_);
  }
  defender_.observation = dobs;
  attacker_.observation = aobs;
  last_defender_obs_ = dobs;
  last_attacker_obs_ = aobs;
  moves_ = defender_move_space(state_.tap, params_);
}

StepRecord EpisodeEngine::finish_step(int defender_choice, int attacker_choice) {
  if (defender_choice < 0 || defender_choice >= moves_.size) {
    throw Error("defender move index out of range");
  }
  const DefenderMove move = moves_[defender_choice];

  StepRecord rec;
  rec.attacker_present = attacker_active();
  GridState next = state_;
  next.step_index = step_;
  next.tap = move.tap;
  next.v1 = params_.tap_voltage(move.tap);
  if (rec.attacker_present) {
    if (attacker_choice < 0 || attacker_choice >= params_.n_attacker_levels) {
      throw Error("attacker move index out of range");
    }
    next.q3_index = attacker_choice;
    next.q3 = params_.q3_level(attacker_choice);
    rec.attacker_move = attacker_choice;
  }
  next.p2 = next_p2_;
  next.q2 = next_q2_;
  next.flows = solve_flows(next.v1, next.p2, next.q2, params_.real_generation(),
                           next.q3, params_);

  rec.state = next;
  rec.defender_move = move.step;
  rec.r_d = defender_reward(next.flows.V2, next.flows.V3, params_.epsilon);
  rec.r_a = attacker_reward(next.flows.V2, params_.epsilon);

  defender_.previous_move = move.step;
  attacker_.previous_move = next.q3_index;
  state_ = next;
  ++step_;
  return rec;
}

void check_binning(const ObservationConfig& obs, const ObservationConfig* expected) {
  if (expected == nullptr) return;
  if (expected->voltage_bin != obs.voltage_bin || expected->flow_bin != obs.flow_bin) {
    throw CodecMismatch(
        "policy state codec bin widths differ from the engine's observation "
        "binning");
  }
}

void play_episode(const ScenarioParams& params, const ObservationConfig& obs,
                  double p, const DefenderStrategy& defender,
                  const AttackerStrategy& attacker,
                  const EpisodeOptions& options, Rng& rng,
                  const std::function<void(const StepRecord&)>& sink) {
  check_binning(obs, defender.binning());
  check_binning(obs, attacker.binning());
  const bool exists = sample_attacker_existence(p, rng);
  EpisodeEngine engine(params, obs, exists, options.attack_start, rng);
  for (int i = 0; i < options.n_steps; ++i) {
    engine.begin_step();
    const double u_d = uniform01(rng);
    const double u_a = uniform01(rng);
    const int d = defender.select(engine.defender_memory(), engine.defender_moves(), u_d);
    const int a = engine.attacker_active()
                      ? attacker.select(engine.attacker_memory(),
                                        engine.state().q3_index, u_a)
                      : kNoAttackerMove;
    sink(engine.finish_step(d, a));
  }
}

std::vector<StepRecord> run_episode(const ScenarioParams& params,
                                    const ObservationConfig& obs, double p,
                                    const DefenderStrategy& defender,
                                    const AttackerStrategy& attacker,
                                    const EpisodeOptions& options, Rng& rng) {
  std::vector<StepRecord> out;
  out.reserve(options.n_steps);
  play_episode(params, obs, p, defender, attacker, options, rng,
               [&](const StepRecord& r) { out.push_back(r); });
  return out;
}

}  // namespace cpsgame
