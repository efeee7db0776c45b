#include "cpsgame/learning.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "cpsgame/csv.hpp"
#include "cpsgame/errors.hpp"

namespace cpsgame {

void TrainConfig::validate() const {
  if (episodes_per_eval < 1 || steps_per_episode < 1 || max_iterations < 1 ||
      min_iterations < 1 || convergence_window < 1) {
    throw ConfigError("training counts must be positive");
  }
  if (!(improvement_step > 0.0 && improvement_step <= 1.0)) {
    throw ConfigError("improvement_step must lie in (0, 1]");
  }
  if (!(convergence_tol > 0.0)) throw ConfigError("convergence_tol must be positive");
  if (!(train_p >= 0.0 && train_p <= 1.0)) throw ConfigError("train_p must lie in [0, 1]");
}

void QEstimate::add_episode(const std::vector<Visit>& visits) {
  const std::size_t n = visits.size();
  double suffix = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const Visit& v = visits[t];
    suffix += v.reward;
    const double ret = suffix / static_cast<double>(n - t);
    std::vector<QCell>& cells = table[v.key];
    if (cells.empty()) cells.resize(v.n_actions);
    if (cells.size() != v.n_actions || v.action >= v.n_actions) {
      throw Error("inconsistent action count for a state");
    }
    cells[v.action].sum += ret;
    cells[v.action].count += 1;
  }
  reward_sum += suffix;
  reward_steps += n;
  episodes += 1;
}

void QEstimate::merge(const QEstimate& other) {
  for (const auto& [key, cells] : other.table) {
    std::vector<QCell>& mine = table[key];
    if (mine.empty()) {
      mine = cells;
      continue;
    }
    if (mine.size() != cells.size()) throw Error("inconsistent action count for a state");
    for (std::size_t a = 0; a < cells.size(); ++a) {
      mine[a].sum += cells[a].sum;
      mine[a].count += cells[a].count;
    }
  }
  reward_sum += other.reward_sum;
  reward_steps += other.reward_steps;
  episodes += other.episodes;
}

TabularPolicy improve_policy(const TabularPolicy& policy, const QEstimate& q,
                             const TrainConfig& cfg) {
  TabularPolicy out = policy;
  const double step = cfg.improvement_step;
  for (const auto& [key, cells] : q.table) {
    // Actions sampled fewer than visit_threshold times only compete when no
    // action in the state has that many samples.
    std::uint64_t floor = 1;
    for (const QCell& c : cells) {
      if (c.count >= cfg.visit_threshold) floor = std::max<std::uint64_t>(cfg.visit_threshold, 1);
    }
    int best = -1;
    double best_q = 0.0;
    for (std::size_t a = 0; a < cells.size(); ++a) {
      if (cells[a].count < floor) continue;
      const double m = cells[a].mean();
      if (best < 0 || m > best_q) {
        best = static_cast<int>(a);
        best_q = m;
      }
    }
    if (best < 0) continue;

    PolicyEntry& e = out.table[key];
    if (e.probs.empty()) e.probs.assign(cells.size(), 1.0 / cells.size());
    double sum = 0.0;
    for (std::size_t a = 0; a < e.probs.size(); ++a) {
      e.probs[a] = (1.0 - step) * e.probs[a] + (static_cast<int>(a) == best ? step : 0.0);
      sum += e.probs[a];
    }
    for (double& p : e.probs) p /= sum;
  }
  return out;
}

void record_visits(TabularPolicy& policy, const QEstimate& q) {
  for (const auto& [key, cells] : q.table) {
    std::uint64_t n = 0;
    for (const QCell& c : cells) n += c.count;
    PolicyEntry& e = policy.table[key];
    if (e.probs.empty()) e.probs.assign(cells.size(), 1.0 / cells.size());
    e.visits += n;
  }
}

TabularPolicy apply_fallback(const TabularPolicy& policy, std::uint64_t visit_threshold,
                             const FallbackRule& level0) {
  TabularPolicy out = policy;
  for (auto& [key, e] : out.table) {
    if (e.visits >= visit_threshold) continue;
    const int choice = level0(key);
    std::fill(e.probs.begin(), e.probs.end(), 0.0);
    e.probs.at(choice) = 1.0;
  }
  return out;
}

TabularPolicy apply_fallback(const TabularPolicy& policy, const TrainConfig& cfg,
                             const ScenarioParams& params) {
  return apply_fallback(policy, cfg.visit_threshold, [&](const StateKey& key) {
    return level0_choice(policy.codec, key, params);
  });
}

bool has_converged(const std::vector<double>& rewards, int window, double tol) {
  const std::size_t w = static_cast<std::size_t>(window);
  if (rewards.size() < w + 1) return false;
  const auto end = rewards.end();
  const double now = std::accumulate(end - w, end, 0.0) / w;
  const double before = std::accumulate(end - w - 1, end - 1, 0.0) / w;
  return std::abs(now - before) < tol;
}

GridEnvironment::GridEnvironment(PlayerRole subject, ScenarioParams params,
                                 ObservationConfig obs,
                                 std::shared_ptr<const DefenderStrategy> defender,
                                 std::shared_ptr<const AttackerStrategy> attacker,
                                 double p, int steps)
    : subject_(subject),
      params_(std::move(params)),
      obs_(obs),
      defender_(std::move(defender)),
      attacker_(std::move(attacker)),
      p_(p),
      steps_(steps) {
  if (subject_ == PlayerRole::kDefender && !attacker_) throw ConfigError("defender training needs an attacker");
  if (subject_ == PlayerRole::kAttacker && !defender_) throw ConfigError("attacker training needs a defender");
  if (attacker_) check_binning(obs_, attacker_->binning());
  if (defender_) check_binning(obs_, defender_->binning());
}

void GridEnvironment::rollout(const TabularPolicy& subject, Rng& rng,
                              std::vector<Visit>& visits) const {
  const ObservationConfig subject_binning = subject.codec.binning();
  check_binning(obs_, &subject_binning);
  const bool exists = sample_attacker_existence(p_, rng);
  EpisodeEngine engine(params_, obs_, exists, 0, rng);
  const int n_levels = params_.n_attacker_levels;

  for (int i = 0; i < steps_; ++i) {
    engine.begin_step();
    const double u_d = uniform01(rng);
    const double u_a = uniform01(rng);
    const DefenderMoveSpace& moves = engine.defender_moves();

    if (subject_ == PlayerRole::kDefender) {
      const StateKey key = subject.codec.encode(engine.defender_memory());
      const PolicyEntry* e = subject.find(key);
      const int d = e ? sample_index(e->probs, u_d)
                      : std::min(static_cast<int>(u_d * moves.size), moves.size - 1);
      const int a = engine.attacker_active()
                        ? attacker_->select(engine.attacker_memory(),
                                            engine.state().q3_index, u_a)
                        : kNoAttackerMove;
      const StepRecord rec = engine.finish_step(d, a);
      visits.push_back({key, static_cast<std::uint8_t>(d),
                        static_cast<std::uint8_t>(moves.size), rec.r_d});
    } else {
      const int d = defender_->select(engine.defender_memory(), moves, u_d);
      if (!engine.attacker_active()) {
        engine.finish_step(d, kNoAttackerMove);
        continue;
      }
      const StateKey key = subject.codec.encode(engine.attacker_memory());
      const PolicyEntry* e = subject.find(key);
      const int a = e ? sample_index(e->probs, u_a)
                      : std::min(static_cast<int>(u_a * n_levels), n_levels - 1);
      const StepRecord rec = engine.finish_step(d, a);
      visits.push_back({key, static_cast<std::uint8_t>(a),
                        static_cast<std::uint8_t>(n_levels), rec.r_a});
    }
  }
}

TrainResult train_level_k(int k, PlayerRole player, const ScenarioParams& params,
                          const TrainConfig& cfg, const LevelKOptions& options) {
  if (k < 1) throw ConfigError("level must be >= 1");
  params.validate();
  cfg.validate();
  options.observation.validate();
  options.codec.validate();
  if (params.n_attacker_levels > 255) throw ConfigError("at most 255 attacker settings");

  const PlayerRole other =
      player == PlayerRole::kDefender ? PlayerRole::kAttacker : PlayerRole::kDefender;
  std::shared_ptr<const DefenderStrategy> defender;
  std::shared_ptr<const AttackerStrategy> attacker;
  if (k == 1) {
    if (other == PlayerRole::kAttacker) attacker = std::make_shared<Level0Attacker>(params);
    else defender = std::make_shared<Level0Defender>(params);
  } else {
    TrainResult lower = train_level_k(k - 1, other, params, cfg, options);
    auto policy = std::make_shared<const TabularPolicy>(std::move(lower.policy));
    if (other == PlayerRole::kAttacker) attacker = std::make_shared<TabularAttacker>(policy, params);
    else defender = std::make_shared<TabularDefender>(policy, params);
  }

  GridEnvironment env(player, params, options.observation, defender, attacker,
                      cfg.train_p, cfg.steps_per_episode);
  TabularPolicy init;
  init.player = player;
  init.codec = options.codec;
  init.codec.player = player;
  init.codec.voltage_bin = options.observation.voltage_bin;
  init.codec.flow_bin = options.observation.flow_bin;

  const std::uint64_t seed = derive_seed(options.seed, Stream::kTraining,
                                         static_cast<std::uint64_t>(k),
                                         player == PlayerRole::kDefender ? 0 : 1);
  std::function<void(const IterationLog&)> cb;
  if (options.on_iteration) {
    cb = [&](const IterationLog& l) { options.on_iteration(k, player, l); };
  }
  TrainResult result = train_policy(env, std::move(init), cfg, seed, options.threads, cb);
  result.policy = apply_fallback(result.policy, cfg, params);
  return result;
}

void write_training_log(const std::vector<IterationLog>& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "iteration,mean_reward,states_visited,fallback_fraction\n";
  for (const IterationLog& l : log) {
    out << l.iteration << ',' << format_number(l.mean_reward) << ','
        << l.states_visited << ',' << format_number(l.fallback_fraction) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace cpsgame
