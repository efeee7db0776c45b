#pragma once

// Level-k policy training by Monte Carlo policy iteration: estimate Q-values
// of the current stochastic policy from sampled episodes, shift probability
// toward the best action, repeat until the average reward settles.
//
// The trainer is generic over an environment type providing
//
//   void rollout(const TabularPolicy& subject, Rng& rng,
//                std::vector<Visit>& visits) const;
//
// which plays one episode with `subject` (uniform on unseen states) against a
// fixed opponent and appends the subject's decisions in time order.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "cpsgame/agents.hpp"
#include "cpsgame/parallel.hpp"
#include "cpsgame/rng.hpp"

namespace cpsgame {

struct TrainConfig {
  int episodes_per_eval = 1000;
  int steps_per_episode = 100;
  double improvement_step = 0.3;
  double convergence_tol = 1e-4;
  int convergence_window = 3;
  int min_iterations = 5;
  int max_iterations = 100;
  std::uint64_t visit_threshold = 20;
  double train_p = 0.2;

  void validate() const;
};

struct Visit {
  StateKey key;
  std::uint8_t action = 0;
  std::uint8_t n_actions = 0;
  double reward = 0.0;
};

template <class Env>
concept Environment = requires(const Env& env, const TabularPolicy& policy,
                               Rng& rng, std::vector<Visit>& visits) {
  { env.rollout(policy, rng, visits) } -> std::same_as<void>;
};

struct QCell {
  double sum = 0.0;
  std::uint64_t count = 0;
  double mean() const {
    return count ? sum / static_cast<double>(count)
                 : std::numeric_limits<double>::quiet_NaN();
  }
};

/// Monte Carlo action-value estimates. The return credited to a decision at
/// position t of an episode with N decisions is the mean reward over
/// positions t..N-1.
struct QEstimate {
  std::unordered_map<StateKey, std::vector<QCell>, StateKeyHash> table;
  double reward_sum = 0.0;
  std::uint64_t reward_steps = 0;
  std::uint64_t episodes = 0;

  void add_episode(const std::vector<Visit>& visits);
  /// Count-weighted merge; sums and counts add.
  void merge(const QEstimate& other);
  double mean_reward() const {
    return reward_steps ? reward_sum / static_cast<double>(reward_steps) : 0.0;
  }
  const std::vector<QCell>* find(const StateKey& key) const {
    auto it = table.find(key);
    return it == table.end() ? nullptr : &it->second;
  }
};

inline constexpr std::size_t kEpisodesPerChunk = 25;

/// Runs `episodes` episodes of `env` with per-episode streams
/// (seed, episode index). Chunks of episodes are estimated independently and
/// merged in chunk order, so the result is identical for any thread count.
template <Environment Env>
QEstimate evaluate_policy(const Env& env, const TabularPolicy& subject,
                          int episodes, std::uint64_t seed, int threads = 1) {
  const std::size_t n = static_cast<std::size_t>(episodes);
  const std::size_t chunks = (n + kEpisodesPerChunk - 1) / kEpisodesPerChunk;
  std::vector<QEstimate> partial(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    std::vector<Visit> visits;
    const std::size_t end = std::min(n, (c + 1) * kEpisodesPerChunk);
    for (std::size_t e = c * kEpisodesPerChunk; e < end; ++e) {
      Rng rng = make_stream(seed, Stream::kTraining, e);
      visits.clear();
      env.rollout(subject, rng, visits);
      partial[c].add_episode(visits);
    }
  });
  QEstimate total;
  for (const QEstimate& q : partial) total.merge(q);
  return total;
}

/// Moves each visited state's distribution toward its best sampled action:
/// new = (1 - step) * old + step * onehot(argmax Q). Ties go to the lowest
/// index. When some action of a state has at least visit_threshold samples,
/// only such actions compete for the argmax. States absent from `q` are
/// untouched; visited states missing from the table start from uniform.
TabularPolicy improve_policy(const TabularPolicy& policy, const QEstimate& q,
                             const TrainConfig& cfg);

/// Adds the per-state visit totals in `q` to the policy's visit counts.
void record_visits(TabularPolicy& policy, const QEstimate& q);

using FallbackRule = std::function<int(const StateKey&)>;

/// Replaces every state with fewer than `visit_threshold` visits by a point
/// mass on the level-0 move for that state.
TabularPolicy apply_fallback(const TabularPolicy& policy,
                             std::uint64_t visit_threshold,
                             const FallbackRule& level0);

/// Grid-game form: the level-0 rule of the policy's own player.
TabularPolicy apply_fallback(const TabularPolicy& policy, const TrainConfig& cfg,
                             const ScenarioParams& params);

struct IterationLog {
  int iteration = 0;
  double mean_reward = 0.0;
  std::size_t states_visited = 0;
  double fallback_fraction = 0.0;
};

struct TrainResult {
  TabularPolicy policy;
  bool converged = false;
  int iterations = 0;
  std::vector<IterationLog> log;
};

/// True once the moving average of the last `window` rewards moved by less
/// than `tol` since the previous iteration.
bool has_converged(const std::vector<double>& rewards, int window, double tol);

/// Policy iteration loop shared by every environment. Each iteration reuses
/// the same episode streams, so once the policy stops changing the measured
/// reward stops changing too. Returns the last evaluated policy on
/// convergence, otherwise the best evaluated one with converged = false.
template <Environment Env>
TrainResult train_policy(const Env& env, TabularPolicy policy,
                         const TrainConfig& cfg, std::uint64_t seed,
                         int threads = 1,
                         const std::function<void(const IterationLog&)>& on_iteration = {}) {
  cfg.validate();
  TrainResult result;
  std::vector<double> rewards;
  double best_reward = -std::numeric_limits<double>::infinity();
  TabularPolicy best = policy;

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    QEstimate q = evaluate_policy(env, policy, cfg.episodes_per_eval, seed, threads);
    record_visits(policy, q);
    rewards.push_back(q.mean_reward());

    IterationLog entry;
    entry.iteration = it;
    entry.mean_reward = q.mean_reward();
    entry.states_visited = q.table.size();
    std::size_t low = 0;
    for (const auto& [k, e] : policy.table) low += e.visits < cfg.visit_threshold;
    entry.fallback_fraction =
        policy.table.empty() ? 0.0 : static_cast<double>(low) / policy.table.size();
    result.log.push_back(entry);
    if (on_iteration) on_iteration(entry);
    result.iterations = it;

    if (q.mean_reward() > best_reward) {
      best_reward = q.mean_reward();
      best = policy;
    }
    if (it >= cfg.min_iterations &&
        has_converged(rewards, cfg.convergence_window, cfg.convergence_tol)) {
      result.converged = true;
      result.policy = std::move(policy);
      return result;
    }
    policy = improve_policy(policy, q, cfg);
  }

  // Keep the final cumulative visit counts on the returned snapshot.
  for (auto& [k, e] : best.table) {
    if (const PolicyEntry* live = policy.find(k)) e.visits = live->visits;
  }
  result.policy = std::move(best);
  return result;
}

/// The grid game seen from one player, with the other player fixed.
class GridEnvironment {
 public:
  GridEnvironment(PlayerRole subject, ScenarioParams params, ObservationConfig obs,
                  std::shared_ptr<const DefenderStrategy> defender,
                  std::shared_ptr<const AttackerStrategy> attacker, double p,
                  int steps);

  void rollout(const TabularPolicy& subject, Rng& rng, std::vector<Visit>& visits) const;

 private:
  PlayerRole subject_;
  ScenarioParams params_;
  ObservationConfig obs_;
  std::shared_ptr<const DefenderStrategy> defender_;
  std::shared_ptr<const AttackerStrategy> attacker_;
  double p_;
  int steps_;
};

struct LevelKOptions {
  ObservationConfig observation;
  /// Statistic binning and move-history flag; the player field is ignored.
  StateCodec codec;
  std::uint64_t seed = 0;
  int threads = 1;
  std::function<void(int level, PlayerRole, const IterationLog&)> on_iteration;
};

/// Trains a level-k player against a level-(k-1) opponent, recursively
/// training that opponent first when k > 1 and using the scripted level-0
/// player at the bottom. The result has the low-visit fallback applied.
TrainResult train_level_k(int k, PlayerRole player, const ScenarioParams& params,
                          const TrainConfig& cfg, const LevelKOptions& options);

void write_training_log(const std::vector<IterationLog>& log, const std::string& path);

}  // namespace cpsgame
