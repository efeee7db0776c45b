#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cpsgame/errors.hpp"
#include "cpsgame/learning.hpp"
#include "doctest.h"
#include "toy_chain.hpp"

using namespace cpsgame;

namespace {

struct ConstantEnv {
  void rollout(const TabularPolicy&, Rng& rng, std::vector<Visit>& visits) const {
    for (int t = 0; t < 10; ++t) {
      const auto a = static_cast<std::uint8_t>(uniform01(rng) < 0.5 ? 0 : 1);
      visits.push_back(Visit{toy::key(0), a, 2, -1.0});
    }
  }
};

TabularPolicy toy_policy(double p0, double p1) {
  TabularPolicy p;
  p.table[toy::key(0)] = PolicyEntry{{p0, 1 - p0}, 0};
  p.table[toy::key(1)] = PolicyEntry{{p1, 1 - p1}, 0};
  return p;
}

QEstimate single_state_q(std::vector<double> means) {
  QEstimate q;
  auto& cells = q.table[toy::key(0)];
  for (double m : means) cells.push_back(QCell{m, 1});
  return q;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("constant reward gives constant Q estimates") {
  const QEstimate q = evaluate_policy(ConstantEnv{}, TabularPolicy{}, 100, 1);
  const auto* cells = q.find(toy::key(0));
  REQUIRE(cells != nullptr);
  for (const QCell& c : *cells) CHECK(c.mean() == doctest::Approx(-1.0));
  CHECK(q.mean_reward() == doctest::Approx(-1.0));
  CHECK(q.episodes == 100);
}

TEST_CASE("returns are the mean reward over the rest of the episode") {
  QEstimate q;
  q.add_episode({{toy::key(0), 0, 2, 1.0}, {toy::key(0), 1, 2, 3.0}, {toy::key(1), 0, 2, 5.0}});
  CHECK(q.find(toy::key(0))->at(0).mean() == doctest::Approx(3.0));
  CHECK(q.find(toy::key(0))->at(1).mean() == doctest::Approx(4.0));
  CHECK(q.find(toy::key(1))->at(0).mean() == doctest::Approx(5.0));
  CHECK(std::isnan(q.find(toy::key(1))->at(1).mean()));
  CHECK(q.mean_reward() == doctest::Approx(3.0));
}

TEST_CASE("toy chain Q estimates match the exact oracle") {
  const TabularPolicy pi = toy_policy(0.5, 0.3);
  const toy::ExactQ exact = toy::exact_q(toy::probs_of(pi), 10);
  const QEstimate q = evaluate_policy(toy::Chain{}, pi, 20000, 5, 2);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) CHECK(std::abs(q.find(toy::key(s))->at(a).mean() - exact.q[s][a]) < 2e-2);
  CHECK(std::abs(q.mean_reward() - exact.mean_reward) < 1e-2);
}

TEST_CASE("evaluation does not depend on the thread count") {
  const TabularPolicy pi = toy_policy(0.2, 0.6);
  const QEstimate a = evaluate_policy(toy::Chain{}, pi, 1000, 9, 1);
  const QEstimate b = evaluate_policy(toy::Chain{}, pi, 1000, 9, 3);
  CHECK(a.reward_sum == b.reward_sum);
  for (int s = 0; s < 2; ++s)
    for (int x = 0; x < 2; ++x) CHECK(a.find(toy::key(s))->at(x).sum == b.find(toy::key(s))->at(x).sum);
}

TEST_CASE("merging estimates adds counts") {
  QEstimate a = single_state_q({1.0, 2.0});
  a.merge(single_state_q({3.0, 4.0}));
  CHECK(a.find(toy::key(0))->at(0).count == 2);
  CHECK(a.find(toy::key(0))->at(0).mean() == doctest::Approx(2.0));
  CHECK_THROWS_AS(a.merge(single_state_q({1.0, 2.0, 3.0})), Error);
}

TEST_CASE("soft improvement arithmetic") {
  TrainConfig cfg;
  TabularPolicy p;
  p.table[toy::key(0)] = PolicyEntry{{1.0 / 3, 1.0 / 3, 1.0 / 3}, 0};

  cfg.improvement_step = 0.5;
  const TabularPolicy half = improve_policy(p, single_state_q({2.0, 1.0, 0.0}), cfg);
  const auto& probs = half.find(toy::key(0))->probs;
  CHECK(probs[0] == doctest::Approx(2.0 / 3));
  CHECK(probs[1] == doctest::Approx(1.0 / 6));
  CHECK(probs[2] == doctest::Approx(1.0 / 6));

  cfg.improvement_step = 1.0;
  const TabularPolicy greedy = improve_policy(p, single_state_q({0.0, 1.0, 0.5}), cfg);
  CHECK(greedy.find(toy::key(0))->probs == std::vector<double>{0.0, 1.0, 0.0});

  const TabularPolicy tie = improve_policy(p, single_state_q({0.0, 1.0, 1.0}), cfg);
  CHECK(tie.find(toy::key(0))->probs[1] == 1.0);
}

TEST_CASE("improvement leaves unvisited states alone and starts new ones uniform") {
  TrainConfig cfg;
  cfg.improvement_step = 0.5;
  TabularPolicy p;
  p.table[toy::key(1)] = PolicyEntry{{0.9, 0.1}, 0};
  const TabularPolicy out = improve_policy(p, single_state_q({0.0, 1.0}), cfg);
  CHECK(out.find(toy::key(1))->probs == std::vector<double>{0.9, 0.1});
  CHECK(out.find(toy::key(0))->probs[0] == doctest::Approx(0.25));
  CHECK(out.find(toy::key(0))->probs[1] == doctest::Approx(0.75));
}

TEST_CASE("repeated improvement keeps valid distributions and never lowers the argmax") {
  TrainConfig cfg;
  Rng rng(3);
  TabularPolicy p;
  p.table[toy::key(0)] = PolicyEntry{{0.1, 0.2, 0.3, 0.4}, 0};
  for (int i = 0; i < 200; ++i) {
    std::vector<double> means(4);
    for (double& m : means) m = uniform01(rng);
    const int best = static_cast<int>(std::max_element(means.begin(), means.end()) - means.begin());
    const double before = p.find(toy::key(0))->probs[best];
    p = improve_policy(p, single_state_q(means), cfg);
    CHECK(p.find(toy::key(0))->probs[best] >= before);
    CHECK_NOTHROW(p.validate());
  }
}

TEST_CASE("fallback replaces exactly the low-visit states") {
  TabularPolicy p;
  p.table[toy::key(0)] = PolicyEntry{{0.5, 0.5}, 0};
  p.table[toy::key(1)] = PolicyEntry{{0.5, 0.5}, 25};
  p.table[toy::key(2)] = PolicyEntry{{0.5, 0.5}, 19};
  const FallbackRule rule = [](const StateKey&) { return 1; };

  CHECK(apply_fallback(p, 0, rule).find(toy::key(0))->probs == std::vector<double>{0.5, 0.5});

  const TabularPolicy once = apply_fallback(p, 20, rule);
  CHECK(once.find(toy::key(0))->probs == std::vector<double>{0.0, 1.0});
  CHECK(once.find(toy::key(1))->probs == std::vector<double>{0.5, 0.5});
  CHECK(once.find(toy::key(2))->probs == std::vector<double>{0.0, 1.0});

  const TabularPolicy twice = apply_fallback(once, 20, rule);
  for (const auto& [k, e] : once.table) CHECK(twice.find(k)->probs == e.probs);

  const TabularPolicy all = apply_fallback(p, 1000, rule);
  for (const auto& [k, e] : all.table) CHECK(e.probs == std::vector<double>{0.0, 1.0});
}

TEST_CASE("convergence test on the moving average") {
  CHECK_FALSE(has_converged({1.0, 1.0, 1.0}, 3, 1e-3));
  CHECK(has_converged({1.0, 1.0, 1.0, 1.0}, 3, 1e-3));
  CHECK_FALSE(has_converged({0.0, 1.0, 1.0, 1.0}, 3, 1e-3));
  CHECK(has_converged({0.0, 1.0, 1.0, 1.0, 1.0}, 3, 1e-3));
  CHECK(has_converged({1.0, 1.0, 1.0, 1.002}, 3, 1e-3));
}

TEST_CASE("training recovers the best policy of the toy chain") {
  TrainConfig cfg;
  cfg.episodes_per_eval = 2000;
  cfg.max_iterations = 60;
  const TrainResult r = train_policy(toy::Chain{}, TabularPolicy{}, cfg, 17, 2);
  const auto best = toy::optimal_policy(10);
  CHECK(r.converged);
  for (int s = 0; s < 2; ++s) {
    const auto& probs = r.policy.find(toy::key(s))->probs;
    CHECK(probs[best[s]] > 0.95);
  }
  CHECK_FALSE(r.log.empty());
  CHECK(r.log.back().iteration == r.iterations);
}

TEST_CASE("training config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.improvement_step = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.convergence_tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.episodes_per_eval = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.train_p = 1.2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("an attacker trained at p = 0 never acts") {
  ScenarioParams params;
  GridEnvironment env(PlayerRole::kAttacker, params, {}, std::make_shared<Level0Defender>(params),
                      nullptr, 0.0, 50);
  TabularPolicy subject;
  subject.player = subject.codec.player = PlayerRole::kAttacker;
  const QEstimate q = evaluate_policy(env, subject, 100, 1);
  CHECK(q.table.empty());
  CHECK(q.reward_steps == 0);
}

TEST_CASE("noiseless defender settles on the zero-reward fixed point") {
  // No load and no generation: V2 = V3 = v1, so regulation means v1 = 1.
  ScenarioParams params;
  params.p2_max = params.p2_min = 0.0;
  params.p3_max = 0.0;
  params.v1_init = 0.96;
  TrainConfig cfg;
  cfg.train_p = 0.0;
  cfg.episodes_per_eval = 300;
  cfg.steps_per_episode = 30;
  LevelKOptions opts;
  opts.seed = 4;
  const TrainResult r = train_level_k(1, PlayerRole::kDefender, params, cfg, opts);
  CHECK(r.converged);

  auto policy = std::make_shared<const TabularPolicy>(r.policy);
  TabularDefender d(policy, params);
  Level0Attacker a(params);
  Rng rng(1);
  const auto traj = run_episode(params, opts.observation, 0.0, d, a, {30, 0}, rng);
  for (std::size_t i = 5; i < traj.size(); ++i) {
    CHECK(traj[i].state.v1 == doctest::Approx(1.0));
    CHECK(traj[i].r_d == doctest::Approx(0.0));
  }
}

TEST_CASE("level-k training is reproducible") {
  ScenarioParams params;
  TrainConfig cfg;
  cfg.episodes_per_eval = 100;
  cfg.max_iterations = 6;
  LevelKOptions opts;
  opts.seed = 12;
  std::ostringstream a, b;
  save_policy(train_level_k(1, PlayerRole::kDefender, params, cfg, opts).policy, a);
  opts.threads = 3;
  save_policy(train_level_k(1, PlayerRole::kDefender, params, cfg, opts).policy, b);
  CHECK(a.str() == b.str());
  CHECK_THROWS_AS(train_level_k(0, PlayerRole::kDefender, params, cfg, opts), ConfigError);
}

TEST_CASE("level-2 attacker trains against a trained defender") {
  ScenarioParams params;
  TrainConfig cfg;
  cfg.episodes_per_eval = 50;
  cfg.max_iterations = 3;
  cfg.train_p = 1.0;
  LevelKOptions opts;
  int levels_seen = 0;
  opts.on_iteration = [&](int k, PlayerRole, const IterationLog&) { levels_seen |= 1 << k; };
  const TrainResult r = train_level_k(2, PlayerRole::kAttacker, params, cfg, opts);
  CHECK(r.policy.player == PlayerRole::kAttacker);
  CHECK(levels_seen == 0b110);
  CHECK_NOTHROW(r.policy.validate());
  for (const auto& [k, e] : r.policy.table) CHECK(e.probs.size() == 11);
}

TEST_CASE("training log file") {
  const std::string path = (std::filesystem::temp_directory_path() / "cpsg_log_test.csv").string();
  write_training_log({{1, -0.5, 10, 0.25}, {2, -0.25, 12, 0.0}}, path);
  CHECK(read_file(path) ==
        "iteration,mean_reward,states_visited,fallback_fraction\n1,-0.5,10,0.25\n2,-0.25,12,0\n");
  std::filesystem::remove(path);
  CHECK_THROWS_AS(write_training_log({}, "/nonexistent/dir/log.csv"), IoError);
}
