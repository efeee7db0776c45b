#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "cpsgame/errors.hpp"
#include "cpsgame/studies.hpp"
#include "doctest.h"

using namespace cpsgame;

namespace {

struct ConstantDefender : DefenderStrategy {
  int select(const DefenderMemory&, const DefenderMoveSpace& m, double) const override {
    return m.index_of(TapMove::kHold);
  }
};

// Endpoint records whose mix at p = 0.01 is exactly linear in p3_max with
// the given slope.
SweepResult linear_design(double p2, double slope_at_001, std::vector<double> p3s) {
  SweepResult r;
  for (double p3 : p3s) {
    r.records.push_back({p2, p3, 0.2, 0.0, -0.1, 0.01, 100, true});
    r.records.push_back({p2, p3, 0.2, 1.0, -0.1 + slope_at_001 / 0.01 * p3, 0.01, 100, true});
  }
  return r;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cpsg_studies_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

StudyOptions tiny_study() {
  StudyOptions o;
  o.training.episodes_per_eval = 25;
  o.training.steps_per_episode = 30;
  o.training.max_iterations = 3;
  o.eval_episodes = 30;
  o.seed = 5;
  return o;
}

}  // namespace

TEST_CASE("mixing endpoint rewards") {
  CHECK(mix_rewards(-0.1, -1.0, 0.0) == -0.1);
  CHECK(mix_rewards(-0.1, -1.0, 1.0) == -1.0);
  CHECK(mix_rewards(-0.1, -1.0, 0.01) == doctest::Approx(-0.109));
}

TEST_CASE("normalized reward") {
  SweepRecord r;
  r.mean_reward = -0.5;
  r.sim_p = 1.0;
  CHECK(*normalized_reward(r) == -0.5);
  r.sim_p = 0.5;
  CHECK(*normalized_reward(r) == -1.0);
  r.sim_p = 0.0;
  CHECK_FALSE(normalized_reward(r).has_value());
}

TEST_CASE("matchup evaluation") {
  ScenarioParams params;
  ObservationConfig obs;
  ConstantDefender d;
  Level0Attacker a(params);
  const MatchupResult at0 = evaluate_matchup(d, a, params, obs, 0.0, 60, {50, 0}, 3, 1);
  CHECK(at0.n_episodes == 60);
  CHECK_FALSE(at0.normalized.has_value());
  CHECK(at0.std_error >= 0.0);
  const MatchupResult at1 = evaluate_matchup(d, a, params, obs, 1.0, 60, {50, 0}, 3, 3);
  CHECK(*at1.normalized == at1.mean_reward);
  const MatchupResult again = evaluate_matchup(d, a, params, obs, 1.0, 60, {50, 0}, 3, 1);
  CHECK(again.mean_reward == at1.mean_reward);
  CHECK(again.std_error == at1.std_error);
  CHECK_THROWS_AS(evaluate_matchup(d, a, params, obs, 1.0, 0, {50, 0}, 3, 1), ConfigError);
}

TEST_CASE("an attacker without actuation changes nothing") {
  ScenarioParams params;
  params.p3_max = 0.0;
  ObservationConfig obs;
  Level0Defender d(params);
  Level0Attacker a(params);
  const MatchupResult at0 = evaluate_matchup(d, a, params, obs, 0.0, 200, {100, 0}, 8, 1);
  const MatchupResult at1 = evaluate_matchup(d, a, params, obs, 1.0, 200, {100, 0}, 8, 1);
  CHECK(at0.mean_reward == at1.mean_reward);
  CHECK(at0.std_error == at1.std_error);
}

TEST_CASE("default grids") {
  const auto ps = default_probability_grid();
  REQUIRE(ps.size() == 7);
  CHECK(ps.front() == 0.01);
  CHECK(ps.back() == 1.0);
  for (std::size_t i = 1; i < ps.size(); ++i) CHECK(ps[i] / ps[i - 1] == doctest::Approx(std::cbrt(10.0)));
  const auto p2 = default_p2_grid();
  REQUIRE(p2.size() == 10);
  CHECK(p2.front() == 0.2);
  CHECK(p2[1] == 0.45);
  CHECK(p2.back() == 2.45);
  const auto p3 = default_p3_grid();
  REQUIRE(p3.size() == 10);
  CHECK(p3.front() == 0.25);
  CHECK(p3.back() == 2.5);
}

TEST_CASE("slope extraction") {
  const std::vector<double> p3s{0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75};
  const auto mixed = mix_design(linear_design(1.4, -0.006, p3s), 0.01);
  const SlopeFit fit = extract_slope(mixed, 1.4, 1.5);
  CHECK(fit.points == 6);
  CHECK(fit.slope == doctest::Approx(-0.006).epsilon(1e-12));
  CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-12));

  const auto flat = mix_design(linear_design(0.7, 0.0, p3s), 0.01);
  CHECK(extract_slope(flat, 0.7, 1.5).slope == doctest::Approx(0.0));
  CHECK(extract_slope(flat, 0.7, 1.5).r2 == 1.0);

  CHECK_THROWS_AS(extract_slope(mixed, 1.4, 0.5), InsufficientData);
  CHECK_THROWS_AS(extract_slope(mixed, 2.0, 1.5), InsufficientData);

  std::vector<SweepRecord> same_x(3, SweepRecord{1.4, 1.0, 0.2, 0.01, -0.1, 0, 1, true});
  CHECK_THROWS_AS(extract_slope(same_x, 1.4, 1.5), DegenerateInput);
}

TEST_CASE("slope extraction on noisy linear data") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> noise(0.0, 1e-4);
  std::vector<SweepRecord> recs;
  for (int i = 1; i <= 30; ++i) {
    const double p3 = 0.05 * i;
    recs.push_back({1.0, p3, 0.2, 0.01, 0.3 - 0.02 * p3 + noise(rng), 0, 1, true});
  }
  const SlopeFit fit = extract_slope(recs, 1.0, 1.5);
  CHECK(fit.slope == doctest::Approx(-0.02).epsilon(0.02));
  CHECK(fit.intercept == doctest::Approx(0.3).epsilon(0.01));
  CHECK(fit.r2 > 0.99);
}

TEST_CASE("welfare arithmetic") {
  WelfareParams w;
  CHECK(std::abs(welfare_cost_rate(-0.006, w) - 108.0) <= 1e-9);
  CHECK(welfare_cost_rate(0.0, w) == 0.0);
  WelfareParams free = w;
  free.event_cost = 0.0;
  CHECK(welfare_cost_rate(-0.006, free) == 0.0);
  CHECK_THROWS_AS(welfare_cost_rate(0.01, w), DegenerateInput);

  CHECK(std::abs(break_even_cpq(-0.006, 80.0, w) - 222.22) <= 0.01);
  CHECK(std::abs(break_even_cpq(-0.012, 80.0, w) - 111.11) <= 0.01);
  CHECK(break_even_cpq(-0.006, 0.0, w) == 0.0);
  CHECK_THROWS_AS(break_even_cpq(0.0, 80.0, w), DegenerateInput);

  WelfareParams slow = w;
  slow.step_minutes = 5.0;
  CHECK(welfare_cost_rate(-0.006, slow) == doctest::Approx(108.0 / 5));
}

TEST_CASE("break-even event cost reproduces the energy value") {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(1e-4, 0.1);
  WelfareParams w;
  for (int i = 0; i < 20; ++i) {
    const double slope = -u(rng);
    WelfareParams at = w;
    at.event_cost = break_even_cpq(slope, w.energy_value, w);
    CHECK(welfare_cost_rate(slope, at) == doctest::Approx(w.energy_value).epsilon(1e-12));
  }
}

TEST_CASE("welfare parameter validation") {
  WelfareParams w;
  CHECK_NOTHROW(w.validate());
  w.step_minutes = 0.0;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w = {};
  w.event_cost = -1.0;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w = {};
  w.attack_probability = 2.0;
  CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("welfare analysis per p2_max") {
  const std::vector<double> p3s{0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0};
  SweepResult r = linear_design(1.4, -0.006, p3s);
  for (const auto& rec : linear_design(0.7, 0.0, p3s).records) r.records.push_back(rec);
  for (const auto& rec : linear_design(2.2, -0.01, {0.25, 0.5}).records) r.records.push_back(rec);

  const auto rows = welfare_analysis(r, WelfareParams{}, 1.5);
  REQUIRE(rows.size() == 2);
  const WelfareRow& flat = rows[0].p2_max == 0.7 ? rows[0] : rows[1];
  const WelfareRow& sloped = rows[0].p2_max == 1.4 ? rows[0] : rows[1];
  CHECK(sloped.cost_rate == doctest::Approx(108.0).epsilon(1e-9));
  CHECK(sloped.break_even == doctest::Approx(222.2222).epsilon(1e-6));
  CHECK(flat.cost_rate == 0.0);
  CHECK(std::isinf(flat.break_even));

  std::ostringstream out;
  write_welfare_csv(rows, out);
  CHECK(out.str().rfind("p2_max,slope,r2,welfare_cost_rate,break_even_cpq\n", 0) == 0);
  CHECK(out.str().find("inf") != std::string::npos);

  CHECK_THROWS_AS(welfare_analysis(SweepResult{}, WelfareParams{}, 1.5), InsufficientData);
}

TEST_CASE("mixing a design needs both endpoints") {
  SweepResult r = linear_design(1.4, -0.006, {0.5, 1.0});
  const auto mixed = mix_design(r, 0.3);
  REQUIRE(mixed.size() == 2);
  CHECK(mixed[0].sim_p == 0.3);
  CHECK(mixed[0].mean_reward == doctest::Approx(mix_rewards(r.records[0].mean_reward,
                                                            r.records[1].mean_reward, 0.3)));
  r.records.pop_back();
  CHECK_THROWS_AS(mix_design(r, 0.3), InsufficientData);
}

TEST_CASE("sweep CSV round trip") {
  SweepResult r;
  r.records.push_back({1.4, 1.0, 0.2, 0.0, -0.123456789012345, 0.001, 2000, true});
  r.records.push_back({1.4, 1.0, 0.2, 0.5, -0.5, 0.002, 2000, false});
  std::ostringstream out;
  write_sweep_csv(r, out);
  const std::string text = out.str();
  CHECK(text.rfind("p2_max,p3_max,train_p,sim_p,mean_reward,stderr,n_episodes,converged,normalized_reward\n", 0) == 0);
  std::istringstream in(text);
  const SweepResult back = read_sweep_csv(in);
  REQUIRE(back.records.size() == 2);
  CHECK(back.records[0].mean_reward == r.records[0].mean_reward);
  CHECK(back.records[1].converged == false);
  CHECK(back.records[1].n_episodes == 2000);
  CHECK(*normalized_reward(back.records[1]) == -1.0);
}

TEST_CASE("malformed sweep CSVs are rejected") {
  auto read = [](const std::string& text) {
    std::istringstream in(text);
    return read_sweep_csv(in);
  };
  CHECK_THROWS_AS(read(""), IoError);
  CHECK_THROWS_AS(read("p2_max,p3_max\n1,2\n"), IoError);
  CHECK_THROWS_AS(read("p2_max,p3_max,train_p,sim_p,mean_reward,stderr,n_episodes,converged\n"
                       "1.4,1,0.2,0,abc,0,10,1\n"),
                  IoError);
  CHECK_THROWS_AS(read_sweep_csv_file("/nonexistent/sweep.csv"), IoError);
}

TEST_CASE("p sweep layout") {
  StudyOptions o = tiny_study();
  const SweepResult r = p_sweep(o, {0.0, 0.5}, {0.1, 1.0});
  REQUIRE(r.records.size() == 4);
  CHECK(r.records[0].train_p == 0.0);
  CHECK(r.records[0].sim_p == 0.1);
  CHECK(r.records[3].train_p == 0.5);
  CHECK(r.records[3].sim_p == 1.0);
  for (const auto& rec : r.records) CHECK(rec.n_episodes == 30);

  o.threads = 2;
  const SweepResult r2 = p_sweep(o, {0.0, 0.5}, {0.1, 1.0});
  for (std::size_t i = 0; i < 4; ++i) CHECK(r2.records[i].mean_reward == r.records[i].mean_reward);

  CHECK(p_sweep(o, {0.2}, {0.2}).records.size() == 1);
  CHECK_THROWS_AS(p_sweep(o, {}, {0.2}), ConfigError);
}

TEST_CASE("design sweep resumes from cell files") {
  const auto dir = scratch("cells");
  StudyOptions o = tiny_study();
  DesignSweepOptions d;
  d.cell_dir = dir.string();
  d.fingerprint = "abc";
  const SweepResult first = design_sweep(o, {0.7, 1.4}, {0.5, 1.0}, d);
  REQUIRE(first.records.size() == 8);
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) files += e.path().extension() == ".csv";
  CHECK(files == 4);

  // Tamper with one cell; a matching fingerprint means it is trusted.
  const auto cell = dir / "cell_0.7_0.5.csv";
  REQUIRE(std::filesystem::exists(cell));
  SweepResult edited{{first.records[0], first.records[1]}};
  edited.records[0].mean_reward = 42.0;
  {
    std::ofstream out(cell);
    out << "# abc\n";
    write_sweep_csv(edited, out);
  }
  const SweepResult resumed = design_sweep(o, {0.7, 1.4}, {0.5, 1.0}, d);
  CHECK(resumed.records[0].mean_reward == 42.0);
  for (std::size_t i = 1; i < 8; ++i) CHECK(resumed.records[i].mean_reward == first.records[i].mean_reward);

  d.fingerprint = "other";
  const SweepResult redone = design_sweep(o, {0.7, 1.4}, {0.5, 1.0}, d);
  CHECK(redone.records[0].mean_reward == first.records[0].mean_reward);
  std::filesystem::remove_all(dir);
}

TEST_CASE("design sweep holds real generation by default") {
  StudyOptions o = tiny_study();
  o.params.p3 = 0.5;
  const SweepResult held = design_sweep(o, {1.4}, {0.0, 1.0});
  REQUIRE(held.records.size() == 4);
  // With no reactive range the attacker is inert: both endpoints agree.
  CHECK(held.records[0].mean_reward == held.records[1].mean_reward);
  CHECK(held.records[0].sim_p == 0.0);
  CHECK(held.records[1].sim_p == 1.0);
}

TEST_CASE("trajectory output") {
  ScenarioParams params;
  ObservationConfig obs;
  Level0Defender d(params);
  Level0Attacker a(params);
  std::ostringstream one, three;
  write_trajectories(d, a, params, obs, 0.5, 70, {20, 5}, 3, 1, one);
  write_trajectories(d, a, params, obs, 0.5, 70, {20, 5}, 3, 3, three);
  CHECK(one.str() == three.str());
  std::istringstream in(one.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "episode,step,attacker_present,v1,v2,v3,p2,q2,q3,P1,Q1,d_move,a_move,r_D,r_A");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 70 * 20);
}
