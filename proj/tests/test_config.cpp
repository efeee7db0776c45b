#include <filesystem>

#include "cpsgame/config.hpp"
#include "cpsgame/errors.hpp"
#include "doctest.h"

using namespace cpsgame;

TEST_CASE("default config round trips through JSON") {
  RunConfig cfg;
  const std::string text = config_to_json(cfg);
  const RunConfig back = config_from_json(text);
  CHECK(config_to_json(back) == text);
  CHECK(back.scenario.p3 == std::nullopt);
  CHECK(back.training.convergence_tol == cfg.training.convergence_tol);
  CHECK(back.sweep.p2_grid == cfg.sweep.p2_grid);
}

TEST_CASE("a modified config round trips") {
  RunConfig cfg;
  cfg.scenario.p3 = 0.75;
  cfg.scenario.p2_max = 1.9;
  cfg.scenario.p2_min = 1.85;
  cfg.training.train_p = 0.5;
  cfg.policy.include_previous_move = false;
  cfg.sweep.train_ps = {0.1, 0.2};
  cfg.train.player = PlayerRole::kAttacker;
  cfg.seed = 123456789012345ULL;
  cfg.output_dir = "out dir/x";
  const RunConfig back = config_from_json(config_to_json(cfg));
  CHECK(back.scenario.p3 == 0.75);
  CHECK(back.training.train_p == 0.5);
  CHECK_FALSE(back.policy.include_previous_move);
  CHECK(back.sweep.train_ps == std::vector<double>{0.1, 0.2});
  CHECK(back.train.player == PlayerRole::kAttacker);
  CHECK(back.seed == 123456789012345ULL);
  CHECK(back.output_dir == "out dir/x");
  CHECK(config_to_json(back) == config_to_json(cfg));
}

TEST_CASE("missing keys keep their defaults") {
  const RunConfig cfg = config_from_json(R"({"training": {"train_p": 0.5}})");
  CHECK(cfg.training.train_p == 0.5);
  CHECK(cfg.training.episodes_per_eval == TrainConfig{}.episodes_per_eval);
  CHECK(cfg.scenario.epsilon == 0.05);
}

TEST_CASE("unknown keys and bad values are rejected") {
  CHECK_THROWS_WITH_AS(config_from_json(R"({"training": {"trian_p": 0.5}})"),
                       doctest::Contains("training.trian_p"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"scenario": 3})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"seed": -1})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"training": {"max_iterations": 1.5}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"scenario": {"theta_a": 0.01}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"sweep": {"train_ps": []}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"sweep": {"sim_ps": [0.5, 2]}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"train": {"player": "referee"}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json("{not json"), ConfigError);
  CHECK_THROWS_AS(config_from_json("[1, 2]"), ConfigError);
}

TEST_CASE("dotted key access") {
  RunConfig cfg;
  set_config_value(cfg, "training.train_p", "0.5");
  CHECK(cfg.training.train_p == 0.5);
  CHECK(get_config_value(cfg, "training.train_p") == "0.5");
  set_config_value(cfg, "output_dir", "results");
  CHECK(get_config_value(cfg, "output_dir") == "results");
  set_config_value(cfg, "scenario.p3", "0.8");
  CHECK(cfg.scenario.p3 == 0.8);
  set_config_value(cfg, "scenario.p3", "null");
  CHECK_FALSE(cfg.scenario.p3.has_value());
  set_config_value(cfg, "sweep.p3_grid", "[0.5, 1.0, 1.5]");
  CHECK(cfg.sweep.p3_grid.size() == 3);
  set_config_value(cfg, "train.player", "attacker");
  CHECK(cfg.train.player == PlayerRole::kAttacker);

  const std::string before = config_to_json(cfg);
  CHECK_THROWS_AS(set_config_value(cfg, "training.nope", "1"), ConfigError);
  CHECK_THROWS_AS(set_config_value(cfg, "training.train_p", "7"), ConfigError);
  CHECK_THROWS_AS(set_config_value(cfg, "seed", "abc"), ConfigError);
  CHECK_THROWS_AS(get_config_value(cfg, "scenario.nope"), ConfigError);
  CHECK(config_to_json(cfg) == before);
}

TEST_CASE("fingerprint ignores threads and output directory") {
  RunConfig a, b;
  b.threads = 8;
  b.output_dir = "/elsewhere";
  CHECK(config_fingerprint(a) == config_fingerprint(b));
  b.seed = 2;
  CHECK(config_fingerprint(a) != config_fingerprint(b));
}

TEST_CASE("config files") {
  const auto path = std::filesystem::temp_directory_path() / "cpsg_config_test.json";
  RunConfig cfg;
  cfg.training.train_p = 0.3;
  save_config(cfg, path.string());
  CHECK(load_config(path.string()).training.train_p == 0.3);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config("/nonexistent/cfg.json"), IoError);
}

TEST_CASE("derived option bundles") {
  RunConfig cfg;
  cfg.seed = 9;
  cfg.threads = 2;
  cfg.sweep.eval_episodes = 77;
  const StudyOptions s = cfg.study_options();
  CHECK(s.seed == 9);
  CHECK(s.threads == 2);
  CHECK(s.eval_episodes == 77);
  const LevelKOptions k = cfg.level_k_options();
  CHECK(k.seed == 9);
  CHECK(k.codec.statistic_bin == cfg.policy.statistic_bin);
}

TEST_CASE("shipped default config matches the built-in defaults") {
  const RunConfig shipped = load_config(CPSG_SOURCE_DIR "/configs/default.json");
  CHECK(config_to_json(shipped) == config_to_json(RunConfig{}));
}
