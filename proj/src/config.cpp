#include "cpsgame/config.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "cpsgame/errors.hpp"
#include "json.hpp"

namespace cpsgame {

using nlohmann::json;

namespace {

class Section {
 public:
  Section(const json& root, std::string name) : name_(std::move(name)) {
    if (name_.empty()) {
      obj_ = &root;
    } else if (auto it = root.find(name_); it != root.end()) {
      if (!it->is_object()) throw ConfigError("'" + name_ + "' must be an object");
      obj_ = &*it;
    }
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_) return;
    auto it = obj_->find(key);
    if (it == obj_->end()) return;
    read(*it, out, path(key));
  }

  void get_optional(const char* key, std::optional<double>& out) {
    seen_.insert(key);
    if (!obj_) return;
    auto it = obj_->find(key);
    if (it == obj_->end()) return;
    if (it->is_null()) {
      out.reset();
    } else {
      double v = 0.0;
      read(*it, v, path(key));
      out = v;
    }
  }

  void ignore(const char* key) { seen_.insert(key); }

  void finish() const {
    if (!obj_) return;
    for (auto it = obj_->begin(); it != obj_->end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + path(it.key()) + "'");
    }
  }

 private:
  std::string path(const std::string& key) const {
    return name_.empty() ? key : name_ + "." + key;
  }

  static void read(const json& j, double& out, const std::string& where) {
    if (!j.is_number()) throw ConfigError("'" + where + "' must be a number");
    out = j.get<double>();
  }
  static void read(const json& j, int& out, const std::string& where) {
    if (!j.is_number_integer()) throw ConfigError("'" + where + "' must be an integer");
    const auto v = j.get<std::int64_t>();
    if (v < INT32_MIN || v > INT32_MAX) throw ConfigError("'" + where + "' is out of range");
    out = static_cast<int>(v);
  }
  static void read(const json& j, std::uint64_t& out, const std::string& where) {
    if (!j.is_number_unsigned()) throw ConfigError("'" + where + "' must be a nonnegative integer");
    out = j.get<std::uint64_t>();
  }
  static void read(const json& j, bool& out, const std::string& where) {
    if (!j.is_boolean()) throw ConfigError("'" + where + "' must be true or false");
    out = j.get<bool>();
  }
  static void read(const json& j, std::string& out, const std::string& where) {
    if (!j.is_string()) throw ConfigError("'" + where + "' must be a string");
    out = j.get<std::string>();
  }
  static void read(const json& j, std::vector<double>& out, const std::string& where) {
    if (!j.is_array()) throw ConfigError("'" + where + "' must be an array of numbers");
    out.clear();
    for (const json& x : j) {
      if (!x.is_number()) throw ConfigError("'" + where + "' must be an array of numbers");
      out.push_back(x.get<double>());
    }
  }
  static void read(const json& j, PlayerRole& out, const std::string& where) {
    std::string s;
    read(j, s, where);
    out = parse_role(s);
  }

  const json* obj_ = nullptr;
  std::string name_;
  std::set<std::string> seen_;
};

json to_json(const RunConfig& c) {
  const ScenarioParams& s = c.scenario;
  json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  j["scenario"] = {
      {"r1", s.r1}, {"x1", s.x1}, {"r2", s.r2}, {"x2", s.x2},
      {"p2_max", s.p2_max}, {"p2_min", s.p2_min}, {"q2_ratio", s.q2_ratio},
      {"p3", s.p3 ? json(*s.p3) : json(nullptr)}, {"p3_max", s.p3_max},
      {"epsilon", s.epsilon}, {"v_min", s.v_min}, {"v_max", s.v_max},
      {"delta_v", s.delta_v}, {"theta_a", s.theta_a}, {"n_memory", s.n_memory},
      {"n_attacker_levels", s.n_attacker_levels}, {"v1_init", s.v1_init},
      {"q3_init", s.q3_init}};
  j["observation"] = {{"voltage_bin", c.observation.voltage_bin},
                      {"flow_bin", c.observation.flow_bin},
                      {"noise", c.observation.noise}};
  j["policy"] = {{"statistic_bin", c.policy.statistic_bin},
                 {"include_previous_move", c.policy.include_previous_move}};
  const TrainConfig& t = c.training;
  j["training"] = {{"episodes_per_eval", t.episodes_per_eval},
                   {"steps_per_episode", t.steps_per_episode},
                   {"improvement_step", t.improvement_step},
                   {"convergence_tol", t.convergence_tol},
                   {"convergence_window", t.convergence_window},
                   {"min_iterations", t.min_iterations},
                   {"max_iterations", t.max_iterations},
                   {"visit_threshold", t.visit_threshold},
                   {"train_p", t.train_p}};
  j["welfare"] = {{"energy_value", c.welfare.energy_value},
                  {"event_cost", c.welfare.event_cost},
                  {"sensitive_customers", c.welfare.sensitive_customers},
                  {"step_minutes", c.welfare.step_minutes},
                  {"attack_probability", c.welfare.attack_probability}};
  j["sweep"] = {{"train_ps", c.sweep.train_ps},
                {"sim_ps", c.sweep.sim_ps},
                {"p2_grid", c.sweep.p2_grid},
                {"p3_grid", c.sweep.p3_grid},
                {"p3_cutoff", c.sweep.p3_cutoff},
                {"hold_real_generation", c.sweep.hold_real_generation},
                {"eval_episodes", c.sweep.eval_episodes}};
  j["simulate"] = {{"p", c.simulate.p},
                   {"episodes", c.simulate.episodes},
                   {"steps", c.simulate.steps},
                   {"attack_at_step", c.simulate.attack_at_step}};
  j["train"] = {{"level", c.train.level}, {"player", to_string(c.train.player)}};
  return j;
}

RunConfig from_json(const json& root) {
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;

  Section top(root, "");
  top.get("seed", c.seed);
  top.get("output_dir", c.output_dir);
  top.get("threads", c.threads);
  for (const char* s : {"scenario", "observation", "policy", "training", "welfare",
                        "sweep", "simulate", "train"}) {
    top.ignore(s);
  }
  top.finish();

  ScenarioParams& s = c.scenario;
  Section sc(root, "scenario");
  sc.get("r1", s.r1);
  sc.get("x1", s.x1);
  sc.get("r2", s.r2);
  sc.get("x2", s.x2);
  sc.get("p2_max", s.p2_max);
  sc.get("p2_min", s.p2_min);
  sc.get("q2_ratio", s.q2_ratio);
  sc.get_optional("p3", s.p3);
  sc.get("p3_max", s.p3_max);
  sc.get("epsilon", s.epsilon);
  sc.get("v_min", s.v_min);
  sc.get("v_max", s.v_max);
  sc.get("delta_v", s.delta_v);
  sc.get("theta_a", s.theta_a);
  sc.get("n_memory", s.n_memory);
  sc.get("n_attacker_levels", s.n_attacker_levels);
  sc.get("v1_init", s.v1_init);
  sc.get("q3_init", s.q3_init);
  sc.finish();

  Section ob(root, "observation");
  ob.get("voltage_bin", c.observation.voltage_bin);
  ob.get("flow_bin", c.observation.flow_bin);
  ob.get("noise", c.observation.noise);
  ob.finish();

  Section po(root, "policy");
  po.get("statistic_bin", c.policy.statistic_bin);
  po.get("include_previous_move", c.policy.include_previous_move);
  po.finish();

  TrainConfig& t = c.training;
  Section tr(root, "training");
  tr.get("episodes_per_eval", t.episodes_per_eval);
  tr.get("steps_per_episode", t.steps_per_episode);
  tr.get("improvement_step", t.improvement_step);
  tr.get("convergence_tol", t.convergence_tol);
  tr.get("convergence_window", t.convergence_window);
  tr.get("min_iterations", t.min_iterations);
  tr.get("max_iterations", t.max_iterations);
  tr.get("visit_threshold", t.visit_threshold);
  tr.get("train_p", t.train_p);
  tr.finish();

  Section we(root, "welfare");
  we.get("energy_value", c.welfare.energy_value);
  we.get("event_cost", c.welfare.event_cost);
  we.get("sensitive_customers", c.welfare.sensitive_customers);
  we.get("step_minutes", c.welfare.step_minutes);
  we.get("attack_probability", c.welfare.attack_probability);
  we.finish();

  Section sw(root, "sweep");
  sw.get("train_ps", c.sweep.train_ps);
  sw.get("sim_ps", c.sweep.sim_ps);
  sw.get("p2_grid", c.sweep.p2_grid);
  sw.get("p3_grid", c.sweep.p3_grid);
  sw.get("p3_cutoff", c.sweep.p3_cutoff);
  sw.get("hold_real_generation", c.sweep.hold_real_generation);
  sw.get("eval_episodes", c.sweep.eval_episodes);
  sw.finish();

  Section si(root, "simulate");
  si.get("p", c.simulate.p);
  si.get("episodes", c.simulate.episodes);
  si.get("steps", c.simulate.steps);
  si.get("attack_at_step", c.simulate.attack_at_step);
  si.finish();

  Section tn(root, "train");
  tn.get("level", c.train.level);
  tn.get("player", c.train.player);
  tn.finish();

  c.validate();
  return c;
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

void check_grid(const std::vector<double>& v, const char* what, bool probabilities) {
  if (v.empty()) throw ConfigError(std::string("sweep.") + what + " must be nonempty");
  for (double x : v) {
    if (!std::isfinite(x) || x < 0.0 || (probabilities && x > 1.0)) {
      throw ConfigError(std::string("sweep.") + what +
                        (probabilities ? " values must lie in [0, 1]" : " values must be nonnegative"));
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  scenario.validate();
  observation.validate();
  StateCodec codec = policy;
  codec.voltage_bin = observation.voltage_bin;
  codec.flow_bin = observation.flow_bin;
  codec.validate();
  training.validate();
  welfare.validate();
  check_grid(sweep.train_ps, "train_ps", true);
  check_grid(sweep.sim_ps, "sim_ps", true);
  check_grid(sweep.p2_grid, "p2_grid", false);
  check_grid(sweep.p3_grid, "p3_grid", false);
  if (!std::isfinite(sweep.p3_cutoff)) throw ConfigError("sweep.p3_cutoff must be finite");
  if (sweep.eval_episodes < 1) throw ConfigError("sweep.eval_episodes must be positive");
  if (!(simulate.p >= 0.0 && simulate.p <= 1.0)) throw ConfigError("simulate.p must lie in [0, 1]");
  if (simulate.episodes < 1) throw ConfigError("simulate.episodes must be positive");
  if (simulate.steps < 1) throw ConfigError("simulate.steps must be positive");
  if (simulate.attack_at_step < 0) throw ConfigError("simulate.attack_at_step must be >= 0");
  if (train.level < 1) throw ConfigError("train.level must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

StudyOptions RunConfig::study_options() const {
  StudyOptions o;
  o.params = scenario;
  o.observation = observation;
  o.codec = policy;
  o.training = training;
  o.eval_episodes = sweep.eval_episodes;
  o.seed = seed;
  o.threads = threads;
  return o;
}

LevelKOptions RunConfig::level_k_options() const {
  LevelKOptions o;
  o.observation = observation;
  o.codec = policy;
  o.seed = seed;
  o.threads = threads;
  return o;
}

RunConfig config_from_json(const std::string& text) { return from_json(parse_text(text)); }

std::string config_to_json(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return config_from_json(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void save_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << config_to_json(cfg);
  if (!out) throw IoError("failed writing '" + path + "'");
}

namespace {

json* find_slot(json& j, const std::string& key) {
  const std::size_t dot = key.find('.');
  if (dot == std::string::npos) {
    if (j.contains(key) && !j[key].is_object()) return &j[key];
    return nullptr;
  }
  const std::string section = key.substr(0, dot);
  const std::string name = key.substr(dot + 1);
  if (j.contains(section) && j[section].is_object() && j[section].contains(name)) {
    return &j[section][name];
  }
  return nullptr;
}

}  // namespace

std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  json j = to_json(cfg);
  const json* slot = find_slot(j, key);
  if (!slot) throw ConfigError("unknown config key '" + key + "'");
  return slot->is_string() ? slot->get<std::string>() : slot->dump();
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  json j = to_json(cfg);
  json* slot = find_slot(j, key);
  if (!slot) throw ConfigError("unknown config key '" + key + "'");
  if (slot->is_string()) {
    *slot = value;
  } else {
    try {
      *slot = json::parse(value);
    } catch (const json::parse_error&) {
      *slot = value;
    }
  }
  cfg = from_json(j);
}

std::string config_fingerprint(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("threads");
  j.erase("output_dir");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cpsgame
