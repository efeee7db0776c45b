#include "cpsgame/studies.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>

#include "cpsgame/csv.hpp"
#include "cpsgame/errors.hpp"

namespace cpsgame {

namespace {

constexpr double kGridTol = 1e-9;

double round_grid(double x) { return std::round(x * 1e9) / 1e9; }

bool same_value(double a, double b) { return std::abs(a - b) <= kGridTol; }

const char* const kSweepHeader =
    "p2_max,p3_max,train_p,sim_p,mean_reward,stderr,n_episodes,converged,normalized_reward";

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return in;
}

}  // namespace

std::optional<double> normalized_reward(const SweepRecord& r) {
  if (r.sim_p <= 0.0) return std::nullopt;
  return r.mean_reward / r.sim_p;
}

void WelfareParams::validate() const {
  for (double v : {energy_value, event_cost, sensitive_customers, step_minutes}) {
    if (!(std::isfinite(v) && v >= 0.0)) {
      throw ConfigError("welfare parameters must be finite and nonnegative");
    }
  }
  if (!(step_minutes > 0.0)) throw ConfigError("step_minutes must be positive");
  if (!(attack_probability >= 0.0 && attack_probability <= 1.0)) {
    throw ConfigError("attack_probability must lie in [0, 1]");
  }
}

MatchupResult evaluate_matchup(const DefenderStrategy& defender,
                               const AttackerStrategy& attacker,
                               const ScenarioParams& params,
                               const ObservationConfig& obs, double sim_p,
                               int episodes, const EpisodeOptions& episode,
                               std::uint64_t seed, int threads) {
  if (episodes < 1) throw ConfigError("episodes must be positive");
  if (episode.n_steps < 1) throw ConfigError("steps must be positive");
  const std::size_t n = static_cast<std::size_t>(episodes);
  std::vector<double> per_episode(n);
  const std::size_t chunks = (n + kEpisodesPerChunk - 1) / kEpisodesPerChunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t end = std::min(n, (c + 1) * kEpisodesPerChunk);
    for (std::size_t e = c * kEpisodesPerChunk; e < end; ++e) {
      Rng rng = make_stream(seed, Stream::kEvaluation, e);
      double sum = 0.0;
      play_episode(params, obs, sim_p, defender, attacker, episode, rng,
                   [&](const StepRecord& r) { sum += r.r_d; });
      per_episode[e] = sum / episode.n_steps;
    }
  });

  double mean = 0.0;
  for (double x : per_episode) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : per_episode) ss += (x - mean) * (x - mean);

  MatchupResult out;
  out.mean_reward = mean;
  out.std_error = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
  out.n_episodes = n;
  if (sim_p > 0.0) out.normalized = mean / sim_p;
  return out;
}

double mix_rewards(double r_at_p0, double r_at_p1, double p) {
  return (1.0 - p) * r_at_p0 + p * r_at_p1;
}

std::vector<double> default_probability_grid() {
  std::vector<double> out;
  for (int i = 0; i < 7; ++i) out.push_back(round_grid(std::pow(10.0, -2.0 + i / 3.0)));
  return out;
}

std::vector<double> default_p2_grid() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back(round_grid(0.2 + 0.25 * i));
  return out;
}

std::vector<double> default_p3_grid() {
  std::vector<double> out;
  for (int i = 1; i <= 10; ++i) out.push_back(round_grid(0.25 * i));
  return out;
}

namespace {

struct TrainedDefender {
  std::shared_ptr<const TabularPolicy> policy;
  bool converged = false;
};

TrainedDefender train_defender(const ScenarioParams& params, const StudyOptions& options,
                               double train_p) {
  TrainConfig cfg = options.training;
  cfg.train_p = train_p;
  LevelKOptions lk;
  lk.observation = options.observation;
  lk.codec = options.codec;
  lk.seed = options.seed;
  lk.threads = 1;
  TrainResult res = train_level_k(1, PlayerRole::kDefender, params, cfg, lk);
  return {std::make_shared<const TabularPolicy>(std::move(res.policy)), res.converged};
}

SweepRecord score(const TrainedDefender& d, const ScenarioParams& params,
                  const StudyOptions& options, double train_p, double sim_p) {
  TabularDefender defender(d.policy, params);
  Level0Attacker attacker(params);
  EpisodeOptions ep;
  ep.n_steps = options.training.steps_per_episode;
  MatchupResult m = evaluate_matchup(defender, attacker, params, options.observation,
                                     sim_p, options.eval_episodes, ep, options.seed, 1);
  SweepRecord r;
  r.p2_max = params.p2_max;
  r.p3_max = params.p3_max;
  r.train_p = train_p;
  r.sim_p = sim_p;
  r.mean_reward = m.mean_reward;
  r.std_error = m.std_error;
  r.n_episodes = m.n_episodes;
  r.converged = d.converged;
  return r;
}

void check_study(const StudyOptions& options) {
  options.params.validate();
  options.observation.validate();
  options.codec.validate();
  options.training.validate();
  if (options.eval_episodes < 1) throw ConfigError("eval_episodes must be positive");
}

void check_probabilities(const std::vector<double>& ps, const char* what) {
  if (ps.empty()) throw ConfigError(std::string(what) + " list is empty");
  for (double p : ps) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " values must lie in [0, 1]");
  }
}

}  // namespace

SweepResult p_sweep(const StudyOptions& options, const std::vector<double>& train_ps,
                    const std::vector<double>& sim_ps) {
  check_study(options);
  check_probabilities(train_ps, "train_p");
  check_probabilities(sim_ps, "sim_p");

  std::vector<std::vector<SweepRecord>> rows(train_ps.size());
  std::mutex progress_mutex;
  parallel_for(train_ps.size(), options.threads, [&](std::size_t i) {
    TrainedDefender d = train_defender(options.params, options, train_ps[i]);
    for (double sim_p : sim_ps) rows[i].push_back(score(d, options.params, options, train_ps[i], sim_p));
    if (options.progress) {
      std::lock_guard lock(progress_mutex);
      options.progress("train_p=" + format_number(train_ps[i]));
    }
  });

  SweepResult out;
  for (auto& r : rows) out.records.insert(out.records.end(), r.begin(), r.end());
  return out;
}

namespace {

std::string cell_path(const std::string& dir, double p2, double p3) {
  return (std::filesystem::path(dir) /
          ("cell_" + format_number(p2) + "_" + format_number(p3) + ".csv"))
      .string();
}

std::optional<std::vector<SweepRecord>> load_cell(const std::string& path,
                                                  const std::string& fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::string line;
  if (!std::getline(in, line) || line != "# " + fingerprint) return std::nullopt;
  try {
    return read_sweep_csv(in).records;
  } catch (const Error&) {
    return std::nullopt;
  }
}

void store_cell(const std::string& path, const std::string& fingerprint,
                const std::vector<SweepRecord>& records) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out = open_out(tmp);
    out << "# " << fingerprint << '\n';
    write_sweep_csv(SweepResult{records}, out);
    if (!out) throw IoError("failed writing '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp + "' into place: " + ec.message());
}

}  // namespace

SweepResult design_sweep(const StudyOptions& options, const std::vector<double>& p2_grid,
                         const std::vector<double>& p3_grid,
                         const DesignSweepOptions& design) {
  check_study(options);
  if (p2_grid.empty() || p3_grid.empty()) throw ConfigError("design grids must be nonempty");
  if (!design.cell_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(design.cell_dir, ec);
    if (ec) throw IoError("cannot create '" + design.cell_dir + "': " + ec.message());
  }

  const ScenarioParams& base = options.params;
  const double width = base.p2_max - base.p2_min;
  const double train_p = options.training.train_p;
  const std::size_t n_cells = p2_grid.size() * p3_grid.size();
  std::vector<std::vector<SweepRecord>> cells(n_cells);
  std::mutex progress_mutex;

  parallel_for(n_cells, options.threads, [&](std::size_t c) {
    ScenarioParams params = base;
    params.p2_max = p2_grid[c / p3_grid.size()];
    params.p2_min = params.p2_max - width;
    params.p3_max = p3_grid[c % p3_grid.size()];
    params.p3 = design.hold_real_generation ? std::optional<double>(base.real_generation())
                                            : std::nullopt;
    params.validate();

    std::string path;
    if (!design.cell_dir.empty()) {
      path = cell_path(design.cell_dir, params.p2_max, params.p3_max);
      if (auto cached = load_cell(path, design.fingerprint)) {
        cells[c] = std::move(*cached);
        return;
      }
    }
    TrainedDefender d = train_defender(params, options, train_p);
    for (double sim_p : {0.0, 1.0}) cells[c].push_back(score(d, params, options, train_p, sim_p));
    if (!path.empty()) store_cell(path, design.fingerprint, cells[c]);
    if (options.progress) {
      std::lock_guard lock(progress_mutex);
      options.progress("p2_max=" + format_number(params.p2_max) +
                       " p3_max=" + format_number(params.p3_max));
    }
  });

  SweepResult out;
  for (auto& r : cells) out.records.insert(out.records.end(), r.begin(), r.end());
  return out;
}

std::vector<SweepRecord> mix_design(const SweepResult& result, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("mixing probability must lie in [0, 1]");
  struct Ends {
    const SweepRecord* at0 = nullptr;
    const SweepRecord* at1 = nullptr;
  };
  std::map<std::pair<double, double>, Ends> cells;
  std::vector<std::pair<double, double>> order;
  for (const SweepRecord& r : result.records) {
    const std::pair<double, double> key{round_grid(r.p2_max), round_grid(r.p3_max)};
    auto [it, fresh] = cells.try_emplace(key);
    if (fresh) order.push_back(key);
    if (r.sim_p == 0.0) it->second.at0 = &r;
    else if (r.sim_p == 1.0) it->second.at1 = &r;
  }

  std::vector<SweepRecord> out;
  for (const auto& key : order) {
    const Ends& e = cells.at(key);
    if (!e.at0 || !e.at1) {
      throw InsufficientData("cell p2_max=" + format_number(key.first) +
                             " p3_max=" + format_number(key.second) +
                             " lacks a sim_p=0 or sim_p=1 record");
    }
    SweepRecord m = *e.at0;
    m.sim_p = p;
    m.mean_reward = mix_rewards(e.at0->mean_reward, e.at1->mean_reward, p);
    m.std_error = std::hypot((1.0 - p) * e.at0->std_error, p * e.at1->std_error);
    m.n_episodes = e.at0->n_episodes + e.at1->n_episodes;
    m.converged = e.at0->converged && e.at1->converged;
    out.push_back(m);
  }
  return out;
}

SlopeFit extract_slope(const std::vector<SweepRecord>& records, double p2_max,
                       double p3_cutoff) {
  std::vector<std::pair<double, double>> pts;
  for (const SweepRecord& r : records) {
    if (same_value(r.p2_max, p2_max) && r.p3_max <= p3_cutoff + kGridTol) {
      pts.emplace_back(r.p3_max, r.mean_reward);
    }
  }
  if (pts.size() < 3) {
    throw InsufficientData("need at least 3 points with p3_max <= " + format_number(p3_cutoff) +
                           " for p2_max=" + format_number(p2_max) + ", have " +
                           std::to_string(pts.size()));
  }
  const double n = static_cast<double>(pts.size());
  double mx = 0.0, my = 0.0;
  for (auto [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (auto [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (sxx == 0.0) throw DegenerateInput("all points share one p3_max value");

  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.points = static_cast<int>(pts.size());
  double ss_res = 0.0;
  for (auto [x, y] : pts) {
    const double e = y - (fit.intercept + fit.slope * x);
    ss_res += e * e;
  }
  // Spread below rounding noise of the mean counts as constant data.
  const double noise = 1e-24 * n * std::max(1.0, my * my);
  fit.r2 = syy > noise ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

double welfare_cost_rate(double slope, const WelfareParams& w) {
  w.validate();
  if (!(slope <= 0.0)) throw DegenerateInput("welfare cost needs a nonpositive slope");
  return std::abs(slope) * (60.0 / w.step_minutes) * w.event_cost * w.sensitive_customers;
}

double break_even_cpq(double slope, double energy_value, const WelfareParams& w) {
  w.validate();
  if (!(std::isfinite(energy_value) && energy_value >= 0.0)) {
    throw ConfigError("energy value must be finite and nonnegative");
  }
  if (!(slope < 0.0)) throw DegenerateInput("break-even is infinite unless the slope is negative");
  const double per_event = std::abs(slope) * (60.0 / w.step_minutes) * w.sensitive_customers;
  if (per_event == 0.0) throw DegenerateInput("break-even is infinite with no sensitive customers");
  return energy_value / per_event;
}

std::vector<WelfareRow> welfare_analysis(const SweepResult& result, const WelfareParams& w,
                                         double p3_cutoff) {
  w.validate();
  if (result.records.empty()) throw InsufficientData("sweep has no records");
  const std::vector<SweepRecord> mixed = mix_design(result, w.attack_probability);

  std::vector<double> p2s;
  for (const SweepRecord& r : mixed) {
    bool seen = false;
    for (double v : p2s) seen = seen || same_value(v, r.p2_max);
    if (!seen) p2s.push_back(r.p2_max);
  }
  std::sort(p2s.begin(), p2s.end());

  std::vector<WelfareRow> rows;
  for (double p2 : p2s) {
    SlopeFit fit;
    try {
      fit = extract_slope(mixed, p2, p3_cutoff);
    } catch (const InsufficientData&) {
      continue;
    }
    WelfareRow row;
    row.p2_max = p2;
    row.slope = fit.slope;
    row.r2 = fit.r2;
    const bool costly = fit.slope < 0.0 && w.sensitive_customers > 0.0;
    row.cost_rate = costly ? welfare_cost_rate(fit.slope, w) : 0.0;
    row.break_even = costly ? break_even_cpq(fit.slope, w.energy_value, w)
                            : std::numeric_limits<double>::infinity();
    rows.push_back(row);
  }
  if (rows.empty()) {
    throw InsufficientData("no p2_max value has 3 or more points with p3_max <= " +
                           format_number(p3_cutoff));
  }
  return rows;
}

void write_sweep_csv(const SweepResult& result, std::ostream& out) {
  out << kSweepHeader << '\n';
  for (const SweepRecord& r : result.records) {
    const std::optional<double> norm = normalized_reward(r);
    out << format_number(r.p2_max) << ',' << format_number(r.p3_max) << ','
        << format_number(r.train_p) << ',' << format_number(r.sim_p) << ','
        << format_number(r.mean_reward) << ',' << format_number(r.std_error) << ','
        << r.n_episodes << ',' << (r.converged ? 1 : 0) << ','
        << (norm ? format_number(*norm) : "nan") << '\n';
  }
}

void write_sweep_csv_file(const SweepResult& result, const std::string& path) {
  std::ofstream out = open_out(path);
  write_sweep_csv(result, out);
  if (!out) throw IoError("failed writing '" + path + "'");
}

SweepResult read_sweep_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("sweep CSV is empty");
  const std::vector<std::string> header = split_csv_line(line);
  const char* required[] = {"p2_max", "p3_max", "train_p", "sim_p",
                            "mean_reward", "stderr", "n_episodes", "converged"};
  std::size_t col[8];
  for (std::size_t k = 0; k < 8; ++k) {
    auto it = std::find(header.begin(), header.end(), required[k]);
    if (it == header.end()) throw IoError(std::string("sweep CSV lacks column '") + required[k] + "'");
    col[k] = static_cast<std::size_t>(it - header.begin());
  }

  SweepResult out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw IoError("sweep CSV line " + std::to_string(line_no) + " has " +
                    std::to_string(f.size()) + " fields, expected " +
                    std::to_string(header.size()));
    }
    SweepRecord r;
    r.p2_max = parse_number(f[col[0]]);
    r.p3_max = parse_number(f[col[1]]);
    r.train_p = parse_number(f[col[2]]);
    r.sim_p = parse_number(f[col[3]]);
    r.mean_reward = parse_number(f[col[4]]);
    r.std_error = parse_number(f[col[5]]);
    const double n = parse_number(f[col[6]]);
    if (!(n >= 1.0) || n != std::floor(n)) {
      throw IoError("sweep CSV line " + std::to_string(line_no) + ": bad n_episodes");
    }
    r.n_episodes = static_cast<std::uint64_t>(n);
    const std::string& c = f[col[7]];
    if (c != "0" && c != "1") {
      throw IoError("sweep CSV line " + std::to_string(line_no) + ": converged must be 0 or 1");
    }
    r.converged = c == "1";
    if (!(r.std_error >= 0.0)) {
      throw IoError("sweep CSV line " + std::to_string(line_no) + ": negative stderr");
    }
    out.records.push_back(r);
  }
  return out;
}

SweepResult read_sweep_csv_file(const std::string& path) {
  std::ifstream in = open_in(path);
  return read_sweep_csv(in);
}

void write_trajectories(const DefenderStrategy& defender, const AttackerStrategy& attacker,
                        const ScenarioParams& params, const ObservationConfig& obs,
                        double p, int episodes, const EpisodeOptions& episode,
                        std::uint64_t seed, int threads, std::ostream& out) {
  if (episodes < 1) throw ConfigError("episodes must be positive");
  if (episode.n_steps < 1) throw ConfigError("steps must be positive");
  out << "episode,step,attacker_present,v1,v2,v3,p2,q2,q3,P1,Q1,d_move,a_move,r_D,r_A\n";

  // Episodes are rendered in parallel blocks and written in order.
  const std::size_t n = static_cast<std::size_t>(episodes);
  const std::size_t block = 64;
  for (std::size_t start = 0; start < n; start += block) {
    const std::size_t count = std::min(block, n - start);
    std::vector<std::string> text(count);
    parallel_for(count, threads, [&](std::size_t i) {
      const std::size_t e = start + i;
      Rng rng = make_stream(seed, Stream::kSimulation, e);
      std::string& s = text[i];
      play_episode(params, obs, p, defender, attacker, episode, rng, [&](const StepRecord& r) {
        const GridState& g = r.state;
        s += std::to_string(e);
        s += ',' + std::to_string(g.step_index);
        s += r.attacker_present ? ",1" : ",0";
        for (double v : {g.flows.V1, g.flows.V2, g.flows.V3, g.p2, g.q2, g.q3, g.flows.P1,
                         g.flows.Q1}) {
          s += ',';
          s += format_number(v);
        }
        s += ',' + std::to_string(static_cast<int>(r.defender_move));
        s += ',' + std::to_string(r.attacker_move);
        s += ',' + format_number(r.r_d);
        s += ',' + format_number(r.r_a);
        s += '\n';
      });
    });
    for (const std::string& s : text) out << s;
  }
  if (!out) throw IoError("failed writing trajectories");
}

void write_welfare_csv(const std::vector<WelfareRow>& rows, std::ostream& out) {
  out << "p2_max,slope,r2,welfare_cost_rate,break_even_cpq\n";
  for (const WelfareRow& r : rows) {
    out << format_number(r.p2_max) << ',' << format_number(r.slope) << ','
        << format_number(r.r2) << ',' << format_number(r.cost_rate) << ','
        << format_number(r.break_even) << '\n';
  }
}

void write_welfare_csv_file(const std::vector<WelfareRow>& rows, const std::string& path) {
  std::ofstream out = open_out(path);
  write_welfare_csv(rows, out);
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace cpsgame
