#include "cpsgame/agents.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "cpsgame/csv.hpp"
#include "cpsgame/errors.hpp"

namespace cpsgame {

namespace {
constexpr double kTol = 1e-12;
}

const char* to_string(PlayerRole role) {
  return role == PlayerRole::kDefender ? "defender" : "attacker";
}

PlayerRole parse_role(const std::string& s) {
  if (s == "defender") return PlayerRole::kDefender;
  if (s == "attacker") return PlayerRole::kAttacker;
  throw ConfigError("unknown player '" + s + "' (expected defender or attacker)");
}

int level0_attacker_move(const AttackerObservation& obs, int q3_index,
                         const ScenarioParams& params) {
  const int n = params.n_attacker_levels;
  const double v2 = obs.v2.value();
  const double q3 = params.q3_level(q3_index);

  int best = q3_index;
  double best_dev = -1.0;
  double best_swing = -1.0;
  for (int i = 0; i < n; ++i) {
    const double q = params.q3_level(i);
    const double dev = std::abs(v2 + params.x1 * (q - q3) - 1.0);
    const double swing = std::abs(q - q3);
    if (dev > best_dev + kTol ||
        (std::abs(dev - best_dev) <= kTol && swing > best_swing + kTol)) {
      best = i;
      best_dev = dev;
      best_swing = swing;
    }
  }
  if (best_dev - params.theta_a > kTol) return best;
  if (v2 < 1.0) return std::min(q3_index + 1, n - 1);
  return std::max(q3_index - 1, 0);
}

TapMove level0_defender_move(const DefenderObservation& obs,
                             const ScenarioParams& params) {
  const double mean = 0.5 * (obs.v2.value() + obs.v3.value());
  const double band = 0.5 * params.delta_v;
  const int tap = std::clamp(params.tap_of(obs.v1.value()), 0, params.tap_count());
  if (mean - 1.0 > band + kTol) return tap > 0 ? TapMove::kDown : TapMove::kHold;
  if (1.0 - mean > band + kTol) {
    return tap < params.tap_count() ? TapMove::kUp : TapMove::kHold;
  }
  return TapMove::kHold;
}

std::size_t StateKeyHash::operator()(const StateKey& k) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ k.size;
  for (int i = 0; i < k.size; ++i) {
    h ^= static_cast<std::uint32_t>(k.fields[i]);
    h *= 0x100000001b3ULL;
    h ^= h >> 29;
  }
  return static_cast<std::size_t>(h);
}

std::vector<std::string> StateCodec::field_names() const {
  if (player == PlayerRole::kDefender) return {"v1", "v2", "v3", "P1", "Q1", "prev", "stat"};
  return {"v2", "v3", "p3", "q3", "prev", "stat"};
}

void StateCodec::validate() const {
  binning().validate();
  if (!(statistic_bin >= 0) || !std::isfinite(statistic_bin)) {
    throw ConfigError("statistic_bin must be >= 0 (0 drops the statistic)");
  }
}

namespace {

std::int32_t stat_bin(double m, double width) {
  return width > 0 ? static_cast<std::int32_t>(std::lround(m / width)) : 0;
}

void check_width(const BinnedValue& b, double width) {
  if (b.width != width) {
    throw CodecMismatch("observation bin width does not match the policy codec");
  }
}

}  // namespace

StateKey StateCodec::encode(const DefenderMemory& m) const {
  if (player != PlayerRole::kDefender) throw CodecMismatch("attacker codec given a defender memory");
  const DefenderObservation& o = m.observation;
  check_width(o.v1, voltage_bin);
  check_width(o.v2, voltage_bin);
  check_width(o.v3, voltage_bin);
  check_width(o.P1, flow_bin);
  check_width(o.Q1, flow_bin);
  StateKey k;
  k.size = 7;
  k.fields = {o.v1.index, o.v2.index, o.v3.index, o.P1.index, o.Q1.index,
              include_previous_move ? static_cast<std::int32_t>(m.previous_move) : 0,
              stat_bin(m.statistic, statistic_bin), 0};
  return k;
}

StateKey StateCodec::encode(const AttackerMemory& m) const {
  if (player != PlayerRole::kAttacker) throw CodecMismatch("defender codec given an attacker memory");
  const AttackerObservation& o = m.observation;
  check_width(o.v2, voltage_bin);
  check_width(o.v3, voltage_bin);
  check_width(o.p3, flow_bin);
  check_width(o.q3, flow_bin);
  StateKey k;
  k.size = 6;
  k.fields = {o.v2.index, o.v3.index, o.p3.index, o.q3.index,
              include_previous_move ? m.previous_move : 0,
              stat_bin(m.statistic, statistic_bin), 0, 0};
  return k;
}

DefenderMemory StateCodec::decode_defender(const StateKey& k) const {
  if (player != PlayerRole::kDefender || k.size != 7) throw CodecMismatch("not a defender state key");
  DefenderMemory m;
  m.observation.v1 = {k.fields[0], voltage_bin};
  m.observation.v2 = {k.fields[1], voltage_bin};
  m.observation.v3 = {k.fields[2], voltage_bin};
  m.observation.P1 = {k.fields[3], flow_bin};
  m.observation.Q1 = {k.fields[4], flow_bin};
  m.previous_move = static_cast<TapMove>(k.fields[5]);
  m.statistic = k.fields[6] * statistic_bin;
  return m;
}

AttackerMemory StateCodec::decode_attacker(const StateKey& k) const {
  if (player != PlayerRole::kAttacker || k.size != 6) throw CodecMismatch("not an attacker state key");
  AttackerMemory m;
  m.observation.v2 = {k.fields[0], voltage_bin};
  m.observation.v3 = {k.fields[1], voltage_bin};
  m.observation.p3 = {k.fields[2], flow_bin};
  m.observation.q3 = {k.fields[3], flow_bin};
  m.previous_move = k.fields[4];
  m.statistic = k.fields[5] * statistic_bin;
  return m;
}

std::vector<StateKey> TabularPolicy::sorted_keys() const {
  std::vector<StateKey> keys;
  keys.reserve(table.size());
  for (const auto& [k, e] : table) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  return keys;
}

void TabularPolicy::validate() const {
  for (const auto& [k, e] : table) {
    if (e.probs.empty()) throw Error("empty probability vector in policy");
    double sum = 0.0;
    for (double p : e.probs) {
      if (!(p >= 0.0)) throw Error("negative probability in policy");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error("policy distribution does not sum to 1");
  }
}

int sample_index(const std::vector<double>& probs, double u) {
  double acc = 0.0;
  int last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) last_positive = static_cast<int>(i);
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return last_positive;
}

int level0_choice(const StateCodec& codec, const StateKey& key,
                  const ScenarioParams& params) {
  if (codec.player == PlayerRole::kDefender) {
    const DefenderMemory m = codec.decode_defender(key);
    const int tap = std::clamp(params.tap_of(m.observation.v1.value()), 0, params.tap_count());
    const DefenderMoveSpace moves = defender_move_space(tap, params);
    return moves.index_of(level0_defender_move(m.observation, params));
  }
  const AttackerMemory m = codec.decode_attacker(key);
  const int q3_index = codec.include_previous_move
                           ? std::clamp(m.previous_move, 0, params.n_attacker_levels - 1)
                           : params.q3_index_of(m.observation.q3.value());
  return level0_attacker_move(m.observation, q3_index, params);
}

int policy_move(const TabularPolicy& policy, const DefenderMemory& memory,
                const DefenderMoveSpace& moves, const ScenarioParams& params,
                double u, MissingKey missing,
                std::atomic<std::uint64_t>* fallback_hits) {
  const StateKey key = policy.codec.encode(memory);
  if (const PolicyEntry* e = policy.find(key)) {
    if (static_cast<int>(e->probs.size()) != moves.size) {
      throw CodecMismatch("stored distribution length differs from the move space");
    }
    return sample_index(e->probs, u);
  }
  if (missing == MissingKey::kUniform) {
    return std::min(static_cast<int>(u * moves.size), moves.size - 1);
  }
  if (fallback_hits) fallback_hits->fetch_add(1, std::memory_order_relaxed);
  return moves.index_of(level0_defender_move(memory.observation, params));
}

int policy_move(const TabularPolicy& policy, const AttackerMemory& memory,
                int q3_index, const ScenarioParams& params, double u,
                MissingKey missing, std::atomic<std::uint64_t>* fallback_hits) {
  const StateKey key = policy.codec.encode(memory);
  const int n = params.n_attacker_levels;
  if (const PolicyEntry* e = policy.find(key)) {
    if (static_cast<int>(e->probs.size()) != n) {
      throw CodecMismatch("stored distribution length differs from the move space");
    }
    return sample_index(e->probs, u);
  }
  if (missing == MissingKey::kUniform) return std::min(static_cast<int>(u * n), n - 1);
  if (fallback_hits) fallback_hits->fetch_add(1, std::memory_order_relaxed);
  return level0_attacker_move(memory.observation, q3_index, params);
}

int Level0Defender::select(const DefenderMemory& memory,
                           const DefenderMoveSpace& moves, double) const {
  return moves.index_of(level0_defender_move(memory.observation, params_));
}

int Level0Attacker::select(const AttackerMemory& memory, int q3_index, double) const {
  return level0_attacker_move(memory.observation, q3_index, params_);
}

TabularDefender::TabularDefender(std::shared_ptr<const TabularPolicy> policy,
                                 ScenarioParams params, MissingKey missing)
    : policy_(std::move(policy)), params_(std::move(params)), missing_(missing) {
  if (policy_->player != PlayerRole::kDefender) throw CodecMismatch("policy is not a defender policy");
  binning_ = policy_->codec.binning();
}

int TabularDefender::select(const DefenderMemory& memory,
                            const DefenderMoveSpace& moves, double u) const {
  return policy_move(*policy_, memory, moves, params_, u, missing_, &hits_);
}

TabularAttacker::TabularAttacker(std::shared_ptr<const TabularPolicy> policy,
                                 ScenarioParams params, MissingKey missing)
    : policy_(std::move(policy)), params_(std::move(params)), missing_(missing) {
  if (policy_->player != PlayerRole::kAttacker) throw CodecMismatch("policy is not an attacker policy");
  binning_ = policy_->codec.binning();
}

int TabularAttacker::select(const AttackerMemory& memory, int q3_index, double u) const {
  return policy_move(*policy_, memory, q3_index, params_, u, missing_, &hits_);
}

// ---------------------------------------------------------------------------
// Policy file format, version 1:
//
//   cpsgame-policy 1
//   player defender
//   voltage_bin 0.01
//   flow_bin 0.05
//   statistic_bin 2
//   previous_move 1
//   fields v1 v2 v3 P1 Q1 prev stat
//   states <count>
//   <key fields...> <visits> <n> <p_0> ... <p_{n-1}>      (one line per state)
//
// States are sorted by key so a policy always serializes to the same bytes.

void save_policy(const TabularPolicy& policy, std::ostream& out) {
  const StateCodec& c = policy.codec;
  out << "cpsgame-policy " << kPolicyFormatVersion << '\n'
      << "player " << to_string(policy.player) << '\n'
      << "voltage_bin " << format_number(c.voltage_bin) << '\n'
      << "flow_bin " << format_number(c.flow_bin) << '\n'
      << "statistic_bin " << format_number(c.statistic_bin) << '\n'
      << "previous_move " << (c.include_previous_move ? 1 : 0) << '\n'
      << "fields";
  for (const auto& f : c.field_names()) out << ' ' << f;
  out << '\n' << "states " << policy.table.size() << '\n';
  for (const StateKey& k : policy.sorted_keys()) {
    const PolicyEntry& e = policy.table.at(k);
    for (int i = 0; i < k.size; ++i) out << k.fields[i] << ' ';
    out << e.visits << ' ' << e.probs.size();
    for (double p : e.probs) out << ' ' << format_number(p);
    out << '\n';
  }
}

namespace {

std::string expect_field(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("policy file truncated before '" + name + "'");
  std::istringstream ls(line);
  std::string key, value;
  ls >> key >> value;
  if (key != name || value.empty()) throw IoError("policy file: expected '" + name + "'");
  return value;
}

}  // namespace

TabularPolicy load_policy(std::istream& in) {
  const std::string version = expect_field(in, "cpsgame-policy");
  if (version != std::to_string(kPolicyFormatVersion)) {
    throw IoError("unsupported policy format version " + version);
  }
  TabularPolicy policy;
  try {
    policy.player = parse_role(expect_field(in, "player"));
  } catch (const ConfigError& e) {
    throw IoError(e.what());
  }
  policy.codec.player = policy.player;
  policy.codec.voltage_bin = parse_number(expect_field(in, "voltage_bin"));
  policy.codec.flow_bin = parse_number(expect_field(in, "flow_bin"));
  policy.codec.statistic_bin = parse_number(expect_field(in, "statistic_bin"));
  policy.codec.include_previous_move = expect_field(in, "previous_move") == "1";
  expect_field(in, "fields");
  const std::size_t n_states = std::stoull(expect_field(in, "states"));

  const int key_size = policy.codec.key_size();
  std::string line;
  for (std::size_t s = 0; s < n_states; ++s) {
    if (!std::getline(in, line)) throw IoError("policy file truncated in state table");
    std::istringstream ls(line);
    StateKey k;
    k.size = static_cast<std::uint8_t>(key_size);
    for (int i = 0; i < key_size; ++i) {
      if (!(ls >> k.fields[i])) throw IoError("bad state key in policy file");
    }
    PolicyEntry e;
    std::size_t n = 0;
    if (!(ls >> e.visits >> n) || n == 0 || n > 1024) throw IoError("bad state entry in policy file");
    e.probs.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::string tok;
      if (!(ls >> tok)) throw IoError("missing probability in policy file");
      e.probs[i] = parse_number(tok);
    }
    if (!policy.table.emplace(k, std::move(e)).second) throw IoError("duplicate state key in policy file");
  }
  try {
    policy.validate();
  } catch (const Error& e) {
    throw IoError(std::string("policy file: ") + e.what());
  }
  return policy;
}

void save_policy_file(const TabularPolicy& policy, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  save_policy(policy, out);
  if (!out) throw IoError("failed writing '" + path + "'");
}

TabularPolicy load_policy_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open policy file '" + path + "'");
  return load_policy(in);
}

}  // namespace cpsgame
