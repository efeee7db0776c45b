#pragma once

// Fixed level-0 players and the tabular stochastic policy used by learned
// players.

#include <array>
#include <atomic>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "cpsgame/snfg.hpp"

namespace cpsgame {

enum class PlayerRole { kDefender, kAttacker };

const char* to_string(PlayerRole role);
PlayerRole parse_role(const std::string& s);

/// Drift-and-strike attacker. Strikes to the setting with the largest
/// hypothetical |V2 - 1| when that exceeds theta_a (ties go to the largest
/// swing |q - q3|); otherwise drifts one setting toward raising V2 when
/// V2 < 1 and lowering it otherwise.
int level0_attacker_move(const AttackerObservation& obs, int q3_index,
                         const ScenarioParams& params);

/// Dead-band regulator on the mean of V2 and V3 with halfwidth delta_v / 2.
/// Moves that would leave [v_min, v_max] become holds.
TapMove level0_defender_move(const DefenderObservation& obs,
                             const ScenarioParams& params);

/// Discretized memory state. Field layout depends on the player:
///   defender: v1 v2 v3 P1 Q1 prev stat
///   attacker: v2 v3 p3 q3 prev stat
struct StateKey {
  std::array<std::int32_t, 8> fields{};
  std::uint8_t size = 0;

  bool operator==(const StateKey& o) const {
    return size == o.size && fields == o.fields;
  }
  std::strong_ordering operator<=>(const StateKey& o) const {
    if (auto c = size <=> o.size; c != 0) return c;
    return fields <=> o.fields;
  }
};

struct StateKeyHash {
  std::size_t operator()(const StateKey& k) const noexcept;
};

struct StateCodec {
  PlayerRole player = PlayerRole::kDefender;
  double voltage_bin = 0.01;
  double flow_bin = 0.05;
  double statistic_bin = 2.0;
  bool include_previous_move = true;

  ObservationConfig binning() const { return {voltage_bin, flow_bin, 0.0}; }
  int key_size() const { return player == PlayerRole::kDefender ? 7 : 6; }
  std::vector<std::string> field_names() const;

  StateKey encode(const DefenderMemory& memory) const;
  StateKey encode(const AttackerMemory& memory) const;
  DefenderMemory decode_defender(const StateKey& key) const;
  AttackerMemory decode_attacker(const StateKey& key) const;

  void validate() const;
  bool operator==(const StateCodec&) const = default;
};

struct PolicyEntry {
  std::vector<double> probs;
  std::uint64_t visits = 0;
};

struct TabularPolicy {
  PlayerRole player = PlayerRole::kDefender;
  StateCodec codec;
  std::unordered_map<StateKey, PolicyEntry, StateKeyHash> table;

  const PolicyEntry* find(const StateKey& key) const {
    auto it = table.find(key);
    return it == table.end() ? nullptr : &it->second;
  }
  std::vector<StateKey> sorted_keys() const;
  /// Throws Error if any stored distribution is invalid.
  void validate() const;
};

/// Index sampled from `probs` with the uniform draw `u`.
int sample_index(const std::vector<double>& probs, double u);

/// What a tabular strategy does with a state it has no entry for.
enum class MissingKey {
  kFallback,  ///< level-0 move for that memory
  kUniform,   ///< uniform over the move space (exploration during training)
};

/// The level-0 move index for the state encoded in `key`, in the move space
/// of that state.
int level0_choice(const StateCodec& codec, const StateKey& key,
                  const ScenarioParams& params);

int policy_move(const TabularPolicy& policy, const DefenderMemory& memory,
                const DefenderMoveSpace& moves, const ScenarioParams& params,
                double u, MissingKey missing = MissingKey::kFallback,
                std::atomic<std::uint64_t>* fallback_hits = nullptr);

int policy_move(const TabularPolicy& policy, const AttackerMemory& memory,
                int q3_index, const ScenarioParams& params, double u,
                MissingKey missing = MissingKey::kFallback,
                std::atomic<std::uint64_t>* fallback_hits = nullptr);

class Level0Defender final : public DefenderStrategy {
 public:
  explicit Level0Defender(ScenarioParams params) : params_(std::move(params)) {}
  int select(const DefenderMemory& memory, const DefenderMoveSpace& moves,
             double u) const override;

 private:
  ScenarioParams params_;
};

class Level0Attacker final : public AttackerStrategy {
 public:
  explicit Level0Attacker(ScenarioParams params) : params_(std::move(params)) {}
  int select(const AttackerMemory& memory, int q3_index, double u) const override;

 private:
  ScenarioParams params_;
};

class TabularDefender final : public DefenderStrategy {
 public:
  TabularDefender(std::shared_ptr<const TabularPolicy> policy, ScenarioParams params,
                  MissingKey missing = MissingKey::kFallback);
  int select(const DefenderMemory& memory, const DefenderMoveSpace& moves,
             double u) const override;
  const ObservationConfig* binning() const override { return &binning_; }
  std::uint64_t fallback_hits() const { return hits_.load(); }

 private:
  std::shared_ptr<const TabularPolicy> policy_;
  ScenarioParams params_;
  MissingKey missing_;
  ObservationConfig binning_;
  mutable std::atomic<std::uint64_t> hits_{0};
};

class TabularAttacker final : public AttackerStrategy {
 public:
  TabularAttacker(std::shared_ptr<const TabularPolicy> policy, ScenarioParams params,
                  MissingKey missing = MissingKey::kFallback);
  int select(const AttackerMemory& memory, int q3_index, double u) const override;
  const ObservationConfig* binning() const override { return &binning_; }
  std::uint64_t fallback_hits() const { return hits_.load(); }

 private:
  std::shared_ptr<const TabularPolicy> policy_;
  ScenarioParams params_;
  MissingKey missing_;
  ObservationConfig binning_;
  mutable std::atomic<std::uint64_t> hits_{0};
};

// Policy files. Plain text, versioned; see README for the layout.
inline constexpr int kPolicyFormatVersion = 1;
void save_policy(const TabularPolicy& policy, std::ostream& out);
TabularPolicy load_policy(std::istream& in);
void save_policy_file(const TabularPolicy& policy, const std::string& path);
TabularPolicy load_policy_file(const std::string& path);

}  // namespace cpsgame
