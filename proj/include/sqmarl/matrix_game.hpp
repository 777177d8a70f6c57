#pragma once

// Iterated two-player 2x2 matrix games: payoff tables, the five-state
// previous-joint-action state space, social-dilemma classification and the
// non-positive reward preprocessing applied before training.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include <json.hpp>

#include "sqmarl/errors.hpp"

namespace sqmarl {

constexpr int kMatrixActions = 2;
// Fixed state ordering: Start, CC, CD, DC, DD.
constexpr int kMatrixStates = 5;

// Action index 0 = Cooperate, 1 = Defect for PD/SH/Chicken;
// 0 = Heads, 1 = Tails for Matching Pennies.
constexpr int kActCooperate = 0;
constexpr int kActDefect = 1;

struct MatrixState {
  int id = 0;  // 0 = Start, 1 + 2*u1 + u2 otherwise

  static MatrixState start() { return {0}; }
  static MatrixState joint(int u1, int u2) { return {1 + 2 * u1 + u2}; }

  bool is_start() const { return id == 0; }
  int prev_action(int agent) const {
    // agent 0 -> u1, agent 1 -> u2; only valid for non-start states
    return agent == 0 ? (id - 1) / 2 : (id - 1) % 2;
  }
  bool operator==(const MatrixState&) const = default;
};

inline std::array<double, kMatrixStates> encode_state(MatrixState s) {
  std::array<double, kMatrixStates> v{};
  v[static_cast<size_t>(s.id)] = 1.0;
  return v;
}

struct PayoffMatrix {
  std::array<std::string, 2> action_labels{"C", "D"};
  // rewards[row_action][col_action] = {row player reward, column player reward}
  std::array<std::array<std::array<double, 2>, 2>, 2> rewards{};

  void validate() const {
    for (const auto& row : rewards)
      for (const auto& cell : row)
        for (double r : cell)
          if (!std::isfinite(r)) throw ConfigError("payoff matrix has non-finite entry");
  }

  double max_entry() const {
    double m = rewards[0][0][0];
    for (const auto& row : rewards)
      for (const auto& cell : row)
        for (double r : cell) m = std::max(m, r);
    return m;
  }

  // Row-player entries of a symmetric dilemma in the R, S, T, P convention.
  double r_value() const { return rewards[0][0][0]; }
  double s_value() const { return rewards[0][1][0]; }
  double t_value() const { return rewards[1][0][0]; }
  double p_value() const { return rewards[1][1][0]; }

  bool operator==(const PayoffMatrix&) const = default;
};

// Shifts every entry by the global maximum over both players so that all
// rewards are <= 0 with at least one exact zero. Preference orderings between
// cells are unchanged.
inline PayoffMatrix make_nonpositive(const PayoffMatrix& m) {
  m.validate();
  PayoffMatrix out = m;
  const double shift = m.max_entry();
  for (auto& row : out.rewards)
    for (auto& cell : row)
      for (double& r : cell) r -= shift;
  return out;
}

struct DilemmaClass {
  bool rule1 = false;  // R > P
  bool rule2 = false;  // R > S
  bool rule3 = false;  // 2R > T + S
  bool greed = false;  // T > R
  bool fear = false;   // P > S
  bool is_dilemma = false;
};

inline DilemmaClass classify_dilemma(double R, double S, double T, double P) {
  DilemmaClass c;
  c.rule1 = R > P;
  c.rule2 = R > S;
  c.rule3 = 2.0 * R > T + S;
  c.greed = T > R;
  c.fear = P > S;
  c.is_dilemma = c.rule1 && c.rule2 && c.rule3 && (c.greed || c.fear);
  return c;
}

inline DilemmaClass classify_dilemma(const PayoffMatrix& m) {
  return classify_dilemma(m.r_value(), m.s_value(), m.t_value(), m.p_value());
}

// Built-in games from the experiment catalog.
inline PayoffMatrix prisoners_dilemma_payoff() {
  PayoffMatrix m;
  m.action_labels = {"C", "D"};
  m.rewards = {{{{{-1, -1}, {-3, 0}}}, {{{0, -3}, {-2, -2}}}}};
  return m;
}

inline PayoffMatrix matching_pennies_payoff() {
  PayoffMatrix m;
  m.action_labels = {"H", "T"};
  m.rewards = {{{{{1, -1}, {-1, 1}}}, {{{-1, 1}, {1, -1}}}}};
  return m;
}

inline PayoffMatrix stag_hunt_payoff() {
  PayoffMatrix m;
  m.action_labels = {"C", "D"};
  m.rewards = {{{{{0, 0}, {-4, -1}}}, {{{-1, -4}, {-3, -3}}}}};
  return m;
}

inline PayoffMatrix chicken_payoff() {
  PayoffMatrix m;
  m.action_labels = {"C", "D"};
  m.rewards = {{{{{-1, -1}, {-3, 0}}}, {{{0, -3}, {-4, -4}}}}};
  return m;
}

inline PayoffMatrix payoff_by_name(const std::string& name) {
  if (name == "ipd") return prisoners_dilemma_payoff();
  if (name == "imp") return matching_pennies_payoff();
  if (name == "ish") return stag_hunt_payoff();
  if (name == "icg") return chicken_payoff();
  throw ConfigError("unknown matrix game: " + name);
}

// JSON schema: {"actions": ["C","D"], "rewards": [[[r,c],[r,c]],[[r,c],[r,c]]]}
inline PayoffMatrix payoff_from_json(const nlohmann::json& j) {
  PayoffMatrix m;
  try {
    const auto& actions = j.at("actions");
    if (actions.size() != 2) throw ConfigError("payoff json: expected 2 action labels");
    m.action_labels = {actions.at(0).get<std::string>(), actions.at(1).get<std::string>()};
    const auto& rw = j.at("rewards");
    if (rw.size() != 2) throw ConfigError("payoff json: rewards must be 2x2x2");
    for (int a = 0; a < 2; ++a) {
      if (rw.at(a).size() != 2) throw ConfigError("payoff json: rewards must be 2x2x2");
      for (int b = 0; b < 2; ++b) {
        const auto& cell = rw.at(a).at(b);
        if (cell.size() != 2) throw ConfigError("payoff json: rewards must be 2x2x2");
        m.rewards[a][b] = {cell.at(0).get<double>(), cell.at(1).get<double>()};
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("payoff json: ") + e.what());
  }
  m.validate();
  return m;
}

inline nlohmann::json payoff_to_json(const PayoffMatrix& m) {
  nlohmann::json j;
  j["actions"] = {m.action_labels[0], m.action_labels[1]};
  j["rewards"] = {{{m.rewards[0][0][0], m.rewards[0][0][1]}, {m.rewards[0][1][0], m.rewards[0][1][1]}},
                  {{m.rewards[1][0][0], m.rewards[1][0][1]}, {m.rewards[1][1][0], m.rewards[1][1][1]}}};
  return j;
}

// Iterated matrix game. The state is the joint action of the previous
// iteration, with a distinguished Start state at the beginning of an episode.
// Transitions are deterministic; all stochasticity lives in the policies.
class IteratedMatrixEnv {
 public:
  explicit IteratedMatrixEnv(PayoffMatrix payoff, int horizon = 200)
      : payoff_(std::move(payoff)), horizon_(horizon) {
    payoff_.validate();
    if (horizon_ <= 0) throw ConfigError("matrix env horizon must be positive");
  }

  int num_agents() const { return 2; }
  int num_states() const { return kMatrixStates; }
  int num_actions() const { return kMatrixActions; }
  int horizon() const { return horizon_; }
  const PayoffMatrix& payoff() const { return payoff_; }

  void reset() {
    current_ = MatrixState::start();
    t_ = 0;
  }

  MatrixState state() const { return current_; }
  int state_for(int /*agent*/) const { return current_.id; }

  std::array<double, 2> step(int u1, int u2) {
    if (t_ >= horizon_)
      throw EpisodeExhausted("matrix env stepped past horizon " + std::to_string(horizon_));
    const auto& cell = payoff_.rewards[static_cast<size_t>(u1)][static_cast<size_t>(u2)];
    current_ = MatrixState::joint(u1, u2);
    ++t_;
    return {cell[0], cell[1]};
  }

  void step(std::span<const uint8_t> actions, std::span<double> rewards) {
    auto r = step(actions[0], actions[1]);
    rewards[0] = r[0];
    rewards[1] = r[1];
  }

 private:
  PayoffMatrix payoff_;
  int horizon_;
  int t_ = 0;
  MatrixState current_ = MatrixState::start();
};

}  // namespace sqmarl
