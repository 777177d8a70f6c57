#pragma once

// The 3x3 Coin Game. Two agents (Red, Blue) and exactly one coin of either
// color. Picking the own-colored coin gives +1; picking the other color gives
// +1 to the picker and -2 to the victim. After any pick a new coin of uniform
// random color spawns in a uniform random empty cell.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sqmarl/errors.hpp"
#include "sqmarl/grid.hpp"
#include "sqmarl/metrics.hpp"
#include "sqmarl/rng.hpp"

namespace sqmarl {

constexpr int kCoinGridSize = 3;

struct CoinGameState {
  Pos red_pos;
  Pos blue_pos;
  Pos coin_pos;
  AgentColor coin_color = AgentColor::Red;
  int step_count = 0;
};

struct CoinStepResult {
  std::array<double, 2> rewards{0.0, 0.0};
  std::array<std::optional<PickEvent>, 2> events{};
};

class CoinGameEnv {
 public:
  int num_agents() const { return 2; }
  int num_grid_actions() const { return kGridActions; }
  int height() const { return kCoinGridSize; }
  int width() const { return kCoinGridSize; }

  const CoinGameState& state() const { return state_; }
  void set_state(const CoinGameState& s) { state_ = s; }

  void reset(Rng& rng) {
    state_.red_pos = random_cell(rng);
    state_.blue_pos = random_cell(rng);
    state_.coin_color = rng.uniform_int(0, 1) == 0 ? AgentColor::Red : AgentColor::Blue;
    state_.coin_pos = random_empty_cell(rng);
    state_.step_count = 0;
  }

  // Both agents move simultaneously (clamped at the boundary); an agent
  // landing on the coin picks it. If both land on it, both receive their
  // respective pick rewards. Respawn keeps the agents in place.
  CoinStepResult step(GridAction red_action, GridAction blue_action, Rng& rng) {
    state_.red_pos = moved_clamped(state_.red_pos, red_action, kCoinGridSize, kCoinGridSize);
    state_.blue_pos = moved_clamped(state_.blue_pos, blue_action, kCoinGridSize, kCoinGridSize);
    CoinStepResult result;
    const bool red_on = state_.red_pos == state_.coin_pos;
    const bool blue_on = state_.blue_pos == state_.coin_pos;
    if (red_on) {
      result.rewards[0] += 1.0;
      if (state_.coin_color == AgentColor::Red) {
        result.events[0] = PickEvent::OwnCoin;
      } else {
        result.events[0] = PickEvent::OtherCoin;
        result.rewards[1] += -2.0;
      }
    }
    if (blue_on) {
      result.rewards[1] += 1.0;
      if (state_.coin_color == AgentColor::Blue) {
        result.events[1] = PickEvent::OwnCoin;
      } else {
        result.events[1] = PickEvent::OtherCoin;
        result.rewards[0] += -2.0;
      }
    }
    if (red_on || blue_on) {
      state_.coin_color = rng.uniform_int(0, 1) == 0 ? AgentColor::Red : AgentColor::Blue;
      state_.coin_pos = random_empty_cell(rng);
    }
    ++state_.step_count;
    return result;
  }

  // Red perspective uses the canonical channel order {red agent, blue agent,
  // red coin, blue coin}; the Blue perspective swaps agent channels and coin
  // channels so that every agent sees itself in channel 0.
  GridObservation observe(AgentColor perspective) const {
    GridObservation obs(4, kCoinGridSize, kCoinGridSize);
    const bool swap = perspective == AgentColor::Blue;
    const Pos self = swap ? state_.blue_pos : state_.red_pos;
    const Pos other = swap ? state_.red_pos : state_.blue_pos;
    obs.at(0, self.row, self.col) = 1;
    obs.at(1, other.row, other.col) = 1;
    const bool coin_is_self = (state_.coin_color == AgentColor::Blue) == swap;
    obs.at(coin_is_self ? 2 : 3, state_.coin_pos.row, state_.coin_pos.col) = 1;
    return obs;
  }

  // Non-zero reward tuples realizable under random play, (self, opponent).
  static std::vector<std::pair<double, double>> possible_reward_tuples() {
    return {{1.0, 0.0}, {1.0, -2.0}, {0.0, 1.0}, {-2.0, 1.0}};
  }

 private:
  Pos random_cell(Rng& rng) {
    return {rng.uniform_int(0, kCoinGridSize - 1), rng.uniform_int(0, kCoinGridSize - 1)};
  }

  Pos random_empty_cell(Rng& rng) {
    std::array<Pos, kCoinGridSize * kCoinGridSize> empty;
    int n = 0;
    for (int r = 0; r < kCoinGridSize; ++r)
      for (int c = 0; c < kCoinGridSize; ++c) {
        const Pos p{r, c};
        if (p == state_.red_pos || p == state_.blue_pos) continue;
        empty[static_cast<size_t>(n++)] = p;
      }
    return empty[static_cast<size_t>(rng.uniform_int(0, n - 1))];
  }

  CoinGameState state_;
};

}  // namespace sqmarl
