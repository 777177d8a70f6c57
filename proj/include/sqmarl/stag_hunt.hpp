#pragma once

// Visual 7x7 Stag Hunt. Agents move on floor cells (walls block, blocked
// moves are no-ops). Arriving on the solo target alone yields +4; both agents
// on the joint target in the same step yield +25 each. Targets sit at fixed
// positions and respawn there immediately after consumption, so a reward
// triggers only on an arrival event, never by standing still.
//
// Note on naming: the source material labels the +4 solo target "stag" and
// the +25 joint target "hare", which inverts the classic stag-hunt naming.
// Rewards here are keyed to solo/joint roles; the layout markers follow the
// source labels ('S' solo/stag, 'H' joint/hare).

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sqmarl/errors.hpp"
#include "sqmarl/grid.hpp"
#include "sqmarl/rng.hpp"

namespace sqmarl {

constexpr int kStagHuntSize = 7;
constexpr double kSoloReward = 4.0;
constexpr double kJointReward = 25.0;

struct StagHuntLayout {
  std::array<std::array<bool, kStagHuntSize>, kStagHuntSize> wall{};
  Pos solo_target;   // 'S'
  Pos joint_target;  // 'H'

  bool is_wall(Pos p) const {
    return p.row < 0 || p.row >= kStagHuntSize || p.col < 0 || p.col >= kStagHuntSize ||
           wall[static_cast<size_t>(p.row)][static_cast<size_t>(p.col)];
  }
};

// Layout text format: 7 lines of 7 characters, '#' wall, '.' floor,
// 'S' solo target, 'H' joint target.
inline StagHuntLayout parse_staghunt_layout(const std::string& text) {
  StagHuntLayout layout;
  std::istringstream in(text);
  std::string line;
  int row = 0;
  int solo_count = 0, joint_count = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (row >= kStagHuntSize) throw ConfigError("staghunt layout: more than 7 rows");
    if (static_cast<int>(line.size()) != kStagHuntSize)
      throw ConfigError("staghunt layout: row " + std::to_string(row) + " is not 7 cells");
    for (int col = 0; col < kStagHuntSize; ++col) {
      switch (line[static_cast<size_t>(col)]) {
        case '#': layout.wall[static_cast<size_t>(row)][static_cast<size_t>(col)] = true; break;
        case '.': break;
        case 'S': layout.solo_target = {row, col}; ++solo_count; break;
        case 'H': layout.joint_target = {row, col}; ++joint_count; break;
        default:
          throw ConfigError(std::string("staghunt layout: bad cell '") +
                            line[static_cast<size_t>(col)] + "'");
      }
    }
    ++row;
  }
  if (row != kStagHuntSize) throw ConfigError("staghunt layout: expected 7 rows");
  if (solo_count != 1 || joint_count != 1)
    throw ConfigError("staghunt layout: need exactly one 'S' and one 'H'");
  return layout;
}

inline StagHuntLayout load_staghunt_layout(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open staghunt layout file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_staghunt_layout(ss.str());
}

inline const std::string& default_staghunt_layout_text() {
  static const std::string text =
      "#######\n"
      "#.....#\n"
      "#.S...#\n"
      "#..H..#\n"
      "#...#.#\n"
      "#.....#\n"
      "#######\n";
  return text;
}

struct StagHuntState {
  Pos red_pos;
  Pos blue_pos;
  int step_count = 0;
};

struct StagHuntStepResult {
  std::array<double, 2> rewards{0.0, 0.0};
};

class StagHuntEnv {
 public:
  explicit StagHuntEnv(StagHuntLayout layout = parse_staghunt_layout(default_staghunt_layout_text()))
      : layout_(layout) {}

  int num_agents() const { return 2; }
  int num_grid_actions() const { return kGridActions; }
  int height() const { return kStagHuntSize; }
  int width() const { return kStagHuntSize; }
  const StagHuntLayout& layout() const { return layout_; }
  const StagHuntState& state() const { return state_; }
  void set_state(const StagHuntState& s) { state_ = s; }

  void reset(Rng& rng) {
    state_.red_pos = random_spawn(rng);
    state_.blue_pos = random_spawn(rng);
    state_.step_count = 0;
  }

  StagHuntStepResult step(GridAction red_action, GridAction blue_action, Rng& /*rng*/) {
    const Pos red_before = state_.red_pos;
    const Pos blue_before = state_.blue_pos;
    state_.red_pos = move_blocked(state_.red_pos, red_action);
    state_.blue_pos = move_blocked(state_.blue_pos, blue_action);
    StagHuntStepResult result;
    const bool red_arrived_solo = state_.red_pos == layout_.solo_target && !(red_before == layout_.solo_target);
    const bool blue_arrived_solo = state_.blue_pos == layout_.solo_target && !(blue_before == layout_.solo_target);
    if (red_arrived_solo) result.rewards[0] += kSoloReward;
    if (blue_arrived_solo) result.rewards[1] += kSoloReward;
    const bool both_on_joint =
        state_.red_pos == layout_.joint_target && state_.blue_pos == layout_.joint_target;
    const bool some_arrival = !(red_before == state_.red_pos) || !(blue_before == state_.blue_pos);
    if (both_on_joint && some_arrival) {
      result.rewards[0] += kJointReward;
      result.rewards[1] += kJointReward;
    }
    ++state_.step_count;
    return result;
  }

  // Channels: {self agent, other agent, solo target, joint target}; the Blue
  // perspective swaps the agent channels, targets are color-neutral.
  GridObservation observe(AgentColor perspective) const {
    GridObservation obs(4, kStagHuntSize, kStagHuntSize);
    const bool swap = perspective == AgentColor::Blue;
    const Pos self = swap ? state_.blue_pos : state_.red_pos;
    const Pos other = swap ? state_.red_pos : state_.blue_pos;
    obs.at(0, self.row, self.col) = 1;
    obs.at(1, other.row, other.col) = 1;
    obs.at(2, layout_.solo_target.row, layout_.solo_target.col) = 1;
    obs.at(3, layout_.joint_target.row, layout_.joint_target.col) = 1;
    return obs;
  }

  static std::vector<std::pair<double, double>> possible_reward_tuples() {
    return {{kSoloReward, 0.0}, {0.0, kSoloReward}, {kJointReward, kJointReward}};
  }

  Pos move_blocked(Pos p, GridAction a) const {
    const Pos q = moved(p, a);
    return layout_.is_wall(q) ? p : q;
  }

 private:
  Pos random_spawn(Rng& rng) {
    std::vector<Pos> floor;
    for (int r = 0; r < kStagHuntSize; ++r)
      for (int c = 0; c < kStagHuntSize; ++c) {
        const Pos p{r, c};
        if (layout_.is_wall(p) || p == layout_.solo_target || p == layout_.joint_target) continue;
        floor.push_back(p);
      }
    return floor[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(floor.size()) - 1))];
  }

  StagHuntLayout layout_;
  StagHuntState state_;
};

}  // namespace sqmarl
