#pragma once

// N-player Braess-paradox congestion game. Odd-indexed agents cooperate via
// Start-A-End, even-indexed agents via Start-B-End; defection is the bridged
// Start-A-B-End path for everyone. Agent ids are 1-based for the parity rule.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sqmarl/errors.hpp"

namespace sqmarl {

// State observation conventions for the n-player game; the full previous
// joint profile mirrors the two-player previous-joint-action state.
enum class BraessObs { FullProfile, OwnAndCount };

struct BraessConfig {
  int n_agents = 4;
  int horizon = 200;
  BraessObs obs = BraessObs::FullProfile;

  double base_reward() const { return 2.5 * n_agents / 2.0; }  // R0 = 1.25 * N0

  void validate() const {
    if (n_agents < 2 || n_agents % 2 != 0)
      throw ConfigError("braess: agent count must be even and >= 2");
    if (horizon < 1) throw ConfigError("braess: horizon must be >= 1");
  }
};

// Eq. of the congestion cost: edge loads are
//   n_{Start-A} = #odd cooperators + #defectors
//   n_{B-End}   = #even cooperators + #defectors
// Defectors pay both loads; cooperators pay their one load plus R0.
inline std::vector<double> braess_rewards(std::span<const uint8_t> actions,
                                          const BraessConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(actions.size()) != cfg.n_agents)
    throw ConfigError("braess_rewards: expected " + std::to_string(cfg.n_agents) +
                      " actions, got " + std::to_string(actions.size()));
  int n_start_a = 0, n_b_end = 0;
  for (int i = 0; i < cfg.n_agents; ++i) {
    const bool odd = (i + 1) % 2 == 1;
    if (actions[static_cast<size_t>(i)] == 1) {
      ++n_start_a;
      ++n_b_end;
    } else if (odd) {
      ++n_start_a;
    } else {
      ++n_b_end;
    }
  }
  const double r0 = cfg.base_reward();
  std::vector<double> rewards(static_cast<size_t>(cfg.n_agents));
  for (int i = 0; i < cfg.n_agents; ++i) {
    const bool odd = (i + 1) % 2 == 1;
    if (actions[static_cast<size_t>(i)] == 1) {
      rewards[static_cast<size_t>(i)] = -(static_cast<double>(n_start_a) + n_b_end);
    } else if (odd) {
      rewards[static_cast<size_t>(i)] = -(static_cast<double>(n_start_a) + r0);
    } else {
      rewards[static_cast<size_t>(i)] = -(r0 + static_cast<double>(n_b_end));
    }
  }
  return rewards;
}

class BraessEnv {
 public:
  explicit BraessEnv(BraessConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.n_agents > 16) throw ConfigError("braess: full-profile state needs n_agents <= 16");
  }

  const BraessConfig& config() const { return cfg_; }
  int num_agents() const { return cfg_.n_agents; }
  int num_actions() const { return 2; }
  int horizon() const { return cfg_.horizon; }

  int num_states() const {
    if (cfg_.obs == BraessObs::FullProfile) return 1 + (1 << cfg_.n_agents);
    return 1 + 2 * (cfg_.n_agents + 1);  // Start + own action x defector count
  }

  void reset() {
    started_ = false;
    profile_ = 0;
    defectors_ = 0;
    t_ = 0;
  }

  int state_for(int agent) const {
    if (!started_) return 0;
    if (cfg_.obs == BraessObs::FullProfile) return 1 + profile_;
    const int own = (profile_ >> agent) & 1;
    return 1 + own * (cfg_.n_agents + 1) + defectors_;
  }

  void step(std::span<const uint8_t> actions, std::span<double> rewards) {
    if (t_ >= cfg_.horizon)
      throw EpisodeExhausted("braess env stepped past horizon " + std::to_string(cfg_.horizon));
    const auto r = braess_rewards(actions, cfg_);
    for (int i = 0; i < cfg_.n_agents; ++i) rewards[static_cast<size_t>(i)] = r[static_cast<size_t>(i)];
    profile_ = 0;
    defectors_ = 0;
    for (int i = 0; i < cfg_.n_agents; ++i) {
      profile_ |= (actions[static_cast<size_t>(i)] & 1) << i;
      defectors_ += actions[static_cast<size_t>(i)] & 1;
    }
    started_ = true;
    ++t_;
  }

 private:
  BraessConfig cfg_;
  bool started_ = false;
  int profile_ = 0;
  int defectors_ = 0;
  int t_ = 0;
};

}  // namespace sqmarl
