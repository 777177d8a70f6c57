#pragma once

// Core learning machinery: discounted returns, the selfish policy gradient,
// the status-quo correction term, the combined update rule and the self-play
// training loop shared by all experiments.
//
// Conventions fixed here:
//   * Episodes have T steps indexed t = 0..T-1; gradient sums run over
//     t = 1..T-1 (the t = 0 term has no previous action and is skipped, so
//     the Start state row never receives gradient).
//   * Gradient estimates are batch means, so the actor step size is
//     independent of the rollout count.
//   * kappa is resampled independently per trajectory per timestep.
//   * The baseline is trained toward the batch-mean empirical discounted
//     return per state before the policy update of the same epoch.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sqmarl/errors.hpp"
#include "sqmarl/matrix_game.hpp"
#include "sqmarl/metrics.hpp"
#include "sqmarl/policy.hpp"
#include "sqmarl/rng.hpp"

namespace sqmarl {

// Visit weighting used when averaging per-state return targets for the
// critic. Discounted weighting (gamma^t) matches the gamma^t weighting of the
// policy-gradient sums; uniform weighting averages all visits equally.
enum class CriticWeighting { Discounted, Uniform };

// Critic target convention. Plain uses the truncated empirical return R_t as
// the target; TailCorrected rescales it by 1/(1 - gamma^(T-t)) so the critic
// estimates the stationary value that a T-step truncation undershoots near
// the episode end.
enum class CriticTarget { Plain, TailCorrected };

// Advantage scaling. BatchScale divides each loss term's advantages by that
// term's per-epoch standard deviation (no centering, which would bias the
// status-quo term), keeping the effective step size comparable across
// training regimes.
enum class AdvantageNorm { None, BatchScale };

// Position weighting of the per-step terms in the actor's gradient sums.
// Discounted applies the gamma^t factor of the episodic policy-gradient
// theorem; Stationary weighs all timesteps equally, the common practical
// estimator for long-horizon averages.
enum class ActorWeighting { Discounted, Stationary };

struct LearnerConfig {
  double gamma = 0.96;        // discount
  double delta_actor = 0.005; // actor step size
  double delta_critic = 1.0;  // critic step size
  double alpha = 1.0;         // standard-loss weight
  double beta = 0.5;          // status-quo correction weight
  int z = 10;                 // kappa upper bound, kappa ~ U{1..z}
  int horizon = 200;          // episode length T
  int batch = 200;            // rollouts per epoch
  int epochs = 300;
  bool gaussian_init = false; // logits ~ N(0, init_stddev) instead of zeros
  double init_stddev = 0.1;
  CriticWeighting critic_weighting = CriticWeighting::Discounted;
  CriticTarget critic_target = CriticTarget::TailCorrected;
  AdvantageNorm advantage_norm = AdvantageNorm::None;
  ActorWeighting actor_weighting = ActorWeighting::Discounted;

  void validate() const {
    if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("gamma must be in [0,1)");
    if (z < 1) throw ConfigError("z must be >= 1");
    if (alpha < 0.0 || beta < 0.0) throw ConfigError("alpha and beta must be >= 0");
    if (horizon < 1 || batch < 1 || epochs < 1)
      throw ConfigError("horizon, batch and epochs must be >= 1");
  }
};

// One agent's view of an episode: state ids, its own actions, its own rewards.
struct AgentTrajectory {
  std::vector<int32_t> states;
  std::vector<uint8_t> actions;
  std::vector<double> rewards;
};

// R_t = sum_{l=t}^{T-1} gamma^{l-t} r_l via backward recursion.
inline std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    out[i] = acc;
  }
  return out;
}

inline int sample_kappa(Rng& rng, int z) {
  if (z < 1) throw ConfigError("sample_kappa: z must be >= 1");
  return rng.uniform_int(1, z);
}

// Imagined status-quo return: hold the previous step's reward for kappa steps,
// then continue with the real return.
//   Rhat_t = ((1 - gamma^kappa) / (1 - gamma)) * r_{t-1} + gamma^kappa * R_t
inline double imagined_return(std::span<const double> rewards, std::span<const double> returns,
                              size_t t, int kappa, double gamma) {
  if (t < 1) throw ConfigError("imagined_return: t = 0 has no previous action");
  const double gk = std::pow(gamma, static_cast<double>(kappa));
  return (1.0 - gk) / (1.0 - gamma) * rewards[t - 1] + gk * returns[t];
}

inline double imagined_return(const AgentTrajectory& traj, size_t t, int kappa, double gamma) {
  const auto returns = discounted_returns(traj.rewards, gamma);
  return imagined_return(traj.rewards, returns, t, kappa, gamma);
}

namespace detail {

// Both gradient terms have the shape sum_t grad log pi(u|s_t) * w_t with the
// policy fixed, so per-state weight totals are accumulated first and the
// (one-hot - probs) structure is applied once per state at the end.
struct GradAccum {
  std::vector<double> act_weight;   // sum of w over visits with the given action
  std::vector<double> state_weight; // sum of w over all visits of the state
  int n_states = 0, n_actions = 0;

  GradAccum(int n_states_, int n_actions_)
      : act_weight(static_cast<size_t>(n_states_) * n_actions_, 0.0),
        state_weight(static_cast<size_t>(n_states_), 0.0),
        n_states(n_states_), n_actions(n_actions_) {}

  void add(int state, int action, double w) {
    act_weight[static_cast<size_t>(state) * n_actions + action] += w;
    state_weight[static_cast<size_t>(state)] += w;
  }

  GradientVector finalize(const TabularSoftmaxPolicy& policy, double scale) const {
    GradientVector g(policy.param_count(), 0.0);
    std::vector<double> probs(static_cast<size_t>(n_actions));
    for (int s = 0; s < n_states; ++s) {
      if (state_weight[static_cast<size_t>(s)] == 0.0) {
        bool any = false;
        for (int a = 0; a < n_actions; ++a)
          any |= act_weight[static_cast<size_t>(s) * n_actions + a] != 0.0;
        if (!any) continue;
      }
      policy.probs_for_state(s, probs);
      for (int a = 0; a < n_actions; ++a) {
        const size_t i = static_cast<size_t>(s) * n_actions + a;
        g[i] = scale * (act_weight[i] - state_weight[static_cast<size_t>(s)] * probs[static_cast<size_t>(a)]);
      }
    }
    return g;
  }
};

inline void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value in ") + what);
}

// Running advantage statistics for the batch-scale normalization option.
struct AdvStats {
  double sum = 0.0, sumsq = 0.0;
  int64_t n = 0;
  void add(double a) {
    sum += a;
    sumsq += a * a;
    ++n;
  }
  double stddev() const {
    if (n == 0) return 0.0;
    const double mean = sum / static_cast<double>(n);
    return std::sqrt(std::max(0.0, sumsq / static_cast<double>(n) - mean * mean));
  }
};

// Standard policy-gradient term for one trajectory:
//   sum_{t>=1} grad log pi(u_t|s_t) * gamma^t * (R_t - b(s_t))
inline void accumulate_std(std::span<const int32_t> states, std::span<const uint8_t> actions,
                           std::span<const double> returns, const ValueBaseline& baseline,
                           double gamma, GradAccum& acc, AdvStats* stats = nullptr,
                           bool discounted_positions = true) {
  double gt = discounted_positions ? gamma : 1.0;
  for (size_t t = 1; t < states.size(); ++t) {
    const double adv = returns[t] - baseline.value(states[t]);
    const double w = gt * adv;
    check_finite(w, "reinforce_grad");
    acc.add(states[t], actions[t], w);
    if (stats) stats->add(adv);
    if (discounted_positions) gt *= gamma;
  }
}

// Status-quo correction term for one trajectory:
//   sum_{t>=1} grad log pi(u_{t-1}|s_t) * gamma^t * (Rhat_t - b(s_t))
inline void accumulate_sq(std::span<const int32_t> states, std::span<const uint8_t> actions,
                          std::span<const double> rewards, std::span<const double> returns,
                          const ValueBaseline& baseline, double gamma, int z, Rng& rng,
                          GradAccum& acc, AdvStats* stats = nullptr,
                          bool discounted_positions = true) {
  double gt = discounted_positions ? gamma : 1.0;
  for (size_t t = 1; t < states.size(); ++t) {
    const int kappa = sample_kappa(rng, z);
    const double rhat = imagined_return(rewards, returns, t, kappa, gamma);
    const double adv = rhat - baseline.value(states[t]);
    const double w = gt * adv;
    check_finite(w, "sq_correction");
    acc.add(states[t], actions[t - 1], w);
    if (stats) stats->add(adv);
    if (discounted_positions) gt *= gamma;
  }
}

}  // namespace detail

// Batch-mean REINFORCE gradient with a state-value baseline.
inline GradientVector reinforce_grad(std::span<const AgentTrajectory> batch,
                                     const TabularSoftmaxPolicy& policy,
                                     const ValueBaseline& baseline, double gamma) {
  detail::GradAccum acc(policy.num_states(), policy.num_actions());
  for (const auto& traj : batch) {
    const auto returns = discounted_returns(traj.rewards, gamma);
    detail::accumulate_std(traj.states, traj.actions, returns, baseline, gamma, acc);
  }
  return acc.finalize(policy, 1.0 / static_cast<double>(batch.size()));
}

// Batch-mean status-quo correction. kappa_t is sampled fresh per trajectory
// per timestep from the provided stream.
inline GradientVector sq_correction(std::span<const AgentTrajectory> batch,
                                    const TabularSoftmaxPolicy& policy,
                                    const ValueBaseline& baseline, double gamma, int z, Rng& rng) {
  detail::GradAccum acc(policy.num_states(), policy.num_actions());
  for (const auto& traj : batch) {
    const auto returns = discounted_returns(traj.rewards, gamma);
    detail::accumulate_sq(traj.states, traj.actions, traj.rewards, returns, baseline, gamma, z,
                          rng, acc);
  }
  return acc.finalize(policy, 1.0 / static_cast<double>(batch.size()));
}

// theta <- theta + (alpha * g_std + beta * g_sq) * delta_actor.
// With beta = 0 this is the plain Selfish Learner ascent rule.
inline void sql_update(TabularSoftmaxPolicy& policy, std::span<const double> g_std,
                       std::span<const double> g_sq, const LearnerConfig& cfg) {
  auto params = policy.params();
  for (size_t i = 0; i < params.size(); ++i) {
    double step = cfg.alpha * g_std[i];
    if (!g_sq.empty()) step += cfg.beta * g_sq[i];
    params[i] += step * cfg.delta_actor;
  }
}

// ---------------------------------------------------------------------------
// Exact Q/V under uniform random joint play (the random-exploration regime of
// the convergence analysis). Solved as a 5-state linear system.

struct LemmaQValues {
  std::array<std::array<double, 2>, kMatrixStates> q{};  // q[state][action], row player
  std::array<double, kMatrixStates> v{};
};

inline LemmaQValues lemma_q_values(const PayoffMatrix& payoff, double gamma) {
  if (gamma >= 1.0 || gamma < 0.0) throw ConfigError("lemma_q_values: gamma must be in [0,1)");
  payoff.validate();
  // V(s) = sum_{u1,u2} 1/4 [r1(u1,u2) + gamma V(next(u1,u2))]; the right-hand
  // side is identical for every s, but solve the general system anyway.
  constexpr int n = kMatrixStates;
  double A[n][n + 1] = {};
  for (int s = 0; s < n; ++s) {
    for (int i = 0; i < n; ++i) A[s][i] = (s == i) ? 1.0 : 0.0;
    for (int u1 = 0; u1 < 2; ++u1)
      for (int u2 = 0; u2 < 2; ++u2) {
        const int next = MatrixState::joint(u1, u2).id;
        A[s][next] -= 0.25 * gamma;
        A[s][n] += 0.25 * payoff.rewards[static_cast<size_t>(u1)][static_cast<size_t>(u2)][0];
      }
  }
  // Gaussian elimination with partial pivoting.
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
    for (int c = 0; c <= n; ++c) std::swap(A[col][c], A[piv][c]);
    for (int r = 0; r < n; ++r) {
      if (r == col || A[r][col] == 0.0) continue;
      const double f = A[r][col] / A[col][col];
      for (int c = col; c <= n; ++c) A[r][c] -= f * A[col][c];
    }
  }
  LemmaQValues out;
  for (int s = 0; s < n; ++s) out.v[static_cast<size_t>(s)] = A[s][n] / A[s][s];
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < 2; ++a) {
      double q = 0.0;
      for (int u2 = 0; u2 < 2; ++u2) {
        const int next = MatrixState::joint(a, u2).id;
        q += 0.5 * (payoff.rewards[static_cast<size_t>(a)][static_cast<size_t>(u2)][0] +
                    gamma * out.v[static_cast<size_t>(next)]);
      }
      out.q[static_cast<size_t>(s)][static_cast<size_t>(a)] = q;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Self-play training loop.

enum class LearnerKind { SQL, Selfish, FixedCooperate, FixedDefect };

inline const char* learner_kind_name(LearnerKind k) {
  switch (k) {
    case LearnerKind::SQL: return "sql";
    case LearnerKind::Selfish: return "sl";
    case LearnerKind::FixedCooperate: return "fixed-cooperate";
    case LearnerKind::FixedDefect: return "fixed-defect";
  }
  return "?";
}

struct AgentSpec {
  LearnerKind kind = LearnerKind::SQL;
  LearnerConfig cfg;

  double effective_beta() const { return kind == LearnerKind::SQL ? cfg.beta : 0.0; }
  bool learns() const { return kind == LearnerKind::SQL || kind == LearnerKind::Selfish; }
};

struct EpochRecord {
  int epoch = 0;
  int agent = 0;
  std::vector<std::pair<std::string, double>> metrics;  // insertion order is the CSV order
};

struct TrainingHistory {
  uint64_t seed = 0;
  double reward_shift = 0.0;
  std::vector<EpochRecord> records;

  const EpochRecord& record(int epoch, int agent, int n_agents) const {
    return records[static_cast<size_t>(epoch) * n_agents + agent];
  }
};

struct TrainResult {
  TrainingHistory history;
  std::vector<TabularSoftmaxPolicy> policies;
  std::vector<ValueBaseline> baselines;
};

struct TrainOptions {
  int epochs = 0;       // 0: use specs[0].cfg.epochs
  uint64_t seed = 0;
  // Training rewards are env rewards minus this shift (the non-positive
  // preprocessing); metrics are always reported on raw env rewards.
  double reward_shift = 0.0;
  bool record_policy_metrics = true;  // per-state pi(a0|s) and visit counts for small state spaces
};

namespace detail {

struct EpochBuffer {
  int n_agents = 0, horizon = 0, batch = 0;
  std::vector<int32_t> states;    // [ep][t][agent]
  std::vector<uint8_t> actions;   // [ep][t][agent]
  std::vector<double> rewards;    // [ep][t][agent], raw env scale

  void resize(int batch_, int horizon_, int n_agents_) {
    n_agents = n_agents_;
    horizon = horizon_;
    batch = batch_;
    const size_t n = static_cast<size_t>(batch) * horizon * n_agents;
    states.resize(n);
    actions.resize(n);
    rewards.resize(n);
  }
  size_t idx(int ep, int t, int agent) const {
    return (static_cast<size_t>(ep) * horizon + t) * n_agents + agent;
  }
};

}  // namespace detail

// Rolls out `batch` episodes per epoch under the current policies, then
// updates every learning agent's baseline and policy. Fully deterministic
// given (specs, options.seed).
template <class Env>
TrainResult train(Env& env, std::span<const AgentSpec> specs, const TrainOptions& options) {
  const int n_agents = env.num_agents();
  if (static_cast<int>(specs.size()) != n_agents)
    throw ConfigError("train: agent spec count does not match environment");
  for (const auto& s : specs) s.cfg.validate();
  const int horizon = specs[0].cfg.horizon;
  const int batch = specs[0].cfg.batch;
  for (const auto& s : specs)
    if (s.cfg.horizon != horizon || s.cfg.batch != batch)
      throw ConfigError("train: all agents must share horizon and batch");
  const int epochs = options.epochs > 0 ? options.epochs : specs[0].cfg.epochs;
  const int n_states = env.num_states();
  const int n_actions = env.num_actions();
  const double shift = options.reward_shift;

  std::vector<TabularSoftmaxPolicy> policies;
  std::vector<ValueBaseline> baselines;
  for (int a = 0; a < n_agents; ++a) {
    const auto& spec = specs[static_cast<size_t>(a)];
    if (spec.cfg.gaussian_init && spec.learns()) {
      Rng init_rng = derive_rng(options.seed, "init", static_cast<uint64_t>(a));
      policies.push_back(TabularSoftmaxPolicy::gaussian_init(n_states, n_actions, init_rng,
                                                             spec.cfg.init_stddev));
    } else {
      policies.emplace_back(n_states, n_actions);
    }
    if (spec.kind == LearnerKind::FixedCooperate || spec.kind == LearnerKind::FixedDefect) {
      const int fixed = spec.kind == LearnerKind::FixedCooperate ? 0 : 1;
      for (int s = 0; s < n_states; ++s) policies.back().row(s)[fixed] = 25.0;
    }
    baselines.emplace_back(n_states, spec.cfg.delta_critic);
  }

  TrainResult result;
  result.history.seed = options.seed;
  result.history.reward_shift = shift;
  result.history.records.reserve(static_cast<size_t>(epochs) * n_agents);

  detail::EpochBuffer buf;
  buf.resize(batch, horizon, n_agents);
  std::vector<uint8_t> joint(static_cast<size_t>(n_agents));
  std::vector<double> step_rewards(static_cast<size_t>(n_agents));
  std::vector<double> returns(static_cast<size_t>(horizon));
  std::vector<double> train_rewards(static_cast<size_t>(horizon));
  std::vector<int32_t> ep_states(static_cast<size_t>(horizon));
  std::vector<uint8_t> ep_actions(static_cast<size_t>(horizon));

  constexpr bool kEnvWantsRng = requires(Env& e, Rng& r) { e.reset(r); };
  constexpr bool kEnvHasEpisodeStats = requires(Env& e) { e.episode_pick_stats(); };

  const bool tiny_state_space = n_states <= 8;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    // -- rollouts ---------------------------------------------------------
    std::vector<std::array<double, 2>> pick_totals(static_cast<size_t>(n_agents), {0.0, 0.0});
    for (int ep = 0; ep < batch; ++ep) {
      Rng rng = derive_rng(options.seed, "rollout", static_cast<uint64_t>(epoch),
                           static_cast<uint64_t>(ep));
      if constexpr (kEnvWantsRng) {
        env.reset(rng);
      } else {
        env.reset();
      }
      for (int t = 0; t < horizon; ++t) {
        for (int a = 0; a < n_agents; ++a)
          buf.states[buf.idx(ep, t, a)] = static_cast<int32_t>(env.state_for(a));
        for (int a = 0; a < n_agents; ++a) {
          const auto& spec = specs[static_cast<size_t>(a)];
          int u;
          if (spec.kind == LearnerKind::FixedCooperate) {
            u = 0;
          } else if (spec.kind == LearnerKind::FixedDefect) {
            u = 1;
          } else {
            u = policies[static_cast<size_t>(a)].sample(buf.states[buf.idx(ep, t, a)], rng);
          }
          joint[static_cast<size_t>(a)] = static_cast<uint8_t>(u);
          buf.actions[buf.idx(ep, t, a)] = static_cast<uint8_t>(u);
        }
        if constexpr (kEnvWantsRng) {
          env.step(joint, step_rewards, rng);
        } else {
          env.step(joint, step_rewards);
        }
        for (int a = 0; a < n_agents; ++a) buf.rewards[buf.idx(ep, t, a)] = step_rewards[static_cast<size_t>(a)];
      }
      if constexpr (kEnvHasEpisodeStats) {
        const auto stats = env.episode_pick_stats();
        for (int a = 0; a < n_agents; ++a) {
          pick_totals[static_cast<size_t>(a)][0] += stats[static_cast<size_t>(a)][0];
          pick_totals[static_cast<size_t>(a)][1] += stats[static_cast<size_t>(a)][1];
        }
      }
    }

    // -- per-agent updates and metrics ------------------------------------
    for (int agent = 0; agent < n_agents; ++agent) {
      const auto& spec = specs[static_cast<size_t>(agent)];
      const double gamma = spec.cfg.gamma;
      const double beta = spec.effective_beta();

      EpochRecord rec;
      rec.epoch = epoch;
      rec.agent = agent;

      double ndr_sum = 0.0;
      size_t coop_count = 0;
      std::vector<double> value_sum(static_cast<size_t>(n_states), 0.0);
      std::vector<double> weight_sum(static_cast<size_t>(n_states), 0.0);
      std::vector<int64_t> visit_count(static_cast<size_t>(n_states), 0);
      const bool discounted_critic = spec.cfg.critic_weighting == CriticWeighting::Discounted;

      detail::GradAccum acc_std(n_states, n_actions);
      detail::GradAccum acc_sq(n_states, n_actions);
      Rng kappa_rng = derive_rng(options.seed, "kappa", static_cast<uint64_t>(agent),
                                 static_cast<uint64_t>(epoch));

      // First pass: returns, baseline targets, play metrics.
      std::vector<std::vector<double>> all_returns(static_cast<size_t>(batch));
      for (int ep = 0; ep < batch; ++ep) {
        for (int t = 0; t < horizon; ++t) {
          const size_t i = buf.idx(ep, t, agent);
          ep_states[static_cast<size_t>(t)] = buf.states[i];
          train_rewards[static_cast<size_t>(t)] = buf.rewards[i] - shift;
          if (buf.actions[i] == 0) ++coop_count;
        }
        all_returns[static_cast<size_t>(ep)] = discounted_returns(train_rewards, gamma);
        const auto& R = all_returns[static_cast<size_t>(ep)];
        double visit_w = 1.0;
        for (int t = 0; t < horizon; ++t) {
          const auto s = static_cast<size_t>(ep_states[static_cast<size_t>(t)]);
          double target = R[static_cast<size_t>(t)];
          if (spec.cfg.critic_target == CriticTarget::TailCorrected)
            target /= 1.0 - std::pow(gamma, static_cast<double>(horizon - t));
          value_sum[s] += visit_w * target;
          weight_sum[s] += visit_w;
          ++visit_count[s];
          if (discounted_critic) visit_w *= gamma;
        }
      }

      // NDR on raw env rewards.
      ndr_sum = 0.0;
      for (int ep = 0; ep < batch; ++ep) {
        double acc = 0.0, g = 1.0;
        for (int t = 0; t < horizon; ++t) {
          acc += g * buf.rewards[buf.idx(ep, t, agent)];
          g *= gamma;
        }
        ndr_sum += (1.0 - gamma) * acc;
      }

      if (spec.learns()) {
        // Baseline toward the per-state batch-mean return.
        auto& baseline = baselines[static_cast<size_t>(agent)];
        for (int s = 0; s < n_states; ++s) {
          if (visit_count[static_cast<size_t>(s)] == 0) continue;
          baseline.update(s, value_sum[static_cast<size_t>(s)] / weight_sum[static_cast<size_t>(s)]);
        }

        // Gradient accumulation against the refreshed baseline.
        detail::AdvStats stats_std, stats_sq;
        const bool norm = spec.cfg.advantage_norm == AdvantageNorm::BatchScale;
        const bool disc_pos = spec.cfg.actor_weighting == ActorWeighting::Discounted;
        for (int ep = 0; ep < batch; ++ep) {
          for (int t = 0; t < horizon; ++t) {
            const size_t i = buf.idx(ep, t, agent);
            ep_states[static_cast<size_t>(t)] = buf.states[i];
            ep_actions[static_cast<size_t>(t)] = buf.actions[i];
            train_rewards[static_cast<size_t>(t)] = buf.rewards[i] - shift;
          }
          const auto& R = all_returns[static_cast<size_t>(ep)];
          detail::accumulate_std(ep_states, ep_actions, R, baseline, gamma, acc_std,
                                 norm ? &stats_std : nullptr, disc_pos);
          if (beta != 0.0)
            detail::accumulate_sq(ep_states, ep_actions, train_rewards, R, baseline, gamma,
                                  spec.cfg.z, kappa_rng, acc_sq, norm ? &stats_sq : nullptr,
                                  disc_pos);
        }
        auto& policy = policies[static_cast<size_t>(agent)];
        double scale_std = 1.0 / static_cast<double>(batch);
        double scale_sq = scale_std;
        if (norm) {
          scale_std /= stats_std.stddev() + 1e-8;
          scale_sq /= stats_sq.stddev() + 1e-8;
        }
        const GradientVector g_std = acc_std.finalize(policy, scale_std);
        GradientVector g_sq;
        if (beta != 0.0) g_sq = acc_sq.finalize(policy, scale_sq);
        sql_update(policy, g_std, g_sq, spec.cfg);
        if (!policy.finite())
          throw NumericalError("NaN policy parameters for agent " + std::to_string(agent) +
                               " at epoch " + std::to_string(epoch));
      }

      const double steps = static_cast<double>(batch) * horizon;
      rec.metrics.emplace_back("ndr", ndr_sum / static_cast<double>(batch));
      rec.metrics.emplace_back("p_cooperation", static_cast<double>(coop_count) / steps);
      if constexpr (kEnvHasEpisodeStats) {
        const double own = pick_totals[static_cast<size_t>(agent)][0];
        const double other = pick_totals[static_cast<size_t>(agent)][1];
        rec.metrics.emplace_back("p_own_coin", own + other > 0 ? own / (own + other) : -1.0);
      }
      if (options.record_policy_metrics && tiny_state_space) {
        const auto& policy = policies[static_cast<size_t>(agent)];
        for (int s = 0; s < n_states; ++s) {
          rec.metrics.emplace_back("pi0_s" + std::to_string(s), policy.probs_for_state(s)[0]);
        }
        for (int s = 0; s < n_states; ++s) {
          rec.metrics.emplace_back("visit_s" + std::to_string(s),
                                   static_cast<double>(visit_count[static_cast<size_t>(s)]) / steps);
        }
      }
      result.history.records.push_back(std::move(rec));
    }
  }

  result.policies = std::move(policies);
  result.baselines = std::move(baselines);
  return result;
}

}  // namespace sqmarl
