#pragma once

// Tabular softmax policies, state-value baselines and the finite-difference
// gradient oracle shared by all learners. Gradients are flat vectors aligned
// with the policy's parameter vector.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "sqmarl/errors.hpp"
#include "sqmarl/rng.hpp"

namespace sqmarl {

using GradientVector = std::vector<double>;

inline void softmax_into(std::span<const double> logits, std::span<double> out) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (size_t i = 0; i < logits.size(); ++i) out[i] /= sum;
}

// Softmax policy with one logit row per state. Parameters are row-major
// (state-major) in the flat vector.
class TabularSoftmaxPolicy {
 public:
  TabularSoftmaxPolicy(int n_states, int n_actions)
      : n_states_(n_states), n_actions_(n_actions),
        logits_(static_cast<size_t>(n_states) * n_actions, 0.0) {}

  // Logits start at zero (uniform policy) unless a Gaussian init is requested.
  static TabularSoftmaxPolicy gaussian_init(int n_states, int n_actions, Rng& rng,
                                            double stddev = 0.1) {
    TabularSoftmaxPolicy p(n_states, n_actions);
    for (double& v : p.logits_) v = stddev * rng.normal();
    return p;
  }

  int num_states() const { return n_states_; }
  int num_actions() const { return n_actions_; }
  size_t param_count() const { return logits_.size(); }
  std::span<double> params() { return logits_; }
  std::span<const double> params() const { return logits_; }

  std::span<const double> row(int state) const {
    return {logits_.data() + static_cast<size_t>(state) * n_actions_,
            static_cast<size_t>(n_actions_)};
  }
  std::span<double> row(int state) {
    return {logits_.data() + static_cast<size_t>(state) * n_actions_,
            static_cast<size_t>(n_actions_)};
  }

  void probs_for_state(int state, std::span<double> out) const { softmax_into(row(state), out); }

  std::vector<double> probs_for_state(int state) const {
    std::vector<double> p(static_cast<size_t>(n_actions_));
    probs_for_state(state, p);
    return p;
  }

  // Feature form of the policy surface: logits_a = sum_s f_s * L[s][a].
  // With one-hot features this selects the state's logit row.
  std::vector<double> action_probs(std::span<const double> features) const {
    if (features.size() != static_cast<size_t>(n_states_))
      throw ConfigError("action_probs: feature dimension mismatch");
    std::vector<double> logits(static_cast<size_t>(n_actions_), 0.0);
    for (int s = 0; s < n_states_; ++s) {
      if (features[static_cast<size_t>(s)] == 0.0) continue;
      auto r = row(s);
      for (int a = 0; a < n_actions_; ++a)
        logits[static_cast<size_t>(a)] += features[static_cast<size_t>(s)] * r[static_cast<size_t>(a)];
    }
    std::vector<double> p(static_cast<size_t>(n_actions_));
    softmax_into(logits, p);
    return p;
  }

  int sample(int state, Rng& rng) const {
    double p[16];
    probs_for_state(state, {p, static_cast<size_t>(n_actions_)});
    return rng.categorical(p, n_actions_);
  }

  // Gradient of log pi(action|state) w.r.t. the flat parameter vector:
  // one-hot(action) - probs, placed in the state's row.
  GradientVector log_prob_grad(int state, int action) const {
    if (action < 0 || action >= n_actions_) throw ConfigError("log_prob_grad: bad action index");
    GradientVector g(param_count(), 0.0);
    std::vector<double> p = probs_for_state(state);
    const size_t base = static_cast<size_t>(state) * n_actions_;
    for (int a = 0; a < n_actions_; ++a) g[base + a] = (a == action ? 1.0 : 0.0) - p[static_cast<size_t>(a)];
    return g;
  }

  void add_scaled(std::span<const double> grad, double scale) {
    for (size_t i = 0; i < logits_.size(); ++i) logits_[i] += scale * grad[i];
  }

  bool finite() const {
    return std::all_of(logits_.begin(), logits_.end(), [](double v) { return std::isfinite(v); });
  }

 private:
  int n_states_;
  int n_actions_;
  std::vector<double> logits_;
};

// Per-state value table trained toward empirical discounted returns by a
// squared-error gradient step: b <- b + delta_critic * (target - b).
// With delta_critic = 1 and a batch-mean target this sets b to the batch mean.
class ValueBaseline {
 public:
  explicit ValueBaseline(int n_states, double delta_critic = 1.0)
      : values_(static_cast<size_t>(n_states), 0.0), delta_critic_(delta_critic) {}

  double value(int state) const { return values_[static_cast<size_t>(state)]; }
  int num_states() const { return static_cast<int>(values_.size()); }
  double delta_critic() const { return delta_critic_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  void update(int state, double target) {
    if (!std::isfinite(target)) throw NumericalError("baseline update: non-finite target");
    double& v = values_[static_cast<size_t>(state)];
    v += delta_critic_ * (target - v);
  }

 private:
  std::vector<double> values_;
  double delta_critic_;
};

// Central-difference gradient of an arbitrary objective of the parameter
// vector. Test oracle for all analytic gradients.
inline GradientVector finite_diff_objective_grad(
    const std::function<double(std::span<const double>)>& objective, std::span<double> params,
    double step = 1e-5) {
  GradientVector g(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + step;
    const double up = objective(params);
    params[i] = saved - step;
    const double down = objective(params);
    params[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericalError("finite_diff_objective_grad: non-finite objective");
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

}  // namespace sqmarl
