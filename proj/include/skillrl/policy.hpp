#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "json.hpp"
#include "skillrl/mlp.hpp"
#include "skillrl/rng.hpp"

namespace skillrl {

/// Mean and variance per action dimension of a diagonal Gaussian.
struct GaussianMoments {
  Vec mean;
  Vec var;
};

/// Weighted product of diagonal Gaussians. weights must be nonnegative with
/// at least one strictly positive entry; the result is again Gaussian with
/// per-dimension precision sum_i w_i / var_i.
GaussianMoments poe_compose(const std::vector<GaussianMoments>& experts,
                            const Vec& weights);

/// Log density of a diagonal Gaussian at a.
double gaussian_log_prob(const GaussianMoments& m, const Vec& a);

/// Common interface between single-skill policies and mixture policies so
/// the trainer can fine-tune either. Gradient accumulation is explicit: the
/// caller zeroes, accumulates weighted log-prob gradients, then steps.
class StochasticPolicy {
 public:
  virtual ~StochasticPolicy() = default;

  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;

  /// Moments of pi(.|s). Throws if the network emits non-finite values.
  virtual GaussianMoments moments(const Vec& state) const = 0;

  /// log pi(a_n | s_n) for each row.
  virtual Vec log_prob_batch(const Mat& states, const Mat& actions) const = 0;

  /// Accumulates d/dtheta sum_n coeff_n * log pi(a_n|s_n) into the policy's
  /// gradient buffers (trainable parameters only).
  virtual void accumulate_log_prob_grad(const Mat& states, const Mat& actions,
                                        const Vec& coeff) = 0;

  virtual void zero_grad() = 0;
  virtual void adam_step(double lr) = 0;
  /// Discards accumulated optimizer state (gradients, Adam moments), leaving
  /// parameters untouched. A policy with no trainable state may keep the
  /// default no-op.
  virtual void reset_optimizer() {}
  virtual std::size_t trainable_param_count() const = 0;

  virtual std::unique_ptr<StochasticPolicy> clone_policy() const = 0;
  virtual nlohmann::json checkpoint() const = 0;
};

/// Draws an action from the policy at state s. deterministic=true returns
/// the mean. The returned log-prob is evaluated at the returned action.
std::pair<Vec, double> act(const StochasticPolicy& policy, const Vec& state,
                           Rng& rng, bool deterministic = false);

/// Diagonal-Gaussian policy: MLP mean, state-independent log-std.
class GaussianPolicy final : public StochasticPolicy {
 public:
  GaussianPolicy(int state_dim, int action_dim, Rng& rng,
                 const std::vector<int>& hidden = {64, 64});

  int state_dim() const override { return mean_.in_dim(); }
  int action_dim() const override { return mean_.out_dim(); }

  GaussianMoments moments(const Vec& state) const override;
  Vec log_prob_batch(const Mat& states, const Mat& actions) const override;
  void accumulate_log_prob_grad(const Mat& states, const Mat& actions,
                                const Vec& coeff) override;
  void zero_grad() override;
  void adam_step(double lr) override;
  void reset_optimizer() override;
  std::size_t trainable_param_count() const override;
  std::unique_ptr<StochasticPolicy> clone_policy() const override;
  nlohmann::json checkpoint() const override;

  static GaussianPolicy from_checkpoint(const nlohmann::json& j);

  Mat mean_batch(const Mat& states) const { return mean_.forward_batch(states); }
  const Vec& log_std() const { return log_std_; }
  void set_log_std(const Vec& v) { log_std_ = v; }
  const Vec& grad_log_std() const { return g_log_std_; }
  Mlp& mean_net() { return mean_; }
  const Mlp& mean_net() const { return mean_; }
  bool params_equal(const GaussianPolicy& other) const;

  /// Adds externally computed gradients (wrt this expert's mean outputs and
  /// log-std). Used by MixturePolicy, which owns the chain rule through the
  /// product composition.
  void accumulate_external_grad(const Mat& states, const Mat& g_mean,
                                const Vec& g_log_std);

 private:
  explicit GaussianPolicy(Mlp mean) : mean_(std::move(mean)) {}

  Mlp mean_;
  Vec log_std_;
  Vec g_log_std_;
  AdamVec log_std_adam_;
};

/// State -> scalar critic.
class ValueFunction {
 public:
  ValueFunction(int state_dim, Rng& rng, const std::vector<int>& hidden = {64, 64});

  double value(const Vec& state) const;
  Vec value_batch(const Mat& states) const;

  /// Accumulates the gradient of sum_n coeff_n * V(s_n).
  void accumulate_value_grad(const Mat& states, const Vec& coeff);
  void zero_grad();
  void adam_step(double lr);

  nlohmann::json checkpoint() const;
  static ValueFunction from_checkpoint(const nlohmann::json& j);

 private:
  explicit ValueFunction(Mlp net) : net_(std::move(net)) {}
  Mlp net_;
};

/// State-conditioned softmax over k experts.
class MixerFunction {
 public:
  MixerFunction(int state_dim, int num_experts, Rng& rng,
                const std::vector<int>& hidden = {64, 64});

  int num_experts() const { return net_.out_dim(); }

  /// Softmax weights at one state; always a probability vector.
  Vec weights(const Vec& state) const;
  Mat weights_batch(const Mat& states) const;

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

  nlohmann::json checkpoint() const;
  static MixerFunction from_checkpoint(const nlohmann::json& j);

 private:
  explicit MixerFunction(Mlp net) : net_(std::move(net)) {}
  Mlp net_;
};

/// Product-of-experts policy: k Gaussian experts combined per state with
/// mixer weights. Frozen experts receive no gradient.
class MixturePolicy final : public StochasticPolicy {
 public:
  MixturePolicy(std::vector<GaussianPolicy> experts, std::vector<bool> frozen,
                MixerFunction mixer);

  int state_dim() const override;
  int action_dim() const override;
  GaussianMoments moments(const Vec& state) const override;
  Vec log_prob_batch(const Mat& states, const Mat& actions) const override;
  void accumulate_log_prob_grad(const Mat& states, const Mat& actions,
                                const Vec& coeff) override;
  void zero_grad() override;
  void adam_step(double lr) override;
  void reset_optimizer() override;
  std::size_t trainable_param_count() const override;
  std::unique_ptr<StochasticPolicy> clone_policy() const override;
  nlohmann::json checkpoint() const override;

  const std::vector<GaussianPolicy>& experts() const { return experts_; }
  const std::vector<bool>& frozen() const { return frozen_; }
  const MixerFunction& mixer() const { return mixer_; }
  MixerFunction& mixer() { return mixer_; }
  GaussianPolicy& expert(int i) { return experts_[i]; }

 private:
  std::vector<GaussianPolicy> experts_;
  std::vector<bool> frozen_;
  MixerFunction mixer_;
};

/// Samples from the product-of-experts combination of the given experts
/// under the mixer's weights at s.
std::pair<Vec, double> mixture_act(const std::vector<GaussianPolicy>& experts,
                                   const MixerFunction& mixer, const Vec& state,
                                   Rng& rng, bool deterministic = false);

/// Composed moments at one state (softmax weights applied to the experts).
GaussianMoments mixture_moments(const std::vector<GaussianPolicy>& experts,
                                const MixerFunction& mixer, const Vec& state);

/// Per-row log density of the composed distribution.
Vec mixture_log_prob_batch(const std::vector<GaussianPolicy>& experts,
                           const MixerFunction& mixer, const Mat& states,
                           const Mat& actions);

/// Accumulates d/dtheta sum_n coeff_n log pi(a_n|s_n) into the experts'
/// buffers (skipping frozen ones) and the mixer's. This is the shared
/// backward pass: MixturePolicy calls it on its own members, distillation
/// calls it on an expert set shared across several mixers.
void mixture_accumulate_log_prob_grad(std::vector<GaussianPolicy>& experts,
                                      const std::vector<bool>& frozen,
                                      MixerFunction& mixer, const Mat& states,
                                      const Mat& actions, const Vec& coeff);

/// Serialized checkpoint, stable byte-for-byte for identical parameters.
std::string checkpoint_string(const StochasticPolicy& policy);

/// Loads "gaussian_policy" checkpoints (the format stored in skill libraries).
GaussianPolicy load_gaussian_checkpoint(const nlohmann::json& j);

}  // namespace skillrl
