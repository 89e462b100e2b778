#pragma once

#include <functional>
#include <stdexcept>
#include <utility>

#include "skillrl/policy.hpp"

namespace skillrl::testing {

/// Fixed-variance policy whose mean comes from a lambda; with a tiny
/// variance it acts as a deterministic scripted controller.
class ScriptedPolicy final : public StochasticPolicy {
 public:
  ScriptedPolicy(int state_dim, int action_dim, std::function<Vec(const Vec&)> mean,
                 double var = 1e-18)
      : state_dim_(state_dim), action_dim_(action_dim), mean_(std::move(mean)), var_(var) {}

  int state_dim() const override { return state_dim_; }
  int action_dim() const override { return action_dim_; }

  GaussianMoments moments(const Vec& state) const override {
    return {mean_(state), Vec::Constant(action_dim_, var_)};
  }

  Vec log_prob_batch(const Mat& states, const Mat& actions) const override {
    Vec out(states.rows());
    for (Eigen::Index i = 0; i < states.rows(); ++i) {
      out(i) = gaussian_log_prob(moments(states.row(i).transpose()),
                                 actions.row(i).transpose());
    }
    return out;
  }

  void accumulate_log_prob_grad(const Mat&, const Mat&, const Vec&) override {}
  void zero_grad() override {}
  void adam_step(double) override {}
  std::size_t trainable_param_count() const override { return 0; }

  std::unique_ptr<StochasticPolicy> clone_policy() const override {
    return std::make_unique<ScriptedPolicy>(*this);
  }

  nlohmann::json checkpoint() const override {
    throw std::logic_error("scripted policies have no checkpoint");
  }

 private:
  int state_dim_;
  int action_dim_;
  std::function<Vec(const Vec&)> mean_;
  double var_;
};

}  // namespace skillrl::testing
