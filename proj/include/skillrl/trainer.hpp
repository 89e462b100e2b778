#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "skillrl/env.hpp"
#include "skillrl/policy.hpp"

namespace skillrl {

struct PpoConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_eps = 0.2;
  double lr = 3e-4;
  int steps_per_iteration = 4096;
  int epochs_per_iteration = 10;
  int minibatch_size = 256;
  long budget = 200000;  // max PPO env steps per task
  // Value warm-up: sample warmup_multiplier * steps_per_iteration env steps,
  // fit a fresh critic until the relative MSE improvement between passes
  // drops below warmup_tol (or warmup_max_passes).
  int warmup_multiplier = 4;
  double warmup_lr = 1e-3;
  double warmup_tol = 1e-4;
  int warmup_max_passes = 500;

  void validate() const;  // throws std::invalid_argument on bad values
};

struct CurvePoint {
  long steps = 0;  // cumulative PPO env steps at the end of the iteration
  double mean_return = 0.0;
  double success_rate = 0.0;
};

struct TrainCurve {
  std::vector<CurvePoint> points;

  bool empty() const { return points.empty(); }
  /// Mean return as a step function of env steps: the last record at or
  /// before `steps`; before the first record, the first record's value.
  double value_at(long steps) const;
  /// Steps of the first record with success_rate >= threshold, or -1.
  long steps_to_threshold(double threshold) const;
};

std::string curve_to_jsonl(const TrainCurve& curve);
TrainCurve curve_from_jsonl(const std::string& text);

struct GaeResult {
  Vec advantages;
  Vec targets;  // advantages + values
};

/// Generalized advantage estimation over one (possibly truncated) episode.
/// `values` holds V(s_t) for each step's state; `last_value` bootstraps the
/// truncation (pass 0 for a true terminal).
GaeResult gae(const std::vector<double>& rewards, const Vec& values,
              double last_value, double gamma, double lambda);

/// Flattened on-policy batch for one PPO iteration.
struct PpoBatch {
  Mat states;
  Mat actions;
  Vec log_probs;  // at collection time
  Vec advantages;
  Vec targets;
  long total_steps = 0;
};

PpoBatch episodes_to_batch(const std::vector<Episode>& episodes,
                           const ValueFunction& value, double gamma, double lambda);

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  bool aborted = false;  // non-finite loss encountered; update stopped
};

/// One PPO iteration over the batch: clipped-surrogate policy update and
/// value MSE regression, minibatch Adam, advantages normalized over the
/// whole batch. Mutates policy and value in place; on a non-finite loss it
/// stops early with aborted=true (caller restores its snapshots).
PpoStats ppo_update(StochasticPolicy& policy, ValueFunction& value,
                    const PpoBatch& batch, const PpoConfig& config, Rng& rng);

/// Fits a fresh critic to (state, return) pairs by minibatch Adam until the
/// full-set MSE plateaus: a pass improving by less than warmup_tol (relative)
/// stops the fit; transient rises keep it running, up to warmup_max_passes.
ValueFunction fit_value_mc(const Mat& states, const Vec& returns,
                           const PpoConfig& config, Rng& rng);

/// Collects warmup_multiplier x steps_per_iteration on-policy env steps,
/// computes discounted Monte Carlo returns (no bootstrap at truncation) and
/// fits a fresh critic. The policy is never modified.
ValueFunction value_warmup(const TaskSpec& task, const StochasticPolicy& policy,
                           const PpoConfig& config, Rng& rng);

enum class Outcome { Solved, BudgetExhausted, Rejected };

std::string outcome_name(Outcome o);

/// Consulted after every iteration; true means abandon this training run
/// (the transfer-rejection rule is plugged in through this).
using StopRule = std::function<bool(const TrainCurve&, long steps_used)>;

struct TrainOptions {
  double success_threshold = 0.90;
  StopRule stop_rule;           // empty = never reject
  bool run_value_warmup = true; // ablation switch
};

struct TrainResult {
  std::unique_ptr<StochasticPolicy> policy;
  TrainCurve curve;
  Outcome outcome = Outcome::BudgetExhausted;
  long steps = 0;         // PPO env steps consumed (the transfer-cost metric)
  long warmup_steps = 0;  // warm-up sampling env steps, reported separately
};

/// Fine-tunes a clone of initial_policy on the task: value warm-up first,
/// then PPO iterations until the iteration success rate reaches the
/// threshold (Solved, pre-update policy returned), the stop rule fires
/// (Rejected), or the next iteration would exceed the budget
/// (BudgetExhausted). The caller's policy is never mutated. The session
/// begins with a fresh optimizer on the initial weights, so a live policy
/// and its reloaded checkpoint train identically.
TrainResult train(const TaskSpec& task, const StochasticPolicy& initial_policy,
                  const PpoConfig& config, Rng& rng, const TrainOptions& options);

struct BcConfig {
  int epochs = 60;
  int minibatch_size = 256;
  double lr = 1e-3;
};

struct BcReport {
  std::vector<double> epoch_losses;  // full-train-set NLL after each epoch
  bool aborted = false;              // loss rose; training stopped
  std::string message;
};

/// Minimizes the Gaussian negative log-likelihood of actions under the
/// model. Training stops with a report if the full-set loss rises by more
/// than 0.1% relative to the best seen (monotone-decrease contract).
BcReport behavioral_clone(const Mat& states, const Mat& actions,
                          StochasticPolicy& model, const BcConfig& config, Rng& rng);

}  // namespace skillrl
