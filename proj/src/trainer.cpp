#include "skillrl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace skillrl {

void PpoConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma out of (0,1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda out of [0,1]");
  if (!(clip_eps > 0.0)) throw std::invalid_argument("clip_eps must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (steps_per_iteration < 1) throw std::invalid_argument("steps_per_iteration < 1");
  if (epochs_per_iteration < 1) throw std::invalid_argument("epochs_per_iteration < 1");
  if (minibatch_size < 1) throw std::invalid_argument("minibatch_size < 1");
  if (budget < steps_per_iteration) throw std::invalid_argument("budget < steps_per_iteration");
  if (warmup_multiplier < 1) throw std::invalid_argument("warmup_multiplier < 1");
  if (!(warmup_lr > 0.0)) throw std::invalid_argument("warmup_lr must be positive");
  if (!(warmup_tol > 0.0)) throw std::invalid_argument("warmup_tol must be positive");
  if (warmup_max_passes < 1) throw std::invalid_argument("warmup_max_passes < 1");
}

double TrainCurve::value_at(long steps) const {
  if (points.empty()) throw std::logic_error("value_at on empty curve");
  double v = points.front().mean_return;
  for (const auto& p : points) {
    if (p.steps <= steps) v = p.mean_return;
    else break;
  }
  return v;
}

long TrainCurve::steps_to_threshold(double threshold) const {
  for (const auto& p : points) {
    if (p.success_rate >= threshold) return p.steps;
  }
  return -1;
}

std::string curve_to_jsonl(const TrainCurve& curve) {
  std::string out;
  for (const auto& p : curve.points) {
    nlohmann::json j{{"steps", p.steps},
                     {"mean_return", p.mean_return},
                     {"success_rate", p.success_rate}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

TrainCurve curve_from_jsonl(const std::string& text) {
  TrainCurve curve;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    curve.points.push_back({j.at("steps").get<long>(),
                            j.at("mean_return").get<double>(),
                            j.at("success_rate").get<double>()});
  }
  return curve;
}

GaeResult gae(const std::vector<double>& rewards, const Vec& values,
              double last_value, double gamma, double lambda) {
  const Eigen::Index n = static_cast<Eigen::Index>(rewards.size());
  if (values.size() != n) throw std::invalid_argument("gae: length mismatch");
  GaeResult out;
  out.advantages = Vec::Zero(n);
  double next_adv = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const double next_value = (t == n - 1) ? last_value : values(t + 1);
    const double delta = rewards[static_cast<std::size_t>(t)] + gamma * next_value - values(t);
    next_adv = delta + gamma * lambda * next_adv;
    out.advantages(t) = next_adv;
  }
  out.targets = out.advantages + values;
  return out;
}

PpoBatch episodes_to_batch(const std::vector<Episode>& episodes,
                           const ValueFunction& value, double gamma, double lambda) {
  long total = 0;
  for (const auto& ep : episodes) total += ep.length();
  PpoBatch batch;
  batch.total_steps = total;
  batch.states.resize(total, kStateDim);
  batch.actions.resize(total, kActionDim);
  batch.log_probs.resize(total);
  batch.advantages.resize(total);
  batch.targets.resize(total);

  Eigen::Index row = 0;
  for (const auto& ep : episodes) {
    const int T = ep.length();
    Mat all_states(T + 1, kStateDim);
    for (int t = 0; t <= T; ++t) all_states.row(t) = ep.states[static_cast<std::size_t>(t)].transpose();
    const Vec v = value.value_batch(all_states);
    const GaeResult g = gae(ep.rewards, v.head(T), ep.truncated ? v(T) : 0.0,
                            gamma, lambda);
    for (int t = 0; t < T; ++t) {
      batch.states.row(row) = all_states.row(t);
      batch.actions.row(row) = ep.actions[static_cast<std::size_t>(t)].transpose();
      batch.log_probs(row) = ep.log_probs[static_cast<std::size_t>(t)];
      batch.advantages(row) = g.advantages(t);
      batch.targets(row) = g.targets(t);
      ++row;
    }
  }
  return batch;
}

namespace {

Mat gather_rows(const Mat& m, const std::vector<int>& idx, int begin, int count) {
  Mat out(count, m.cols());
  for (int i = 0; i < count; ++i) out.row(i) = m.row(idx[static_cast<std::size_t>(begin + i)]);
  return out;
}

Vec gather(const Vec& v, const std::vector<int>& idx, int begin, int count) {
  Vec out(count);
  for (int i = 0; i < count; ++i) out(i) = v(idx[static_cast<std::size_t>(begin + i)]);
  return out;
}

}  // namespace

PpoStats ppo_update(StochasticPolicy& policy, ValueFunction& value,
                    const PpoBatch& batch, const PpoConfig& config, Rng& rng) {
  PpoStats stats;
  const Eigen::Index n = batch.log_probs.size();

  // Advantages normalized once over the whole batch. A constant vector
  // carries no ranking signal and normalizes to zero; centering it must not
  // leave rounding dust for the 1e-8 floor to blow up into real updates.
  Vec adv = batch.advantages;
  if ((adv.array() == adv(0)).all()) {
    adv.setZero();
  } else {
    adv.array() -= adv.mean();
    const double std = std::sqrt(adv.array().square().mean());
    adv /= (std + 1e-8);
  }

  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);

  double loss_pi_sum = 0.0, loss_v_sum = 0.0, clip_sum = 0.0, kl_sum = 0.0;
  long minibatches = 0;

  for (int epoch = 0; epoch < config.epochs_per_iteration; ++epoch) {
    rng.shuffle(idx);
    for (int begin = 0; begin < n; begin += config.minibatch_size) {
      const int m = std::min<int>(config.minibatch_size, static_cast<int>(n) - begin);
      const Mat S = gather_rows(batch.states, idx, begin, m);
      const Mat A = gather_rows(batch.actions, idx, begin, m);
      const Vec logp_old = gather(batch.log_probs, idx, begin, m);
      const Vec a_hat = gather(adv, idx, begin, m);
      const Vec targets = gather(batch.targets, idx, begin, m);

      const Vec logp_new = policy.log_prob_batch(S, A);
      const Vec ratio = (logp_new - logp_old).array().exp().matrix();

      // Clipped surrogate: gradient flows only where the unclipped branch
      // is active (A>0 and ratio<=1+eps, or A<0 and ratio>=1-eps).
      Vec coeff(m);
      double loss_pi = 0.0;
      double clipped = 0.0;
      for (int i = 0; i < m; ++i) {
        const double r = ratio(i);
        const double a = a_hat(i);
        const double unclipped = r * a;
        const double clip_r = std::clamp(r, 1.0 - config.clip_eps, 1.0 + config.clip_eps);
        loss_pi += std::min(unclipped, clip_r * a);
        const bool flat = (a > 0.0 && r > 1.0 + config.clip_eps) ||
                          (a < 0.0 && r < 1.0 - config.clip_eps);
        coeff(i) = flat ? 0.0 : -(r * a) / static_cast<double>(m);
        if (std::abs(r - 1.0) > config.clip_eps) clipped += 1.0;
      }
      loss_pi = -loss_pi / m;  // descent objective

      const Vec v_pred = value.value_batch(S);
      const Vec v_err = v_pred - targets;
      const double loss_v = v_err.array().square().mean();

      if (!std::isfinite(loss_pi) || !std::isfinite(loss_v)) {
        stats.aborted = true;
        return stats;
      }

      policy.zero_grad();
      policy.accumulate_log_prob_grad(S, A, coeff);
      policy.adam_step(config.lr);

      value.zero_grad();
      value.accumulate_value_grad(S, (2.0 / m) * v_err);
      value.adam_step(config.lr);

      loss_pi_sum += loss_pi;
      loss_v_sum += loss_v;
      clip_sum += clipped / m;
      kl_sum += (logp_old - logp_new).mean();
      ++minibatches;
    }
  }

  stats.policy_loss = loss_pi_sum / static_cast<double>(minibatches);
  stats.value_loss = loss_v_sum / static_cast<double>(minibatches);
  stats.clip_fraction = clip_sum / static_cast<double>(minibatches);
  stats.approx_kl = kl_sum / static_cast<double>(minibatches);
  return stats;
}

ValueFunction fit_value_mc(const Mat& states, const Vec& returns,
                           const PpoConfig& config, Rng& rng) {
  if (states.rows() != returns.size() || states.rows() == 0) {
    throw std::invalid_argument("fit_value_mc: bad inputs");
  }
  ValueFunction v(static_cast<int>(states.cols()), rng);
  const Eigen::Index n = states.rows();
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);

  double prev_mse = -1.0;
  for (int pass = 0; pass < config.warmup_max_passes; ++pass) {
    rng.shuffle(idx);
    for (int begin = 0; begin < n; begin += config.minibatch_size) {
      const int m = std::min<int>(config.minibatch_size, static_cast<int>(n) - begin);
      const Mat S = gather_rows(states, idx, begin, m);
      const Vec targets = gather(returns, idx, begin, m);
      const Vec err = v.value_batch(S) - targets;
      v.zero_grad();
      v.accumulate_value_grad(S, (2.0 / m) * err);
      v.adam_step(config.warmup_lr);
    }
    const double mse = (v.value_batch(states) - returns).array().square().mean();
    if (mse < 1e-12) break;
    if (prev_mse >= 0.0) {
      const double rel = (prev_mse - mse) / std::max(prev_mse, 1e-300);
      // A transient rise (Adam overshoot) is not a plateau; keep training
      // and only stop once a pass improves by less than the tolerance.
      if (rel >= 0.0 && rel < config.warmup_tol) break;
    }
    prev_mse = mse;
  }
  return v;
}

ValueFunction value_warmup(const TaskSpec& task, const StochasticPolicy& policy,
                           const PpoConfig& config, Rng& rng) {
  const long target = static_cast<long>(config.warmup_multiplier) *
                      static_cast<long>(config.steps_per_iteration);
  std::vector<Episode> episodes;
  long steps = 0;
  while (steps < target) {
    episodes.push_back(rollout(task, policy, task.horizon, rng));
    steps += episodes.back().length();
  }

  long total = 0;
  for (const auto& ep : episodes) total += ep.length();
  Mat states(total, kStateDim);
  Vec returns(total);
  Eigen::Index row = 0;
  for (const auto& ep : episodes) {
    // Discounted Monte Carlo return to episode end, no bootstrap.
    double g = 0.0;
    std::vector<double> gs(static_cast<std::size_t>(ep.length()));
    for (int t = ep.length() - 1; t >= 0; --t) {
      g = ep.rewards[static_cast<std::size_t>(t)] + config.gamma * g;
      gs[static_cast<std::size_t>(t)] = g;
    }
    for (int t = 0; t < ep.length(); ++t) {
      states.row(row) = ep.states[static_cast<std::size_t>(t)].transpose();
      returns(row) = gs[static_cast<std::size_t>(t)];
      ++row;
    }
  }
  return fit_value_mc(states, returns, config, rng);
}

std::string outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Solved: return "solved";
    case Outcome::BudgetExhausted: return "budget_exhausted";
    case Outcome::Rejected: return "rejected";
  }
  return "unknown";
}

TrainResult train(const TaskSpec& task, const StochasticPolicy& initial_policy,
                  const PpoConfig& config, Rng& rng, const TrainOptions& options) {
  config.validate();
  TrainResult result;
  std::unique_ptr<StochasticPolicy> policy = initial_policy.clone_policy();
  // A training session starts from the initial policy's weights with a fresh
  // optimizer. Whatever Adam state a live source object carries is a relic of
  // how it was produced; a skill reloaded from its checkpoint must fine-tune
  // exactly like the object it was saved from.
  policy->reset_optimizer();

  std::optional<ValueFunction> value;
  if (options.run_value_warmup) {
    value.emplace(value_warmup(task, *policy, config, rng));
    result.warmup_steps = static_cast<long>(config.warmup_multiplier) *
                          static_cast<long>(config.steps_per_iteration);
    // Round up to whole episodes, as sampled.
    const long per_ep = task.horizon;
    result.warmup_steps = ((result.warmup_steps + per_ep - 1) / per_ep) * per_ep;
  } else {
    value.emplace(policy->state_dim(), rng);
  }

  result.outcome = Outcome::BudgetExhausted;
  while (true) {
    // Whole episodes per iteration; the per-iteration step count is fixed
    // by the config, so budget exhaustion is a pre-check.
    const long eps_per_iter =
        (config.steps_per_iteration + task.horizon - 1) / task.horizon;
    const long iter_steps = eps_per_iter * task.horizon;
    if (!result.curve.points.empty() && result.steps + iter_steps > config.budget) {
      result.outcome = Outcome::BudgetExhausted;
      break;
    }

    std::vector<Episode> episodes;
    episodes.reserve(static_cast<std::size_t>(eps_per_iter));
    double return_sum = 0.0;
    double success_sum = 0.0;
    for (long e = 0; e < eps_per_iter; ++e) {
      episodes.push_back(rollout(task, *policy, task.horizon, rng));
      return_sum += episodes.back().total_return;
      success_sum += episodes.back().success ? 1.0 : 0.0;
    }
    result.steps += iter_steps;
    result.curve.points.push_back({result.steps,
                                   return_sum / static_cast<double>(eps_per_iter),
                                   success_sum / static_cast<double>(eps_per_iter)});

    if (result.curve.points.back().success_rate >= options.success_threshold) {
      result.outcome = Outcome::Solved;
      break;
    }
    if (options.stop_rule && options.stop_rule(result.curve, result.steps)) {
      result.outcome = Outcome::Rejected;
      break;
    }

    const PpoBatch batch = episodes_to_batch(episodes, *value, config.gamma, config.lambda);
    std::unique_ptr<StochasticPolicy> policy_snapshot = policy->clone_policy();
    const ValueFunction value_snapshot = *value;
    const PpoStats stats = ppo_update(*policy, *value, batch, config, rng);
    if (stats.aborted) {
      // Non-finite loss: discard the partial update and continue with fresh
      // data next iteration.
      policy = std::move(policy_snapshot);
      value = value_snapshot;
    }
  }

  result.policy = std::move(policy);
  return result;
}

BcReport behavioral_clone(const Mat& states, const Mat& actions,
                          StochasticPolicy& model, const BcConfig& config, Rng& rng) {
  if (states.rows() == 0 || states.rows() != actions.rows()) {
    throw std::invalid_argument("behavioral_clone: empty or mismatched dataset");
  }
  BcReport report;
  const Eigen::Index n = states.rows();
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);

  double best = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(idx);
    for (int begin = 0; begin < n; begin += config.minibatch_size) {
      const int m = std::min<int>(config.minibatch_size, static_cast<int>(n) - begin);
      const Mat S = gather_rows(states, idx, begin, m);
      const Mat A = gather_rows(actions, idx, begin, m);
      model.zero_grad();
      model.accumulate_log_prob_grad(S, A, Vec::Constant(m, -1.0 / m));
      model.adam_step(config.lr);
    }
    const double loss = -model.log_prob_batch(states, actions).mean();
    report.epoch_losses.push_back(loss);
    if (loss > best + 1e-3 * std::max(1.0, std::abs(best))) {
      report.aborted = true;
      report.message = "training-set NLL rose at epoch " + std::to_string(epoch);
      break;
    }
    best = std::min(best, loss);
  }
  return report;
}

}  // namespace skillrl
