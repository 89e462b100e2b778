#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "skillrl/env.hpp"
#include "skillrl/policy.hpp"
#include "skillrl/trainer.hpp"

using namespace skillrl;
using skillrl::testing::ScriptedPolicy;

namespace {

Mat randn(Rng& rng, int n, int d) {
  Mat m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = rng.normal();
  return m;
}

// Reference advantage: the explicit double sum over future TD residuals.
Vec gae_double_sum(const std::vector<double>& rewards, const Vec& values,
                   double last_value, double gamma, double lambda) {
  const int n = static_cast<int>(rewards.size());
  Vec delta(n);
  for (int t = 0; t < n; ++t) {
    const double next_value = (t == n - 1) ? last_value : values(t + 1);
    delta(t) = rewards[static_cast<std::size_t>(t)] + gamma * next_value - values(t);
  }
  Vec adv = Vec::Zero(n);
  for (int t = 0; t < n; ++t) {
    double factor = 1.0;
    for (int l = 0; t + l < n; ++l) {
      adv(t) += factor * delta(t + l);
      factor *= gamma * lambda;
    }
  }
  return adv;
}

TaskSpec toy_task(double success_radius, int horizon, double shaping = 1.0) {
  TaskSpec t;
  t.id = "toy";
  t.kind = TaskKind::Reach;
  t.shaping_scale = shaping;
  t.success_radius = success_radius;
  t.horizon = horizon;
  t.object_region = {-0.5, 0.5, -0.5, 0.5};
  t.goal_region = {-0.5, 0.5, -0.5, 0.5};
  return t;
}

PpoConfig cheap_config() {
  PpoConfig c;
  c.steps_per_iteration = 100;
  c.minibatch_size = 32;
  c.epochs_per_iteration = 4;
  c.budget = 300;
  c.warmup_multiplier = 1;
  return c;
}

}  // namespace

TEST_CASE("recursive advantage estimation equals the explicit double sum") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + rng.uniform_int(40);
    std::vector<double> rewards(static_cast<std::size_t>(n));
    Vec values(n);
    for (int t = 0; t < n; ++t) {
      rewards[static_cast<std::size_t>(t)] = rng.uniform(-2.0, 2.0);
      values(t) = rng.uniform(-2.0, 2.0);
    }
    const double last = rng.uniform(-2.0, 2.0);
    const double gamma = rng.uniform(0.5, 1.0);
    const double lambda = rng.uniform(0.0, 1.0);

    GaeResult g = gae(rewards, values, last, gamma, lambda);
    Vec ref = gae_double_sum(rewards, values, last, gamma, lambda);
    REQUIRE(g.advantages.size() == n);
    for (int t = 0; t < n; ++t) {
      CHECK(g.advantages(t) == doctest::Approx(ref(t)).epsilon(1e-10));
      CHECK(g.targets(t) == doctest::Approx(ref(t) + values(t)).epsilon(1e-10));
    }
  }
}

TEST_CASE("advantage estimation limits: one-step residuals and full returns") {
  Rng rng(4);
  const int n = 12;
  std::vector<double> rewards(n);
  Vec values(n);
  for (int t = 0; t < n; ++t) {
    rewards[static_cast<std::size_t>(t)] = rng.uniform(-1.0, 1.0);
    values(t) = rng.uniform(-1.0, 1.0);
  }
  const double last = 0.37;
  const double gamma = 0.9;

  // lambda = 0: advantage is exactly the TD residual.
  GaeResult g0 = gae(rewards, values, last, gamma, 0.0);
  for (int t = 0; t < n; ++t) {
    const double next_value = (t == n - 1) ? last : values(t + 1);
    const double delta = rewards[static_cast<std::size_t>(t)] + gamma * next_value - values(t);
    CHECK(g0.advantages(t) == doctest::Approx(delta).epsilon(1e-12));
  }

  // lambda = 1: advantage is the discounted return minus the baseline.
  GaeResult g1 = gae(rewards, values, last, gamma, 1.0);
  for (int t = 0; t < n; ++t) {
    double ret = 0.0;
    double factor = 1.0;
    for (int l = t; l < n; ++l) {
      ret += factor * rewards[static_cast<std::size_t>(l)];
      factor *= gamma;
    }
    ret += factor * last;
    CHECK(g1.advantages(t) == doctest::Approx(ret - values(t)).epsilon(1e-12));
  }

  Vec short_values(3);
  short_values << 0.0, 0.0, 0.0;
  CHECK_THROWS_AS((void)gae(rewards, short_values, 0.0, gamma, 0.5),
                  std::invalid_argument);
}

TEST_CASE("training curves behave as step functions and serialize losslessly") {
  TrainCurve c;
  c.points = {{100, 1.0, 0.2}, {200, 2.0, 0.5}, {300, 1.5, 0.95}};

  CHECK(c.value_at(50) == 1.0);
  CHECK(c.value_at(100) == 1.0);
  CHECK(c.value_at(199) == 1.0);
  CHECK(c.value_at(200) == 2.0);
  CHECK(c.value_at(1000000) == 1.5);

  CHECK(c.steps_to_threshold(0.5) == 200);
  CHECK(c.steps_to_threshold(0.95) == 300);
  CHECK(c.steps_to_threshold(0.951) == -1);

  const std::string text = curve_to_jsonl(c);
  TrainCurve back = curve_from_jsonl(text);
  REQUIRE(back.points.size() == c.points.size());
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    CHECK(back.points[i].steps == c.points[i].steps);
    CHECK(back.points[i].mean_return == c.points[i].mean_return);
    CHECK(back.points[i].success_rate == c.points[i].success_rate);
  }

  TrainCurve empty;
  CHECK_THROWS_AS((void)empty.value_at(0), std::logic_error);
  CHECK(empty.steps_to_threshold(0.5) == -1);
  CHECK(curve_from_jsonl("").points.empty());
}

TEST_CASE("flattening episodes reproduces per-episode advantage estimates") {
  Rng rng(6);
  ValueFunction value(kStateDim, rng);
  const double gamma = 0.98, lambda = 0.9;

  auto make_ep = [&](int T, bool truncated) {
    Episode ep;
    for (int t = 0; t <= T; ++t)
      ep.states.push_back(randn(rng, 1, kStateDim).row(0).transpose());
    for (int t = 0; t < T; ++t) {
      ep.actions.push_back(randn(rng, 1, kActionDim).row(0).transpose());
      ep.rewards.push_back(rng.uniform(-1.0, 1.0));
      ep.log_probs.push_back(rng.uniform(-3.0, 0.0));
      ep.step_success.push_back(false);
    }
    ep.truncated = truncated;
    return ep;
  };

  std::vector<Episode> eps{make_ep(5, true), make_ep(3, false)};
  PpoBatch batch = episodes_to_batch(eps, value, gamma, lambda);
  CHECK(batch.total_steps == 8);
  REQUIRE(batch.states.rows() == 8);

  Eigen::Index row = 0;
  for (const auto& ep : eps) {
    const int T = ep.length();
    Mat all_states(T + 1, kStateDim);
    for (int t = 0; t <= T; ++t) all_states.row(t) = ep.states[static_cast<std::size_t>(t)].transpose();
    Vec v = value.value_batch(all_states);
    GaeResult g = gae(ep.rewards, v.head(T), ep.truncated ? v(T) : 0.0, gamma, lambda);
    for (int t = 0; t < T; ++t, ++row) {
      CHECK((batch.states.row(row).array() == all_states.row(t).array()).all());
      CHECK(batch.advantages(row) == doctest::Approx(g.advantages(t)).epsilon(1e-12));
      CHECK(batch.targets(row) == doctest::Approx(g.targets(t)).epsilon(1e-12));
      CHECK(batch.log_probs(row) == ep.log_probs[static_cast<std::size_t>(t)]);
    }
  }
}

TEST_CASE("surrogate updates push sampled actions in the advantage direction") {
  Rng rng(10);
  const int sd = 4, ad = 2, n = 64;
  GaussianPolicy policy(sd, ad, rng);
  ValueFunction value(sd, rng);

  PpoBatch batch;
  batch.states = randn(rng, n, sd);
  batch.actions = randn(rng, n, ad);
  batch.log_probs = policy.log_prob_batch(batch.states, batch.actions);
  batch.advantages = Vec(n);
  for (int i = 0; i < n; ++i) batch.advantages(i) = (i < n / 2) ? 1.0 : -1.0;
  batch.targets = randn(rng, n, 1).col(0);
  batch.total_steps = n;

  PpoConfig config = cheap_config();
  const double mse_before =
      (value.value_batch(batch.states) - batch.targets).array().square().mean();

  Rng urng(77);
  PpoStats stats = ppo_update(policy, value, batch, config, urng);
  CHECK_FALSE(stats.aborted);
  CHECK(stats.clip_fraction >= 0.0);
  CHECK(stats.clip_fraction <= 1.0);

  Vec logp_new = policy.log_prob_batch(batch.states, batch.actions);
  const Vec dl = logp_new - batch.log_probs;
  CHECK(dl.head(n / 2).mean() > 0.0);
  CHECK(dl.tail(n / 2).mean() < 0.0);

  const double mse_after =
      (value.value_batch(batch.states) - batch.targets).array().square().mean();
  CHECK(mse_after < mse_before);
}

TEST_CASE("uniform advantages cancel out and leave the policy untouched") {
  Rng rng(13);
  const int sd = 3, ad = 2, n = 48;
  GaussianPolicy policy(sd, ad, rng);
  GaussianPolicy before = policy;
  ValueFunction value(sd, rng);

  PpoBatch batch;
  batch.states = randn(rng, n, sd);
  batch.actions = randn(rng, n, ad);
  batch.log_probs = policy.log_prob_batch(batch.states, batch.actions);
  batch.advantages = Vec::Constant(n, 0.7);  // centered away to exactly zero
  batch.targets = Vec::Zero(n);
  batch.total_steps = n;

  Rng urng(5);
  PpoStats stats = ppo_update(policy, value, batch, cheap_config(), urng);
  CHECK_FALSE(stats.aborted);
  CHECK(policy.params_equal(before));
}

TEST_CASE("non-finite losses abort the update before any parameter changes") {
  Rng rng(15);
  const int sd = 3, ad = 2, n = 32;
  GaussianPolicy policy(sd, ad, rng);
  GaussianPolicy policy_before = policy;
  ValueFunction value(sd, rng);
  const nlohmann::json value_before = value.checkpoint();

  PpoBatch batch;
  batch.states = randn(rng, n, sd);
  batch.actions = randn(rng, n, ad);
  batch.log_probs = policy.log_prob_batch(batch.states, batch.actions);
  batch.advantages = Vec::Ones(n);
  batch.advantages(3) = std::numeric_limits<double>::quiet_NaN();
  batch.targets = Vec::Zero(n);
  batch.total_steps = n;

  Rng urng(5);
  PpoStats stats = ppo_update(policy, value, batch, cheap_config(), urng);
  CHECK(stats.aborted);
  CHECK(policy.params_equal(policy_before));
  CHECK(value.checkpoint().dump() == value_before.dump());
}

TEST_CASE("the critic fitter reaches simple regression targets") {
  Rng rng(20);
  const int n = 256;
  Mat S = randn(rng, n, 4);
  Vec y = 0.3 * S.col(0) - 0.2 * S.col(1) + Vec::Constant(n, 0.1);

  PpoConfig config;
  config.minibatch_size = 64;
  ValueFunction v = fit_value_mc(S, y, config, rng);
  const double mse = (v.value_batch(S) - y).array().square().mean();
  CHECK(mse < 0.05);

  Vec constant = Vec::Constant(n, -0.4);
  ValueFunction vc = fit_value_mc(S, constant, config, rng);
  CHECK((vc.value_batch(S).array() + 0.4).abs().maxCoeff() < 0.1);

  CHECK_THROWS_AS((void)fit_value_mc(Mat(0, 4), Vec(0), config, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)fit_value_mc(S, Vec::Zero(5), config, rng),
                  std::invalid_argument);
}

TEST_CASE("value warm-up fits Monte Carlo returns and never touches the policy") {
  // Always-successful short-horizon task: reward is exactly 1 every step, so
  // with gamma = 0.5 the per-timestep returns are 1.75, 1.5 and 1. An idle
  // policy keeps the gripper at home, making every timestep equally likely at
  // a given state; the best constant fit is the mean return 17/12.
  TaskSpec t = toy_task(/*success_radius=*/4.0, /*horizon=*/3, /*shaping=*/0.0);
  ScriptedPolicy idle(kStateDim, kActionDim,
                      [](const Vec&) { return Vec::Zero(kActionDim); });

  PpoConfig config;
  config.gamma = 0.5;
  config.steps_per_iteration = 120;
  config.warmup_multiplier = 2;
  config.minibatch_size = 32;

  Rng rng(8);
  ValueFunction v = value_warmup(t, idle, config, rng);

  Rng check_rng(123);
  for (int i = 0; i < 10; ++i) {
    Vec s = reset(t, check_rng);
    CHECK(std::abs(v.value(s) - 17.0 / 12.0) < 0.1);
  }
}

TEST_CASE("training stops the moment an iteration meets the success threshold") {
  TaskSpec trivial = toy_task(4.0, 50);
  Rng rng(30);
  GaussianPolicy init(kStateDim, kActionDim, rng);

  PpoConfig config = cheap_config();
  Rng trng(1);
  TrainResult r = train(trivial, init, config, trng, {});

  CHECK(r.outcome == Outcome::Solved);
  REQUIRE(r.curve.points.size() == 1);
  CHECK(r.curve.points[0].success_rate == 1.0);
  CHECK(r.steps == 100);  // two 50-step episodes
  CHECK(r.curve.points[0].steps == r.steps);
  // Warm-up samples whole episodes: 100 target steps are exactly 2 episodes.
  CHECK(r.warmup_steps == 100);

  // Solved on the very first iteration: the returned policy is still the
  // caller's parameters, untouched by any update.
  auto* gp = dynamic_cast<GaussianPolicy*>(r.policy.get());
  REQUIRE(gp != nullptr);
  CHECK(gp->params_equal(init));
}

TEST_CASE("training exhausts the budget on an unsolvable task") {
  TaskSpec impossible = toy_task(0.0, 50);
  Rng rng(31);
  GaussianPolicy init(kStateDim, kActionDim, rng);

  PpoConfig config = cheap_config();  // budget 300 = three 100-step iterations
  Rng trng(2);
  TrainResult r = train(impossible, init, config, trng, {});

  CHECK(r.outcome == Outcome::BudgetExhausted);
  CHECK(r.steps == 300);
  REQUIRE(r.curve.points.size() == 3);
  CHECK(r.curve.points[0].steps == 100);
  CHECK(r.curve.points[1].steps == 200);
  CHECK(r.curve.points[2].steps == 300);
  for (const auto& p : r.curve.points) CHECK(p.success_rate == 0.0);
}

TEST_CASE("a stop rule turns training into a rejection") {
  TaskSpec impossible = toy_task(0.0, 50);
  Rng rng(32);
  GaussianPolicy init(kStateDim, kActionDim, rng);

  PpoConfig config = cheap_config();
  TrainOptions options;
  std::vector<long> consulted;
  options.stop_rule = [&](const TrainCurve& curve, long steps_used) {
    consulted.push_back(steps_used);
    CHECK(curve.points.back().steps == steps_used);
    return steps_used >= 200;
  };
  Rng trng(3);
  TrainResult r = train(impossible, init, config, trng, options);

  CHECK(r.outcome == Outcome::Rejected);
  CHECK(r.steps == 200);
  CHECK(r.curve.points.size() == 2);
  CHECK(consulted == std::vector<long>{100, 200});
}

TEST_CASE("training runs are reproducible from the stream alone") {
  TaskSpec impossible = toy_task(0.0, 50);
  Rng rng(33);
  GaussianPolicy init(kStateDim, kActionDim, rng);
  PpoConfig config = cheap_config();

  Rng t1(9), t2(9);
  TrainResult r1 = train(impossible, init, config, t1, {});
  TrainResult r2 = train(impossible, init, config, t2, {});

  REQUIRE(r1.curve.points.size() == r2.curve.points.size());
  for (std::size_t i = 0; i < r1.curve.points.size(); ++i) {
    CHECK(r1.curve.points[i].mean_return == r2.curve.points[i].mean_return);
    CHECK(r1.curve.points[i].success_rate == r2.curve.points[i].success_rate);
  }
  CHECK(checkpoint_string(*r1.policy) == checkpoint_string(*r2.policy));

  Rng t3(10);
  TrainResult r3 = train(impossible, init, config, t3, {});
  CHECK(r3.curve.points[0].mean_return != r1.curve.points[0].mean_return);
}

TEST_CASE("disabling warm-up skips its sampling entirely") {
  TaskSpec trivial = toy_task(4.0, 50);
  Rng rng(34);
  GaussianPolicy init(kStateDim, kActionDim, rng);
  PpoConfig config = cheap_config();
  TrainOptions options;
  options.run_value_warmup = false;
  Rng trng(4);
  TrainResult r = train(trivial, init, config, trng, options);
  CHECK(r.warmup_steps == 0);
  CHECK(r.outcome == Outcome::Solved);
}

TEST_CASE("config validation rejects out-of-range settings") {
  PpoConfig c;
  CHECK_NOTHROW(c.validate());
  c.gamma = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = PpoConfig{};
  c.lambda = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = PpoConfig{};
  c.budget = c.steps_per_iteration - 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = PpoConfig{};
  c.minibatch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = PpoConfig{};
  c.warmup_tol = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("behavioral cloning recovers a teacher's mean behavior") {
  Rng rng(50);
  GaussianPolicy teacher(4, 2, rng);
  // Give the teacher's mean some magnitude (fresh output layers start near 0).
  teacher.mean_net().zero_grad();
  teacher.mean_net().backward(randn(rng, 32, 4), randn(rng, 32, 2));
  teacher.mean_net().adam_step(0.02);

  const int n = 2048;
  Mat S = randn(rng, n, 4);
  Mat A = teacher.mean_batch(S);

  GaussianPolicy student(4, 2, rng);
  BcConfig bc;
  Rng brng(1);
  BcReport report = behavioral_clone(S, A, student, bc, brng);

  CHECK_FALSE(report.aborted);
  REQUIRE(report.epoch_losses.size() == static_cast<std::size_t>(bc.epochs));
  CHECK(report.epoch_losses.back() < report.epoch_losses.front());
  // The abort contract: no recorded loss sits above the best-so-far by more
  // than the tolerance.
  double best = report.epoch_losses.front();
  for (double loss : report.epoch_losses) {
    CHECK(loss <= best + 1e-3 * std::max(1.0, std::abs(best)) + 1e-12);
    best = std::min(best, loss);
  }

  Mat held_out = randn(rng, 64, 4);
  const double mse =
      (student.mean_batch(held_out) - teacher.mean_batch(held_out)).array().square().mean();
  CHECK(mse < 0.02);

  GaussianPolicy student2(4, 2, rng);
  CHECK_THROWS_AS(
      (void)behavioral_clone(Mat(0, 4), Mat(0, 2), student2, bc, brng),
      std::invalid_argument);
}

TEST_CASE("behavioral cloning is reproducible from its stream") {
  Rng rng(51);
  GaussianPolicy teacher(3, 2, rng);
  Mat S = randn(rng, 128, 3);
  Mat A = teacher.mean_batch(S);

  Rng init1(5), init2(5);
  GaussianPolicy s1(3, 2, init1), s2(3, 2, init2);
  BcConfig bc;
  bc.epochs = 10;
  Rng b1(2), b2(2);
  BcReport r1 = behavioral_clone(S, A, s1, bc, b1);
  BcReport r2 = behavioral_clone(S, A, s2, bc, b2);
  CHECK(r1.epoch_losses == r2.epoch_losses);
  CHECK(s1.params_equal(s2));
}
