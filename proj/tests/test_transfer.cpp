#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>
#include <vector>

#include "helpers.hpp"
#include "skillrl/transfer.hpp"

using namespace skillrl;
using skillrl::testing::ScriptedPolicy;

namespace {

TaskSpec toy_task(const std::string& id, double success_radius, int horizon) {
  TaskSpec t;
  t.id = id;
  t.kind = TaskKind::Reach;
  t.shaping_scale = 0.0;
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
  c.epochs_per_iteration = 2;
  c.budget = 300;
  c.warmup_multiplier = 1;
  return c;
}

// Hand-built 2x3 matrix (tasks a, b and the scratch row) for format tests.
CostMatrix small_matrix() {
  CostMatrix m;
  m.tasks = {"a", "b"};
  auto put = [&](const std::string& base, const std::string& target, long steps,
                 bool failed) {
    TransferRecord r;
    r.base = base;
    r.target = target;
    r.failed = failed;
    r.steps = failed ? 0 : steps;
    m.records[base][target] = r;
  };
  put("scratch", "a", 100, false);
  put("scratch", "b", 200, false);
  put("a", "a", 50, false);
  put("a", "b", 300, false);
  put("b", "a", 0, true);
  put("b", "b", 60, false);
  for (auto& [base, row] : m.records) {
    for (auto& [target, rec] : row) {
      if (!rec.failed) {
        rec.ratio = base == "scratch"
                        ? 1.0
                        : static_cast<double>(rec.steps) / m.scratch_cost(target);
      }
    }
  }
  return m;
}

TrainCurve curve_of(std::initializer_list<CurvePoint> pts) {
  TrainCurve c;
  c.points = pts;
  return c;
}

}  // namespace

TEST_CASE("evaluation averages stochastic episode outcomes") {
  ScriptedPolicy idle(kStateDim, kActionDim,
                      [](const Vec&) { return Vec::Zero(kActionDim); });

  TaskSpec easy = toy_task("easy", 4.0, 5);
  Rng r1(3);
  EvalResult good = evaluate(easy, idle, 20, r1);
  CHECK(good.success_rate == 1.0);
  CHECK(good.mean_return == doctest::Approx(5.0).epsilon(1e-12));

  TaskSpec hopeless = toy_task("hopeless", 0.0, 5);
  Rng r2(3);
  EvalResult bad = evaluate(hopeless, idle, 20, r2);
  CHECK(bad.success_rate == 0.0);

  Rng r3(9), r4(9);
  EvalResult e1 = evaluate(easy, idle, 7, r3);
  EvalResult e2 = evaluate(easy, idle, 7, r4);
  CHECK(e1.mean_return == e2.mean_return);

  Rng r5(1);
  CHECK_THROWS_AS((void)evaluate(easy, idle, 0, r5), std::invalid_argument);
}

TEST_CASE("the rejection rule compares against a margin-shifted reference") {
  TrainCurve ref = curve_of({{100, 1.0, 0.1}, {200, 2.0, 0.2}, {300, 3.0, 0.3}});

  // Behind the reference at equal steps, but ahead of it a margin ago.
  TrainCurve cur = curve_of({{100, 0.5, 0.0}, {200, 1.9, 0.0}});
  CHECK(rejection_check(cur, ref, 200, 100) == RejectDecision::Keep);
  CHECK(rejection_check(cur, ref, 200, 0) == RejectDecision::Reject);

  // Ties favor keeping.
  TrainCurve tied = curve_of({{200, 1.0, 0.0}});
  CHECK(rejection_check(tied, ref, 200, 100) == RejectDecision::Keep);

  // The margin clamps at the start of the reference.
  TrainCurve slow = curve_of({{100, 0.9, 0.0}});
  CHECK(rejection_check(slow, ref, 100, 500) == RejectDecision::Reject);
  TrainCurve ok = curve_of({{100, 1.0, 0.0}});
  CHECK(rejection_check(ok, ref, 100, 500) == RejectDecision::Keep);

  TrainCurve empty;
  CHECK(rejection_check(empty, ref, 100, 0) == RejectDecision::Keep);
  CHECK_THROWS_AS((void)rejection_check(cur, empty, 100, 0), std::invalid_argument);
}

TEST_CASE("cost tables expose lookups, scratch costs and failure flags") {
  CostMatrix m = small_matrix();
  CHECK(m.at("a", "b").steps == 300);
  CHECK(m.at("a", "b").ratio == doctest::Approx(1.5));
  CHECK(m.at("b", "a").failed);
  CHECK(m.has("scratch", "a"));
  CHECK_FALSE(m.has("c", "a"));
  CHECK_THROWS_AS((void)m.at("c", "a"), std::out_of_range);
  CHECK_THROWS_AS((void)m.at("a", "c"), std::out_of_range);
  CHECK(m.scratch_cost("b") == 200);
  auto costs = m.scratch_costs();
  CHECK(costs == std::map<std::string, long>{{"a", 100}, {"b", 200}});

  CostMatrix broken = m;
  broken.records["scratch"]["a"].failed = true;
  CHECK_THROWS_AS((void)broken.scratch_cost("a"), std::logic_error);
}

TEST_CASE("cost CSV round-trips steps, failures and recomputed ratios") {
  CostMatrix m = small_matrix();
  const std::string c_csv = matrix_c_csv(m);
  CHECK(c_csv ==
        "base,a,b\n"
        "a,50,300\n"
        "b,FAIL,60\n"
        "scratch,100,200\n");

  const std::string a_csv = matrix_a_csv(m);
  CHECK(a_csv ==
        "base,a,b\n"
        "a,0.500000,1.500000\n"
        "b,FAIL,0.300000\n"
        "scratch,1.000000,1.000000\n");

  CostMatrix back = matrix_from_c_csv(c_csv, 0.9);
  CHECK(back.tasks == m.tasks);
  CHECK(back.success_threshold == 0.9);
  for (const auto& base : std::vector<std::string>{"a", "b", "scratch"}) {
    for (const auto& target : m.tasks) {
      CHECK(back.at(base, target).failed == m.at(base, target).failed);
      if (!m.at(base, target).failed) {
        CHECK(back.at(base, target).steps == m.at(base, target).steps);
        CHECK(back.at(base, target).ratio == doctest::Approx(m.at(base, target).ratio));
      }
    }
  }
}

TEST_CASE("cost CSV parsing rejects malformed input") {
  CHECK_THROWS_AS((void)matrix_from_c_csv(""), std::runtime_error);
  CHECK_THROWS_AS((void)matrix_from_c_csv("target,a,b\n"), std::runtime_error);
  CHECK_THROWS_AS((void)matrix_from_c_csv("base,a,b\nscratch,100\n"),
                  std::runtime_error);
  // No scratch row: ratios are undefined.
  CHECK_THROWS_AS((void)matrix_from_c_csv("base,a\na,50\n"), std::runtime_error);
}

TEST_CASE("transfer training reproduces bitwise from (seed, base, target)") {
  TaskSpec hard = toy_task("hard", 0.0, 50);
  hard.shaping_scale = 1.0;  // nonzero returns, so distinct streams are visible
  PpoConfig config = cheap_config();

  TrainResult r1 = run_transfer_training(hard, nullptr, kScratchName, config, 5, {});
  TrainResult r2 = run_transfer_training(hard, nullptr, kScratchName, config, 5, {});
  CHECK(checkpoint_string(*r1.policy) == checkpoint_string(*r2.policy));
  REQUIRE(r1.curve.points.size() == r2.curve.points.size());
  for (std::size_t i = 0; i < r1.curve.points.size(); ++i) {
    CHECK(r1.curve.points[i].mean_return == r2.curve.points[i].mean_return);
  }

  // A different base tag or seed selects a different stream.
  TrainResult r3 = run_transfer_training(hard, nullptr, "warm", config, 5, {});
  CHECK(r3.curve.points[0].mean_return != r1.curve.points[0].mean_return);
  TrainResult r4 = run_transfer_training(hard, nullptr, kScratchName, config, 6, {});
  CHECK(r4.curve.points[0].mean_return != r1.curve.points[0].mean_return);
}

TEST_CASE("a live base skill and its reloaded checkpoint fine-tune identically") {
  TaskSpec easy = toy_task("easy", 1.0, 50);
  TaskSpec hard = toy_task("hard", 0.0, 50);
  hard.shaping_scale = 1.0;
  PpoConfig config = cheap_config();

  // Produce a base whose Adam moments are warm from its own training, then
  // fine-tune it on another task both as the live object and as a fresh
  // policy parsed back from its checkpoint. The costs a matrix measures with
  // in-memory skills must be the costs a library replays from disk.
  TrainResult base = run_transfer_training(easy, nullptr, kScratchName, config, 9, {});
  const GaussianPolicy reloaded =
      GaussianPolicy::from_checkpoint(nlohmann::json::parse(checkpoint_string(*base.policy)));

  TrainResult live = run_transfer_training(hard, base.policy.get(), "easy", config, 9, {});
  TrainResult replay = run_transfer_training(hard, &reloaded, "easy", config, 9, {});
  CHECK(live.outcome == replay.outcome);
  CHECK(live.steps == replay.steps);
  CHECK(checkpoint_string(*live.policy) == checkpoint_string(*replay.policy));
  REQUIRE(live.curve.points.size() == replay.curve.points.size());
  for (std::size_t i = 0; i < live.curve.points.size(); ++i) {
    CHECK(live.curve.points[i].mean_return == replay.curve.points[i].mean_return);
  }
}

TEST_CASE("transfer training fine-tunes a copy of the provided base skill") {
  TaskSpec easy = toy_task("easy", 4.0, 50);
  PpoConfig config = cheap_config();
  Rng rng(44);
  GaussianPolicy base(kStateDim, kActionDim, rng);

  TrainResult r = run_transfer_training(easy, &base, "easy", config, 7, {});
  CHECK(r.outcome == Outcome::Solved);
  // Solved before the first update: the fine-tuned policy is still the base.
  auto* gp = dynamic_cast<GaussianPolicy*>(r.policy.get());
  REQUIRE(gp != nullptr);
  CHECK(gp->params_equal(base));
}

TEST_CASE("matrix building covers every ordered pair plus the scratch row") {
  std::vector<TaskSpec> space{toy_task("alpha", 4.0, 50), toy_task("beta", 4.0, 50)};
  PpoConfig config = cheap_config();

  MatrixBuildResult built = build_cost_matrix(space, config, 3);
  const CostMatrix& m = built.matrix;
  CHECK(m.tasks == std::vector<std::string>{"alpha", "beta"});
  CHECK(built.scratch_skills.size() == 2);

  for (const auto& base : std::vector<std::string>{"alpha", "beta", "scratch"}) {
    for (const auto& target : m.tasks) {
      REQUIRE(m.has(base, target));
      const TransferRecord& r = m.at(base, target);
      CHECK_FALSE(r.failed);
      CHECK(r.steps == 100);  // trivial tasks solve in the first iteration
      CHECK(r.ratio == doctest::Approx(1.0));
      CHECK_FALSE(r.curve.points.empty());
    }
  }

  // Rebuilding, with any worker count, is bitwise identical.
  MatrixBuildResult again = build_cost_matrix(space, config, 3, /*jobs=*/2);
  CHECK(matrix_c_csv(again.matrix) == matrix_c_csv(m));
  for (const auto& t : m.tasks) {
    CHECK(again.scratch_skills.at(t).params_equal(built.scratch_skills.at(t)));
  }
}

TEST_CASE("matrix building refuses to continue without every scratch cost") {
  std::vector<TaskSpec> space{toy_task("alpha", 4.0, 50),
                              toy_task("doomed", 0.0, 50)};
  PpoConfig config = cheap_config();
  CHECK_THROWS_WITH_AS((void)build_cost_matrix(space, config, 3),
                       doctest::Contains("doomed"), std::runtime_error);
}
