#include "skillrl/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "skillrl/policy.hpp"

namespace skillrl {

namespace {

// State vector indices.
constexpr int kGx = 0, kGy = 1, kGrip = 2, kOx = 3, kOy = 4, kTx = 5, kTy = 6,
              kGrasped = 7;

double clip1(double v) { return std::clamp(v, -1.0, 1.0); }

double dist(double ax, double ay, double bx, double by) {
  return std::hypot(ax - bx, ay - by);
}

double sample(Rng& rng, double lo, double hi) { return rng.uniform(lo, hi); }

}  // namespace

std::vector<TaskSpec> make_task_space() {
  std::vector<TaskSpec> space;

  TaskSpec pick;
  pick.id = "pick-place";
  pick.kind = TaskKind::PickPlace;
  pick.shaping_scale = 0.5;
  pick.success_radius = 0.1;
  pick.object_region = {-0.3, 0.3, -0.25, 0.0};
  pick.goal_region = {-0.3, 0.3, 0.1, 0.3};
  space.push_back(pick);

  TaskSpec press_down;
  press_down.id = "press-down";
  press_down.kind = TaskKind::Press;
  press_down.press_sign = -1;
  press_down.object_region = {-0.5, 0.5, -0.5, 0.0};
  space.push_back(press_down);

  TaskSpec press_up = press_down;
  press_up.id = "press-up";
  press_up.press_sign = +1;
  space.push_back(press_up);

  TaskSpec push_left;
  push_left.id = "push-left";
  push_left.kind = TaskKind::Push;
  push_left.shaping_scale = 0.5;
  push_left.success_radius = 0.09;
  push_left.object_region = {0.15, 0.45, -0.3, 0.1};
  push_left.goal_region = {-0.45, -0.15, -0.3, 0.1};
  space.push_back(push_left);

  TaskSpec push_right = push_left;
  push_right.id = "push-right";
  push_right.object_region = {-0.45, -0.15, -0.3, 0.1};
  push_right.goal_region = {0.15, 0.45, -0.3, 0.1};
  space.push_back(push_right);

  TaskSpec reach;
  reach.id = "reach";
  reach.kind = TaskKind::Reach;
  reach.object_region = {-0.6, 0.6, -0.5, 0.1};
  reach.goal_region = {-0.6, 0.6, -0.6, 0.2};
  space.push_back(reach);

  return space;
}

const TaskSpec& find_task(const std::vector<TaskSpec>& space, const std::string& id) {
  for (const auto& t : space) {
    if (t.id == id) return t;
  }
  throw std::invalid_argument("unknown task id: " + id);
}

Vec reset(const TaskSpec& task, Rng& rng) {
  Vec s = Vec::Zero(kStateDim);
  s(kGx) = 0.0;
  s(kGy) = 0.8;
  s(kGrip) = 0.0;
  s(kOx) = sample(rng, task.object_region.x_lo, task.object_region.x_hi);
  s(kOy) = sample(rng, task.object_region.y_lo, task.object_region.y_hi);
  if (task.kind == TaskKind::Press) {
    // The button is both the object and the goal.
    s(kTx) = s(kOx);
    s(kTy) = s(kOy);
  } else {
    s(kTx) = sample(rng, task.goal_region.x_lo, task.goal_region.x_hi);
    s(kTy) = sample(rng, task.goal_region.y_lo, task.goal_region.y_hi);
  }
  s(kGrasped) = 0.0;
  return s;
}

StepResult step(const TaskSpec& task, const Vec& state, const Vec& action) {
  if (!action.allFinite()) {
    throw std::runtime_error("non-finite action (corrupted policy output)");
  }
  const double vx = clip1(action(0));
  const double vy = clip1(action(1));
  const double grip_cmd = clip1(action(2));

  Vec s = state;
  const double old_gx = s(kGx);
  const double old_gy = s(kGy);
  const double gx = clip1(old_gx + task.step_gain * vx);
  const double gy = clip1(old_gy + task.step_gain * vy);
  const bool grip = grip_cmd > 0.5;
  s(kGx) = gx;
  s(kGy) = gy;
  s(kGrip) = grip ? 1.0 : 0.0;

  // Object dynamics: a grasp engages near the object with the grip closed
  // and latches for the rest of the episode; a grasped object rides the
  // gripper. Push tasks drag a touched object by the gripper's displacement
  // (contact is judged where the motion starts, so an established touch
  // keeps its offset and is not shaken off by the move itself).
  const bool was_grasped = s(kGrasped) > 0.5;
  const bool grasped = was_grasped ||
                       (grip && dist(gx, gy, s(kOx), s(kOy)) < task.grasp_radius);
  if (grasped) {
    s(kOx) = gx;
    s(kOy) = gy;
  } else if (task.kind == TaskKind::Push &&
             dist(old_gx, old_gy, s(kOx), s(kOy)) < task.contact_radius) {
    s(kOx) = clip1(s(kOx) + (gx - old_gx));
    s(kOy) = clip1(s(kOy) + (gy - old_gy));
  }
  s(kGrasped) = grasped ? 1.0 : 0.0;

  const double d_goal_gripper = dist(gx, gy, s(kTx), s(kTy));
  const double d_goal_object = dist(s(kOx), s(kOy), s(kTx), s(kTy));
  const double d_gripper_object = dist(gx, gy, s(kOx), s(kOy));

  bool success = false;
  double shaped = 0.0;
  switch (task.kind) {
    case TaskKind::Reach:
      success = d_goal_gripper < task.success_radius;
      shaped = -task.shaping_scale * d_goal_gripper;
      break;
    case TaskKind::Push:
    case TaskKind::PickPlace:
      success = d_goal_object < task.success_radius;
      shaped = -task.shaping_scale * (d_gripper_object + d_goal_object);
      break;
    case TaskKind::Press: {
      const double dy = gy - s(kTy);
      success = d_goal_gripper < task.success_radius &&
                (task.press_sign < 0 ? dy < 0.0 : dy > 0.0);
      shaped = -task.shaping_scale * d_goal_gripper;
      break;
    }
  }

  StepResult out;
  out.state = std::move(s);
  out.success = success;
  out.reward = shaped + (success ? task.success_bonus : 0.0);
  return out;
}

Episode rollout(const TaskSpec& task, const StochasticPolicy& policy, int horizon,
                Rng& rng) {
  Episode ep;
  if (horizon <= 0) return ep;
  ep.states.reserve(static_cast<std::size_t>(horizon) + 1);
  ep.actions.reserve(static_cast<std::size_t>(horizon));
  ep.states.push_back(reset(task, rng));
  for (int t = 0; t < horizon; ++t) {
    auto [a, logp] = act(policy, ep.states.back(), rng);
    StepResult r = step(task, ep.states.back(), a);
    ep.actions.push_back(std::move(a));
    ep.log_probs.push_back(logp);
    ep.rewards.push_back(r.reward);
    ep.step_success.push_back(r.success);
    ep.success = ep.success || r.success;
    ep.total_return += r.reward;
    ep.states.push_back(std::move(r.state));
  }
  ep.truncated = true;
  return ep;
}

}  // namespace skillrl
