#pragma once

#include <string>
#include <vector>

#include "skillrl/mlp.hpp"
#include "skillrl/rng.hpp"

namespace skillrl {

class StochasticPolicy;

/// Axis-aligned sampling region inside the workspace.
struct Rect {
  double x_lo, x_hi, y_lo, y_hi;
};

enum class TaskKind { Reach, Push, PickPlace, Press };

/// One task of the synthetic 2D manipulation family. All tasks share the
/// state layout [gx, gy, grip, ox, oy, tx, ty, grasped] and action layout
/// [vx, vy, grip_cmd]; they differ in reward, success predicate and which
/// object dynamics are active.
struct TaskSpec {
  std::string id;
  TaskKind kind = TaskKind::Reach;
  int press_sign = 0;           // -1 press-down, +1 press-up, 0 otherwise
  double shaping_scale = 1.0;   // multiplier on the distance penalty
  double success_bonus = 1.0;
  double step_gain = 0.05;      // workspace units per unit action
  double grasp_radius = 0.05;
  double contact_radius = 0.06;
  double success_radius = 0.05;
  int horizon = 100;
  Rect object_region{0, 0, 0, 0};
  Rect goal_region{0, 0, 0, 0};  // ignored by press tasks (goal = button)
};

constexpr int kStateDim = 8;
constexpr int kActionDim = 3;

/// The six tasks in lexicographic id order (the canonical ordering used by
/// every report and matrix).
std::vector<TaskSpec> make_task_space();

const TaskSpec& find_task(const std::vector<TaskSpec>& space, const std::string& id);

struct StepResult {
  Vec state;
  double reward = 0.0;
  bool success = false;
};

/// Initial state: gripper at (0, 0.8), grip open, nothing grasped; object
/// then goal sampled uniformly from the task's regions (press tasks place
/// the goal on the button).
Vec reset(const TaskSpec& task, Rng& rng);

/// Deterministic transition. Throws if the action has non-finite entries
/// (corrupted policy output); otherwise clips the action to [-1,1].
StepResult step(const TaskSpec& task, const Vec& state, const Vec& action);

struct Episode {
  std::vector<Vec> states;   // length T+1 (final state kept for bootstrap)
  std::vector<Vec> actions;  // length T
  std::vector<double> rewards;
  std::vector<double> log_probs;
  std::vector<bool> step_success;
  bool truncated = false;  // ended by horizon, not by a terminal condition
  bool success = false;    // OR of per-step success flags
  double total_return = 0.0;
  int length() const { return static_cast<int>(actions.size()); }
};

/// On-policy rollout for at most `horizon` steps. Episodes always run to
/// the horizon (success does not terminate them).
Episode rollout(const TaskSpec& task, const StochasticPolicy& policy, int horizon,
                Rng& rng);

}  // namespace skillrl
