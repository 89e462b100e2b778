#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "skillrl/trainer.hpp"
#include "skillrl/transfer.hpp"

namespace skillrl {

/// The m tasks with the largest from-scratch cost (hardest first makes the
/// best distillation sources); lexicographic tie-break, result sorted.
/// m must leave at least one task to adapt to.
std::vector<std::string> select_pretrain_tasks(const std::map<std::string, long>& scratch_costs,
                                               int m);

struct PretrainConfig {
  int k = 0;                 // expert count; 0 means one per pretrain task
  int pairs_per_task = 20000;
  BcConfig bc;               // distillation epochs / minibatch / lr

  void validate() const;
};

struct BcDataset {
  Mat states;
  Mat actions;
};

/// State-action pairs from stochastic rollouts of the expert on its task.
BcDataset bc_dataset(const TaskSpec& task, const StochasticPolicy& expert, int pairs,
                     Rng& rng);

/// Shared expert library plus one mixing function per known task.
struct MixturePolicySet {
  std::vector<GaussianPolicy> experts;
  std::vector<bool> frozen;
  std::map<std::string, MixerFunction> mixers;

  MixturePolicy policy_for(const std::string& task) const;
};

struct PretrainReport {
  std::vector<double> epoch_losses;  // summed per-task NLL after each epoch
  bool aborted = false;
  std::string message;
};

/// Joint distillation: minimizes the summed behavioral-cloning NLL of the
/// composed policy on every pretrain task at once. Experts are shared
/// across tasks (their gradients sum over tasks); each task trains its own
/// mixer. Datasets are generated by rolling out the given source experts.
/// All experts come back unfrozen.
MixturePolicySet pretrain(const std::vector<TaskSpec>& space,
                          const std::map<std::string, GaussianPolicy>& source_experts,
                          const PretrainConfig& config, std::uint64_t seed,
                          PretrainReport* report = nullptr);

struct AdaptResult {
  MixturePolicySet set;
  TrainCurve curve;
  Outcome outcome = Outcome::BudgetExhausted;
  long steps = 0;
  long warmup_steps = 0;
};

/// Fine-tunes onto a new task with every existing expert frozen: a fresh
/// near-uniform mixer (plus expand_k fresh unfrozen experts, if any) is
/// trained with the usual PPO loop. Existing mixers are widened with
/// ~zero-weight rows when experts are added, leaving their behavior
/// unchanged. Frozen expert parameters are verified bitwise afterwards.
AdaptResult adapt(const MixturePolicySet& set, const TaskSpec& new_task,
                  const PpoConfig& config, std::uint64_t seed, int expand_k = 0,
                  double success_threshold = 0.90);

void save_mixture_set(const MixturePolicySet& set, const std::filesystem::path& dir);
MixturePolicySet load_mixture_set(const std::filesystem::path& dir);

}  // namespace skillrl
