#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "skillrl/env.hpp"
#include "skillrl/policy.hpp"
#include "skillrl/trainer.hpp"

namespace skillrl {

inline constexpr const char* kScratchName = "scratch";

struct EvalResult {
  double success_rate = 0.0;
  double mean_return = 0.0;
};

/// Success rate of the policy over n stochastic episodes.
EvalResult evaluate(const TaskSpec& task, const StochasticPolicy& policy,
                    int n_episodes, Rng& rng);

/// One (base -> target) fine-tuning measurement.
struct TransferRecord {
  std::string base;    // task id or "scratch"
  std::string target;
  bool failed = false; // budget exhausted before reaching the threshold
  long steps = 0;      // C: PPO env steps to the success criterion
  double ratio = 0.0;  // A: C / C_scratch(target)
  TrainCurve curve;
};

/// Dense transfer-cost table over the task family plus the scratch row.
struct CostMatrix {
  std::vector<std::string> tasks;  // lexicographic
  double success_threshold = 0.90;
  // records[base][target]; base includes "scratch".
  std::map<std::string, std::map<std::string, TransferRecord>> records;

  const TransferRecord& at(const std::string& base, const std::string& target) const;
  bool has(const std::string& base, const std::string& target) const;
  long scratch_cost(const std::string& target) const;
  std::map<std::string, long> scratch_costs() const;
};

/// Canonical training protocol used by matrix building and continual runs
/// alike: the RNG stream (and, for base=null, the fresh policy init) derives
/// from (seed, base_tag, target id), so the same (seed, base, target) setup
/// reproduces bitwise wherever it is invoked.
TrainResult run_transfer_training(const TaskSpec& target, const StochasticPolicy* base,
                                  std::string_view base_tag, const PpoConfig& config,
                                  std::uint64_t seed, const TrainOptions& options);

struct MatrixBuildResult {
  CostMatrix matrix;
  std::map<std::string, GaussianPolicy> scratch_skills;
};

/// Phase 1 trains every task from scratch (failure aborts: the metric is
/// undefined without C_scratch). Phase 2 fine-tunes every ordered (base,
/// target) pair, diagonal included, from the immutable scratch snapshots.
/// `jobs` > 1 trains independent runs on worker threads; results are
/// identical regardless of job count.
MatrixBuildResult build_cost_matrix(const std::vector<TaskSpec>& space,
                                    const PpoConfig& config, std::uint64_t seed,
                                    int jobs = 1);

enum class RejectDecision { Keep, Reject };

/// Reject iff the current curve's return at steps_used falls below the
/// scratch reference's return a margin of steps earlier.
RejectDecision rejection_check(const TrainCurve& current, const TrainCurve& scratch_ref,
                               long steps_used, long margin);

/// CSV exports: header row of target ids, one row per base plus a final
/// "scratch" row. C cells are integer env steps or FAIL; A cells are
/// ratios to six decimal places or FAIL.
std::string matrix_c_csv(const CostMatrix& m);
std::string matrix_a_csv(const CostMatrix& m);

/// Rebuilds a matrix (costs and failure flags only, no curves) from C.csv
/// text, e.g. for planning from a previously written matrix.
CostMatrix matrix_from_c_csv(const std::string& text, double threshold = 0.90);

}  // namespace skillrl
