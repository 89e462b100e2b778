#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "skillrl/curriculum.hpp"
#include "skillrl/transfer.hpp"

namespace skillrl {

enum class CurriculumMode { Scratch, Random, Optimal, Pessimal };

std::string mode_name(CurriculumMode mode);
CurriculumMode mode_from_name(const std::string& name);

/// One acquired skill: an immutable policy checkpoint plus provenance.
struct SkillEntry {
  nlohmann::json checkpoint;
  std::string base;          // task id or "scratch"
  long steps = 0;            // env steps the acquisition cost
  double success_rate = 0.0; // measured at the solving iteration
};

/// Grow-only store of acquired skills. Entries are never removed or
/// replaced; inserting an existing id throws.
class SkillLibrary {
 public:
  bool contains(const std::string& id) const { return entries_.count(id) != 0; }
  const SkillEntry& at(const std::string& id) const;
  void insert(const std::string& id, SkillEntry entry);
  std::vector<std::string> ids() const;  // sorted
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, SkillEntry> entries_;
};

struct ReplanEvent {
  std::string removed_base;
  std::string removed_target;
  std::string new_parent;  // target's parent in the replanned tree
};

struct AttemptRecord {
  std::string base;     // task id or "scratch"
  std::string outcome;  // solved | rejected | budget_exhausted
  long steps = 0;       // PPO env steps (the cost metric)
  long warmup_steps = 0;
  std::optional<ReplanEvent> replan;
  TrainCurve curve;
};

struct EpochRecord {
  int epoch = 0;  // numbered from 1
  std::string target;
  bool solved = false;
  std::vector<AttemptRecord> attempts;

  long steps() const;
  long warmup_steps() const;
};

struct RunLedger {
  std::string mode;
  std::uint64_t seed = 0;
  std::vector<std::string> tasks;
  std::vector<EpochRecord> epochs;
  bool aborted = false;
  std::string abort_reason;

  /// Sum of every attempt's PPO steps, rejected attempts included. Warm-up
  /// sampling is tallied separately so totals stay in transfer-cost units.
  long total_steps() const;
  long total_warmup_steps() const;
  int replan_count() const;
};

/// JSONL: one header line, one line per epoch, one totals line. Bitwise
/// deterministic for identical content.
std::string ledger_to_jsonl(const RunLedger& ledger);
RunLedger ledger_from_jsonl(const std::string& text);

struct ContinualConfig {
  PpoConfig ppo;
  double success_threshold = 0.90;
  double margin_fraction = 0.10;  // rejection margin as a fraction of budget
  int max_random_retries = 2;     // random-base retries before a fresh start
};

/// Next task to acquire: curriculum modes walk the tree traversal, the
/// others draw uniformly from what is left.
std::string choose_target_task(CurriculumMode mode, const std::vector<std::string>& remaining,
                               const CurriculumTree& tree, Rng& rng);

/// Base skill for the attempt, as a library task id, or "scratch" meaning a
/// fresh randomly initialized policy. `failed_bases` are bases already
/// rejected for this target in the current epoch (Random mode avoids them).
std::string choose_base_skill(CurriculumMode mode, const std::string& target,
                              const SkillLibrary& library, const CurriculumTree& tree,
                              const std::vector<std::string>& failed_bases,
                              int rejections_so_far, int max_random_retries, Rng& rng);

/// Training backend, injectable for tests. The default forwards to
/// run_transfer_training with the run seed.
using TrainFn = std::function<TrainResult(const TaskSpec& target, const GaussianPolicy* base,
                                          const std::string& base_tag,
                                          const TrainOptions& options)>;

struct ContinualResult {
  SkillLibrary library;
  RunLedger ledger;
  std::map<std::string, TrainCurve> curves;  // solving attempt per task
  CurriculumTree final_tree;                 // curriculum modes: after any replans
};

/// The epoch loop: pick target, pick base, train with the rejection rule
/// armed (skill bases only), insert the solved skill. Rejections in
/// curriculum modes delete the failed edge and replan; a failed scratch
/// attempt aborts the run with a partial ledger. `matrix` supplies the
/// scratch reference curves (and the task graph in curriculum modes); only
/// Scratch mode may pass null.
ContinualResult run_continual(const std::vector<TaskSpec>& space, CurriculumMode mode,
                              const CostMatrix* matrix, const ContinualConfig& config,
                              std::uint64_t seed, TrainFn train_fn = {});

/// Total steps to reach each success threshold, per mode; -1 when any task
/// never reaches it.
struct FrontierTable {
  std::vector<std::string> modes;
  std::vector<double> thresholds;
  std::map<std::string, std::map<double, long>> totals;
};

FrontierTable frontier(const std::map<std::string, std::map<std::string, TrainCurve>>& curves,
                       const std::vector<double>& thresholds);

std::string frontier_csv(const FrontierTable& table);

}  // namespace skillrl
