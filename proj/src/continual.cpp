#include "skillrl/continual.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace skillrl {

std::string mode_name(CurriculumMode mode) {
  switch (mode) {
    case CurriculumMode::Scratch: return "scratch";
    case CurriculumMode::Random: return "random";
    case CurriculumMode::Optimal: return "optimal";
    case CurriculumMode::Pessimal: return "pessimal";
  }
  throw std::logic_error("unknown mode");
}

CurriculumMode mode_from_name(const std::string& name) {
  if (name == "scratch") return CurriculumMode::Scratch;
  if (name == "random") return CurriculumMode::Random;
  if (name == "optimal") return CurriculumMode::Optimal;
  if (name == "pessimal") return CurriculumMode::Pessimal;
  throw std::invalid_argument("unknown mode: " + name);
}

const SkillEntry& SkillLibrary::at(const std::string& id) const {
  const auto it = entries_.find(id);
  if (it == entries_.end()) throw std::out_of_range("no skill for task " + id);
  return it->second;
}

void SkillLibrary::insert(const std::string& id, SkillEntry entry) {
  if (entries_.count(id) != 0) {
    throw std::logic_error("skill library is grow-only; refusing to replace " + id);
  }
  entries_.emplace(id, std::move(entry));
}

std::vector<std::string> SkillLibrary::ids() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [id, e] : entries_) out.push_back(id);
  return out;
}

long EpochRecord::steps() const {
  long s = 0;
  for (const auto& a : attempts) s += a.steps;
  return s;
}

long EpochRecord::warmup_steps() const {
  long s = 0;
  for (const auto& a : attempts) s += a.warmup_steps;
  return s;
}

long RunLedger::total_steps() const {
  long s = 0;
  for (const auto& e : epochs) s += e.steps();
  return s;
}

long RunLedger::total_warmup_steps() const {
  long s = 0;
  for (const auto& e : epochs) s += e.warmup_steps();
  return s;
}

int RunLedger::replan_count() const {
  int n = 0;
  for (const auto& e : epochs) {
    for (const auto& a : e.attempts) n += a.replan.has_value() ? 1 : 0;
  }
  return n;
}

namespace {

std::string curve_ref_name(int epoch, std::size_t attempt, const AttemptRecord& a) {
  return "curves/e" + std::to_string(epoch) + "_a" + std::to_string(attempt + 1) + "_" +
         a.base + "__";
}

}  // namespace

std::string ledger_to_jsonl(const RunLedger& ledger) {
  std::string out;
  nlohmann::json header{{"mode", ledger.mode}, {"seed", ledger.seed}, {"tasks", ledger.tasks}};
  out += header.dump() + "\n";
  for (const auto& e : ledger.epochs) {
    nlohmann::json attempts = nlohmann::json::array();
    for (std::size_t i = 0; i < e.attempts.size(); ++i) {
      const AttemptRecord& a = e.attempts[i];
      nlohmann::json ja{{"base", a.base},
                        {"outcome", a.outcome},
                        {"steps", a.steps},
                        {"warmup_steps", a.warmup_steps},
                        {"curve", curve_ref_name(e.epoch, i, a) + e.target + ".jsonl"}};
      if (a.replan) {
        ja["replan"] = {{"removed_base", a.replan->removed_base},
                        {"removed_target", a.replan->removed_target},
                        {"new_parent", a.replan->new_parent}};
      }
      attempts.push_back(std::move(ja));
    }
    nlohmann::json je{{"epoch", e.epoch},
                      {"target", e.target},
                      {"solved", e.solved},
                      {"attempts", std::move(attempts)}};
    out += je.dump() + "\n";
  }
  nlohmann::json totals{{"total_steps", ledger.total_steps()},
                        {"total_warmup_steps", ledger.total_warmup_steps()},
                        {"replans", ledger.replan_count()},
                        {"aborted", ledger.aborted}};
  if (ledger.aborted) totals["abort_reason"] = ledger.abort_reason;
  out += totals.dump() + "\n";
  return out;
}

RunLedger ledger_from_jsonl(const std::string& text) {
  RunLedger ledger;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++lineno;
    const nlohmann::json j = nlohmann::json::parse(line);
    if (lineno == 1) {
      ledger.mode = j.at("mode").get<std::string>();
      ledger.seed = j.at("seed").get<std::uint64_t>();
      ledger.tasks = j.at("tasks").get<std::vector<std::string>>();
      continue;
    }
    if (j.contains("epoch")) {
      EpochRecord e;
      e.epoch = j.at("epoch").get<int>();
      e.target = j.at("target").get<std::string>();
      e.solved = j.at("solved").get<bool>();
      for (const auto& ja : j.at("attempts")) {
        AttemptRecord a;
        a.base = ja.at("base").get<std::string>();
        a.outcome = ja.at("outcome").get<std::string>();
        a.steps = ja.at("steps").get<long>();
        a.warmup_steps = ja.at("warmup_steps").get<long>();
        if (ja.contains("replan")) {
          const auto& jr = ja.at("replan");
          a.replan = ReplanEvent{jr.at("removed_base").get<std::string>(),
                                 jr.at("removed_target").get<std::string>(),
                                 jr.at("new_parent").get<std::string>()};
        }
        e.attempts.push_back(std::move(a));
      }
      ledger.epochs.push_back(std::move(e));
    } else {
      ledger.aborted = j.at("aborted").get<bool>();
      if (ledger.aborted) ledger.abort_reason = j.value("abort_reason", "");
    }
  }
  return ledger;
}

std::string choose_target_task(CurriculumMode mode, const std::vector<std::string>& remaining,
                               const CurriculumTree& tree, Rng& rng) {
  if (remaining.empty()) throw std::invalid_argument("no tasks remaining");
  if (mode == CurriculumMode::Optimal || mode == CurriculumMode::Pessimal) {
    for (const auto& t : traversal(tree)) {
      if (std::find(remaining.begin(), remaining.end(), t) != remaining.end()) return t;
    }
    throw std::logic_error("tree traversal does not cover the remaining tasks");
  }
  return remaining[rng.uniform_int(remaining.size())];
}

std::string choose_base_skill(CurriculumMode mode, const std::string& target,
                              const SkillLibrary& library, const CurriculumTree& tree,
                              const std::vector<std::string>& failed_bases,
                              int rejections_so_far, int max_random_retries, Rng& rng) {
  switch (mode) {
    case CurriculumMode::Scratch:
      return kScratchName;
    case CurriculumMode::Random: {
      if (rejections_so_far >= max_random_retries) return kScratchName;
      std::vector<std::string> candidates;
      for (const auto& id : library.ids()) {
        if (std::find(failed_bases.begin(), failed_bases.end(), id) == failed_bases.end()) {
          candidates.push_back(id);
        }
      }
      if (candidates.empty()) return kScratchName;
      return candidates[rng.uniform_int(candidates.size())];
    }
    case CurriculumMode::Optimal:
    case CurriculumMode::Pessimal: {
      const auto it = tree.parent.find(target);
      if (it == tree.parent.end()) throw std::logic_error("target not in tree: " + target);
      const std::string& parent = it->second.first;
      if (parent == kScratchName) return kScratchName;
      if (!library.contains(parent)) {
        throw std::runtime_error("traversal order violated: skill for " + parent +
                                 " not acquired before " + target);
      }
      return parent;
    }
  }
  throw std::logic_error("unknown mode");
}

ContinualResult run_continual(const std::vector<TaskSpec>& space, CurriculumMode mode,
                              const CostMatrix* matrix, const ContinualConfig& config,
                              std::uint64_t seed, TrainFn train_fn) {
  config.ppo.validate();
  const bool curriculum =
      mode == CurriculumMode::Optimal || mode == CurriculumMode::Pessimal;
  if (matrix == nullptr && mode != CurriculumMode::Scratch) {
    throw std::invalid_argument(mode_name(mode) +
                                " mode needs a cost matrix (scratch reference curves)");
  }

  std::map<std::string, const TaskSpec*> lookup;
  std::vector<std::string> tasks;
  for (const auto& t : space) {
    lookup[t.id] = &t;
    tasks.push_back(t.id);
  }
  std::sort(tasks.begin(), tasks.end());

  TaskGraph graph;
  CurriculumTree tree;
  if (curriculum) {
    graph = build_graph(*matrix);
    tree = mode == CurriculumMode::Optimal ? min_arborescence(graph)
                                           : max_arborescence(graph);
  }

  if (!train_fn) {
    const PpoConfig ppo = config.ppo;
    train_fn = [ppo, seed](const TaskSpec& target, const GaussianPolicy* base,
                           const std::string& base_tag, const TrainOptions& options) {
      return run_transfer_training(target, base, base_tag, ppo, seed, options);
    };
  }

  Rng run_rng = Rng::derive(seed, {"continual", mode_name(mode)});
  const long margin =
      std::lround(config.margin_fraction * static_cast<double>(config.ppo.budget));

  ContinualResult res;
  res.ledger.mode = mode_name(mode);
  res.ledger.seed = seed;
  res.ledger.tasks = tasks;

  std::vector<std::string> remaining = tasks;
  int epoch = 0;
  bool abort = false;
  while (!remaining.empty() && !abort) {
    EpochRecord rec;
    rec.epoch = ++epoch;
    rec.target = choose_target_task(mode, remaining, tree, run_rng);
    const TaskSpec& target = *lookup.at(rec.target);

    std::vector<std::string> failed_bases;
    int rejections = 0;
    while (true) {
      const std::string base_tag =
          choose_base_skill(mode, rec.target, res.library, tree, failed_bases, rejections,
                            config.max_random_retries, run_rng);
      std::optional<GaussianPolicy> base;
      if (base_tag != kScratchName) {
        base.emplace(load_gaussian_checkpoint(res.library.at(base_tag).checkpoint));
      }

      TrainOptions options;
      options.success_threshold = config.success_threshold;
      if (base && matrix != nullptr) {
        // Rejection reference: the from-scratch curve for this target.
        const TrainCurve ref = matrix->at(kScratchName, rec.target).curve;
        options.stop_rule = [ref, margin](const TrainCurve& current, long steps_used) {
          return rejection_check(current, ref, steps_used, margin) ==
                 RejectDecision::Reject;
        };
      }

      TrainResult tr = train_fn(target, base ? &*base : nullptr, base_tag, options);
      AttemptRecord attempt;
      attempt.base = base_tag;
      attempt.outcome = outcome_name(tr.outcome);
      attempt.steps = tr.steps;
      attempt.warmup_steps = tr.warmup_steps;
      attempt.curve = tr.curve;

      if (tr.outcome == Outcome::Solved) {
        const auto* solved = dynamic_cast<const GaussianPolicy*>(tr.policy.get());
        if (solved == nullptr) {
          throw std::logic_error("continual run expects single-skill policies");
        }
        SkillEntry entry;
        entry.checkpoint = solved->checkpoint();
        entry.base = base_tag;
        entry.steps = tr.steps;
        entry.success_rate =
            tr.curve.points.empty() ? 0.0 : tr.curve.points.back().success_rate;
        res.library.insert(rec.target, std::move(entry));
        res.curves[rec.target] = std::move(tr.curve);
        remaining.erase(std::find(remaining.begin(), remaining.end(), rec.target));
        rec.solved = true;
        rec.attempts.push_back(std::move(attempt));
        break;
      }

      if (base_tag == kScratchName) {
        // From-scratch failure: the task is unsolvable within budget.
        rec.attempts.push_back(std::move(attempt));
        res.ledger.aborted = true;
        res.ledger.abort_reason =
            "task " + rec.target + " not solved from scratch within budget";
        abort = true;
        break;
      }

      // Failed transfer (rejected, or a skill base that ran out of budget).
      ++rejections;
      failed_bases.push_back(base_tag);
      if (curriculum) {
        auto replanned = remove_edge_and_replan(graph, base_tag, rec.target,
                                                mode == CurriculumMode::Pessimal);
        graph = std::move(replanned.first);
        tree = std::move(replanned.second);
        attempt.replan =
            ReplanEvent{base_tag, rec.target, tree.parent.at(rec.target).first};
        rec.attempts.push_back(std::move(attempt));
        // Resume wherever the replanned traversal says; only when that is
        // still this target does the retry stay inside this epoch (keeps
        // parents-before-children intact after arbitrary tree surgery).
        std::string next;
        for (const auto& t : traversal(tree)) {
          if (!res.library.contains(t)) {
            next = t;
            break;
          }
        }
        if (next != rec.target) break;
      } else {
        rec.attempts.push_back(std::move(attempt));
      }
    }
    res.ledger.epochs.push_back(std::move(rec));
  }

  if (curriculum) res.final_tree = std::move(tree);
  return res;
}

FrontierTable frontier(const std::map<std::string, std::map<std::string, TrainCurve>>& curves,
                       const std::vector<double>& thresholds) {
  FrontierTable table;
  table.thresholds = thresholds;
  for (const auto& [mode, per_task] : curves) {
    table.modes.push_back(mode);
    for (double th : thresholds) {
      long total = 0;
      for (const auto& [task, curve] : per_task) {
        const long s = curve.steps_to_threshold(th);
        if (s < 0) {
          total = -1;
          break;
        }
        total += s;
      }
      table.totals[mode][th] = total;
    }
  }
  return table;
}

std::string frontier_csv(const FrontierTable& table) {
  std::string out = "mode,threshold,total_steps\n";
  char buf[64];
  for (const auto& mode : table.modes) {
    for (double th : table.thresholds) {
      std::snprintf(buf, sizeof(buf), "%.6g", th);
      out += mode;
      out += ',';
      out += buf;
      out += ',';
      out += std::to_string(table.totals.at(mode).at(th));
      out += '\n';
    }
  }
  return out;
}

}  // namespace skillrl
