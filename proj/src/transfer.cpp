#include "skillrl/transfer.hpp"

#include <atomic>
#include <cstdio>
#include <functional>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace skillrl {

EvalResult evaluate(const TaskSpec& task, const StochasticPolicy& policy,
                    int n_episodes, Rng& rng) {
  if (n_episodes < 1) throw std::invalid_argument("evaluate: n_episodes < 1");
  EvalResult r;
  for (int i = 0; i < n_episodes; ++i) {
    const Episode ep = rollout(task, policy, task.horizon, rng);
    r.success_rate += ep.success ? 1.0 : 0.0;
    r.mean_return += ep.total_return;
  }
  r.success_rate /= n_episodes;
  r.mean_return /= n_episodes;
  return r;
}

const TransferRecord& CostMatrix::at(const std::string& base,
                                     const std::string& target) const {
  const auto row = records.find(base);
  if (row == records.end()) throw std::out_of_range("no base row: " + base);
  const auto cell = row->second.find(target);
  if (cell == row->second.end()) throw std::out_of_range("no cell: " + base + " -> " + target);
  return cell->second;
}

bool CostMatrix::has(const std::string& base, const std::string& target) const {
  const auto row = records.find(base);
  return row != records.end() && row->second.count(target) > 0;
}

long CostMatrix::scratch_cost(const std::string& target) const {
  const TransferRecord& r = at(kScratchName, target);
  if (r.failed) throw std::logic_error("scratch cost undefined for " + target);
  return r.steps;
}

std::map<std::string, long> CostMatrix::scratch_costs() const {
  std::map<std::string, long> out;
  for (const auto& t : tasks) out[t] = scratch_cost(t);
  return out;
}

TrainResult run_transfer_training(const TaskSpec& target, const StochasticPolicy* base,
                                  std::string_view base_tag, const PpoConfig& config,
                                  std::uint64_t seed, const TrainOptions& options) {
  Rng rng = Rng::derive(seed, {base_tag, target.id});
  if (base != nullptr) {
    return train(target, *base, config, rng, options);
  }
  const GaussianPolicy fresh(kStateDim, kActionDim, rng);
  return train(target, fresh, config, rng, options);
}

namespace {

/// Runs fn(i) for i in [0, n) on `jobs` worker threads. Work items are
/// independent; output slots are disjoint, so no synchronization beyond the
/// shared counter is needed.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  std::exception_ptr error;
  std::mutex error_mu;
  workers.reserve(static_cast<std::size_t>(jobs));
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

MatrixBuildResult build_cost_matrix(const std::vector<TaskSpec>& space,
                                    const PpoConfig& config, std::uint64_t seed,
                                    int jobs) {
  config.validate();
  MatrixBuildResult out;
  out.matrix.success_threshold = 0.90;
  for (const auto& t : space) out.matrix.tasks.push_back(t.id);

  TrainOptions options;
  options.success_threshold = out.matrix.success_threshold;

  // Phase 1: from-scratch skills; these define C_scratch and the scratch
  // snapshots every pair training starts from.
  const int n = static_cast<int>(space.size());
  std::vector<TrainResult> scratch_results(static_cast<std::size_t>(n));
  parallel_for(n, jobs, [&](int i) {
    scratch_results[static_cast<std::size_t>(i)] = run_transfer_training(
        space[static_cast<std::size_t>(i)], nullptr, kScratchName, config, seed, options);
  });
  std::string failures;
  for (int i = 0; i < n; ++i) {
    const auto& task = space[static_cast<std::size_t>(i)];
    auto& res = scratch_results[static_cast<std::size_t>(i)];
    if (res.outcome != Outcome::Solved) {
      failures += failures.empty() ? task.id : ", " + task.id;
      continue;
    }
    TransferRecord rec;
    rec.base = kScratchName;
    rec.target = task.id;
    rec.steps = res.steps;
    rec.ratio = 1.0;
    rec.curve = res.curve;
    out.matrix.records[kScratchName][task.id] = std::move(rec);
    auto* gp = dynamic_cast<GaussianPolicy*>(res.policy.get());
    if (gp == nullptr) throw std::logic_error("scratch training returned non-Gaussian policy");
    out.scratch_skills.emplace(task.id, *gp);
  }
  if (!failures.empty()) {
    throw std::runtime_error("scratch training failed (cost metric undefined) for: " + failures);
  }

  // Phase 2: every ordered pair from the immutable scratch snapshots.
  struct Pair {
    const TaskSpec* base;
    const TaskSpec* target;
  };
  std::vector<Pair> pairs;
  for (const auto& b : space)
    for (const auto& t : space) pairs.push_back({&b, &t});
  std::vector<TransferRecord> pair_records(pairs.size());
  parallel_for(static_cast<int>(pairs.size()), jobs, [&](int i) {
    const auto& p = pairs[static_cast<std::size_t>(i)];
    const GaussianPolicy& base_skill = out.scratch_skills.at(p.base->id);
    TrainResult res =
        run_transfer_training(*p.target, &base_skill, p.base->id, config, seed, options);
    TransferRecord rec;
    rec.base = p.base->id;
    rec.target = p.target->id;
    rec.curve = res.curve;
    if (res.outcome == Outcome::Solved) {
      rec.steps = res.steps;
    } else {
      rec.failed = true;
    }
    pair_records[static_cast<std::size_t>(i)] = std::move(rec);
  });
  for (auto& rec : pair_records) {
    if (!rec.failed) {
      rec.ratio = static_cast<double>(rec.steps) /
                  static_cast<double>(out.matrix.scratch_cost(rec.target));
    }
    out.matrix.records[rec.base][rec.target] = std::move(rec);
  }
  return out;
}

RejectDecision rejection_check(const TrainCurve& current, const TrainCurve& scratch_ref,
                               long steps_used, long margin) {
  if (scratch_ref.empty()) throw std::invalid_argument("rejection_check: empty reference");
  if (current.empty()) return RejectDecision::Keep;
  const double cur = current.value_at(steps_used);
  const double ref = scratch_ref.value_at(std::max(0L, steps_used - margin));
  return cur < ref ? RejectDecision::Reject : RejectDecision::Keep;
}

namespace {

std::string format_ratio(double a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", a);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  return cells;
}

}  // namespace

std::string matrix_c_csv(const CostMatrix& m) {
  std::string out = "base";
  for (const auto& t : m.tasks) out += "," + t;
  out += '\n';
  auto row = [&](const std::string& base) {
    out += base;
    for (const auto& t : m.tasks) {
      const TransferRecord& r = m.at(base, t);
      out += ",";
      out += r.failed ? "FAIL" : std::to_string(r.steps);
    }
    out += '\n';
  };
  for (const auto& b : m.tasks) row(b);
  row(kScratchName);
  return out;
}

std::string matrix_a_csv(const CostMatrix& m) {
  std::string out = "base";
  for (const auto& t : m.tasks) out += "," + t;
  out += '\n';
  auto row = [&](const std::string& base) {
    out += base;
    for (const auto& t : m.tasks) {
      const TransferRecord& r = m.at(base, t);
      out += ",";
      out += r.failed ? "FAIL" : format_ratio(r.ratio);
    }
    out += '\n';
  };
  for (const auto& b : m.tasks) row(b);
  row(kScratchName);
  return out;
}

CostMatrix matrix_from_c_csv(const std::string& text, double threshold) {
  CostMatrix m;
  m.success_threshold = threshold;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty cost CSV");
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "base") {
    throw std::runtime_error("cost CSV: bad header");
  }
  m.tasks.assign(header.begin() + 1, header.end());
  bool saw_scratch = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) throw std::runtime_error("cost CSV: ragged row");
    const std::string& base = cells[0];
    saw_scratch = saw_scratch || base == kScratchName;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      TransferRecord rec;
      rec.base = base;
      rec.target = m.tasks[i - 1];
      if (cells[i] == "FAIL") {
        rec.failed = true;
      } else {
        rec.steps = std::stol(cells[i]);
      }
      m.records[base][rec.target] = std::move(rec);
    }
  }
  if (!saw_scratch) throw std::runtime_error("cost CSV: missing scratch row");
  for (auto& [base, row] : m.records) {
    for (auto& [target, rec] : row) {
      if (!rec.failed && base != kScratchName) {
        rec.ratio = static_cast<double>(rec.steps) /
                    static_cast<double>(m.scratch_cost(target));
      } else if (!rec.failed) {
        rec.ratio = 1.0;
      }
    }
  }
  return m;
}

}  // namespace skillrl
