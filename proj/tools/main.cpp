#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "skillrl/config.hpp"
#include "skillrl/continual.hpp"
#include "skillrl/curriculum.hpp"
#include "skillrl/mixture.hpp"
#include "skillrl/transfer.hpp"

namespace fs = std::filesystem;
using namespace skillrl;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream out;
  out << f.rdbuf();
  return out.str();
}

void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << content;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_file(p)); }

std::vector<TaskSpec> task_space(const RunConfig& cfg) {
  std::vector<TaskSpec> space = make_task_space();
  for (auto& t : space) t.horizon = cfg.horizon;
  return space;
}

RunConfig resolve_config(const std::string& config_path, std::uint64_t seed_flag,
                         bool seed_set) {
  RunConfig cfg;
  if (!config_path.empty()) cfg = load_config(config_path);
  if (seed_set) cfg.seed = seed_flag;
  return cfg;
}

/// Reads back a costmatrix output directory: C.csv for the numbers plus the
/// per-pair training curves (the rejection rule needs the scratch ones).
CostMatrix load_matrix_dir(const fs::path& dir) {
  CostMatrix m = matrix_from_c_csv(read_file(dir / "C.csv"));
  for (auto& [base, row] : m.records) {
    for (auto& [target, rec] : row) {
      const fs::path curve = dir / "curves" / (base + "__" + target + ".jsonl");
      if (fs::exists(curve)) rec.curve = curve_from_jsonl(read_file(curve));
    }
  }
  return m;
}

void cmd_costmatrix(const RunConfig& cfg, const fs::path& out, int jobs) {
  const std::vector<TaskSpec> space = task_space(cfg);
  std::cerr << "building " << space.size() << "x" << (space.size() + 1)
            << " transfer matrix (seed " << cfg.seed << ", jobs " << jobs << ")\n";
  const MatrixBuildResult result = build_cost_matrix(space, cfg.ppo, cfg.seed, jobs);
  write_file(out / "C.csv", matrix_c_csv(result.matrix));
  write_file(out / "A.csv", matrix_a_csv(result.matrix));
  for (const auto& [base, row] : result.matrix.records) {
    for (const auto& [target, rec] : row) {
      write_file(out / "curves" / (base + "__" + target + ".jsonl"),
                 curve_to_jsonl(rec.curve));
    }
  }
  for (const auto& [task, skill] : result.scratch_skills) {
    write_file(out / "skills" / (task + ".json"), skill.checkpoint().dump(2) + "\n");
  }
  std::cout << matrix_c_csv(result.matrix);
}

void cmd_plan(const fs::path& matrix_csv, const std::string& objective, const fs::path& out) {
  if (objective != "min" && objective != "max") {
    throw std::invalid_argument("--objective must be min or max");
  }
  const CostMatrix m = matrix_from_c_csv(read_file(matrix_csv));
  const TaskGraph graph = build_graph(m);
  const CurriculumTree tree =
      objective == "min" ? min_arborescence(graph) : max_arborescence(graph);
  write_file(out / "tree.dot", tree_to_dot(tree));
  std::string order;
  for (const auto& t : traversal(tree)) order += t + "\n";
  write_file(out / "traversal.txt", order);
  std::cout << "objective: " << objective << "\n"
            << "predicted total steps: " << tree.total << "\n"
            << order;
}

void cmd_run(const RunConfig& cfg, const std::string& mode_str, const fs::path& matrix_dir,
             const fs::path& out) {
  const CurriculumMode mode = mode_from_name(mode_str);
  const std::vector<TaskSpec> space = task_space(cfg);
  CostMatrix matrix;
  const bool have_matrix = !matrix_dir.empty();
  if (!have_matrix && mode != CurriculumMode::Scratch) {
    throw std::invalid_argument("--matrix-dir is required for mode " + mode_str);
  }
  if (have_matrix) matrix = load_matrix_dir(matrix_dir);

  ContinualConfig cc;
  cc.ppo = cfg.ppo;
  cc.success_threshold = cfg.success_threshold;
  cc.margin_fraction = cfg.margin_fraction;
  cc.max_random_retries = cfg.max_random_retries;
  const ContinualResult res =
      run_continual(space, mode, have_matrix ? &matrix : nullptr, cc, cfg.seed);

  write_file(out / "ledger.jsonl", ledger_to_jsonl(res.ledger));
  for (const auto& e : res.ledger.epochs) {
    for (std::size_t i = 0; i < e.attempts.size(); ++i) {
      const AttemptRecord& a = e.attempts[i];
      write_file(out / "curves" /
                     ("e" + std::to_string(e.epoch) + "_a" + std::to_string(i + 1) + "_" +
                      a.base + "__" + e.target + ".jsonl"),
                 curve_to_jsonl(a.curve));
    }
  }
  for (const auto& [task, curve] : res.curves) {
    write_file(out / "curves" / ("task_" + task + ".jsonl"), curve_to_jsonl(curve));
  }

  nlohmann::json manifest_skills = nlohmann::json::object();
  nlohmann::json eval = nlohmann::json::object();
  for (const auto& id : res.library.ids()) {
    const SkillEntry& s = res.library.at(id);
    write_file(out / "library" / (id + ".json"), s.checkpoint.dump(2) + "\n");
    manifest_skills[id] = {{"file", id + ".json"},
                           {"base", s.base},
                           {"steps", s.steps},
                           {"success_rate", s.success_rate}};
    const GaussianPolicy skill = load_gaussian_checkpoint(s.checkpoint);
    Rng eval_rng = Rng::derive(cfg.seed, {"eval", id});
    const EvalResult ev =
        evaluate(find_task(space, id), skill, cfg.eval_episodes, eval_rng);
    eval[id] = {{"success_rate", ev.success_rate}, {"mean_return", ev.mean_return}};
  }
  write_file(out / "library" / "manifest.json",
             nlohmann::json{{"format_version", 1}, {"skills", manifest_skills}}.dump(2) + "\n");
  if (mode == CurriculumMode::Optimal || mode == CurriculumMode::Pessimal) {
    write_file(out / "tree.dot", tree_to_dot(res.final_tree));
  }

  nlohmann::json summary{{"mode", res.ledger.mode},
                         {"seed", res.ledger.seed},
                         {"total_steps", res.ledger.total_steps()},
                         {"total_warmup_steps", res.ledger.total_warmup_steps()},
                         {"replans", res.ledger.replan_count()},
                         {"aborted", res.ledger.aborted},
                         {"epochs", res.ledger.epochs.size()},
                         {"library", res.library.ids()},
                         {"eval", eval}};
  write_file(out / "summary.json", summary.dump(2) + "\n");

  std::cout << "mode " << res.ledger.mode << ", seed " << res.ledger.seed << "\n";
  for (const auto& e : res.ledger.epochs) {
    std::cout << "epoch " << e.epoch << ": " << e.target << " "
              << (e.solved ? "solved" : "unsolved") << " in " << e.steps() << " steps ("
              << e.attempts.size() << " attempt" << (e.attempts.size() == 1 ? "" : "s")
              << ")\n";
  }
  std::cout << "total steps: " << res.ledger.total_steps() << "\n";
  if (res.ledger.aborted) {
    std::cout << "aborted: " << res.ledger.abort_reason << "\n";
    throw std::runtime_error("run aborted: " + res.ledger.abort_reason);
  }
}

void cmd_frontier(const std::vector<std::string>& run_dirs,
                  const std::vector<double>& thresholds, const fs::path& out_file) {
  if (run_dirs.empty()) throw std::invalid_argument("no run directories given");
  if (thresholds.empty()) throw std::invalid_argument("no thresholds given");
  std::map<std::string, std::map<std::string, TrainCurve>> curves;
  for (const auto& dir : run_dirs) {
    const nlohmann::json summary = read_json(fs::path(dir) / "summary.json");
    const std::string mode = summary.at("mode").get<std::string>();
    for (const auto& task : summary.at("library")) {
      const fs::path curve =
          fs::path(dir) / "curves" / ("task_" + task.get<std::string>() + ".jsonl");
      curves[mode][task.get<std::string>()] = curve_from_jsonl(read_file(curve));
    }
  }
  const FrontierTable table = frontier(curves, thresholds);
  write_file(out_file, frontier_csv(table));
  std::cout << frontier_csv(table);
}

void cmd_pretrain(const RunConfig& cfg, const fs::path& matrix_dir, int m, int k, int pairs,
                  int epochs, const fs::path& out) {
  const std::vector<TaskSpec> space = task_space(cfg);
  const CostMatrix matrix = load_matrix_dir(matrix_dir);
  const std::vector<std::string> chosen = select_pretrain_tasks(matrix.scratch_costs(), m);
  std::map<std::string, GaussianPolicy> sources;
  for (const auto& id : chosen) {
    const fs::path skill = matrix_dir / "skills" / (id + ".json");
    if (!fs::exists(skill)) throw std::runtime_error("missing source skill: " + skill.string());
    sources.emplace(id, GaussianPolicy::from_checkpoint(read_json(skill)));
  }
  PretrainConfig pc;
  pc.k = k;
  pc.pairs_per_task = pairs;
  if (epochs > 0) pc.bc.epochs = epochs;
  PretrainReport report;
  const MixturePolicySet set = pretrain(space, sources, pc, cfg.seed, &report);
  save_mixture_set(set, out / "library");
  nlohmann::json js{{"tasks", chosen},
                    {"k", static_cast<int>(set.experts.size())},
                    {"pairs_per_task", pc.pairs_per_task},
                    {"epoch_losses", report.epoch_losses},
                    {"aborted", report.aborted}};
  if (report.aborted) js["message"] = report.message;
  write_file(out / "pretrain.json", js.dump(2) + "\n");
  std::cout << "pretrained on:";
  for (const auto& id : chosen) std::cout << " " << id;
  std::cout << "\nfinal joint NLL: "
            << (report.epoch_losses.empty() ? 0.0 : report.epoch_losses.back()) << "\n";
}

void cmd_adapt(const RunConfig& cfg, const fs::path& set_dir, const std::string& task_id,
               int expand_k, const fs::path& out) {
  const std::vector<TaskSpec> space = task_space(cfg);
  const MixturePolicySet set = load_mixture_set(set_dir);
  const TaskSpec& task = find_task(space, task_id);
  const AdaptResult res =
      adapt(set, task, cfg.ppo, cfg.seed, expand_k, cfg.success_threshold);
  save_mixture_set(res.set, out / "library");
  write_file(out / ("curve_" + task_id + ".jsonl"), curve_to_jsonl(res.curve));
  write_file(out / "adapt.json",
             nlohmann::json{{"task", task_id},
                            {"outcome", outcome_name(res.outcome)},
                            {"steps", res.steps},
                            {"warmup_steps", res.warmup_steps}}
                     .dump(2) +
                 "\n");
  std::cout << "adapt " << task_id << ": " << outcome_name(res.outcome) << " after "
            << res.steps << " steps\n";
  if (res.outcome != Outcome::Solved) {
    throw std::runtime_error("adaptation did not reach the success threshold");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual skill acquisition: transfer costs, curricula, mixtures"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed_flag = 0;
  app.add_option("--config", config_path, "JSON config file")->capture_default_str();
  CLI::Option* seed_opt = app.add_option("--seed", seed_flag, "overrides the config seed");

  auto* costmatrix = app.add_subcommand("costmatrix", "measure the pairwise transfer costs");
  std::string cm_out = "matrix";
  int cm_jobs = 1;
  costmatrix->add_option("--out", cm_out, "output directory")->capture_default_str();
  costmatrix->add_option("--jobs", cm_jobs, "parallel training jobs")->capture_default_str();

  auto* plan = app.add_subcommand("plan", "solve the curriculum over a cost matrix");
  std::string plan_matrix;
  std::string plan_objective = "min";
  std::string plan_out = "plan";
  plan->add_option("--matrix", plan_matrix, "C.csv path")->required();
  plan->add_option("--objective", plan_objective, "min | max")->capture_default_str();
  plan->add_option("--out", plan_out, "output directory")->capture_default_str();

  auto* run = app.add_subcommand("run", "continual skill acquisition");
  std::string run_mode = "scratch";
  std::string run_matrix_dir;
  std::string run_out = "run";
  run->add_option("--mode", run_mode, "scratch | random | optimal | pessimal")
      ->capture_default_str();
  run->add_option("--matrix-dir", run_matrix_dir,
                  "costmatrix output directory (required except scratch mode)");
  run->add_option("--out", run_out, "output directory")->capture_default_str();

  auto* frontier_cmd = app.add_subcommand("frontier", "steps-to-threshold table across runs");
  std::vector<std::string> frontier_dirs;
  std::vector<double> frontier_thresholds{0.5, 0.8, 0.9};
  std::string frontier_out = "frontier.csv";
  frontier_cmd->add_option("dirs", frontier_dirs, "run output directories")->required();
  frontier_cmd->add_option("--thresholds", frontier_thresholds, "success thresholds")
      ->delimiter(',')
      ->capture_default_str();
  frontier_cmd->add_option("--out", frontier_out, "output CSV")->capture_default_str();

  auto* pretrain_cmd = app.add_subcommand("pretrain", "distill experts + mixers jointly");
  std::string pt_matrix_dir;
  int pt_m = 4, pt_k = 0, pt_pairs = 20000, pt_epochs = 0;
  std::string pt_out = "pretrain";
  pretrain_cmd->add_option("--matrix-dir", pt_matrix_dir, "costmatrix output directory")
      ->required();
  pretrain_cmd->add_option("--tasks", pt_m, "number of (hardest) pretrain tasks")
      ->capture_default_str();
  pretrain_cmd->add_option("--k", pt_k, "expert count (0 = one per task)")
      ->capture_default_str();
  pretrain_cmd->add_option("--pairs", pt_pairs, "BC pairs per task")->capture_default_str();
  pretrain_cmd->add_option("--epochs", pt_epochs, "distillation epochs (0 = default)");
  pretrain_cmd->add_option("--out", pt_out, "output directory")->capture_default_str();

  auto* adapt_cmd = app.add_subcommand("adapt", "frozen-expert adaptation to a new task");
  std::string ad_set, ad_task, ad_out = "adapt";
  int ad_expand = 0;
  adapt_cmd->add_option("--set", ad_set, "mixture library directory")->required();
  adapt_cmd->add_option("--task", ad_task, "target task id")->required();
  adapt_cmd->add_option("--expand-k", ad_expand, "fresh unfrozen experts to add")
      ->capture_default_str();
  adapt_cmd->add_option("--out", ad_out, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const RunConfig cfg = resolve_config(config_path, seed_flag, seed_opt->count() > 0);
    if (*costmatrix) {
      cmd_costmatrix(cfg, cm_out, cm_jobs);
    } else if (*plan) {
      cmd_plan(plan_matrix, plan_objective, plan_out);
    } else if (*run) {
      cmd_run(cfg, run_mode, run_matrix_dir, run_out);
    } else if (*frontier_cmd) {
      cmd_frontier(frontier_dirs, frontier_thresholds, frontier_out);
    } else if (*pretrain_cmd) {
      cmd_pretrain(cfg, pt_matrix_dir, pt_m, pt_k, pt_pairs, pt_epochs, pt_out);
    } else if (*adapt_cmd) {
      cmd_adapt(cfg, ad_set, ad_task, ad_expand, ad_out);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
