#include "skillrl/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace skillrl {

std::vector<std::string> select_pretrain_tasks(const std::map<std::string, long>& scratch_costs,
                                               int m) {
  if (m <= 0) throw std::invalid_argument("select_pretrain_tasks: m must be positive");
  if (m >= static_cast<int>(scratch_costs.size())) {
    throw std::invalid_argument(
        "select_pretrain_tasks: m must leave at least one task to adapt to");
  }
  std::vector<std::pair<std::string, long>> items(scratch_costs.begin(), scratch_costs.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> out;
  for (int i = 0; i < m; ++i) out.push_back(items[static_cast<std::size_t>(i)].first);
  std::sort(out.begin(), out.end());
  return out;
}

void PretrainConfig::validate() const {
  if (k < 0) throw std::invalid_argument("pretrain: k must be nonnegative");
  if (pairs_per_task <= 0) throw std::invalid_argument("pretrain: dataset size must be positive");
  if (bc.epochs <= 0 || bc.minibatch_size <= 0 || bc.lr <= 0) {
    throw std::invalid_argument("pretrain: bad distillation settings");
  }
}

BcDataset bc_dataset(const TaskSpec& task, const StochasticPolicy& expert, int pairs,
                     Rng& rng) {
  if (pairs <= 0) throw std::invalid_argument("bc_dataset: pairs must be positive");
  BcDataset ds;
  ds.states.resize(pairs, expert.state_dim());
  ds.actions.resize(pairs, expert.action_dim());
  int row = 0;
  while (row < pairs) {
    const Episode ep = rollout(task, expert, task.horizon, rng);
    for (std::size_t t = 0; t < ep.actions.size() && row < pairs; ++t, ++row) {
      ds.states.row(row) = ep.states[t].transpose();
      ds.actions.row(row) = ep.actions[t].transpose();
    }
  }
  return ds;
}

MixturePolicy MixturePolicySet::policy_for(const std::string& task) const {
  const auto it = mixers.find(task);
  if (it == mixers.end()) throw std::out_of_range("no mixer for task " + task);
  return MixturePolicy(experts, frozen, it->second);
}

namespace {

Mat gather_rows(const Mat& src, const std::vector<int>& idx, int begin, int count) {
  Mat out(count, src.cols());
  for (int i = 0; i < count; ++i) {
    out.row(i) = src.row(idx[static_cast<std::size_t>(begin + i)]);
  }
  return out;
}

}  // namespace

MixturePolicySet pretrain(const std::vector<TaskSpec>& space,
                          const std::map<std::string, GaussianPolicy>& source_experts,
                          const PretrainConfig& config, std::uint64_t seed,
                          PretrainReport* report) {
  config.validate();
  if (source_experts.empty()) throw std::invalid_argument("pretrain: no source experts");
  std::vector<std::string> tasks;
  std::map<std::string, const TaskSpec*> specs;
  for (const auto& [id, expert] : source_experts) {
    tasks.push_back(id);
    const auto it = std::find_if(space.begin(), space.end(),
                                 [&](const TaskSpec& t) { return t.id == id; });
    if (it == space.end()) throw std::invalid_argument("pretrain: unknown task " + id);
    specs[id] = &*it;
  }
  const int sd = source_experts.begin()->second.state_dim();
  const int ad = source_experts.begin()->second.action_dim();
  const int k = config.k > 0 ? config.k : static_cast<int>(tasks.size());

  std::map<std::string, BcDataset> data;
  for (const auto& id : tasks) {
    Rng r = Rng::derive(seed, {"pretrain", "data", id});
    data.emplace(id, bc_dataset(*specs.at(id), source_experts.at(id),
                                config.pairs_per_task, r));
  }

  MixturePolicySet set;
  {
    Rng re = Rng::derive(seed, {"pretrain", "experts"});
    for (int i = 0; i < k; ++i) set.experts.emplace_back(sd, ad, re);
    set.frozen.assign(static_cast<std::size_t>(k), false);
  }
  {
    Rng rm = Rng::derive(seed, {"pretrain", "mixers"});
    for (const auto& id : tasks) set.mixers.emplace(id, MixerFunction(sd, k, rm));
  }

  Rng opt = Rng::derive(seed, {"pretrain", "opt"});
  std::map<std::string, std::vector<int>> order;
  for (const auto& id : tasks) {
    std::vector<int> idx(static_cast<std::size_t>(config.pairs_per_task));
    std::iota(idx.begin(), idx.end(), 0);
    order.emplace(id, std::move(idx));
  }
  const int n = config.pairs_per_task;
  const int mb = config.bc.minibatch_size;

  PretrainReport local;
  PretrainReport& rep = report != nullptr ? *report : local;
  double best = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < config.bc.epochs; ++epoch) {
    for (const auto& id : tasks) opt.shuffle(order.at(id));
    for (int begin = 0; begin < n; begin += mb) {
      const int m = std::min(mb, n - begin);
      for (auto& e : set.experts) e.zero_grad();
      for (auto& [id, mixer] : set.mixers) mixer.net().zero_grad();
      for (const auto& id : tasks) {
        const BcDataset& ds = data.at(id);
        const Mat S = gather_rows(ds.states, order.at(id), begin, m);
        const Mat A = gather_rows(ds.actions, order.at(id), begin, m);
        mixture_accumulate_log_prob_grad(set.experts, set.frozen, set.mixers.at(id), S, A,
                                         Vec::Constant(m, -1.0 / m));
      }
      for (auto& e : set.experts) e.adam_step(config.bc.lr);
      for (auto& [id, mixer] : set.mixers) mixer.net().adam_step(config.bc.lr);
    }
    double loss = 0.0;
    for (const auto& id : tasks) {
      const BcDataset& ds = data.at(id);
      loss -= mixture_log_prob_batch(set.experts, set.mixers.at(id), ds.states, ds.actions)
                  .mean();
    }
    rep.epoch_losses.push_back(loss);
    if (loss > best + 1e-3 * std::max(1.0, std::abs(best))) {
      rep.aborted = true;
      rep.message = "joint NLL rose at epoch " + std::to_string(epoch);
      break;
    }
    best = std::min(best, loss);
  }
  return set;
}

AdaptResult adapt(const MixturePolicySet& set, const TaskSpec& new_task,
                  const PpoConfig& config, std::uint64_t seed, int expand_k,
                  double success_threshold) {
  if (set.experts.empty()) throw std::invalid_argument("adapt: empty expert library");
  if (set.mixers.count(new_task.id) != 0) {
    throw std::invalid_argument("adapt: task already has a mixer: " + new_task.id);
  }
  if (expand_k < 0) throw std::invalid_argument("adapt: expand_k must be nonnegative");

  AdaptResult out;
  out.set = set;
  const std::size_t k0 = out.set.experts.size();
  std::fill(out.set.frozen.begin(), out.set.frozen.end(), true);

  const int sd = out.set.experts[0].state_dim();
  const int ad = out.set.experts[0].action_dim();
  if (expand_k > 0) {
    Rng re = Rng::derive(seed, {"adapt", new_task.id, "experts"});
    for (int i = 0; i < expand_k; ++i) {
      out.set.experts.emplace_back(sd, ad, re);
      out.set.frozen.push_back(false);
    }
    // Existing mixers keep their behavior: the new logits sit ~40 below.
    for (auto& [id, mixer] : out.set.mixers) mixer.net().append_outputs(expand_k, -40.0);
  }

  Rng rm = Rng::derive(seed, {"adapt", new_task.id, "mixer"});
  MixerFunction fresh(sd, static_cast<int>(out.set.experts.size()), rm);
  const MixturePolicy initial(out.set.experts, out.set.frozen, std::move(fresh));

  Rng rt = Rng::derive(seed, {"adapt", new_task.id});
  TrainOptions options;
  options.success_threshold = success_threshold;
  TrainResult tr = train(new_task, initial, config, rt, options);
  const auto* trained = dynamic_cast<const MixturePolicy*>(tr.policy.get());
  if (trained == nullptr) throw std::logic_error("adapt: trainer returned a foreign policy");

  for (std::size_t i = 0; i < k0; ++i) {
    if (!trained->experts()[i].params_equal(out.set.experts[i])) {
      throw std::logic_error("adapt: frozen expert parameters changed");
    }
  }
  for (std::size_t i = k0; i < out.set.experts.size(); ++i) {
    out.set.experts[i] = trained->experts()[i];
  }
  out.set.mixers.emplace(new_task.id, trained->mixer());
  out.curve = std::move(tr.curve);
  out.outcome = tr.outcome;
  out.steps = tr.steps;
  out.warmup_steps = tr.warmup_steps;
  return out;
}

void save_mixture_set(const MixturePolicySet& set, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json experts = nlohmann::json::array();
  for (std::size_t i = 0; i < set.experts.size(); ++i) {
    const std::string name = "expert_" + std::to_string(i) + ".json";
    std::ofstream f(dir / name);
    f << set.experts[i].checkpoint().dump(2) << "\n";
    experts.push_back({{"file", name}, {"frozen", static_cast<bool>(set.frozen[i])}});
  }
  nlohmann::json mixers = nlohmann::json::object();
  for (const auto& [id, mixer] : set.mixers) {
    const std::string name = "mixer_" + id + ".json";
    std::ofstream f(dir / name);
    f << mixer.checkpoint().dump(2) << "\n";
    mixers[id] = name;
  }
  std::ofstream f(dir / "manifest.json");
  f << nlohmann::json{{"format_version", 1}, {"experts", experts}, {"mixers", mixers}}.dump(2)
    << "\n";
}

namespace {

nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw std::runtime_error("cannot open " + p.string());
  nlohmann::json j;
  f >> j;
  return j;
}

}  // namespace

MixturePolicySet load_mixture_set(const std::filesystem::path& dir) {
  const nlohmann::json manifest = read_json(dir / "manifest.json");
  MixturePolicySet set;
  for (const auto& je : manifest.at("experts")) {
    set.experts.push_back(
        GaussianPolicy::from_checkpoint(read_json(dir / je.at("file").get<std::string>())));
    set.frozen.push_back(je.at("frozen").get<bool>());
  }
  for (const auto& [id, file] : manifest.at("mixers").items()) {
    set.mixers.emplace(id,
                       MixerFunction::from_checkpoint(read_json(dir / file.get<std::string>())));
  }
  return set;
}

}  // namespace skillrl
