#include "skillrl/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace skillrl {

void RunConfig::validate() const {
  ppo.validate();
  if (!(success_threshold > 0.0 && success_threshold <= 1.0)) {
    throw std::invalid_argument("success_threshold must be in (0, 1]");
  }
  if (!(margin_fraction >= 0.0 && margin_fraction < 1.0)) {
    throw std::invalid_argument("margin_fraction must be in [0, 1)");
  }
  if (max_random_retries < 0) {
    throw std::invalid_argument("max_random_retries must be nonnegative");
  }
  if (horizon <= 0) throw std::invalid_argument("horizon must be positive");
  if (eval_episodes <= 0) throw std::invalid_argument("eval_episodes must be positive");
}

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                    const std::string& prefix) {
  for (const auto& [key, value] : j.items()) {
    if (known.count(key) == 0) {
      throw std::invalid_argument("unknown config key: " + prefix + key);
    }
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config root must be a JSON object");
  reject_unknown(j,
                 {"seed", "ppo", "success_threshold", "margin_fraction",
                  "max_random_retries", "horizon", "eval_episodes"},
                 "");
  RunConfig c;
  read(j, "seed", c.seed);
  read(j, "success_threshold", c.success_threshold);
  read(j, "margin_fraction", c.margin_fraction);
  read(j, "max_random_retries", c.max_random_retries);
  read(j, "horizon", c.horizon);
  read(j, "eval_episodes", c.eval_episodes);
  if (j.contains("ppo")) {
    const nlohmann::json& p = j.at("ppo");
    if (!p.is_object()) throw std::invalid_argument("config key ppo must be an object");
    reject_unknown(p,
                   {"gamma", "lambda", "clip_eps", "lr", "steps_per_iteration",
                    "epochs_per_iteration", "minibatch_size", "budget",
                    "warmup_multiplier", "warmup_lr", "warmup_tol", "warmup_max_passes"},
                   "ppo.");
    read(p, "gamma", c.ppo.gamma);
    read(p, "lambda", c.ppo.lambda);
    read(p, "clip_eps", c.ppo.clip_eps);
    read(p, "lr", c.ppo.lr);
    read(p, "steps_per_iteration", c.ppo.steps_per_iteration);
    read(p, "epochs_per_iteration", c.ppo.epochs_per_iteration);
    read(p, "minibatch_size", c.ppo.minibatch_size);
    read(p, "budget", c.ppo.budget);
    read(p, "warmup_multiplier", c.ppo.warmup_multiplier);
    read(p, "warmup_lr", c.ppo.warmup_lr);
    read(p, "warmup_tol", c.ppo.warmup_tol);
    read(p, "warmup_max_passes", c.ppo.warmup_max_passes);
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

}  // namespace skillrl
