// Python bindings for the pieces of the engine that are useful from a
// notebook: the task family, the exact curriculum solvers, and the small
// numeric kernels (advantage estimation, product-of-experts composition).
// Training itself is driven through the command-line tool; these bindings
// are for planning over and analyzing its outputs.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <tuple>
#include <vector>

#include "skillrl/curriculum.hpp"
#include "skillrl/env.hpp"
#include "skillrl/policy.hpp"
#include "skillrl/trainer.hpp"

namespace py = pybind11;
using namespace skillrl;

namespace {

Vec to_vec(const std::vector<double>& v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

std::vector<double> from_vec(const Vec& v) {
  return {v.data(), v.data() + v.size()};
}

py::dict tree_to_dict(const CurriculumTree& tree) {
  py::dict parent;
  for (const auto& [task, edge] : tree.parent) {
    parent[py::str(task)] = py::make_tuple(edge.first, edge.second);
  }
  py::dict out;
  out["total"] = tree.total;
  out["parent"] = parent;
  out["order"] = traversal(tree);
  return out;
}

TaskGraph make_graph(const std::vector<std::string>& tasks,
                     const std::vector<std::tuple<std::string, std::string, long>>& edges) {
  TaskGraph g;
  g.tasks = tasks;
  for (const auto& [base, target, weight] : edges) g.edges.push_back({base, target, weight});
  return g;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Curriculum solvers and numeric kernels of the skillrl engine";

  m.def("task_ids", [] {
    std::vector<std::string> ids;
    for (const auto& t : make_task_space()) ids.push_back(t.id);
    return ids;
  }, "Ids of the built-in task family, in canonical order.");

  m.def("rollout_return",
        [](const std::string& task_id, std::uint64_t seed) {
          const std::vector<TaskSpec> space = make_task_space();
          const TaskSpec& task = find_task(space, task_id);
          Rng rng = Rng::derive(seed, {"py", "rollout", task_id});
          const GaussianPolicy policy(kStateDim, kActionDim, rng);
          return rollout(task, policy, task.horizon, rng).total_return;
        },
        py::arg("task_id"), py::arg("seed"),
        "Total return of one episode under a fresh randomly initialized "
        "policy; deterministic in (task_id, seed).");

  m.def("min_curriculum",
        [](const std::vector<std::string>& tasks,
           const std::vector<std::tuple<std::string, std::string, long>>& edges) {
          return tree_to_dict(min_arborescence(make_graph(tasks, edges)));
        },
        py::arg("tasks"), py::arg("edges"),
        "Cheapest spanning arborescence of the (base, target, cost) digraph "
        "rooted at 'scratch': the optimal training order.");

  m.def("max_curriculum",
        [](const std::vector<std::string>& tasks,
           const std::vector<std::tuple<std::string, std::string, long>>& edges) {
          return tree_to_dict(max_arborescence(make_graph(tasks, edges)));
        },
        py::arg("tasks"), py::arg("edges"),
        "Most expensive spanning arborescence: the adversarial baseline.");

  m.def("gae",
        [](const std::vector<double>& rewards, const std::vector<double>& values,
           double last_value, double gamma, double lam) {
          const GaeResult r = gae(rewards, to_vec(values), last_value, gamma, lam);
          return py::make_tuple(from_vec(r.advantages), from_vec(r.targets));
        },
        py::arg("rewards"), py::arg("values"), py::arg("last_value"), py::arg("gamma"),
        py::arg("lam"),
        "Generalized advantage estimation over one episode; returns "
        "(advantages, value_targets).");

  m.def("poe_compose",
        [](const std::vector<std::vector<double>>& means,
           const std::vector<std::vector<double>>& vars,
           const std::vector<double>& weights) {
          if (means.size() != vars.size()) {
            throw std::invalid_argument("means and vars must pair up");
          }
          std::vector<GaussianMoments> experts(means.size());
          for (std::size_t i = 0; i < means.size(); ++i) {
            experts[i].mean = to_vec(means[i]);
            experts[i].var = to_vec(vars[i]);
          }
          const GaussianMoments out = poe_compose(experts, to_vec(weights));
          return py::make_tuple(from_vec(out.mean), from_vec(out.var));
        },
        py::arg("means"), py::arg("vars"), py::arg("weights"),
        "Weighted product of diagonal Gaussians; returns (mean, var).");
}
