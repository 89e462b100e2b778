#include "skillrl/curriculum.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace skillrl {

TaskGraph build_graph(const CostMatrix& matrix) {
  TaskGraph g;
  g.tasks = matrix.tasks;
  for (const auto& t : g.tasks) {
    if (!matrix.has(kScratchName, t)) {
      throw std::invalid_argument("build_graph: missing scratch cost for " + t);
    }
    const TransferRecord& r = matrix.at(kScratchName, t);
    if (r.failed) throw std::invalid_argument("build_graph: scratch cost failed for " + t);
    g.edges.push_back({kScratchName, t, r.steps});
  }
  for (const auto& base : g.tasks) {
    for (const auto& target : g.tasks) {
      if (base == target || !matrix.has(base, target)) continue;
      const TransferRecord& r = matrix.at(base, target);
      if (r.failed) continue;
      g.edges.push_back({base, target, r.steps});
    }
  }
  return g;
}

namespace {

struct WEdge {
  int u = 0, v = 0;
  long w = 0;
  int top = 0;  // index into the top-level edge list (identity + tie-break)
};

bool edge_less(const WEdge& a, const WEdge& b, const std::vector<GraphEdge>& top) {
  if (a.w != b.w) return a.w < b.w;
  const GraphEdge& ea = top[static_cast<std::size_t>(a.top)];
  const GraphEdge& eb = top[static_cast<std::size_t>(b.top)];
  if (ea.base != eb.base) return ea.base < eb.base;
  return ea.target < eb.target;
}

/// Contraction algorithm. Vertices are 0..nv-1 with root 0; returns indices
/// into `edges` forming a spanning arborescence at this recursion level.
std::vector<int> solve_arborescence(int nv, const std::vector<WEdge>& edges,
                                    const std::vector<GraphEdge>& top) {
  constexpr int kRoot = 0;
  std::vector<int> best(static_cast<std::size_t>(nv), -1);
  for (int i = 0; i < static_cast<int>(edges.size()); ++i) {
    const WEdge& e = edges[static_cast<std::size_t>(i)];
    if (e.v == kRoot || e.u == e.v) continue;
    int& b = best[static_cast<std::size_t>(e.v)];
    if (b == -1 || edge_less(e, edges[static_cast<std::size_t>(b)], top)) b = i;
  }
  for (int v = 1; v < nv; ++v) {
    if (best[static_cast<std::size_t>(v)] == -1) {
      throw std::runtime_error("arborescence: vertex unreachable from root");
    }
  }

  // Look for a cycle among the chosen in-edges.
  std::vector<int> state(static_cast<std::size_t>(nv), 0);  // 0 new, 1 on path, 2 done
  std::vector<int> cycle;
  for (int s = 1; s < nv && cycle.empty(); ++s) {
    if (state[static_cast<std::size_t>(s)] != 0) continue;
    std::vector<int> path;
    int v = s;
    while (v != kRoot && state[static_cast<std::size_t>(v)] == 0) {
      state[static_cast<std::size_t>(v)] = 1;
      path.push_back(v);
      v = edges[static_cast<std::size_t>(best[static_cast<std::size_t>(v)])].u;
    }
    if (v != kRoot && state[static_cast<std::size_t>(v)] == 1) {
      const auto it = std::find(path.begin(), path.end(), v);
      cycle.assign(it, path.end());
    }
    for (int p : path) state[static_cast<std::size_t>(p)] = 2;
  }

  if (cycle.empty()) {
    std::vector<int> out;
    for (int v = 1; v < nv; ++v) out.push_back(best[static_cast<std::size_t>(v)]);
    return out;
  }

  // Contract the cycle into one supernode and adjust entering weights.
  std::vector<bool> in_cycle(static_cast<std::size_t>(nv), false);
  for (int v : cycle) in_cycle[static_cast<std::size_t>(v)] = true;
  std::vector<int> id(static_cast<std::size_t>(nv), -1);
  id[kRoot] = 0;
  int next = 1;
  for (int v = 1; v < nv; ++v) {
    if (!in_cycle[static_cast<std::size_t>(v)]) id[static_cast<std::size_t>(v)] = next++;
  }
  const int cid = next++;
  for (int v : cycle) id[static_cast<std::size_t>(v)] = cid;

  std::vector<WEdge> sub;
  std::vector<std::pair<int, int>> origin;  // (edge index at this level, entered vertex)
  for (int i = 0; i < static_cast<int>(edges.size()); ++i) {
    const WEdge& e = edges[static_cast<std::size_t>(i)];
    const int u2 = id[static_cast<std::size_t>(e.u)];
    const int v2 = id[static_cast<std::size_t>(e.v)];
    if (u2 == v2 || e.v == kRoot) continue;
    long w2 = e.w;
    if (in_cycle[static_cast<std::size_t>(e.v)]) {
      w2 -= edges[static_cast<std::size_t>(best[static_cast<std::size_t>(e.v)])].w;
    }
    sub.push_back({u2, v2, w2, e.top});
    origin.emplace_back(i, e.v);
  }

  const std::vector<int> chosen_sub = solve_arborescence(next, sub, top);
  std::vector<int> out;
  int entered = -1;
  for (int si : chosen_sub) {
    out.push_back(origin[static_cast<std::size_t>(si)].first);
    if (sub[static_cast<std::size_t>(si)].v == cid) {
      entered = origin[static_cast<std::size_t>(si)].second;
    }
  }
  if (entered == -1) throw std::logic_error("arborescence: contracted cycle never entered");
  for (int v : cycle) {
    if (v != entered) out.push_back(best[static_cast<std::size_t>(v)]);
  }
  return out;
}

CurriculumTree solve(const TaskGraph& graph, bool maximize) {
  std::map<std::string, int> vid;
  vid[kScratchName] = 0;
  std::vector<std::string> sorted_tasks = graph.tasks;
  std::sort(sorted_tasks.begin(), sorted_tasks.end());
  int next = 1;
  for (const auto& t : sorted_tasks) vid[t] = next++;

  std::vector<WEdge> edges;
  for (int i = 0; i < static_cast<int>(graph.edges.size()); ++i) {
    const GraphEdge& e = graph.edges[static_cast<std::size_t>(i)];
    const auto u = vid.find(e.base);
    const auto v = vid.find(e.target);
    if (u == vid.end() || v == vid.end()) {
      throw std::invalid_argument("arborescence: edge endpoint not a vertex");
    }
    edges.push_back({u->second, v->second, maximize ? -e.weight : e.weight, i});
  }

  const std::vector<int> chosen = solve_arborescence(next, edges, graph.edges);
  CurriculumTree tree;
  for (int i : chosen) {
    const GraphEdge& e = graph.edges[static_cast<std::size_t>(i)];
    tree.parent[e.target] = {e.base, e.weight};
    tree.total += e.weight;
  }
  validate_tree(tree, graph.tasks);
  return tree;
}

}  // namespace

CurriculumTree min_arborescence(const TaskGraph& graph) { return solve(graph, false); }

CurriculumTree max_arborescence(const TaskGraph& graph) { return solve(graph, true); }

void validate_tree(const CurriculumTree& tree, const std::vector<std::string>& tasks) {
  if (tree.parent.size() != tasks.size()) {
    throw std::logic_error("tree: wrong vertex count");
  }
  long total = 0;
  const std::set<std::string> task_set(tasks.begin(), tasks.end());
  for (const auto& [target, pw] : tree.parent) {
    if (task_set.count(target) == 0) throw std::logic_error("tree: unknown target " + target);
    if (pw.first != kScratchName && task_set.count(pw.first) == 0) {
      throw std::logic_error("tree: unknown parent " + pw.first);
    }
    total += pw.second;
    // Walk to the root; more than |tasks| hops means a cycle.
    std::string v = target;
    std::size_t hops = 0;
    while (v != kScratchName) {
      const auto it = tree.parent.find(v);
      if (it == tree.parent.end()) throw std::logic_error("tree: dangling vertex " + v);
      v = it->second.first;
      if (++hops > tasks.size()) throw std::logic_error("tree: cycle through " + target);
    }
  }
  if (total != tree.total) throw std::logic_error("tree: total weight mismatch");
}

std::vector<std::string> traversal(const CurriculumTree& tree) {
  std::map<std::string, std::vector<std::string>> children;
  for (const auto& [target, pw] : tree.parent) children[pw.first].push_back(target);
  for (auto& [p, c] : children) std::sort(c.begin(), c.end());
  std::vector<std::string> order;
  std::vector<std::string> stack{kScratchName};
  // Iterative pre-order; push children in reverse so the lexicographically
  // first child pops first.
  while (!stack.empty()) {
    const std::string v = stack.back();
    stack.pop_back();
    if (v != kScratchName) order.push_back(v);
    const auto it = children.find(v);
    if (it != children.end()) {
      for (auto c = it->second.rbegin(); c != it->second.rend(); ++c) stack.push_back(*c);
    }
  }
  return order;
}

std::pair<TaskGraph, CurriculumTree> remove_edge_and_replan(const TaskGraph& graph,
                                                            const std::string& base,
                                                            const std::string& target,
                                                            bool maximize) {
  if (base == kScratchName) {
    throw std::invalid_argument("cannot delete a scratch edge (graph must stay feasible)");
  }
  TaskGraph g = graph;
  const auto it = std::find_if(g.edges.begin(), g.edges.end(), [&](const GraphEdge& e) {
    return e.base == base && e.target == target;
  });
  if (it == g.edges.end()) {
    throw std::invalid_argument("no such edge: " + base + " -> " + target);
  }
  g.edges.erase(it);
  CurriculumTree tree = maximize ? max_arborescence(g) : min_arborescence(g);
  return {std::move(g), std::move(tree)};
}

std::string tree_to_dot(const CurriculumTree& tree) {
  std::string out = "digraph curriculum {\n";
  out += "  \"scratch\" [shape=box];\n";
  for (const auto& [target, pw] : tree.parent) {
    out += "  \"" + target + "\" [shape=ellipse];\n";
  }
  std::vector<std::pair<std::string, std::string>> order;  // (base, target)
  for (const auto& [target, pw] : tree.parent) order.emplace_back(pw.first, target);
  std::sort(order.begin(), order.end());
  for (const auto& [base, target] : order) {
    out += "  \"" + base + "\" -> \"" + target + "\" [label=\"" +
           std::to_string(tree.parent.at(target).second) + "\"];\n";
  }
  out += "}\n";
  return out;
}

}  // namespace skillrl
