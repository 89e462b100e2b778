#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "skillrl/transfer.hpp"

namespace skillrl {

struct GraphEdge {
  std::string base;
  std::string target;
  long weight = 0;  // env steps
};

/// Directed task graph rooted at the scratch vertex. Failed transfers carry
/// no edge; every task keeps its scratch in-edge, so the graph is always
/// feasible.
struct TaskGraph {
  std::vector<std::string> tasks;  // non-root vertices, lexicographic
  std::vector<GraphEdge> edges;
};

TaskGraph build_graph(const CostMatrix& matrix);

/// Spanning arborescence rooted at the scratch vertex.
struct CurriculumTree {
  // target -> (parent vertex, edge weight); parent may be "scratch".
  std::map<std::string, std::pair<std::string, long>> parent;
  long total = 0;
};

/// Minimum spanning arborescence by the contraction (cycle-shrinking)
/// algorithm; ties broken by lexicographic (base, target).
CurriculumTree min_arborescence(const TaskGraph& graph);

/// Maximum objective: the same solver on negated weights, identical
/// tie-breaking; reported weights/totals are the original ones.
CurriculumTree max_arborescence(const TaskGraph& graph);

/// Throws unless the tree is a spanning arborescence over the graph's tasks
/// (one parent each, acyclic, all reachable from the root).
void validate_tree(const CurriculumTree& tree, const std::vector<std::string>& tasks);

/// Deterministic pre-order: parents precede children, siblings visited in
/// lexicographic order, the scratch root excluded from the output.
std::vector<std::string> traversal(const CurriculumTree& tree);

/// Deletes the failed edge and re-solves (minimum objective by default,
/// maximum when `maximize`). Scratch edges cannot be deleted: they are what
/// keeps every task reachable.
std::pair<TaskGraph, CurriculumTree> remove_edge_and_replan(const TaskGraph& graph,
                                                            const std::string& base,
                                                            const std::string& target,
                                                            bool maximize = false);

/// DOT export: scratch drawn as a box, tasks as ellipses, edges labeled
/// with their weights.
std::string tree_to_dot(const CurriculumTree& tree);

}  // namespace skillrl
