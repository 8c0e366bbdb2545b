#include "pamo/partition.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace pamo {

namespace {

// Symmetric weighted graph in adjacency-list form. A self loop stores the full internal weight
// counted in both directions, so degrees survive aggregation unchanged.
struct WeightedGraph {
  std::vector<std::vector<std::pair<std::size_t, double>>> adj;
  std::vector<double> self;

  std::size_t size() const { return adj.size(); }
  double degree(std::size_t i) const {
    double d = self[i];
    for (const auto& [j, w] : adj[i]) d += w;
    return d;
  }
};

WeightedGraph from_part_graph(const PartGraph& g) {
  WeightedGraph out;
  out.adj.resize(g.node_count);
  out.self.assign(g.node_count, 0.0);
  for (const auto& e : g.edges) {
    const double w = e.weight();
    if (w <= 0.0) continue;
    out.adj[e.j].emplace_back(e.k, w);
    out.adj[e.k].emplace_back(e.j, w);
  }
  return out;
}

// One round of local moving. Nodes are visited in index order; a node changes community only
// for a strictly positive gain, and ties go to the lower community id.
bool local_moving(const WeightedGraph& g, std::vector<std::size_t>& community, double resolution) {
  const std::size_t n = g.size();
  std::vector<double> degree(n), tot(n, 0.0);
  double m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    degree[i] = g.degree(i);
    tot[community[i]] += degree[i];
    m2 += degree[i];
  }
  if (m2 <= 0.0) return false;

  std::vector<double> link(n, 0.0);
  std::vector<std::size_t> touched;
  bool any_move = false;
  for (bool moved = true; moved;) {
    moved = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (g.adj[i].empty()) continue;
      const std::size_t own = community[i];
      touched.clear();
      for (const auto& [j, w] : g.adj[i]) {
        const std::size_t c = community[j];
        if (link[c] == 0.0) touched.push_back(c);
        link[c] += w;
      }
      tot[own] -= degree[i];
      const double scale = resolution * degree[i] / m2;
      std::size_t best = own;
      double best_gain = link[own] - scale * tot[own];
      std::sort(touched.begin(), touched.end());
      for (auto c : touched) {
        const double gain = link[c] - scale * tot[c];
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best = c;
        }
      }
      tot[best] += degree[i];
      community[i] = best;
      if (best != own) moved = any_move = true;
      for (auto c : touched) link[c] = 0.0;
    }
  }
  return any_move;
}

// Renumbers communities 0..K-1 in order of first appearance; returns K.
std::size_t renumber(std::vector<std::size_t>& community) {
  std::map<std::size_t, std::size_t> ids;
  for (auto& c : community) {
    auto [it, inserted] = ids.emplace(c, ids.size());
    c = it->second;
  }
  return ids.size();
}

WeightedGraph aggregate(const WeightedGraph& g, const std::vector<std::size_t>& community, std::size_t k) {
  std::vector<std::map<std::size_t, double>> rows(k);
  WeightedGraph out;
  out.self.assign(k, 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto ci = community[i];
    out.self[ci] += g.self[i];
    for (const auto& [j, w] : g.adj[i]) {
      const auto cj = community[j];
      if (ci == cj) out.self[ci] += w;
      else rows[ci][cj] += w;
    }
  }
  out.adj.resize(k);
  for (std::size_t c = 0; c < k; ++c) out.adj[c].assign(rows[c].begin(), rows[c].end());
  return out;
}

}  // namespace

std::vector<int> louvain_cluster(const PartGraph& graph, double resolution) {
  WeightedGraph g = from_part_graph(graph);
  std::vector<std::size_t> assignment(graph.node_count);
  std::iota(assignment.begin(), assignment.end(), 0);

  for (;;) {
    std::vector<std::size_t> community(g.size());
    std::iota(community.begin(), community.end(), 0);
    const bool moved = local_moving(g, community, resolution);
    const std::size_t k = renumber(community);
    for (auto& a : assignment) a = community[a];
    if (!moved || k == g.size()) break;
    g = aggregate(g, community, k);
  }

  std::vector<std::size_t> ordered = assignment;
  renumber(ordered);
  return std::vector<int>(ordered.begin(), ordered.end());
}

double modularity(const PartGraph& graph, std::span<const int> labels, double resolution) {
  std::map<int, double> internal, total;
  double m2 = 0.0;
  for (const auto& e : graph.edges) {
    const double w = e.weight();
    m2 += 2.0 * w;
    total[labels[e.j]] += w;
    total[labels[e.k]] += w;
    if (labels[e.j] == labels[e.k]) internal[labels[e.j]] += 2.0 * w;
  }
  if (m2 <= 0.0) return 0.0;
  double q = 0.0;
  for (const auto& [c, tot] : total) {
    const double in = internal.contains(c) ? internal.at(c) : 0.0;
    q += in / m2 - resolution * (tot / m2) * (tot / m2);
  }
  return q;
}

}  // namespace pamo
