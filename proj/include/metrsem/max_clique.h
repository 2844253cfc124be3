/**
 * @file max_clique.h
 * @brief Exact maximum clique search on small dense graphs.
 */
#pragma once

#include <cstdint>
#include <vector>

namespace metrsem {

/// Undirected graph as a dense symmetric adjacency matrix.
struct DenseGraph {
  int n = 0;
  std::vector<uint8_t> adj;  // n*n, symmetric, zero diagonal

  explicit DenseGraph(int num_vertices = 0)
      : n(num_vertices), adj(static_cast<size_t>(num_vertices) * num_vertices, 0) {}

  bool connected(int a, int b) const {
    return adj[static_cast<size_t>(a) * n + b] != 0;
  }
  void add_edge(int a, int b) {
    adj[static_cast<size_t>(a) * n + b] = 1;
    adj[static_cast<size_t>(b) * n + a] = 1;
  }
};

/// Exact maximum clique via branch-and-bound with a greedy coloring upper
/// bound and a degeneracy-order greedy clique as the initial lower bound.
/// Among all maximum cliques, returns the lexicographically smallest index
/// set, sorted ascending.
std::vector<int> max_clique_exact(const DenseGraph& graph);

/// Greedy degeneracy-order clique, used as a fallback for very large
/// inputs. Not guaranteed maximum.
std::vector<int> max_clique_greedy(const DenseGraph& graph);

}  // namespace metrsem
