#include "metrsem/max_clique.h"

#include <algorithm>
#include <numeric>

namespace metrsem {

namespace {

// Smallest-last (degeneracy) ordering.
std::vector<int> degeneracy_order(const DenseGraph& g) {
  std::vector<int> degree(g.n, 0);
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.n; ++j)
      if (g.connected(i, j)) ++degree[i];

  std::vector<bool> removed(g.n, false);
  std::vector<int> order;
  order.reserve(g.n);
  for (int step = 0; step < g.n; ++step) {
    int best = -1;
    for (int i = 0; i < g.n; ++i) {
      if (removed[i] && best != -1) continue;
      if (!removed[i] && (best == -1 || degree[i] < degree[best])) best = i;
    }
    removed[best] = true;
    order.push_back(best);
    for (int j = 0; j < g.n; ++j)
      if (!removed[j] && g.connected(best, j)) --degree[j];
  }
  return order;
}

// Greedy coloring of the candidate set; returns per-candidate color
// numbers (1-based) with candidates re-sorted by ascending color. The
// color of the last element is an upper bound on the clique size in P.
void color_sort(const DenseGraph& g, std::vector<int>& p,
                std::vector<int>& colors) {
  const int n = static_cast<int>(p.size());
  std::vector<std::vector<int>> classes;
  for (int idx = 0; idx < n; ++idx) {
    const int v = p[idx];
    size_t k = 0;
    for (; k < classes.size(); ++k) {
      bool clash = false;
      for (int u : classes[k]) {
        if (g.connected(u, v)) {
          clash = true;
          break;
        }
      }
      if (!clash) break;
    }
    if (k == classes.size()) classes.emplace_back();
    classes[k].push_back(v);
  }
  p.clear();
  colors.clear();
  for (size_t k = 0; k < classes.size(); ++k) {
    for (int v : classes[k]) {
      p.push_back(v);
      colors.push_back(static_cast<int>(k) + 1);
    }
  }
}

struct Searcher {
  const DenseGraph& g;
  int best_size = 0;

  void expand(std::vector<int>& current, std::vector<int> p) {
    if (p.empty()) {
      best_size = std::max(best_size, static_cast<int>(current.size()));
      return;
    }
    std::vector<int> colors;
    color_sort(g, p, colors);
    for (int i = static_cast<int>(p.size()) - 1; i >= 0; --i) {
      if (static_cast<int>(current.size()) + colors[i] <= best_size) return;
      const int v = p[i];
      std::vector<int> next;
      next.reserve(i);
      for (int j = 0; j < i; ++j)
        if (g.connected(v, p[j])) next.push_back(p[j]);
      current.push_back(v);
      expand(current, std::move(next));
      current.pop_back();
    }
  }

  // True iff the subgraph induced by p contains a clique of size k.
  bool exists(std::vector<int> p, int k) {
    if (k <= 0) return true;
    if (static_cast<int>(p.size()) < k) return false;
    std::vector<int> colors;
    color_sort(g, p, colors);
    if (colors.back() < k) return false;
    for (int i = static_cast<int>(p.size()) - 1; i >= 0; --i) {
      if (colors[i] < k) return false;
      const int v = p[i];
      std::vector<int> next;
      next.reserve(i);
      for (int j = 0; j < i; ++j)
        if (g.connected(v, p[j])) next.push_back(p[j]);
      if (exists(std::move(next), k - 1)) return true;
    }
    return false;
  }
};

}  // namespace

std::vector<int> max_clique_greedy(const DenseGraph& g) {
  if (g.n == 0) return {};
  std::vector<int> order = degeneracy_order(g);
  std::reverse(order.begin(), order.end());
  std::vector<int> clique;
  for (int v : order) {
    bool ok = true;
    for (int u : clique) {
      if (!g.connected(u, v)) {
        ok = false;
        break;
      }
    }
    if (ok) clique.push_back(v);
  }
  std::sort(clique.begin(), clique.end());
  return clique;
}

std::vector<int> max_clique_exact(const DenseGraph& g) {
  if (g.n == 0) return {};

  Searcher search{g};
  search.best_size = static_cast<int>(max_clique_greedy(g).size());

  std::vector<int> all(g.n);
  std::iota(all.begin(), all.end(), 0);
  std::vector<int> current;
  search.expand(current, all);
  const int target = search.best_size;

  // The search above fixes the maximum size; rebuild the lexicographically
  // smallest clique of that size by greedy extension with feasibility
  // queries.
  std::vector<int> chosen;
  std::vector<int> candidates = all;
  while (static_cast<int>(chosen.size()) < target) {
    for (int v : candidates) {
      std::vector<int> rest;
      for (int u : candidates)
        if (u > v && g.connected(u, v)) rest.push_back(u);
      const int need = target - static_cast<int>(chosen.size()) - 1;
      if (search.exists(rest, need)) {
        chosen.push_back(v);
        candidates = std::move(rest);
        break;
      }
    }
  }
  return chosen;
}

}  // namespace metrsem
