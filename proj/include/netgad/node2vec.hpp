#pragma once

// Graph node embeddings: weighted random walks plus skip-gram with
// negative sampling over the walk corpus.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "netgad/graph.hpp"

namespace netgad {

struct Node2vecConfig {
  int dim = 10;
  int walk_len = 5;        // nodes per walk
  int walks_per_node = 10;
  int window = 2;          // skip-gram context radius
  int negatives = 5;
  int epochs = 5;
  double lr = 0.025;
  uint64_t seed = 0;
};

struct Embedding {
  Matrix raw;         // |M| x dim, learned input vectors
  Matrix normalized;  // per-dimension min-max over non-isolated rows
  std::vector<uint8_t> isolated;  // 1 where the node had no edges
};

// One weighted random walk; the next hop is chosen proportionally to
// edge weight. Stops early at a node without neighbors.
inline std::vector<int> random_walk(const CommGraph& g, int start, int len,
                                    std::mt19937_64& rng) {
  std::vector<int> walk{start};
  int cur = start;
  for (int step = 1; step < len; ++step) {
    const auto& nbrs = g.adjacency[cur];
    if (nbrs.empty()) break;
    double total = 0;
    for (const auto& [node, w] : nbrs) total += static_cast<double>(w);
    double pick = std::uniform_real_distribution<double>(0.0, total)(rng);
    int next = nbrs.back().first;
    double acc = 0;
    for (const auto& [node, w] : nbrs) {
      acc += static_cast<double>(w);
      if (pick < acc) {
        next = node;
        break;
      }
    }
    walk.push_back(next);
    cur = next;
  }
  return walk;
}

inline Embedding node2vec_embed(const CommGraph& g, const Node2vecConfig& cfg) {
  const int n = g.size();
  Embedding out;
  out.raw = Matrix::Zero(n, cfg.dim);
  out.normalized = Matrix::Zero(n, cfg.dim);
  out.isolated.assign(n, 0);
  for (int i = 0; i < n; ++i)
    if (g.adjacency[i].empty()) out.isolated[i] = 1;
  if (n == 0) return out;

  std::mt19937_64 rng(cfg.seed);

  // Walk corpus.
  std::vector<std::vector<int>> walks;
  walks.reserve(static_cast<size_t>(n) * cfg.walks_per_node);
  for (int node = 0; node < n; ++node) {
    if (out.isolated[node]) continue;
    for (int w = 0; w < cfg.walks_per_node; ++w)
      walks.push_back(random_walk(g, node, cfg.walk_len, rng));
  }
  if (walks.empty()) return out;

  // Unigram^0.75 negative-sampling distribution over walk tokens.
  std::vector<double> counts(n, 0.0);
  for (const auto& walk : walks)
    for (int node : walk) counts[node] += 1.0;
  std::vector<double> cum(n, 0.0);
  double total = 0;
  for (int i = 0; i < n; ++i) {
    total += counts[i] > 0 ? std::pow(counts[i], 0.75) : 0.0;
    cum[i] = total;
  }
  auto sample_negative = [&](std::mt19937_64& r) {
    double pick = std::uniform_real_distribution<double>(0.0, total)(r);
    return static_cast<int>(std::lower_bound(cum.begin(), cum.end(), pick) -
                            cum.begin());
  };

  // Input (u) and output (v) vectors.
  Matrix u(n, cfg.dim), v = Matrix::Zero(n, cfg.dim);
  std::uniform_real_distribution<double> init(-0.5 / cfg.dim, 0.5 / cfg.dim);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < cfg.dim; ++d) u(i, d) = init(rng);

  auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  Eigen::RowVectorXd accum(cfg.dim);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& walk : walks) {
      const int len = static_cast<int>(walk.size());
      for (int center = 0; center < len; ++center) {
        const int w = walk[center];
        for (int c = std::max(0, center - cfg.window);
             c <= std::min(len - 1, center + cfg.window); ++c) {
          if (c == center) continue;
          const int ctx = walk[c];
          accum.setZero();
          for (int s = 0; s <= cfg.negatives; ++s) {
            int target;
            double label;
            if (s == 0) {
              target = ctx;
              label = 1.0;
            } else {
              target = sample_negative(rng);
              if (target == ctx) continue;
              label = 0.0;
            }
            double f = sigmoid(u.row(w).dot(v.row(target)));
            double gcoef = (label - f) * cfg.lr;
            accum += gcoef * v.row(target);
            v.row(target) += gcoef * u.row(w);
          }
          u.row(w) += accum;
        }
      }
    }
  }

  for (int i = 0; i < n; ++i)
    if (!out.isolated[i]) out.raw.row(i) = u.row(i);

  // Column-wise min-max over non-isolated rows; isolated rows stay zero.
  for (int d = 0; d < cfg.dim; ++d) {
    double lo = 0, hi = 0;
    bool first = true;
    for (int i = 0; i < n; ++i) {
      if (out.isolated[i]) continue;
      double x = out.raw(i, d);
      lo = first ? x : std::min(lo, x);
      hi = first ? x : std::max(hi, x);
      first = false;
    }
    if (first || hi <= lo) continue;
    for (int i = 0; i < n; ++i)
      if (!out.isolated[i])
        out.normalized(i, d) = (out.raw(i, d) - lo) / (hi - lo);
  }
  return out;
}

}  // namespace netgad
