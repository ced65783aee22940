#pragma once

// Per-window communication graph: undirected event counts between
// machine-keys, min-max normalization and node partitioning.

#include <fstream>
#include <map>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "netgad/ingest.hpp"
#include "netgad/util.hpp"

namespace netgad {

using Matrix = Eigen::MatrixXd;

// Undirected weighted communication graph over one time window.
// Nodes are machine-keys in lexicographic order; edge weights count
// events between the pair in either direction. Storage is sparse.
struct CommGraph {
  std::vector<std::string> keys;  // row index -> machine-key, sorted
  std::vector<Ipv4> ips;          // representative IP observed per node
  std::unordered_map<std::string, int> index;
  std::map<std::pair<int, int>, int64_t> edges;  // canonical (i < j) -> count
  std::vector<std::vector<std::pair<int, int64_t>>> adjacency;  // neighbor, weight

  int size() const { return static_cast<int>(keys.size()); }

  int64_t edge_count(int i, int j) const {
    if (i == j) return 0;
    auto it = edges.find(i < j ? std::make_pair(i, j) : std::make_pair(j, i));
    return it == edges.end() ? 0 : it->second;
  }

  Matrix dense_counts() const {
    Matrix c = Matrix::Zero(size(), size());
    for (const auto& [pair, count] : edges) {
      c(pair.first, pair.second) = static_cast<double>(count);
      c(pair.second, pair.first) = static_cast<double>(count);
    }
    return c;
  }

  void rebuild_adjacency() {
    adjacency.assign(size(), {});
    for (const auto& [pair, count] : edges) {
      adjacency[pair.first].emplace_back(pair.second, count);
      adjacency[pair.second].emplace_back(pair.first, count);
    }
  }
};

// Builds the window graph from (already filtered and windowed) events.
// Every IP appearing as src or dst becomes a node under its machine-key.
inline CommGraph build_adjacency(std::span<const NetConnEvent> events,
                                 const MachineDirectory& dir) {
  CommGraph g;
  std::map<std::string, Ipv4> seen;  // key -> first IP observed
  for (const NetConnEvent& e : events) {
    seen.emplace(dir.machine_key(e.src_ip), e.src_ip);
    seen.emplace(dir.machine_key(e.dst_ip), e.dst_ip);
  }
  g.keys.reserve(seen.size());
  for (const auto& [key, ip] : seen) {  // std::map iterates lexicographically
    g.index.emplace(key, static_cast<int>(g.keys.size()));
    g.keys.push_back(key);
    g.ips.push_back(ip);
  }
  for (const NetConnEvent& e : events) {
    int i = g.index.at(dir.machine_key(e.src_ip));
    int j = g.index.at(dir.machine_key(e.dst_ip));
    if (i == j) continue;  // same key via different IPs
    if (i > j) std::swap(i, j);
    g.edges[{i, j}] += 1;
  }
  g.rebuild_adjacency();
  return g;
}

struct MinmaxResult {
  Matrix normalized;
  bool degenerate = false;  // all observed weights equal; output is all zero
  double min = 0;
  double max = 0;
};

// Normalizes a symmetric count matrix to [0, 1]. The min and max are
// taken over all off-diagonal cells, so absent edges contribute zeros.
// The diagonal stays zero.
inline MinmaxResult minmax_normalize(const Matrix& c) {
  const Eigen::Index n = c.rows();
  MinmaxResult r;
  r.normalized = Matrix::Zero(n, n);
  if (n < 2) {
    r.degenerate = true;
    return r;
  }
  double lo = c(0, 1), hi = c(0, 1);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      lo = std::min(lo, c(i, j));
      hi = std::max(hi, c(i, j));
    }
  r.min = lo;
  r.max = hi;
  if (hi <= lo) {
    r.degenerate = true;
    return r;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) r.normalized(i, j) = (c(i, j) - lo) / (hi - lo);
  return r;
}

// Random partition into k groups whose sizes differ by at most one.
// Deterministic for a fixed seed; k = 1 returns the input as one group.
inline std::vector<std::vector<std::string>> partition_nodes(
    std::vector<std::string> machines, int k, uint64_t seed) {
  if (k < 1) throw ConfigError("partition count must be >= 1");
  if (size_t(k) > machines.size())
    throw ConfigError("cannot split " + std::to_string(machines.size()) +
                      " machines into " + std::to_string(k) + " groups");
  std::sort(machines.begin(), machines.end());
  std::mt19937_64 rng(seed);
  std::shuffle(machines.begin(), machines.end(), rng);
  std::vector<std::vector<std::string>> groups(k);
  for (size_t i = 0; i < machines.size(); ++i)
    groups[i % k].push_back(std::move(machines[i]));
  for (auto& g : groups) std::sort(g.begin(), g.end());
  return groups;
}

// ------------------------------------------------------------ storage

// Node file: one machine-key and its representative IP per line, in row
// order. Edge file: "i j count" triples.
inline void save_graph(const CommGraph& g, const std::string& node_path,
                       const std::string& edge_path) {
  std::ofstream nodes(node_path);
  if (!nodes) throw IoError("cannot write " + node_path);
  for (int i = 0; i < g.size(); ++i)
    nodes << g.keys[i] << '\t' << g.ips[i].str() << '\n';
  std::ofstream edges(edge_path);
  if (!edges) throw IoError("cannot write " + edge_path);
  for (const auto& [pair, count] : g.edges)
    edges << pair.first << ' ' << pair.second << ' ' << count << '\n';
}

inline CommGraph load_graph(const std::string& node_path,
                            const std::string& edge_path) {
  CommGraph g;
  std::ifstream nodes(node_path);
  if (!nodes) throw IoError("cannot open " + node_path);
  std::string line;
  while (std::getline(nodes, line)) {
    std::string t = trim(line);
    if (t.empty()) continue;
    auto cols = split(t, '\t');
    auto ip = cols.size() > 1 ? Ipv4::parse(cols[1]) : std::nullopt;
    g.index.emplace(cols[0], static_cast<int>(g.keys.size()));
    g.keys.push_back(cols[0]);
    g.ips.push_back(ip.value_or(Ipv4{}));
  }
  std::ifstream edges(edge_path);
  if (!edges) throw IoError("cannot open " + edge_path);
  int i, j;
  int64_t count;
  while (edges >> i >> j >> count) {
    if (i < 0 || j < 0 || i >= g.size() || j >= g.size() || i >= j)
      throw IoError("bad edge row in " + edge_path);
    g.edges[{i, j}] = count;
  }
  g.rebuild_adjacency();
  return g;
}

}  // namespace netgad
