#include <random>

#include <catch_amalgamated.hpp>

#include "netgad/node2vec.hpp"

using namespace netgad;

namespace {

// Graph built directly from weighted pairs; keys are single letters.
CommGraph make_graph(int n, const std::vector<std::tuple<int, int, int64_t>>& edges) {
  CommGraph g;
  for (int i = 0; i < n; ++i) {
    g.keys.push_back(std::string(1, char('a' + i)));
    g.index[g.keys.back()] = i;
    g.ips.push_back(Ipv4{0x0A000001u + uint32_t(i)});
  }
  for (auto [i, j, w] : edges) g.edges[{std::min(i, j), std::max(i, j)}] = w;
  g.rebuild_adjacency();
  return g;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

}  // namespace

TEST_CASE("walks on a single edge alternate endpoints") {
  CommGraph g = make_graph(2, {{0, 1, 3}});
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    auto walk = random_walk(g, 0, 5, rng);
    REQUIRE(walk.size() == 5);
    for (size_t s = 0; s < walk.size(); ++s)
      CHECK(walk[s] == int(s % 2));
  }
}

TEST_CASE("walk transition frequency follows edge weight") {
  // star: a-b weight 99, a-c weight 1
  CommGraph g = make_graph(3, {{0, 1, 99}, {0, 2, 1}});
  std::mt19937_64 rng(7);
  int to_b = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    auto walk = random_walk(g, 0, 2, rng);
    REQUIRE(walk.size() == 2);
    if (walk[1] == 1) ++to_b;
  }
  double frequency = double(to_b) / trials;
  CHECK(frequency > 0.98);
  CHECK(frequency < 1.0);
}

TEST_CASE("dead-end walks stop early") {
  CommGraph g = make_graph(3, {{0, 1, 1}});  // c is isolated
  std::mt19937_64 rng(3);
  auto walk = random_walk(g, 2, 5, rng);
  REQUIRE(walk.size() == 1);
  CHECK(walk[0] == 2);
}

TEST_CASE("clique separation: intra beats inter cosine") {
  // two disjoint 5-cliques
  std::vector<std::tuple<int, int, int64_t>> edges;
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j) {
      edges.push_back({i, j, 5});
      edges.push_back({i + 5, j + 5, 5});
    }
  CommGraph g = make_graph(10, edges);
  Node2vecConfig cfg;
  cfg.seed = 11;
  Embedding emb = node2vec_embed(g, cfg);

  double intra = 0, inter = 0;
  int n_intra = 0, n_inter = 0;
  for (int i = 0; i < 10; ++i)
    for (int j = i + 1; j < 10; ++j) {
      double c = cosine(emb.raw.row(i), emb.raw.row(j));
      if ((i < 5) == (j < 5)) {
        intra += c;
        ++n_intra;
      } else {
        inter += c;
        ++n_inter;
      }
    }
  CHECK(intra / n_intra > inter / n_inter);
}

TEST_CASE("embedding is deterministic per seed") {
  CommGraph g = make_graph(6, {{0, 1, 2}, {1, 2, 1}, {2, 3, 4}, {3, 4, 1},
                               {4, 5, 2}, {5, 0, 3}});
  Node2vecConfig cfg;
  cfg.seed = 42;
  Embedding a = node2vec_embed(g, cfg);
  Embedding b = node2vec_embed(g, cfg);
  CHECK(a.raw == b.raw);
  CHECK(a.normalized == b.normalized);

  cfg.seed = 43;
  Embedding c = node2vec_embed(g, cfg);
  CHECK(a.raw != c.raw);
}

TEST_CASE("isolated nodes embed to zero rows") {
  CommGraph g = make_graph(4, {{0, 1, 1}, {1, 2, 1}});  // d isolated
  Node2vecConfig cfg;
  cfg.seed = 9;
  Embedding emb = node2vec_embed(g, cfg);
  REQUIRE(emb.isolated.size() == 4);
  CHECK(emb.isolated[3] == 1);
  CHECK(emb.isolated[0] == 0);
  CHECK(emb.raw.row(3).isZero());
  CHECK(emb.normalized.row(3).isZero());

  // normalization is per-dimension over the connected rows only
  for (int d = 0; d < cfg.dim; ++d) {
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < 3; ++i) {
      lo = std::min(lo, emb.normalized(i, d));
      hi = std::max(hi, emb.normalized(i, d));
    }
    CHECK(lo >= 0.0);
    CHECK(hi <= 1.0);
    CHECK(lo == 0.0);  // the minimum row pins to zero
    CHECK(hi == 1.0);  // the maximum row pins to one
  }
}

TEST_CASE("requested shape is honored") {
  CommGraph g = make_graph(3, {{0, 1, 1}, {1, 2, 2}});
  Node2vecConfig cfg;
  cfg.dim = 4;
  cfg.seed = 2;
  Embedding emb = node2vec_embed(g, cfg);
  CHECK(emb.raw.rows() == 3);
  CHECK(emb.raw.cols() == 4);
}
