#include <map>
#include <random>

#include <catch_amalgamated.hpp>

#include "netgad/graph.hpp"
#include "oracles.hpp"

using namespace netgad;

namespace {

const std::string kMd5 = "0123456789abcdef0123456789abcdef";

NetConnEvent ev(const char* machine, const char* src, const char* dst,
                int64_t ts = 0) {
  NetConnEvent e;
  e.machine_id = machine;
  e.timestamp = ts;
  e.md5 = kMd5;
  e.pid = 1;
  e.src_ip = *Ipv4::parse(src);
  e.dst_ip = *Ipv4::parse(dst);
  return e;
}

MachineDirectory plain_dir() {
  MachineDirectory dir;
  dir.internal_cidrs = parse_cidr_list("10.0.0.0/8");
  return dir;
}

}  // namespace

TEST_CASE("adjacency counts are direction-agnostic") {
  auto dir = plain_dir();
  std::vector<NetConnEvent> events = {
      ev("a", "10.0.0.1", "10.0.0.2"),
      ev("b", "10.0.0.2", "10.0.0.1"),
      ev("a", "10.0.0.1", "10.0.0.2"),
  };
  CommGraph g = build_adjacency(events, dir);
  REQUIRE(g.size() == 2);
  Matrix c = g.dense_counts();
  CHECK(c(0, 1) == 3);
  CHECK(c(1, 0) == 3);
  CHECK(c(0, 0) == 0);
  CHECK(g.edges.size() == 1);
}

TEST_CASE("node order is lexicographic by machine key") {
  auto dir = plain_dir();
  dir.inventory[*Ipv4::parse("10.0.0.9")] = {MachineType::M, "m001"};
  std::vector<NetConnEvent> events = {
      ev("x", "10.0.0.9", "10.0.0.3"),
      ev("x", "10.0.0.2", "10.0.0.9"),
  };
  CommGraph g = build_adjacency(events, dir);
  REQUIRE(g.size() == 3);
  CHECK(g.keys == std::vector<std::string>{"10.0.0.2", "10.0.0.3", "m001"});
  CHECK(g.index.at("m001") == 2);
  CHECK(g.ips[2] == *Ipv4::parse("10.0.0.9"));
}

TEST_CASE("random adjacency matches a brute-force pair counter") {
  auto dir = plain_dir();
  std::mt19937_64 rng(11);
  std::vector<NetConnEvent> events;
  for (int i = 0; i < 500; ++i) {
    int a = int(rng() % 20), b = int(rng() % 20);
    if (a == b) continue;
    char src[16], dst[16];
    std::snprintf(src, sizeof(src), "10.0.0.%d", a + 1);
    std::snprintf(dst, sizeof(dst), "10.0.0.%d", b + 1);
    events.push_back(ev("m", src, dst));
  }
  CommGraph g = build_adjacency(events, dir);
  Matrix c = g.dense_counts();

  std::map<std::pair<std::string, std::string>, int> counter;
  for (const auto& e : events) {
    std::string a = e.src_ip.str(), b = e.dst_ip.str();
    if (b < a) std::swap(a, b);
    counter[{a, b}] += 1;
  }
  int64_t total = 0;
  for (const auto& [pair, n] : counter) {
    int i = g.index.at(pair.first), j = g.index.at(pair.second);
    CHECK(c(i, j) == n);
    CHECK(c(j, i) == n);
    total += n;
  }
  CHECK(c.sum() == 2 * total);
}

TEST_CASE("self-pair events create no edge") {
  auto dir = plain_dir();
  // Two IPs of the same inventoried machine: same key on both ends.
  dir.inventory[*Ipv4::parse("10.0.0.1")] = {MachineType::M, "m001"};
  dir.inventory[*Ipv4::parse("10.0.0.2")] = {MachineType::M, "m001"};
  std::vector<NetConnEvent> events = {ev("m001", "10.0.0.1", "10.0.0.2"),
                                      ev("m001", "10.0.0.1", "10.0.0.3")};
  CommGraph g = build_adjacency(events, dir);
  CHECK(g.size() == 2);  // m001 and 10.0.0.3
  CHECK(g.edges.size() == 1);
}

TEST_CASE("empty event set yields an empty graph") {
  auto dir = plain_dir();
  CommGraph g = build_adjacency({}, dir);
  CHECK(g.size() == 0);
  CHECK(g.dense_counts().rows() == 0);
}

TEST_CASE("min-max normalization endpoints and midpoint") {
  // A two-node window has a single pair weight, so min == max and the
  // whole window is degenerate no matter the count.
  Matrix c = Matrix::Zero(2, 2);
  c(0, 1) = c(1, 0) = 10;
  auto r2 = minmax_normalize(c);
  CHECK(r2.degenerate);
  CHECK(r2.normalized.isZero());

  Matrix c3 = Matrix::Zero(3, 3);
  c3(0, 1) = c3(1, 0) = 2;
  c3(0, 2) = c3(2, 0) = 4;
  c3(1, 2) = c3(2, 1) = 6;

  auto r3 = minmax_normalize(c3);
  CHECK(r3.normalized(0, 1) == 0.0);   // min weight
  CHECK(r3.normalized(0, 2) == 0.5);   // midpoint
  CHECK(r3.normalized(1, 2) == 1.0);   // max weight
  CHECK(r3.normalized.diagonal().isZero());
}

TEST_CASE("degenerate windows normalize to zero") {
  Matrix same = Matrix::Zero(3, 3);
  same(0, 1) = same(1, 0) = 5;
  same(0, 2) = same(2, 0) = 5;
  same(1, 2) = same(2, 1) = 5;
  auto r = minmax_normalize(same);
  CHECK(r.degenerate);
  CHECK(r.normalized.isZero());

  auto r1 = minmax_normalize(Matrix::Zero(1, 1));
  CHECK(r1.degenerate);
}

TEST_CASE("normalization matches the scalar oracle on random matrices") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    int n = 2 + int(rng() % 9);
    Matrix c = oracle::random_symmetric_counts(rng, n, 50);
    auto got = minmax_normalize(c);
    Matrix want = oracle::minmax_adjacency(c);
    REQUIRE((got.normalized - want).cwiseAbs().maxCoeff() < 1e-12);
    // monotonicity: larger count never maps below a smaller one
    bool monotone = true;
    for (int i = 0; i < n && monotone; ++i)
      for (int j = 0; j < n && monotone; ++j)
        for (int k = 0; k < n && monotone; ++k)
          for (int l = 0; l < n && monotone; ++l)
            if (i != j && k != l && c(i, j) >= c(k, l))
              monotone = got.normalized(i, j) >= got.normalized(k, l);
    CHECK(monotone);
  }
}

TEST_CASE("partitions are balanced, disjoint and seeded") {
  std::vector<std::string> machines;
  for (int i = 0; i < 10; ++i) machines.push_back("m" + std::to_string(i));

  auto one = partition_nodes(machines, 1, 42);
  REQUIRE(one.size() == 1);
  CHECK(one[0].size() == 10);

  auto four = partition_nodes(machines, 4, 42);
  REQUIRE(four.size() == 4);
  std::multiset<size_t> sizes;
  std::set<std::string> seen;
  for (const auto& g : four) {
    sizes.insert(g.size());
    for (const auto& m : g) CHECK(seen.insert(m).second);  // disjoint
  }
  CHECK(seen.size() == 10);
  CHECK(sizes == std::multiset<size_t>{2, 2, 3, 3});

  CHECK(partition_nodes(machines, 4, 42) == four);  // same seed, same groups
  bool differs = false;
  for (uint64_t s = 0; s < 100 && !differs; ++s)
    differs = partition_nodes(machines, 4, 1000 + s) != four;
  CHECK(differs);

  CHECK_THROWS_AS(partition_nodes(machines, 0, 1), ConfigError);
  CHECK_THROWS_AS(partition_nodes(machines, 11, 1), ConfigError);
}

TEST_CASE("graph save and load preserve structure") {
  auto dir = plain_dir();
  std::vector<NetConnEvent> events = {ev("a", "10.0.0.1", "10.0.0.2"),
                                      ev("b", "10.0.0.2", "10.0.0.3"),
                                      ev("c", "10.0.0.1", "10.0.0.2")};
  CommGraph g = build_adjacency(events, dir);
  save_graph(g, "test_nodes_tmp.tsv", "test_edges_tmp.tsv");
  CommGraph back = load_graph("test_nodes_tmp.tsv", "test_edges_tmp.tsv");
  CHECK(back.keys == g.keys);
  CHECK(back.dense_counts() == g.dense_counts());
  std::remove("test_nodes_tmp.tsv");
  std::remove("test_edges_tmp.tsv");

  std::ofstream bad_edges("test_edges_bad.tsv");
  bad_edges << "0 9 5\n";  // node index out of range
  bad_edges.close();
  std::ofstream nodes("test_nodes_tmp.tsv");
  nodes << "a\t10.0.0.1\nb\t10.0.0.2\n";
  nodes.close();
  CHECK_THROWS_AS(load_graph("test_nodes_tmp.tsv", "test_edges_bad.tsv"), IoError);
  std::remove("test_nodes_tmp.tsv");
  std::remove("test_edges_bad.tsv");
}
