#include <random>
#include <sstream>

#include <catch_amalgamated.hpp>

#include "netgad/ingest.hpp"

using namespace netgad;

namespace {

std::string line(const std::string& machine, int64_t ts, const std::string& md5,
                 int64_t pid, const std::string& src, const std::string& dst,
                 const std::string& path = "") {
  nlohmann::json j{{"machine_id", machine}, {"timestamp", ts},   {"md5", md5},
                   {"pid", pid},            {"src_ip", src},     {"dst_ip", dst}};
  if (!path.empty()) j["path"] = path;
  return j.dump();
}

const std::string kMd5 = "0123456789abcdef0123456789abcdef";

}  // namespace

TEST_CASE("well formed lines parse in order") {
  std::istringstream in(line("m001", 100, kMd5, 4, "10.1.0.1", "10.0.0.1") + "\n" +
                        line("m002", 200, kMd5, 5, "10.1.0.2", "10.0.0.1") + "\n" +
                        line("m003", 300, kMd5, 6, "10.1.0.3", "10.0.0.1") + "\n");
  ParseStats stats;
  auto events = parse_events(in, &stats);
  REQUIRE(events.size() == 3);
  CHECK(stats.parsed == 3);
  CHECK(stats.skipped == 0);
  CHECK(events[0].machine_id == "m001");
  CHECK(events[1].timestamp == 200);
  CHECK(events[2].pid == 6);
  CHECK(events[0].src_ip.str() == "10.1.0.1");
}

TEST_CASE("empty stream yields nothing") {
  std::istringstream in("");
  ParseStats stats;
  CHECK(parse_events(in, &stats).empty());
  CHECK(stats.skipped == 0);
}

TEST_CASE("malformed lines are skipped and tallied") {
  std::string bad_md5 = line("m", 1, "0123456789abcdef0123456789abcde", 1,
                             "10.0.0.1", "10.0.0.2");  // 31 chars
  std::istringstream in(line("m", 1, kMd5, 1, "10.0.0.1", "10.0.0.2") + "\n" +
                        bad_md5 + "\n" +
                        "not json at all\n" +
                        line("m", 1, kMd5, 1, "10.0.0.1", "10.0.0.2") + "\n");
  ParseStats stats;
  auto events = parse_events(in, &stats);
  CHECK(events.size() == 2);
  CHECK(stats.skipped == 2);
}

TEST_CASE("field validation") {
  auto ok = [](const std::string& l) { return parse_event_line(l).has_value(); };

  SECTION("md5 must be 32 hex chars, case-normalized") {
    CHECK_FALSE(ok(line("m", 1, "xyz", 1, "1.1.1.1", "2.2.2.2")));
    CHECK_FALSE(ok(line("m", 1, std::string(32, 'g'), 1, "1.1.1.1", "2.2.2.2")));
    auto upper = parse_event_line(
        line("m", 1, "0123456789ABCDEF0123456789ABCDEF", 1, "1.1.1.1", "2.2.2.2"));
    REQUIRE(upper.has_value());
    CHECK(upper->md5 == kMd5);
  }
  SECTION("missing keys rejected") {
    nlohmann::json j{{"machine_id", "m"}, {"timestamp", 1}, {"md5", kMd5},
                     {"pid", 1},          {"src_ip", "1.1.1.1"}};
    CHECK_FALSE(ok(j.dump()));  // no dst_ip
  }
  SECTION("same source and destination rejected") {
    CHECK_FALSE(ok(line("m", 1, kMd5, 1, "1.1.1.1", "1.1.1.1")));
  }
  SECTION("negative pid rejected") {
    CHECK_FALSE(ok(line("m", 1, kMd5, -4, "1.1.1.1", "2.2.2.2")));
  }
  SECTION("timestamp accepts ISO strings") {
    nlohmann::json j{{"machine_id", "m"}, {"timestamp", "2025-03-02T00:00:10Z"},
                     {"md5", kMd5},       {"pid", 1},
                     {"src_ip", "1.1.1.1"}, {"dst_ip", "2.2.2.2"}};
    auto e = parse_event_line(j.dump());
    REQUIRE(e.has_value());
    CHECK(e->timestamp == 1740873610);
  }
  SECTION("null path becomes empty") {
    nlohmann::json j{{"machine_id", "m"}, {"timestamp", 1}, {"md5", kMd5},
                     {"pid", 1},          {"src_ip", "1.1.1.1"},
                     {"dst_ip", "2.2.2.2"}, {"path", nullptr}};
    auto e = parse_event_line(j.dump());
    REQUIRE(e.has_value());
    CHECK(e->path.empty());
  }
}

TEST_CASE("serialize then parse is the identity") {
  NetConnEvent e;
  e.machine_id = "m042";
  e.timestamp = 1740873600;
  e.md5 = kMd5;
  e.pid = 4242;
  e.src_ip = *Ipv4::parse("10.1.0.42");
  e.dst_ip = *Ipv4::parse("10.0.0.1");
  e.path = "C:\\Windows\\System32\\svchost.exe";
  auto back = parse_event_line(serialize_event(e));
  REQUIRE(back.has_value());
  CHECK(back->machine_id == e.machine_id);
  CHECK(back->timestamp == e.timestamp);
  CHECK(back->md5 == e.md5);
  CHECK(back->pid == e.pid);
  CHECK(back->src_ip == e.src_ip);
  CHECK(back->dst_ip == e.dst_ip);
  CHECK(back->path == e.path);
}

TEST_CASE("machine labeling follows locality then inventory") {
  MachineDirectory dir;
  dir.internal_cidrs = parse_cidr_list("10.0.0.0/8");
  dir.inventory[*Ipv4::parse("10.0.0.5")] = {MachineType::S, ""};
  dir.inventory[*Ipv4::parse("10.1.0.7")] = {MachineType::M, "m007"};

  auto s = dir.label(*Ipv4::parse("10.0.0.5"));
  CHECK(s.locality == Locality::Internal);
  CHECK(s.type == MachineType::S);

  auto ext = dir.label(*Ipv4::parse("8.8.8.8"));
  CHECK(ext.locality == Locality::External);
  CHECK(ext.type == MachineType::E);  // external is always E

  auto unknown = dir.label(*Ipv4::parse("10.9.9.9"));
  CHECK(unknown.locality == Locality::Internal);
  CHECK(unknown.type == MachineType::I);  // internal fallback

  CHECK(dir.machine_key(*Ipv4::parse("10.1.0.7")) == "m007");
  CHECK(dir.machine_key(*Ipv4::parse("10.0.0.5")) == "10.0.0.5");  // no id
  CHECK(dir.machine_key(*Ipv4::parse("8.8.8.8")) == "8.8.8.8");
}

TEST_CASE("inventory file round trip and validation") {
  MachineDirectory dir;
  dir.internal_cidrs = parse_cidr_list("10.0.0.0/8");
  dir.inventory[*Ipv4::parse("10.1.0.1")] = {MachineType::M, "m001"};
  dir.inventory[*Ipv4::parse("10.0.0.1")] = {MachineType::S, ""};

  std::string path = "test_inventory_tmp.tsv";
  dir.save(path);
  auto loaded = MachineDirectory::load(dir.internal_cidrs, path);
  CHECK(loaded.inventory.size() == 2);
  CHECK(loaded.inventory.at(*Ipv4::parse("10.1.0.1")).machine_id == "m001");
  CHECK(loaded.inventory.at(*Ipv4::parse("10.0.0.1")).type == MachineType::S);
  std::remove(path.c_str());

  std::ofstream bad("test_inventory_bad.tsv");
  bad << "10.0.0.1\tQ\n";  // no such type code
  bad.close();
  CHECK_THROWS_AS(MachineDirectory::load(dir.internal_cidrs, "test_inventory_bad.tsv"),
                  ConfigError);
  std::remove("test_inventory_bad.tsv");
}

TEST_CASE("subset filtering keeps events touching the subset") {
  MachineDirectory dir;
  dir.internal_cidrs = parse_cidr_list("10.0.0.0/8");

  std::vector<NetConnEvent> events;
  auto push = [&](const char* src, const char* dst) {
    NetConnEvent e;
    e.machine_id = "m";
    e.timestamp = 1;
    e.md5 = kMd5;
    e.pid = 1;
    e.src_ip = *Ipv4::parse(src);
    e.dst_ip = *Ipv4::parse(dst);
    events.push_back(e);
  };
  push("10.1.0.1", "10.0.0.9");   // src in subset
  push("10.0.0.9", "10.1.0.2");   // dst in subset
  push("10.0.0.9", "10.0.0.8");   // neither

  SubsetSpec all;  // empty spec matches everything
  CHECK(filter_subset(events, all, dir).size() == 3);

  SubsetSpec fleet;
  fleet.cidrs = parse_cidr_list("10.1.0.0/16");
  auto kept = filter_subset(events, fleet, dir);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].src_ip.str() == "10.1.0.1");
  CHECK(kept[1].dst_ip.str() == "10.1.0.2");

  SubsetSpec by_id;
  by_id.ids.insert("10.0.0.8");  // machine-key match (no inventory id here)
  CHECK(filter_subset(events, by_id, dir).size() == 1);
}

TEST_CASE("window selection is half-open") {
  std::vector<NetConnEvent> events;
  for (int64_t ts : {0L, 50L, 86399L, 86400L, 86401L}) {
    NetConnEvent e;
    e.machine_id = "m";
    e.timestamp = ts;
    e.md5 = kMd5;
    e.pid = 1;
    e.src_ip = *Ipv4::parse("1.1.1.1");
    e.dst_ip = *Ipv4::parse("2.2.2.2");
    events.push_back(e);
  }
  auto in_first = window_events(events, {0, kSecondsPerDay});
  REQUIRE(in_first.size() == 3);  // 0 included, 86400 excluded
  CHECK(in_first.front().timestamp == 0);
  CHECK(in_first.back().timestamp == 86399);

  auto in_second = window_events(events, {kSecondsPerDay, kSecondsPerDay});
  CHECK(in_second.size() == 2);  // boundary event lands in the next window
}

TEST_CASE("subset filter commutes with windowing") {
  std::mt19937_64 rng(7);
  MachineDirectory dir;
  dir.internal_cidrs = parse_cidr_list("10.0.0.0/8");
  SubsetSpec subset;
  subset.cidrs = parse_cidr_list("10.1.0.0/16");

  std::vector<NetConnEvent> events;
  for (int i = 0; i < 1000; ++i) {
    NetConnEvent e;
    e.machine_id = "m";
    e.timestamp = int64_t(rng() % (3 * kSecondsPerDay));
    e.md5 = kMd5;
    e.pid = 1;
    uint32_t a = uint32_t(rng()), b = uint32_t(rng());
    e.src_ip = Ipv4{(rng() % 2 ? 0x0A010000u : 0x0A000000u) | (a & 0xFFFF)};
    e.dst_ip = Ipv4{(rng() % 2 ? 0x0A010000u : 0x0A000000u) | (b & 0xFFFF)};
    if (e.src_ip == e.dst_ip) continue;
    events.push_back(e);
  }
  WindowSpec w{kSecondsPerDay, kSecondsPerDay};
  auto a = filter_subset(window_events(events, w), subset, dir);
  auto b = window_events(filter_subset(events, subset, dir), w);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].timestamp == b[i].timestamp);
    CHECK(a[i].src_ip == b[i].src_ip);
  }
}
