#pragma once

// Synthetic EDR netconn generator: a fleet of monitored machines with
// stable habits (shared internal servers, a few external services, a
// per-machine process mix) plus background novelty noise, and injectors
// for a C2/messenger attack pattern and a server enumeration burst.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "netgad/ingest.hpp"

namespace netgad {

struct PopulationConfig {
  int n_machines = 200;
  int n_shared_servers = 4;
  int n_external_services = 10;
  int servers_per_machine = 0;    // 0 = every machine talks to all servers
  int externals_per_machine = 3;
  double events_per_machine_per_day = 100.0;  // Poisson mean per machine-day
  int days = 9;
  int core_processes = 6;      // run by every machine, system paths
  int common_processes = 12;   // each machine runs a stable subset
  int uncommon_processes = 6;  // run by few machines
  double behavioral_noise = 0.25;  // count and mix jitter; 0 = deterministic counts
  double p_new_external = 0.08;  // per machine-day chance of one fresh peer IP
  double p_new_process = 0.12;   // per machine-day chance of one fresh md5
  std::string start_date = "2025-03-02";
  uint64_t seed = 1;
};

namespace synthdetail {

inline std::string make_md5(uint64_t tag_hash, uint64_t n) {
  uint64_t s = tag_hash ^ (n * 0x2545f4914f6cdd1dULL);
  uint64_t a = splitmix64(s);
  uint64_t b = splitmix64(s);
  char buf[33];
  std::snprintf(buf, sizeof(buf), "%016llx%016llx",
                static_cast<unsigned long long>(a),
                static_cast<unsigned long long>(b));
  return buf;
}

inline uint64_t tag_hash(std::string_view tag) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline double unit(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace synthdetail

// One process in the shared pool.
struct PoolProcess {
  std::string md5;
  std::string path;
  double base_weight = 1.0;
  int tier = 0;  // 0 core, 1 common, 2 uncommon
};

// Stable per-machine habits drawn once at fleet construction.
struct MachineTraits {
  std::vector<int> servers;             // server indices this machine uses
  std::vector<int> externals;           // stable external service indices
  std::vector<double> process_weights;  // per pool entry; 0 = never runs it
};

struct Fleet {
  PopulationConfig cfg;
  int64_t start_day = 0;
  std::vector<std::string> machine_ids;
  std::vector<Ipv4> machine_ips;
  std::vector<Ipv4> server_ips;
  std::vector<Ipv4> external_ips;
  std::vector<PoolProcess> pool;
  std::vector<MachineTraits> traits;
  MachineDirectory directory;
  SubsetSpec subset;  // the monitored fleet

  int64_t final_day() const {
    return start_day + int64_t(cfg.days - 1) * kSecondsPerDay;
  }
};

struct SynthResult {
  Fleet fleet;
  std::vector<NetConnEvent> events;  // sorted by time, then content
};

namespace synthdetail {

inline void sort_events(std::vector<NetConnEvent>& events) {
  std::sort(events.begin(), events.end(),
            [](const NetConnEvent& a, const NetConnEvent& b) {
              if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
              if (a.machine_id != b.machine_id) return a.machine_id < b.machine_id;
              if (a.md5 != b.md5) return a.md5 < b.md5;
              if (a.pid != b.pid) return a.pid < b.pid;
              if (a.src_ip != b.src_ip) return a.src_ip < b.src_ip;
              return a.dst_ip < b.dst_ip;
            });
}

}  // namespace synthdetail

inline Fleet build_fleet(const PopulationConfig& cfg) {
  if (cfg.n_machines < 1 || cfg.n_shared_servers < 1 || cfg.days < 1)
    throw ConfigError("population needs at least one machine, server and day");
  if (cfg.n_machines > 60000 || cfg.n_shared_servers > 250 ||
      cfg.n_external_services > 250)
    throw ConfigError("population size out of supported range");
  auto start = parse_date(cfg.start_date);
  if (!start) throw ConfigError("bad start_date: " + cfg.start_date);

  Fleet fleet;
  fleet.cfg = cfg;
  fleet.start_day = *start;

  for (int i = 0; i < cfg.n_machines; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "m%03d", i);
    fleet.machine_ids.push_back(id);
    fleet.machine_ips.push_back(
        Ipv4{(10u << 24) | (1u << 16) | (uint32_t(i / 250) << 8) |
             uint32_t(i % 250 + 1)});
  }
  for (int i = 0; i < cfg.n_shared_servers; ++i)
    fleet.server_ips.push_back(Ipv4{(10u << 24) | uint32_t(i + 1)});
  for (int i = 0; i < cfg.n_external_services; ++i)
    fleet.external_ips.push_back(
        Ipv4{(198u << 24) | (51u << 16) | (100u << 8) | uint32_t(i + 1)});

  // Process pool: core system services, common line-of-business tools,
  // uncommon utilities.
  uint64_t pool_tag = synthdetail::tag_hash("pool");
  int pool_index = 0;
  auto add_proc = [&](const std::string& path, double weight, int tier) {
    fleet.pool.push_back(
        {synthdetail::make_md5(pool_tag ^ cfg.seed, uint64_t(pool_index)), path,
         weight, tier});
    ++pool_index;
  };
  for (int k = 0; k < cfg.core_processes; ++k)
    add_proc("C:\\Windows\\System32\\coresvc" + std::to_string(k) + ".exe", 20.0, 0);
  for (int k = 0; k < cfg.common_processes; ++k)
    add_proc("C:\\Program Files\\Vendor" + std::to_string(k) + "\\agent.exe", 5.0, 1);
  for (int k = 0; k < cfg.uncommon_processes; ++k)
    add_proc(k % 2 == 0
                 ? "C:\\Users\\operator\\AppData\\Local\\tool" + std::to_string(k) +
                       ".exe"
                 : "D:\\deploy\\util" + std::to_string(k) + ".exe",
             2.0, 2);

  // Per-machine habits.
  std::mt19937_64 rng(derive_seed(cfg.seed, "fleet"));
  const int servers_used =
      cfg.servers_per_machine > 0
          ? std::min(cfg.servers_per_machine, cfg.n_shared_servers)
          : cfg.n_shared_servers;
  const int externals_used =
      std::min(std::max(cfg.externals_per_machine, 1), cfg.n_external_services);
  for (int i = 0; i < cfg.n_machines; ++i) {
    MachineTraits t;
    std::vector<int> all_servers(cfg.n_shared_servers);
    for (int k = 0; k < cfg.n_shared_servers; ++k) all_servers[k] = k;
    std::shuffle(all_servers.begin(), all_servers.end(), rng);
    t.servers.assign(all_servers.begin(), all_servers.begin() + servers_used);
    std::sort(t.servers.begin(), t.servers.end());

    std::vector<int> all_ext(cfg.n_external_services);
    for (int k = 0; k < cfg.n_external_services; ++k) all_ext[k] = k;
    std::shuffle(all_ext.begin(), all_ext.end(), rng);
    t.externals.assign(all_ext.begin(), all_ext.begin() + externals_used);
    std::sort(t.externals.begin(), t.externals.end());

    t.process_weights.assign(fleet.pool.size(), 0.0);
    for (size_t k = 0; k < fleet.pool.size(); ++k) {
      const PoolProcess& p = fleet.pool[k];
      double use = p.tier == 0 ? 1.0 : (p.tier == 1 ? 0.5 : 0.08);
      double jitter =
          1.0 + cfg.behavioral_noise * (2.0 * synthdetail::unit(rng) - 1.0);
      bool used = synthdetail::unit(rng) < use;
      t.process_weights[k] = used ? p.base_weight * std::max(0.1, jitter) : 0.0;
    }
    fleet.traits.push_back(std::move(t));
  }

  // Directory and monitored subset.
  fleet.directory.internal_cidrs = {*Cidr::parse("10.0.0.0/8")};
  for (int i = 0; i < cfg.n_machines; ++i)
    fleet.directory.inventory[fleet.machine_ips[i]] = {MachineType::M,
                                                       fleet.machine_ids[i]};
  for (Ipv4 ip : fleet.server_ips)
    fleet.directory.inventory[ip] = {MachineType::S, ""};
  fleet.subset.cidrs = {*Cidr::parse("10.1.0.0/16")};
  return fleet;
}

// Generates the benign event stream for the whole period.
inline SynthResult generate_population(const PopulationConfig& cfg) {
  SynthResult out;
  out.fleet = build_fleet(cfg);
  Fleet& fleet = out.fleet;
  uint64_t noise_tag = synthdetail::tag_hash("noise") ^ cfg.seed;

  for (int day = 0; day < cfg.days; ++day) {
    int64_t day_begin = fleet.start_day + int64_t(day) * kSecondsPerDay;
    for (int i = 0; i < cfg.n_machines; ++i) {
      const MachineTraits& traits = fleet.traits[i];
      std::mt19937_64 rng(
          derive_seed(cfg.seed, "machine-day", uint64_t(day) * 1000003ULL + i));

      // Daily event volume.
      int count;
      if (cfg.behavioral_noise == 0.0) {
        count = int(std::lround(cfg.events_per_machine_per_day));
      } else {
        double jitter = 1.0 + cfg.behavioral_noise *
                                  (2.0 * synthdetail::unit(rng) - 1.0);
        std::poisson_distribution<int> pois(
            std::max(0.05, jitter) * cfg.events_per_machine_per_day);
        count = pois(rng);
      }

      // Daily peer mix: servers carry most traffic.
      struct Peer {
        Ipv4 ip;
        double weight;
        bool server;
      };
      std::vector<Peer> peers;
      for (int s : traits.servers) {
        double j = 1.0 + cfg.behavioral_noise * (2.0 * synthdetail::unit(rng) - 1.0);
        peers.push_back({fleet.server_ips[s],
                         0.70 / traits.servers.size() * std::max(0.1, j), true});
      }
      for (int e : traits.externals) {
        double j = 1.0 + cfg.behavioral_noise * (2.0 * synthdetail::unit(rng) - 1.0);
        peers.push_back({fleet.external_ips[e],
                         0.30 / traits.externals.size() * std::max(0.1, j), false});
      }
      double peer_total = 0;
      for (const Peer& p : peers) peer_total += p.weight;

      // Daily process activity and pid pools.
      double proc_total = 0;
      for (double w : traits.process_weights) proc_total += w;
      std::vector<std::vector<int64_t>> pid_pools(fleet.pool.size());
      auto pids_for = [&](size_t proc) -> std::vector<int64_t>& {
        auto& pool = pid_pools[proc];
        if (pool.empty()) {
          int n = 1 + int(rng() % 3);
          for (int k = 0; k < n; ++k)
            pool.push_back(800 + int64_t(rng() % 64000));
        }
        return pool;
      };

      auto emit = [&](Ipv4 peer, bool outgoing, const std::string& md5,
                      int64_t pid, const std::string& path, int64_t ts) {
        NetConnEvent e;
        e.machine_id = fleet.machine_ids[i];
        e.timestamp = ts;
        e.md5 = md5;
        e.pid = pid;
        e.src_ip = outgoing ? fleet.machine_ips[i] : peer;
        e.dst_ip = outgoing ? peer : fleet.machine_ips[i];
        e.path = path;
        out.events.push_back(std::move(e));
      };

      for (int ev = 0; ev < count; ++ev) {
        double pick = synthdetail::unit(rng) * peer_total;
        const Peer* peer = &peers.back();
        double acc = 0;
        for (const Peer& p : peers) {
          acc += p.weight;
          if (pick < acc) {
            peer = &p;
            break;
          }
        }
        double ppick = synthdetail::unit(rng) * proc_total;
        size_t proc = fleet.pool.size() - 1;
        acc = 0;
        for (size_t k = 0; k < fleet.pool.size(); ++k) {
          acc += traits.process_weights[k];
          if (ppick < acc) {
            proc = k;
            break;
          }
        }
        auto& pids = pids_for(proc);
        int64_t pid = pids[rng() % pids.size()];
        bool outgoing = synthdetail::unit(rng) < (peer->server ? 0.9 : 0.95);
        int64_t ts = day_begin + int64_t(rng() % kSecondsPerDay);
        emit(peer->ip, outgoing, fleet.pool[proc].md5, pid, fleet.pool[proc].path,
             ts);
      }

      // Background novelty: an occasional fresh peer or fresh process.
      if (synthdetail::unit(rng) < cfg.p_new_external) {
        uint32_t slot = uint32_t(day) * uint32_t(cfg.n_machines) + uint32_t(i);
        Ipv4 fresh{(100u << 24) | (64u << 16) | ((slot / 250 % 256) << 8) |
                   (slot % 250 + 1)};
        int n = 1 + int(rng() % 3);
        size_t proc = 0;
        double ppick = synthdetail::unit(rng) * proc_total;
        double acc2 = 0;
        for (size_t k = 0; k < fleet.pool.size(); ++k) {
          acc2 += traits.process_weights[k];
          if (ppick < acc2) {
            proc = k;
            break;
          }
        }
        auto& pids = pids_for(proc);
        for (int k = 0; k < n; ++k)
          emit(fresh, true, fleet.pool[proc].md5, pids[rng() % pids.size()],
               fleet.pool[proc].path, day_begin + int64_t(rng() % kSecondsPerDay));
      }
      if (synthdetail::unit(rng) < cfg.p_new_process) {
        std::string md5 = synthdetail::make_md5(
            noise_tag, uint64_t(day) * 1000003ULL + uint64_t(i));
        std::string path =
            "C:\\Users\\operator\\Downloads\\run" + std::to_string(day) + ".exe";
        int64_t pid = 800 + int64_t(rng() % 64000);
        int n = 1 + int(rng() % 3);
        for (int k = 0; k < n; ++k) {
          const Peer& p = peers[rng() % peers.size()];
          emit(p.ip, true, md5, pid,
               path, day_begin + int64_t(rng() % kSecondsPerDay));
        }
      }
    }
  }
  synthdetail::sort_events(out.events);
  return out;
}

// ------------------------------------------------------------ injection

struct AttackSpec {
  int n_targets = 2;
  int inbound_per_channel = 8;
  int outbound_per_channel = 7;
  std::vector<std::string> targets;  // explicit machine ids; empty = random
  uint64_t seed = 0;
};

struct InjectionRecord {
  std::vector<std::string> targets;
  std::vector<std::string> attacker_ips;
  std::string md5;
  int64_t day = 0;
  size_t n_events = 0;
};

namespace synthdetail {

inline std::vector<std::string> active_machines(const SynthResult& data,
                                                int64_t day_begin) {
  std::set<std::string> active;
  for (const NetConnEvent& e : data.events)
    if (e.timestamp >= day_begin && e.timestamp < day_begin + kSecondsPerDay)
      active.insert(e.machine_id);
  std::vector<std::string> ids;
  for (const std::string& id : data.fleet.machine_ids)
    if (active.count(id)) ids.push_back(id);
  return ids;
}

}  // namespace synthdetail

// Plants the two-channel exfiltration pattern on the final day: per
// target and channel, 8 inbound and 7 outbound events against a fresh
// external IP, all through one fresh pathless process.
inline InjectionRecord inject_attack(SynthResult& data, const AttackSpec& spec) {
  const Fleet& fleet = data.fleet;
  int64_t day_begin = fleet.final_day();
  std::mt19937_64 rng(derive_seed(spec.seed, "attack"));

  std::vector<std::string> targets = spec.targets;
  std::vector<std::string> active = synthdetail::active_machines(data, day_begin);
  if (targets.empty()) {
    if (int(active.size()) < spec.n_targets)
      throw ConfigError("not enough active machines to attack");
    std::shuffle(active.begin(), active.end(), rng);
    targets.assign(active.begin(), active.begin() + spec.n_targets);
    std::sort(targets.begin(), targets.end());
  } else {
    std::set<std::string> act(active.begin(), active.end());
    for (const std::string& t : targets)
      if (!act.count(t))
        throw ConfigError("attack target not active in final window: " + t);
  }

  InjectionRecord rec;
  rec.targets = targets;
  rec.day = day_begin;
  rec.md5 = synthdetail::make_md5(synthdetail::tag_hash("attack") ^ spec.seed,
                                  rng());

  // Two channels: the compromised-server C2 and the messenger relay.
  std::set<uint32_t> used;
  std::vector<Ipv4> channel_ips;
  while (channel_ips.size() < 2) {
    uint32_t last = 1 + uint32_t(rng() % 250);
    if (!used.insert(last).second) continue;
    channel_ips.push_back(Ipv4{(203u << 24) | (0u << 16) | (113u << 8) | last});
    rec.attacker_ips.push_back(channel_ips.back().str());
  }

  for (const std::string& target : targets) {
    auto it = std::find(fleet.machine_ids.begin(), fleet.machine_ids.end(), target);
    Ipv4 target_ip = fleet.machine_ips[it - fleet.machine_ids.begin()];
    int64_t pid = 800 + int64_t(rng() % 64000);
    for (Ipv4 channel : channel_ips) {
      for (int k = 0; k < spec.inbound_per_channel; ++k) {
        NetConnEvent e{target, day_begin + int64_t(rng() % kSecondsPerDay),
                       rec.md5, pid, channel, target_ip, ""};
        data.events.push_back(std::move(e));
        ++rec.n_events;
      }
      for (int k = 0; k < spec.outbound_per_channel; ++k) {
        NetConnEvent e{target, day_begin + int64_t(rng() % kSecondsPerDay),
                       rec.md5, pid, target_ip, channel, ""};
        data.events.push_back(std::move(e));
        ++rec.n_events;
      }
    }
  }
  synthdetail::sort_events(data.events);
  return rec;
}

// Plants a working-hours server enumeration burst on the final day: 19
// events from one machine across all shared servers with a fresh md5.
inline InjectionRecord inject_bruteforce(SynthResult& data,
                                         const std::string& target_id,
                                         int n_events = 19, uint64_t seed = 0) {
  const Fleet& fleet = data.fleet;
  int64_t day_begin = fleet.final_day();
  std::mt19937_64 rng(derive_seed(seed, "bruteforce"));

  std::string target = target_id;
  std::vector<std::string> active = synthdetail::active_machines(data, day_begin);
  if (target.empty()) {
    if (active.empty()) throw ConfigError("no active machine to target");
    target = active[rng() % active.size()];
  } else if (std::find(active.begin(), active.end(), target) == active.end()) {
    throw ConfigError("bruteforce target not active in final window: " + target);
  }

  auto it = std::find(fleet.machine_ids.begin(), fleet.machine_ids.end(), target);
  Ipv4 target_ip = fleet.machine_ips[it - fleet.machine_ids.begin()];

  InjectionRecord rec;
  rec.targets = {target};
  rec.day = day_begin;
  rec.md5 =
      synthdetail::make_md5(synthdetail::tag_hash("bruteforce") ^ seed, rng());

  int64_t pid = 800 + int64_t(rng() % 64000);
  const int64_t work_start = 8 * 3600, work_span = 9 * 3600;  // 08:00 to 17:00
  for (int k = 0; k < n_events; ++k) {
    Ipv4 server = fleet.server_ips[k % fleet.server_ips.size()];
    NetConnEvent e{target, day_begin + work_start + int64_t(rng() % work_span),
                   rec.md5, pid, target_ip, server, ""};
    data.events.push_back(std::move(e));
    ++rec.n_events;
  }
  synthdetail::sort_events(data.events);
  return rec;
}

// ------------------------------------------------------------ output

inline void write_events(const std::vector<NetConnEvent>& events,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write events: " + path);
  for (const NetConnEvent& e : events) out << serialize_event(e) << '\n';
}

inline nlohmann::json injection_to_json(const InjectionRecord& rec,
                                        const std::string& kind) {
  return {{"kind", kind},
          {"targets", rec.targets},
          {"attacker_ips", rec.attacker_ips},
          {"md5", rec.md5},
          {"date", format_date(rec.day)},
          {"n_events", rec.n_events}};
}

}  // namespace netgad
