#pragma once

// EDR netconn log ingestion: JSONL parsing, machine labeling through an
// inventory, monitored-subset filtering and time-window selection.

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "netgad/util.hpp"

namespace netgad {

// One agent-reported network connection.
struct NetConnEvent {
  std::string machine_id;  // reporting agent
  int64_t timestamp = 0;   // epoch seconds, UTC
  std::string md5;         // process image hash, 32 lowercase hex
  int64_t pid = 0;
  Ipv4 src_ip;
  Ipv4 dst_ip;
  std::string path;  // process image path; may be empty
};

struct ParseStats {
  size_t parsed = 0;
  size_t skipped = 0;
};

namespace detail {

inline bool valid_md5(std::string& md5) {
  if (md5.size() != 32) return false;
  for (char& c : md5) {
    if (c >= 'A' && c <= 'F') c = char(c - 'A' + 'a');
    bool hex = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
    if (!hex) return false;
  }
  return true;
}

}  // namespace detail

// Parses one JSONL line. Returns false on any malformed field.
inline bool parse_event_line(std::string_view line, NetConnEvent& out) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return false;

  auto ms = j.find("machine_id");
  auto ts = j.find("timestamp");
  auto md = j.find("md5");
  auto pd = j.find("pid");
  auto si = j.find("src_ip");
  auto di = j.find("dst_ip");
  if (ms == j.end() || ts == j.end() || md == j.end() || pd == j.end() ||
      si == j.end() || di == j.end())
    return false;

  if (!ms->is_string() || ms->get_ref<const std::string&>().empty()) return false;
  out.machine_id = ms->get<std::string>();

  if (ts->is_number_integer()) {
    out.timestamp = ts->get<int64_t>();
  } else if (ts->is_string()) {
    auto parsed = parse_timestamp(ts->get_ref<const std::string&>());
    if (!parsed) return false;
    out.timestamp = *parsed;
  } else {
    return false;
  }

  if (!md->is_string()) return false;
  out.md5 = md->get<std::string>();
  if (!detail::valid_md5(out.md5)) return false;

  if (!pd->is_number_integer() || pd->get<int64_t>() < 0) return false;
  out.pid = pd->get<int64_t>();

  if (!si->is_string() || !di->is_string()) return false;
  auto src = Ipv4::parse(si->get_ref<const std::string&>());
  auto dst = Ipv4::parse(di->get_ref<const std::string&>());
  if (!src || !dst || *src == *dst) return false;
  out.src_ip = *src;
  out.dst_ip = *dst;

  out.path.clear();
  auto pa = j.find("path");
  if (pa != j.end()) {
    if (!pa->is_string() && !pa->is_null()) return false;
    if (pa->is_string()) out.path = pa->get<std::string>();
  }
  return true;
}

inline std::optional<NetConnEvent> parse_event_line(std::string_view line) {
  NetConnEvent e;
  if (!parse_event_line(line, e)) return std::nullopt;
  return e;
}

// Reads JSONL events from a stream. Malformed lines are skipped and
// tallied; an unreadable stream is fatal.
inline std::vector<NetConnEvent> parse_events(std::istream& in,
                                              ParseStats* stats = nullptr) {
  if (!in) throw IoError("event stream is not readable");
  std::vector<NetConnEvent> events;
  ParseStats local;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    NetConnEvent e;
    if (parse_event_line(line, e)) {
      events.push_back(std::move(e));
      ++local.parsed;
    } else {
      ++local.skipped;
    }
  }
  if (in.bad()) throw IoError("I/O error while reading event stream");
  if (stats) *stats = local;
  return events;
}

inline std::vector<NetConnEvent> parse_events_file(const std::string& path,
                                                   ParseStats* stats = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open event file: " + path);
  return parse_events(in, stats);
}

// Canonical JSONL form (keys sorted, timestamp as epoch integer).
inline std::string serialize_event(const NetConnEvent& e) {
  nlohmann::json j{{"machine_id", e.machine_id}, {"timestamp", e.timestamp},
                   {"md5", e.md5},               {"pid", e.pid},
                   {"src_ip", e.src_ip.str()},   {"dst_ip", e.dst_ip.str()}};
  if (!e.path.empty()) j["path"] = e.path;
  return j.dump();
}

// ------------------------------------------------------------ labeling

enum class Locality { Internal, External };

// Organization role of a machine. External endpoints are always E;
// internal ones default to I when the inventory has no entry.
enum class MachineType { M, S, W, I, E };

inline char machine_type_code(MachineType t) {
  switch (t) {
    case MachineType::M: return 'M';
    case MachineType::S: return 'S';
    case MachineType::W: return 'W';
    case MachineType::I: return 'I';
    case MachineType::E: return 'E';
  }
  return '?';
}

inline std::optional<MachineType> machine_type_from_code(char c) {
  switch (c) {
    case 'M': return MachineType::M;
    case 'S': return MachineType::S;
    case 'W': return MachineType::W;
    case 'I': return MachineType::I;
    case 'E': return MachineType::E;
  }
  return std::nullopt;
}

struct MachineLabel {
  Locality locality = Locality::External;
  MachineType type = MachineType::E;
};

struct InventoryEntry {
  MachineType type = MachineType::I;
  std::string machine_id;  // empty when the endpoint runs no agent
};

// Resolves IPs to localities, roles and machine-keys. The inventory maps
// known internal IPs to their role and, for monitored machines, their id.
struct MachineDirectory {
  std::vector<Cidr> internal_cidrs;
  std::map<Ipv4, InventoryEntry> inventory;

  bool is_internal(Ipv4 ip) const {
    return std::any_of(internal_cidrs.begin(), internal_cidrs.end(),
                       [&](const Cidr& c) { return c.contains(ip); });
  }

  // Total: every IP gets a label.
  MachineLabel label(Ipv4 ip) const {
    if (!is_internal(ip)) return {Locality::External, MachineType::E};
    auto it = inventory.find(ip);
    if (it == inventory.end()) return {Locality::Internal, MachineType::I};
    return {Locality::Internal, it->second.type};
  }

  // machine_id for monitored machines, the IP string otherwise.
  std::string machine_key(Ipv4 ip) const {
    auto it = inventory.find(ip);
    if (it != inventory.end() && !it->second.machine_id.empty())
      return it->second.machine_id;
    return ip.str();
  }

  // TSV rows: ip <TAB> type [<TAB> machine_id]
  static MachineDirectory load(const std::vector<Cidr>& internal,
                               const std::string& inventory_path) {
    MachineDirectory dir;
    dir.internal_cidrs = internal;
    if (inventory_path.empty()) return dir;
    std::ifstream in(inventory_path);
    if (!in) throw IoError("cannot open inventory: " + inventory_path);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      auto cols = split(t, '\t');
      if (cols.size() < 2)
        throw ConfigError("inventory line " + std::to_string(lineno) +
                          ": expected ip<TAB>type[<TAB>machine_id]");
      auto ip = Ipv4::parse(trim(cols[0]));
      std::string tc = trim(cols[1]);
      auto type = tc.size() == 1 ? machine_type_from_code(tc[0]) : std::nullopt;
      if (!ip || !type)
        throw ConfigError("inventory line " + std::to_string(lineno) +
                          ": bad ip or type");
      InventoryEntry entry;
      entry.type = *type;
      if (cols.size() > 2) entry.machine_id = trim(cols[2]);
      dir.inventory[*ip] = entry;
    }
    return dir;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write inventory: " + path);
    for (const auto& [ip, entry] : inventory) {
      out << ip.str() << '\t' << machine_type_code(entry.type);
      if (!entry.machine_id.empty()) out << '\t' << entry.machine_id;
      out << '\n';
    }
  }
};

// ------------------------------------------------------------ subsets

// Monitored subset selector: CIDR ranges and/or explicit machine ids.
// An empty spec selects everything.
struct SubsetSpec {
  std::vector<Cidr> cidrs;
  std::set<std::string> ids;

  bool empty() const { return cidrs.empty() && ids.empty(); }

  bool matches_ip(Ipv4 ip, const MachineDirectory& dir) const {
    if (empty()) return true;
    for (const Cidr& c : cidrs)
      if (c.contains(ip)) return true;
    return !ids.empty() && ids.count(dir.machine_key(ip)) > 0;
  }
};

// Keeps events with at least one endpoint in the subset. Communication
// between two subset members stays a single event.
inline std::vector<NetConnEvent> filter_subset(std::span<const NetConnEvent> events,
                                               const SubsetSpec& subset,
                                               const MachineDirectory& dir) {
  std::vector<NetConnEvent> out;
  out.reserve(events.size());
  for (const NetConnEvent& e : events)
    if (subset.matches_ip(e.src_ip, dir) || subset.matches_ip(e.dst_ip, dir))
      out.push_back(e);
  return out;
}

// ------------------------------------------------------------ windows

// Half-open interval [start, start + width).
struct WindowSpec {
  int64_t start = 0;
  int64_t width = kSecondsPerDay;

  bool contains(int64_t ts) const { return ts >= start && ts < start + width; }
  int64_t end() const { return start + width; }
};

inline std::vector<NetConnEvent> window_events(std::span<const NetConnEvent> events,
                                               const WindowSpec& w) {
  std::vector<NetConnEvent> out;
  for (const NetConnEvent& e : events)
    if (w.contains(e.timestamp)) out.push_back(e);
  return out;
}

}  // namespace netgad
