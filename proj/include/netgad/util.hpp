#pragma once

// Small shared utilities: IPv4/CIDR handling, UTC date arithmetic,
// seed derivation and number formatting used across the pipeline.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace netgad {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- IPv4

struct Ipv4 {
  uint32_t bits = 0;  // host byte order

  static std::optional<Ipv4> parse(std::string_view s) {
    uint32_t value = 0;
    int octets = 0;
    size_t pos = 0;
    while (octets < 4) {
      size_t dot = s.find('.', pos);
      std::string_view part =
          (octets == 3) ? s.substr(pos)
                        : (dot == std::string_view::npos ? std::string_view{}
                                                         : s.substr(pos, dot - pos));
      if (part.empty() || part.size() > 3) return std::nullopt;
      unsigned octet = 0;
      auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), octet);
      if (ec != std::errc{} || ptr != part.data() + part.size() || octet > 255)
        return std::nullopt;
      value = (value << 8) | octet;
      ++octets;
      if (octets < 4) pos = dot + 1;
    }
    return Ipv4{value};
  }

  std::string str() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u", (bits >> 24) & 0xff,
                  (bits >> 16) & 0xff, (bits >> 8) & 0xff, bits & 0xff);
    return buf;
  }

  auto operator<=>(const Ipv4&) const = default;
};

struct Cidr {
  Ipv4 base;
  int prefix = 32;

  static std::optional<Cidr> parse(std::string_view s) {
    size_t slash = s.find('/');
    int prefix = 32;
    std::string_view addr = s;
    if (slash != std::string_view::npos) {
      addr = s.substr(0, slash);
      std::string_view p = s.substr(slash + 1);
      auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), prefix);
      if (ec != std::errc{} || ptr != p.data() + p.size() || prefix < 0 || prefix > 32)
        return std::nullopt;
    }
    auto ip = Ipv4::parse(addr);
    if (!ip) return std::nullopt;
    return Cidr{*ip, prefix};
  }

  bool contains(Ipv4 ip) const {
    if (prefix == 0) return true;
    uint32_t mask = prefix == 32 ? 0xffffffffu : ~((1u << (32 - prefix)) - 1);
    return (ip.bits & mask) == (base.bits & mask);
  }

  std::string str() const { return base.str() + "/" + std::to_string(prefix); }
};

inline std::vector<Cidr> parse_cidr_list(std::string_view csv) {
  std::vector<Cidr> out;
  size_t pos = 0;
  while (pos <= csv.size()) {
    size_t comma = csv.find(',', pos);
    std::string_view item = csv.substr(
        pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) {
      auto c = Cidr::parse(item);
      if (!c) throw ConfigError("bad CIDR: " + std::string(item));
      out.push_back(*c);
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

// ---------------------------------------------------------------- time

constexpr int64_t kSecondsPerDay = 86400;

// Days since 1970-01-01 for a proleptic Gregorian civil date.
constexpr int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097LL + static_cast<int>(doe) - 719468;
}

struct CivilDate {
  int year;
  unsigned month;
  unsigned day;
};

constexpr CivilDate civil_from_days(int64_t z) {
  z += 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int64_t y = static_cast<int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return {static_cast<int>(y + (m <= 2)), m, d};
}

inline int64_t day_start(int64_t ts) {
  int64_t d = ts >= 0 ? ts / kSecondsPerDay : (ts - kSecondsPerDay + 1) / kSecondsPerDay;
  return d * kSecondsPerDay;
}

inline std::string format_date(int64_t ts) {
  CivilDate c = civil_from_days(day_start(ts) / kSecondsPerDay);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", c.year, c.month, c.day);
  return buf;
}

inline std::string format_datetime(int64_t ts) {
  int64_t ds = day_start(ts);
  CivilDate c = civil_from_days(ds / kSecondsPerDay);
  int64_t rem = ts - ds;
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02dZ", c.year, c.month,
                c.day, int(rem / 3600), int((rem / 60) % 60), int(rem % 60));
  return buf;
}

// "YYYY-MM-DD" -> epoch seconds at UTC midnight.
inline std::optional<int64_t> parse_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0, d = 0;
  auto num = [&](size_t off, size_t len, auto& out) {
    auto [ptr, ec] = std::from_chars(s.data() + off, s.data() + off + len, out);
    return ec == std::errc{} && ptr == s.data() + off + len;
  };
  if (!num(0, 4, y) || !num(5, 2, m) || !num(8, 2, d)) return std::nullopt;
  if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
  return days_from_civil(y, m, d) * kSecondsPerDay;
}

// Epoch seconds as a bare integer, or ISO-8601 "YYYY-MM-DD[Thh:mm:ss[Z]]"
// (space accepted in place of 'T').
inline std::optional<int64_t> parse_timestamp(std::string_view s) {
  if (s.empty()) return std::nullopt;
  bool digits = (s[0] == '-' && s.size() > 1) || (s[0] >= '0' && s[0] <= '9');
  if (digits) {
    size_t i = s[0] == '-' ? 1 : 0;
    for (; i < s.size(); ++i)
      if (s[i] < '0' || s[i] > '9') { digits = false; break; }
  }
  if (digits) {
    int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc{} && ptr == s.data() + s.size()) return v;
    return std::nullopt;
  }
  auto date = parse_date(s.substr(0, 10));
  if (!date) return std::nullopt;
  if (s.size() == 10) return date;
  if (s.size() < 19 || (s[10] != 'T' && s[10] != ' ')) return std::nullopt;
  if (s[13] != ':' || s[16] != ':') return std::nullopt;
  int hh = 0, mm = 0, ss = 0;
  auto num = [&](size_t off, int& out) {
    auto [ptr, ec] = std::from_chars(s.data() + off, s.data() + off + 2, out);
    return ec == std::errc{} && ptr == s.data() + off + 2;
  };
  if (!num(11, hh) || !num(14, mm) || !num(17, ss)) return std::nullopt;
  if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
  std::string_view tail = s.substr(19);
  if (!tail.empty() && tail != "Z" && tail != "+00:00") return std::nullopt;
  return *date + hh * 3600 + mm * 60 + ss;
}

// ---------------------------------------------------------------- seeds

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic stream-independent seed for a named sub-component.
inline uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t salt = 0) {
  uint64_t h = 1469598103934665603ULL;  // FNV-1a over the tag
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  uint64_t state = master ^ h;
  splitmix64(state);
  state ^= salt * 0x9e3779b97f4a7c15ULL;
  return splitmix64(state);
}

// ---------------------------------------------------------------- misc

// Shortest decimal form that round-trips a double exactly.
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (true) {
    size_t next = s.find(sep, pos);
    if (next == std::string_view::npos) {
      out.emplace_back(s.substr(pos));
      break;
    }
    out.emplace_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

inline std::string trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace netgad
