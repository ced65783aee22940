#pragma once

// Anomaly scoring: self-difference ratio against a machine's own recent
// reconstruction errors, final score and verdict, residual explanations,
// and the persistent per-machine RE history.

#include <algorithm>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "netgad/model.hpp"

namespace netgad {

struct ScoreConfig {
  double tr = 0.0;               // anomaly threshold; presets supply it
  int selfdiff_window = 9;       // prior windows averaged
  double selfdiff_cap = 100.0;   // ratio cap when the prior mean is zero
  int retention = 30;            // history records kept per machine
  double explain_threshold = 0.2;
};

// RE_now / mean(recent REs). No history is neutral (1); a zero prior
// mean with positive RE saturates at the cap.
inline double self_difference(double re_now, std::span<const double> priors,
                              double cap = 100.0) {
  if (re_now < 0.0) throw NumericError("negative reconstruction error");
  if (priors.empty()) return 1.0;
  double mean = 0.0;
  for (double p : priors) {
    if (p < 0.0) throw NumericError("negative reconstruction error in history");
    mean += p;
  }
  mean /= static_cast<double>(priors.size());
  if (mean == 0.0) return re_now > 0.0 ? cap : 1.0;
  return re_now / mean;
}

// ------------------------------------------------------------ history

struct HistoryRecord {
  int64_t day = 0;  // window start, epoch seconds
  double re = 0.0;
};

// Per-machine record of recent window REs; the only state that crosses
// window boundaries.
class ScoreHistory {
 public:
  // REs of the most recent n windows strictly before `day`, newest last.
  std::vector<double> recent(const std::string& machine, int64_t day,
                             int n) const {
    std::vector<double> out;
    auto it = records_.find(machine);
    if (it == records_.end()) return out;
    const auto& recs = it->second;  // kept sorted by day
    for (auto r = recs.rbegin(); r != recs.rend() && int(out.size()) < n; ++r)
      if (r->day < day) out.push_back(r->re);
    std::reverse(out.begin(), out.end());
    return out;
  }

  // Appends one window's REs. A second record for the same machine and
  // day is rejected; retention keeps only the newest records.
  void update(int64_t day, const std::vector<std::pair<std::string, double>>& res,
              int retention) {
    for (const auto& [machine, re] : res) {
      auto& recs = records_[machine];
      for (const HistoryRecord& r : recs)
        if (r.day == day)
          throw ConfigError("history already has " + machine + " at " +
                            format_date(day));
      recs.push_back({day, re});
      std::sort(recs.begin(), recs.end(),
                [](const HistoryRecord& a, const HistoryRecord& b) {
                  return a.day < b.day;
                });
      if (retention > 0 && int(recs.size()) > retention)
        recs.erase(recs.begin(), recs.end() - retention);
    }
  }

  const std::map<std::string, std::vector<HistoryRecord>>& records() const {
    return records_;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write history: " + path);
    for (const auto& [machine, recs] : records_)
      for (const HistoryRecord& r : recs)
        out << machine << '\t' << format_date(r.day) << '\t'
            << format_double(r.re) << '\n';
  }

  static ScoreHistory load(const std::string& path) {
    ScoreHistory h;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open history: " + path);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string t = trim(line);
      if (t.empty()) continue;
      auto cols = split(t, '\t');
      auto day = cols.size() == 3 ? parse_date(cols[1]) : std::nullopt;
      if (!day)
        throw IoError("bad history line " + std::to_string(lineno) + " in " + path);
      h.records_[cols[0]].push_back({*day, std::strtod(cols[2].c_str(), nullptr)});
    }
    for (auto& [machine, recs] : h.records_)
      std::sort(recs.begin(), recs.end(),
                [](const HistoryRecord& a, const HistoryRecord& b) {
                  return a.day < b.day;
                });
    return h;
  }

 private:
  std::map<std::string, std::vector<HistoryRecord>> records_;
};

// ------------------------------------------------------------ explanations

struct Explanation {
  std::string name;  // "peer:<machine-key>" or a feature column name
  double truth = 0.0;
  double reconstructed = 0.0;
  double residual = 0.0;  // reconstructed - truth
};

// Residual explanation for one node: every adjacency cell and feature
// column whose absolute residual exceeds the threshold, largest first.
inline std::vector<Explanation> explain_node(
    int node, const Matrix& cm, const Matrix& cm_hat, const Matrix& x,
    const Matrix& fm_hat, const std::vector<std::string>& keys,
    const std::vector<std::string>& feature_names, double threshold) {
  std::vector<Explanation> out;
  for (Eigen::Index j = 0; j < cm.cols(); ++j) {
    double r = cm_hat(node, j) - cm(node, j);
    if (std::abs(r) > threshold)
      out.push_back({"peer:" + keys[j], cm(node, j), cm_hat(node, j), r});
  }
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double r = fm_hat(node, j) - x(node, j);
    if (std::abs(r) > threshold)
      out.push_back({feature_names[j], x(node, j), fm_hat(node, j), r});
  }
  std::sort(out.begin(), out.end(), [](const Explanation& a, const Explanation& b) {
    if (std::abs(a.residual) != std::abs(b.residual))
      return std::abs(a.residual) > std::abs(b.residual);
    return a.name < b.name;
  });
  return out;
}

// ------------------------------------------------------------ verdicts

struct MachineScore {
  std::string machine;
  double re = 0.0;
  double am = 0.0, sf = 0.0, emb = 0.0, po = 0.0, pf = 0.0;
  double self_diff = 1.0;
  double final_score = 0.0;
  bool anomalous = false;
  std::vector<Explanation> explanations;
};

// Scores one monitored node against its own history. The verdict is
// strictly greater-than the threshold.
inline MachineScore score_node(const std::string& machine, int node,
                               const LossBreakdown& loss,
                               const ScoreHistory& history, int64_t day,
                               const ScoreConfig& cfg) {
  MachineScore s;
  s.machine = machine;
  s.re = loss.re(node);
  s.am = loss.am(node);
  s.sf = loss.sf(node);
  s.emb = loss.emb(node);
  s.po = loss.po(node);
  s.pf = loss.pf(node);
  std::vector<double> priors = history.recent(machine, day, cfg.selfdiff_window);
  s.self_diff = self_difference(s.re, priors, cfg.selfdiff_cap);
  s.final_score = s.re * s.self_diff;
  s.anomalous = s.final_score > cfg.tr;
  return s;
}

// Total order: final score descending, machine-key ascending on ties.
inline void rank_scores(std::vector<MachineScore>& scores) {
  std::sort(scores.begin(), scores.end(),
            [](const MachineScore& a, const MachineScore& b) {
              if (a.final_score != b.final_score)
                return a.final_score > b.final_score;
              return a.machine < b.machine;
            });
}

// ------------------------------------------------------------ reports

inline nlohmann::json score_to_json(const MachineScore& s, const std::string& date) {
  nlohmann::json j{{"machine", s.machine},
                   {"date", date},
                   {"re", s.re},
                   {"components",
                    {{"am", s.am},
                     {"sf", s.sf},
                     {"emb", s.emb},
                     {"po", s.po},
                     {"pf", s.pf}}},
                   {"self_difference", s.self_diff},
                   {"final_score", s.final_score},
                   {"verdict", s.anomalous ? "Anomalous" : "Normal"}};
  nlohmann::json ex = nlohmann::json::array();
  for (const Explanation& e : s.explanations)
    ex.push_back({{"name", e.name},
                  {"original", e.truth},
                  {"reconstructed", e.reconstructed},
                  {"residual", e.residual}});
  j["explanations"] = ex;
  return j;
}

inline MachineScore score_from_json(const nlohmann::json& j) {
  MachineScore s;
  s.machine = j.at("machine").get<std::string>();
  s.re = j.at("re").get<double>();
  const auto& c = j.at("components");
  s.am = c.at("am").get<double>();
  s.sf = c.at("sf").get<double>();
  s.emb = c.at("emb").get<double>();
  s.po = c.at("po").get<double>();
  s.pf = c.at("pf").get<double>();
  s.self_diff = j.at("self_difference").get<double>();
  s.final_score = j.at("final_score").get<double>();
  s.anomalous = j.at("verdict").get<std::string>() == "Anomalous";
  for (const auto& e : j.at("explanations"))
    s.explanations.push_back({e.at("name").get<std::string>(),
                              e.at("original").get<double>(),
                              e.at("reconstructed").get<double>(),
                              e.at("residual").get<double>()});
  return s;
}

// One JSON object per machine per line, machines in rank order.
inline void write_report(const std::string& path, const std::string& date,
                         const std::vector<MachineScore>& scores) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report: " + path);
  for (const MachineScore& s : scores) out << score_to_json(s, date).dump() << '\n';
}

inline std::vector<MachineScore> read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report: " + path);
  std::vector<MachineScore> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    out.push_back(score_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

// "2 (0.065%)" style cell for the per-day summary table.
inline std::string format_anomaly_cell(int anomalies, int total) {
  double pct = total > 0 ? 100.0 * anomalies / total : 0.0;
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%d (%.3g%%)", anomalies, pct);
  return buf;
}

}  // namespace netgad
