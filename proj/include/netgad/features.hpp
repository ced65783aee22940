#pragma once

// Node feature construction: statistical block, process usage profile
// with time-decayed TF-IDF, significant-process block, and assembly of
// the full per-window feature matrix.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "netgad/graph.hpp"
#include "netgad/ingest.hpp"
#include "netgad/node2vec.hpp"

namespace netgad {

// Column-wise min-max to [0, 1]; constant columns map to zero.
inline Matrix minmax_columns(const Matrix& raw) {
  Matrix out = Matrix::Zero(raw.rows(), raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    if (raw.rows() == 0) continue;
    double lo = raw.col(j).minCoeff();
    double hi = raw.col(j).maxCoeff();
    if (hi <= lo) continue;
    for (Eigen::Index i = 0; i < raw.rows(); ++i)
      out(i, j) = (raw(i, j) - lo) / (hi - lo);
  }
  return out;
}

// ------------------------------------------------------- stat block

constexpr int kStatColumns = 9;
constexpr int kTypeOneHotOffset = 4;

inline const std::vector<std::string>& stat_feature_names() {
  static const std::vector<std::string> names{
      "internal_communications", "uni_outgoing_machines", "uni_incoming_machines",
      "rare_processes",          "type_M",                "type_S",
      "type_W",                  "type_I",                "type_E"};
  return names;
}

struct StatFeatures {
  Matrix raw;         // |M| x 9
  Matrix normalized;  // numeric columns min-max across nodes; one-hot as-is
};

// Numeric features: events with an internal counterpart, distinct
// destinations as source, distinct sources as destination, and processes
// observed on this machine only. One-hot encodes the machine type.
inline StatFeatures stat_features(std::span<const NetConnEvent> events,
                                  const CommGraph& g, const MachineDirectory& dir) {
  const int n = g.size();
  StatFeatures f;
  f.raw = Matrix::Zero(n, kStatColumns);

  std::vector<std::set<int>> out_peers(n), in_peers(n);
  std::unordered_map<std::string, std::set<std::string>> md5_users;

  for (const NetConnEvent& e : events) {
    int s = g.index.at(dir.machine_key(e.src_ip));
    int d = g.index.at(dir.machine_key(e.dst_ip));
    if (s != d) {
      out_peers[s].insert(d);
      in_peers[d].insert(s);
      if (dir.label(e.dst_ip).locality == Locality::Internal) f.raw(s, 0) += 1;
      if (dir.label(e.src_ip).locality == Locality::Internal) f.raw(d, 0) += 1;
    }
    md5_users[e.md5].insert(e.machine_id);
  }

  std::unordered_map<std::string, int> rare_count;
  for (const auto& [md5, users] : md5_users)
    if (users.size() == 1) rare_count[*users.begin()] += 1;

  for (int i = 0; i < n; ++i) {
    f.raw(i, 1) = static_cast<double>(out_peers[i].size());
    f.raw(i, 2) = static_cast<double>(in_peers[i].size());
    auto it = rare_count.find(g.keys[i]);
    f.raw(i, 3) = it == rare_count.end() ? 0.0 : it->second;
    MachineType t = dir.label(g.ips[i]).type;
    f.raw(i, kTypeOneHotOffset + static_cast<int>(t)) = 1.0;
  }

  f.normalized = f.raw;
  f.normalized.leftCols(kTypeOneHotOffset) =
      minmax_columns(f.raw.leftCols(kTypeOneHotOffset));
  return f;
}

// --------------------------------------------------- process profile

// Distinct-day presence of each process over a trailing history window,
// used for TF-IDF decay.
struct ProcessDayHistory {
  std::map<std::string, std::set<int64_t>> days_seen;  // md5 -> day starts

  void record(int64_t day, const std::string& md5) { days_seen[md5].insert(day); }

  void record_events(std::span<const NetConnEvent> events) {
    for (const NetConnEvent& e : events)
      record(day_start(e.timestamp), e.md5);
  }

  // Distinct days with the process present in [eval - days, eval).
  int count_days(const std::string& md5, int64_t eval_day, int days = 7) const {
    auto it = days_seen.find(md5);
    if (it == days_seen.end()) return 0;
    int64_t lo = eval_day - days * kSecondsPerDay;
    int count = 0;
    for (int64_t d : it->second)
      if (d >= lo && d < eval_day) ++count;
    return count;
  }
};

// Pure TF-IDF with per-process recency decay:
//   tf[i,j]    = counts[i,j] / sum_j counts[i,j]          (0 for idle rows)
//   idf[j]     = ln(|M| / (1 + df_j))
//   tfidf[i,j] = tf * idf * 0.9^day_history[j]
inline Matrix tfidf_matrix(const Matrix& counts, const std::vector<int>& day_history) {
  const Eigen::Index n = counts.rows(), p = counts.cols();
  if (static_cast<Eigen::Index>(day_history.size()) != p)
    throw NumericError("day_history size does not match process columns");
  Matrix tfidf = Matrix::Zero(n, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::Index df = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (counts(i, j) > 0) ++df;
    double idf = std::log(static_cast<double>(n) / (1.0 + static_cast<double>(df)));
    double decay = std::pow(0.9, day_history[j]);
    for (Eigen::Index i = 0; i < n; ++i) {
      double row_total = counts.row(i).sum();
      if (row_total <= 0) continue;
      tfidf(i, j) = counts(i, j) / row_total * idf * decay;
    }
  }
  return tfidf;
}

struct ProcessProfile {
  std::vector<std::string> md5s;  // column -> md5, lexicographic
  std::unordered_map<std::string, int> col;
  Matrix counts;             // |M| x P event counts per machine and process
  Matrix tfidf;              // decayed TF-IDF
  std::vector<int> day_history;  // per column, 0..history_days
};

inline ProcessProfile build_process_profile(std::span<const NetConnEvent> events,
                                            const CommGraph& g,
                                            const ProcessDayHistory& history,
                                            int64_t eval_day,
                                            int history_days = 7) {
  ProcessProfile p;
  std::set<std::string> md5s;
  for (const NetConnEvent& e : events) md5s.insert(e.md5);
  p.md5s.assign(md5s.begin(), md5s.end());
  for (int j = 0; j < static_cast<int>(p.md5s.size()); ++j) p.col[p.md5s[j]] = j;

  p.counts = Matrix::Zero(g.size(), static_cast<Eigen::Index>(p.md5s.size()));
  for (const NetConnEvent& e : events) {
    auto node = g.index.find(e.machine_id);
    if (node == g.index.end()) continue;  // reporter not an endpoint key
    p.counts(node->second, p.col.at(e.md5)) += 1;
  }

  p.day_history.resize(p.md5s.size());
  for (size_t j = 0; j < p.md5s.size(); ++j)
    p.day_history[j] = history.count_days(p.md5s[j], eval_day, history_days);

  p.tfidf = tfidf_matrix(p.counts, p.day_history);
  return p;
}

// ----------------------------------------------- significant process

enum class SourceDir { Windows, ProgramFiles, User, None, Other };

constexpr int kSigColumns = 8;
constexpr int kDirOneHotOffset = 3;

inline const std::vector<std::string>& significant_feature_names() {
  static const std::vector<std::string> names{
      "sig_n_pids",   "sig_max_pid_duration", "sig_avg_pid_duration",
      "dir_windows",  "dir_program_files",    "dir_user",
      "dir_none",     "dir_other"};
  return names;
}

// Classifies a process image path by its top-level install location.
inline SourceDir classify_path(std::string_view path) {
  if (path.empty()) return SourceDir::None;
  std::string p(path);
  for (char& c : p) {
    if (c == '/') c = '\\';
    if (c >= 'A' && c <= 'Z') c = char(c - 'A' + 'a');
  }
  std::string_view v = p;
  if (v.size() >= 2 && v[1] == ':') v.remove_prefix(2);
  while (!v.empty() && v.front() == '\\') v.remove_prefix(1);
  auto starts = [&](std::string_view prefix) {
    return v.size() > prefix.size() && v.substr(0, prefix.size()) == prefix &&
           v[prefix.size()] == '\\';
  };
  if (starts("windows")) return SourceDir::Windows;
  if (starts("program files") || starts("program files (x86)"))
    return SourceDir::ProgramFiles;
  if (starts("users") || starts("documents and settings") || starts("home"))
    return SourceDir::User;
  return SourceDir::Other;
}

struct SignificantFeatures {
  Matrix raw;         // |M| x 8
  Matrix normalized;
  std::vector<int> selected;  // per node: profile column of the chosen md5, -1 none
};

// Per machine, selects the process with the highest decayed TF-IDF value
// (ties to the lexicographically smallest md5) and describes its run
// pattern: distinct pids, max and mean pid duration, install location.
inline SignificantFeatures significant_process_features(
    std::span<const NetConnEvent> events, const CommGraph& g,
    const ProcessProfile& profile) {
  const int n = g.size();
  SignificantFeatures f;
  f.raw = Matrix::Zero(n, kSigColumns);
  f.selected.assign(n, -1);

  struct PidSpan {
    int64_t first, last;
  };
  struct ProcEvents {
    std::map<int64_t, PidSpan> pids;
    int64_t path_ts = 0;
    std::string path;
    bool has_path = false;
  };
  // node -> profile column -> observed pid spans and image path
  std::vector<std::map<int, ProcEvents>> per_node(n);
  for (const NetConnEvent& e : events) {
    auto node = g.index.find(e.machine_id);
    if (node == g.index.end()) continue;
    auto col = profile.col.find(e.md5);
    if (col == profile.col.end()) continue;
    ProcEvents& pe = per_node[node->second][col->second];
    auto [it, fresh] = pe.pids.try_emplace(e.pid, PidSpan{e.timestamp, e.timestamp});
    if (!fresh) {
      it->second.first = std::min(it->second.first, e.timestamp);
      it->second.last = std::max(it->second.last, e.timestamp);
    }
    if (!e.path.empty() && (!pe.has_path || e.timestamp < pe.path_ts)) {
      pe.has_path = true;
      pe.path_ts = e.timestamp;
      pe.path = e.path;
    }
  }

  for (int i = 0; i < n; ++i) {
    int best = -1;
    if (profile.counts.cols() > 0 && profile.counts.row(i).sum() > 0) {
      double best_val = 0;
      for (Eigen::Index j = 0; j < profile.tfidf.cols(); ++j) {
        if (profile.counts(i, j) <= 0) continue;
        double val = profile.tfidf(i, j);
        if (best < 0 || val > best_val) {
          best = static_cast<int>(j);
          best_val = val;
        }
      }
    }
    f.selected[i] = best;
    if (best < 0) {
      f.raw(i, kDirOneHotOffset + static_cast<int>(SourceDir::None)) = 1.0;
      continue;
    }
    const ProcEvents& pe = per_node[i].at(best);
    double max_dur = 0, sum_dur = 0;
    for (const auto& [pid, span] : pe.pids) {
      double dur = static_cast<double>(span.last - span.first);
      max_dur = std::max(max_dur, dur);
      sum_dur += dur;
    }
    f.raw(i, 0) = static_cast<double>(pe.pids.size());
    f.raw(i, 1) = max_dur;
    f.raw(i, 2) = pe.pids.empty() ? 0.0 : sum_dur / static_cast<double>(pe.pids.size());
    SourceDir dir = pe.has_path ? classify_path(pe.path) : SourceDir::None;
    f.raw(i, kDirOneHotOffset + static_cast<int>(dir)) = 1.0;
  }

  f.normalized = f.raw;
  f.normalized.leftCols(kDirOneHotOffset) =
      minmax_columns(f.raw.leftCols(kDirOneHotOffset));
  return f;
}

// ------------------------------------------------------- assembly

struct FeatureMatrix {
  struct Block {
    int offset = 0;
    int count = 0;
  };

  Matrix values;  // |M| x F, all entries in [0, 1]
  Block stat, embedding, process, significant;
  std::vector<std::string> names;         // one per column
  std::vector<std::string> process_md5s;  // process block column -> md5

  int cols() const { return static_cast<int>(values.cols()); }
  int rows() const { return static_cast<int>(values.rows()); }
};

enum class ProcessBlockSource { Counts, Tfidf };

// Concatenates the four blocks. The process block carries min-max
// normalized counts or min-max normalized decayed TF-IDF per config.
inline FeatureMatrix assemble_features(const StatFeatures& stat,
                                       const Embedding& embedding,
                                       const ProcessProfile& profile,
                                       const SignificantFeatures& sig,
                                       bool process_blocks = true,
                                       ProcessBlockSource source =
                                           ProcessBlockSource::Counts) {
  const int n = static_cast<int>(stat.raw.rows());
  if (embedding.raw.rows() != n || sig.raw.rows() != n ||
      (process_blocks && profile.counts.rows() != n))
    throw NumericError("feature block row counts disagree");

  FeatureMatrix fm;
  const int p = process_blocks ? static_cast<int>(profile.counts.cols()) : 0;
  const int sig_cols = process_blocks ? kSigColumns : 0;
  const int dim = static_cast<int>(embedding.raw.cols());
  fm.stat = {0, kStatColumns};
  fm.embedding = {kStatColumns, dim};
  fm.process = {kStatColumns + dim, p};
  fm.significant = {kStatColumns + dim + p, sig_cols};
  fm.values = Matrix::Zero(n, kStatColumns + dim + p + sig_cols);

  fm.values.middleCols(fm.stat.offset, fm.stat.count) = stat.normalized;
  fm.values.middleCols(fm.embedding.offset, fm.embedding.count) =
      embedding.normalized;
  if (process_blocks) {
    fm.values.middleCols(fm.process.offset, p) =
        source == ProcessBlockSource::Counts ? minmax_columns(profile.counts)
                                             : minmax_columns(profile.tfidf);
    fm.values.middleCols(fm.significant.offset, sig_cols) = sig.normalized;
    fm.process_md5s = profile.md5s;
  }

  fm.names = stat_feature_names();
  for (int d = 0; d < dim; ++d) fm.names.push_back("emb_" + std::to_string(d));
  if (process_blocks) {
    for (const std::string& md5 : profile.md5s) fm.names.push_back("proc_" + md5);
    const auto& sig_names = significant_feature_names();
    fm.names.insert(fm.names.end(), sig_names.begin(), sig_names.end());
  }
  return fm;
}

// ------------------------------------------------------- storage

// Header line: rows cols and the four block extents; then one value row
// per node; process column md5s on a trailing line.
inline void save_feature_matrix(const FeatureMatrix& fm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << fm.rows() << ' ' << fm.cols() << ' ' << fm.stat.offset << ' '
      << fm.stat.count << ' ' << fm.embedding.offset << ' ' << fm.embedding.count
      << ' ' << fm.process.offset << ' ' << fm.process.count << ' '
      << fm.significant.offset << ' ' << fm.significant.count << '\n';
  for (int i = 0; i < fm.rows(); ++i) {
    for (int j = 0; j < fm.cols(); ++j) {
      if (j) out << ' ';
      out << format_double(fm.values(i, j));
    }
    out << '\n';
  }
  for (size_t j = 0; j < fm.process_md5s.size(); ++j) {
    if (j) out << ' ';
    out << fm.process_md5s[j];
  }
  out << '\n';
}

inline FeatureMatrix load_feature_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  FeatureMatrix fm;
  int rows, cols;
  if (!(in >> rows >> cols >> fm.stat.offset >> fm.stat.count >>
        fm.embedding.offset >> fm.embedding.count >> fm.process.offset >>
        fm.process.count >> fm.significant.offset >> fm.significant.count))
    throw IoError("bad feature matrix header in " + path);
  fm.values.resize(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      if (!(in >> fm.values(i, j))) throw IoError("bad feature row in " + path);
  std::string line;
  std::getline(in, line);  // finish the last value row
  if (std::getline(in, line)) {
    for (const std::string& md5 : split(trim(line), ' '))
      if (!md5.empty()) fm.process_md5s.push_back(md5);
  }
  fm.names.clear();  // names are reconstructable by the caller if needed
  return fm;
}

}  // namespace netgad
