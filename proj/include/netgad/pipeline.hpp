#pragma once

// End-to-end orchestration: per-window train-and-score over the event
// stream, optional node partitioning, report/history/curve/manifest
// output and the run summary printer. Model parameters never cross
// window boundaries; only the RE history does.

#include <filesystem>
#include <iostream>
#include <set>
#include <span>

#include <openssl/evp.h>

#include "netgad/config.hpp"

namespace netgad {

struct WindowResult {
  int64_t day = 0;
  std::vector<MachineScore> scores;  // monitored machines, rank order
  int groups_scored = 0;
};

struct RunResult {
  std::vector<WindowResult> windows;
  std::vector<int64_t> all_days;     // every day present in the input
  std::vector<int64_t> scored_days;
  ScoreHistory history;
  int exit_code = 0;  // 0 clean, 2 when any verdict is Anomalous
};

namespace pipedetail {

inline std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline void write_curve(const std::string& path,
                        const std::vector<TrainCurvePoint>& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,total,am,sf,emb,po,pf,kl\n";
  for (size_t i = 0; i < curve.size(); ++i)
    out << i << ',' << format_double(curve[i].total) << ','
        << format_double(curve[i].am) << ',' << format_double(curve[i].sf) << ','
        << format_double(curve[i].emb) << ',' << format_double(curve[i].po) << ','
        << format_double(curve[i].pf) << ',' << format_double(curve[i].kl) << '\n';
}

}  // namespace pipedetail

// Runs the full pipeline over parsed events. When out_dir is non-empty,
// writes per-day reports, training curves, checkpoints and the history
// store there; with an empty out_dir everything stays in memory.
inline RunResult run_pipeline(const RunConfig& cfg,
                              std::span<const NetConnEvent> raw_events,
                              const MachineDirectory& dir,
                              const std::string& out_dir) {
  cfg.validate_for_run();
  RunResult result;

  std::vector<NetConnEvent> filtered = filter_subset(raw_events, cfg.subset, dir);
  if (filtered.empty()) return result;

  std::set<int64_t> day_set;
  for (const NetConnEvent& e : filtered) day_set.insert(day_start(e.timestamp));
  result.all_days.assign(day_set.begin(), day_set.end());
  const int64_t first_day = result.all_days.front();

  std::optional<int64_t> range_from, range_to;
  if (!cfg.days_from.empty()) {
    range_from = parse_date(cfg.days_from);
    if (!range_from) throw ConfigError("bad day range start: " + cfg.days_from);
  }
  if (!cfg.days_to.empty()) {
    range_to = parse_date(cfg.days_to);
    if (!range_to) throw ConfigError("bad day range end: " + cfg.days_to);
  }
  for (size_t i = 0; i < result.all_days.size(); ++i) {
    int64_t day = result.all_days[i];
    if (int(i) < cfg.history_days) continue;  // needs that many prior days
    if (range_from && day < *range_from) continue;
    if (range_to && day > *range_to) continue;
    result.scored_days.push_back(day);
  }

  // Process presence across all days, for TF-IDF decay.
  ProcessDayHistory day_presence;
  day_presence.record_events(filtered);

  // Monitored machines over the whole input, in one stable partition.
  std::set<std::string> monitored_set;
  for (const NetConnEvent& e : filtered) {
    if (cfg.subset.matches_ip(e.src_ip, dir))
      monitored_set.insert(dir.machine_key(e.src_ip));
    if (cfg.subset.matches_ip(e.dst_ip, dir))
      monitored_set.insert(dir.machine_key(e.dst_ip));
  }
  std::vector<std::string> monitored(monitored_set.begin(), monitored_set.end());
  auto groups = partition_nodes(monitored, cfg.partitions,
                                derive_seed(cfg.seed, "partition"));
  std::vector<std::set<std::string>> group_sets;
  for (const auto& g : groups) group_sets.emplace_back(g.begin(), g.end());

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  // Continue from an existing history store when it does not overlap.
  std::string history_path =
      out_dir.empty() ? "" : pipedetail::join_path(out_dir, "history.tsv");
  if (!history_path.empty() && std::filesystem::exists(history_path)) {
    result.history = ScoreHistory::load(history_path);
    for (const auto& [machine, recs] : result.history.records())
      for (const HistoryRecord& r : recs)
        for (int64_t day : result.scored_days)
          if (r.day == day)
            throw ConfigError(
                "history store already covers " + format_date(day) +
                "; use a fresh out dir to rescore it");
  }

  bool any_anomalous = false;
  for (int64_t day : result.scored_days) {
    const int64_t day_index = (day - first_day) / kSecondsPerDay;
    WindowResult wr;
    wr.day = day;
    std::vector<NetConnEvent> wevents =
        window_events(filtered, {day, kSecondsPerDay});
    std::vector<std::pair<std::string, double>> res;

    for (size_t g = 0; g < groups.size(); ++g) {
      std::vector<NetConnEvent> gevents;
      if (groups.size() == 1) {
        gevents = wevents;
      } else {
        for (const NetConnEvent& e : wevents)
          if (group_sets[g].count(dir.machine_key(e.src_ip)) ||
              group_sets[g].count(dir.machine_key(e.dst_ip)))
            gevents.push_back(e);
      }
      if (gevents.empty()) continue;

      CommGraph graph = build_adjacency(gevents, dir);
      if (graph.size() < 2) continue;
      Matrix cm = minmax_normalize(graph.dense_counts()).normalized;

      StatFeatures stat = stat_features(gevents, graph, dir);
      Node2vecConfig embed_cfg = cfg.embed;
      embed_cfg.seed = derive_seed(cfg.seed, "embed", uint64_t(day_index) * 64 + g);
      Embedding embed = node2vec_embed(graph, embed_cfg);
      ProcessProfile profile = build_process_profile(gevents, graph, day_presence,
                                                     day, cfg.history_days);
      SignificantFeatures sig =
          significant_process_features(gevents, graph, profile);
      FeatureMatrix fm = assemble_features(stat, embed, profile, sig,
                                           cfg.process_blocks,
                                           cfg.process_block_source);

      ModelConfig model_cfg = cfg.model;
      model_cfg.seed = derive_seed(cfg.seed, "train", uint64_t(day_index) * 64 + g);
      TrainResult trained = train_model(cm, fm, model_cfg);
      Reconstruction recon = reconstruct(trained.params, cm, fm, model_cfg);

      if (!out_dir.empty()) {
        std::string tag = format_date(day) + "_g" + std::to_string(g);
        pipedetail::write_curve(
            pipedetail::join_path(out_dir, "curve_" + tag + ".csv"),
            trained.curve);
        ad::save_checkpoint(
            pipedetail::join_path(out_dir, "checkpoint_" + tag + ".bin"),
            trained.params.named());
      }
      if (trained.diverged_at >= 0)
        std::cerr << "warning: training stopped at epoch " << trained.diverged_at
                  << " on " << format_date(day) << " group " << g
                  << " (non-finite loss); scoring last good parameters\n";

      ModelInputs inputs = make_inputs(cm, fm, model_cfg);
      for (int node = 0; node < graph.size(); ++node) {
        const std::string& key = graph.keys[node];
        if (!group_sets[g].count(key)) continue;
        MachineScore s = score_node(key, node, recon.loss, result.history, day,
                                    cfg.score);
        s.explanations = explain_node(node, cm, recon.cm_hat, inputs.x,
                                      recon.fm_hat, graph.keys, fm.names,
                                      cfg.score.explain_threshold);
        res.emplace_back(key, s.re);
        wr.scores.push_back(std::move(s));
      }
      ++wr.groups_scored;
    }

    rank_scores(wr.scores);
    result.history.update(day, res, cfg.score.retention);
    for (const MachineScore& s : wr.scores) any_anomalous |= s.anomalous;

    if (!out_dir.empty())
      write_report(
          pipedetail::join_path(out_dir, "report_" + format_date(day) + ".jsonl"),
          format_date(day), wr.scores);
    result.windows.push_back(std::move(wr));
  }

  if (!history_path.empty()) result.history.save(history_path);
  result.exit_code = any_anomalous ? 2 : 0;
  return result;
}

// ------------------------------------------------------------ manifest

inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot hash missing file: " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    EVP_DigestUpdate(ctx, buf, size_t(in.gcount()));
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

inline const char* code_version() { return "netgad 1.0.0"; }

// Reproducibility record: effective config, master seed, input digests.
inline void write_manifest(
    const std::string& out_dir, const RunConfig& cfg,
    const std::vector<std::pair<std::string, std::string>>& inputs,
    const std::string& command) {
  nlohmann::json j;
  j["code_version"] = code_version();
  j["command"] = command;
  j["seed"] = cfg.seed;
  j["config"] = config_to_map(cfg);
  nlohmann::json in = nlohmann::json::object();
  for (const auto& [name, path] : inputs) in[name] = sha256_file(path);
  j["inputs"] = in;
  std::ofstream out(pipedetail::join_path(out_dir, "manifest.json"));
  if (!out) throw IoError("cannot write manifest in " + out_dir);
  out << j.dump(2) << '\n';
}

// ------------------------------------------------------------ summary

// Prints the per-day table plus alert details, and writes summary.csv.
inline void print_run_summary(std::ostream& os, const std::string& run_dir,
                              int top_explanations = 5) {
  std::vector<std::filesystem::path> reports;
  for (const auto& entry : std::filesystem::directory_iterator(run_dir)) {
    std::string name = entry.path().filename().string();
    if (name.rfind("report_", 0) == 0 && entry.path().extension() == ".jsonl")
      reports.push_back(entry.path());
  }
  std::sort(reports.begin(), reports.end());
  if (reports.empty()) {
    os << "no reports in " << run_dir << "\n";
    return;
  }

  std::ofstream csv(pipedetail::join_path(run_dir, "summary.csv"));
  if (!csv) throw IoError("cannot write summary.csv in " + run_dir);
  csv << "date,machines,anomalies,pct\n";

  os << "date        machines  anomalies\n";
  struct Alert {
    std::string date;
    MachineScore score;
  };
  std::vector<Alert> alerts;
  for (const auto& path : reports) {
    std::string date = path.filename().string();
    date = date.substr(7, date.size() - 7 - 6);  // strip report_ / .jsonl
    std::vector<MachineScore> scores = read_report(path.string());
    int anomalies = 0;
    for (const MachineScore& s : scores)
      if (s.anomalous) {
        ++anomalies;
        alerts.push_back({date, s});
      }
    char line[96];
    std::snprintf(line, sizeof(line), "%-12s%-10d%s\n", date.c_str(),
                  int(scores.size()),
                  format_anomaly_cell(anomalies, int(scores.size())).c_str());
    os << line;
    double pct = scores.empty() ? 0.0 : 100.0 * anomalies / double(scores.size());
    csv << date << ',' << scores.size() << ',' << anomalies << ','
        << format_double(pct) << '\n';
  }

  for (const Alert& a : alerts) {
    const MachineScore& s = a.score;
    os << "\n" << a.date << "  " << s.machine << "  ANOMALOUS  final="
       << format_double(s.final_score) << "  re=" << format_double(s.re)
       << "  self_diff=" << format_double(s.self_diff) << "\n";
    os << "  components: am=" << format_double(s.am) << " sf=" << format_double(s.sf)
       << " emb=" << format_double(s.emb) << " po=" << format_double(s.po)
       << " pf=" << format_double(s.pf) << "\n";
    int shown = 0;
    for (const Explanation& e : s.explanations) {
      if (shown++ >= top_explanations) break;
      char buf[160];
      std::snprintf(buf, sizeof(buf), "  %-40s orig=%.4f recon=%.4f residual=%+.4f\n",
                    e.name.c_str(), e.truth, e.reconstructed, e.residual);
      os << buf;
    }
  }
}

}  // namespace netgad
