#pragma once

// Flat key=value configuration with dotted keys, scenario presets and
// the resolved run configuration shared by the CLI and the pipeline.

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "netgad/model.hpp"
#include "netgad/node2vec.hpp"
#include "netgad/scoring.hpp"
#include "netgad/synth.hpp"

namespace netgad {

struct RunConfig {
  // ingest
  std::string events_path;
  std::string inventory_path;
  std::vector<Cidr> internal_cidrs;
  SubsetSpec subset;

  // features
  bool process_blocks = true;
  ProcessBlockSource process_block_source = ProcessBlockSource::Counts;
  int history_days = 7;
  Node2vecConfig embed;

  // model and scoring
  ModelConfig model;
  ScoreConfig score;
  bool tr_set = false;  // scoring.tr has no default; presets supply it

  // run
  int partitions = 1;
  uint64_t seed = 0;
  std::string out_dir = "out";
  std::string days_from, days_to;  // optional scored-day range, YYYY-MM-DD

  // synth
  PopulationConfig pop;

  void validate_for_run() const {
    model.validate();
    if (!tr_set) throw ConfigError("scoring.tr is required (set it or use a preset)");
    if (partitions < 1) throw ConfigError("run.partitions must be >= 1");
    if (history_days < 0) throw ConfigError("features.history_days must be >= 0");
  }
};

namespace configdetail {

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean for " + key + ": " + v);
}

inline double parse_num(const std::string& key, const std::string& v) {
  char* end = nullptr;
  double d = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("bad number for " + key + ": " + v);
  return d;
}

inline int parse_int(const std::string& key, const std::string& v) {
  return int(parse_num(key, v));
}

}  // namespace configdetail

// Applies one key. Unknown keys are rejected so typos fail loudly.
inline void apply_config_key(RunConfig& cfg, const std::string& key,
                             const std::string& value) {
  using configdetail::parse_bool;
  using configdetail::parse_int;
  using configdetail::parse_num;

  if (key == "ingest.events") cfg.events_path = value;
  else if (key == "ingest.inventory") cfg.inventory_path = value;
  else if (key == "ingest.internal_cidrs") cfg.internal_cidrs = parse_cidr_list(value);
  else if (key == "ingest.subset_cidrs") cfg.subset.cidrs = parse_cidr_list(value);
  else if (key == "ingest.subset_ids") {
    cfg.subset.ids.clear();
    for (const std::string& id : split(value, ','))
      if (!trim(id).empty()) cfg.subset.ids.insert(trim(id));
  } else if (key == "features.process_blocks") {
    cfg.process_blocks = parse_bool(key, value);
  } else if (key == "features.process_block_source") {
    if (value == "counts") cfg.process_block_source = ProcessBlockSource::Counts;
    else if (value == "tfidf") cfg.process_block_source = ProcessBlockSource::Tfidf;
    else throw ConfigError("features.process_block_source must be counts or tfidf");
  } else if (key == "features.history_days") {
    cfg.history_days = parse_int(key, value);
  } else if (key == "features.embed_dim") cfg.embed.dim = parse_int(key, value);
  else if (key == "features.walk_len") cfg.embed.walk_len = parse_int(key, value);
  else if (key == "features.walks_per_node")
    cfg.embed.walks_per_node = parse_int(key, value);
  else if (key == "features.window") cfg.embed.window = parse_int(key, value);
  else if (key == "features.negatives") cfg.embed.negatives = parse_int(key, value);
  else if (key == "features.embed_epochs") cfg.embed.epochs = parse_int(key, value);
  else if (key == "features.embed_lr") cfg.embed.lr = parse_num(key, value);
  else if (key == "model.filters") cfg.model.gcn_filters = parse_int(key, value);
  else if (key == "model.latent") cfg.model.latent = parse_int(key, value);
  else if (key == "model.dropout") cfg.model.dropout_rate = parse_num(key, value);
  else if (key == "model.epochs") cfg.model.epochs = parse_int(key, value);
  else if (key == "model.lr") cfg.model.lr = parse_num(key, value);
  else if (key == "model.batch_size") cfg.model.batch_size = parse_int(key, value);
  else if (key == "model.variational") cfg.model.variational = parse_bool(key, value);
  else if (key == "model.use_embedding_block")
    cfg.model.use_embedding_block = parse_bool(key, value);
  else if (key == "model.kl_weight") cfg.model.kl_weight = parse_num(key, value);
  else if (key == "model.alpha") cfg.model.alpha = parse_num(key, value);
  else if (key == "model.beta") cfg.model.beta = parse_num(key, value);
  else if (key == "model.gamma") cfg.model.gamma = parse_num(key, value);
  else if (key == "model.delta") cfg.model.delta = parse_num(key, value);
  else if (key == "loss.alpha_binds") {
    if (value == "SF") cfg.model.alpha_binds = AlphaBinding::Stat;
    else if (value == "PF") cfg.model.alpha_binds = AlphaBinding::Significant;
    else throw ConfigError("loss.alpha_binds must be SF or PF");
  } else if (key == "scoring.tr") {
    cfg.score.tr = parse_num(key, value);
    cfg.tr_set = true;
  } else if (key == "scoring.selfdiff_window") {
    cfg.score.selfdiff_window = parse_int(key, value);
  } else if (key == "scoring.selfdiff_cap") {
    cfg.score.selfdiff_cap = parse_num(key, value);
  } else if (key == "scoring.retention") {
    cfg.score.retention = parse_int(key, value);
  } else if (key == "scoring.explain_threshold") {
    cfg.score.explain_threshold = parse_num(key, value);
  } else if (key == "run.partitions") {
    cfg.partitions = parse_int(key, value);
  } else if (key == "run.seed") {
    cfg.seed = uint64_t(std::strtoull(value.c_str(), nullptr, 10));
  } else if (key == "run.out_dir") {
    cfg.out_dir = value;
  } else if (key == "run.days") {
    auto parts = split(value, ':');
    cfg.days_from = trim(parts[0]);
    cfg.days_to = parts.size() > 1 ? trim(parts[1]) : cfg.days_from;
    if (!parse_date(cfg.days_from) || !parse_date(cfg.days_to))
      throw ConfigError("run.days expects YYYY-MM-DD[:YYYY-MM-DD]");
  } else if (key == "synth.n_machines") {
    cfg.pop.n_machines = parse_int(key, value);
  } else if (key == "synth.n_servers") {
    cfg.pop.n_shared_servers = parse_int(key, value);
  } else if (key == "synth.n_externals") {
    cfg.pop.n_external_services = parse_int(key, value);
  } else if (key == "synth.servers_per_machine") {
    cfg.pop.servers_per_machine = parse_int(key, value);
  } else if (key == "synth.externals_per_machine") {
    cfg.pop.externals_per_machine = parse_int(key, value);
  } else if (key == "synth.events_per_day") {
    cfg.pop.events_per_machine_per_day = parse_num(key, value);
  } else if (key == "synth.days") {
    cfg.pop.days = parse_int(key, value);
  } else if (key == "synth.core_processes") {
    cfg.pop.core_processes = parse_int(key, value);
  } else if (key == "synth.common_processes") {
    cfg.pop.common_processes = parse_int(key, value);
  } else if (key == "synth.uncommon_processes") {
    cfg.pop.uncommon_processes = parse_int(key, value);
  } else if (key == "synth.noise") {
    cfg.pop.behavioral_noise = parse_num(key, value);
  } else if (key == "synth.p_new_external") {
    cfg.pop.p_new_external = parse_num(key, value);
  } else if (key == "synth.p_new_process") {
    cfg.pop.p_new_process = parse_num(key, value);
  } else if (key == "synth.start_date") {
    cfg.pop.start_date = value;
  } else if (key == "synth.seed") {
    cfg.pop.seed = uint64_t(std::strtoull(value.c_str(), nullptr, 10));
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

// key = value lines; '#' starts a comment; blank lines ignored.
inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key = value");
    apply_config_key(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

// Scenario presets; explicit config keys override them.
inline void apply_preset(RunConfig& cfg, const std::string& name) {
  std::vector<std::pair<std::string, std::string>> kv;
  if (name == "atm") {
    kv = {{"model.alpha", "0.3"},  {"model.beta", "0.3"},
          {"model.gamma", "0.2"},  {"model.delta", "0.2"},
          {"scoring.tr", "0.6"},   {"run.partitions", "1"}};
  } else if (name == "ad") {
    kv = {{"model.alpha", "0.4"},  {"model.beta", "0.2"},
          {"model.gamma", "0.2"},  {"model.delta", "0.2"},
          {"scoring.tr", "0.018"}, {"run.partitions", "4"}};
  } else {
    throw ConfigError("unknown preset: " + name);
  }
  for (const auto& [k, v] : kv) apply_config_key(cfg, k, v);
}

// Complete effective configuration, for the run manifest.
inline std::map<std::string, std::string> config_to_map(const RunConfig& cfg) {
  std::map<std::string, std::string> m;
  auto put = [&](const std::string& k, const std::string& v) { m[k] = v; };
  auto cidrs = [](const std::vector<Cidr>& list) {
    std::string out;
    for (const Cidr& c : list) {
      if (!out.empty()) out += ",";
      out += c.str();
    }
    return out;
  };
  put("ingest.events", cfg.events_path);
  put("ingest.inventory", cfg.inventory_path);
  put("ingest.internal_cidrs", cidrs(cfg.internal_cidrs));
  put("ingest.subset_cidrs", cidrs(cfg.subset.cidrs));
  {
    std::string ids;
    for (const std::string& id : cfg.subset.ids) {
      if (!ids.empty()) ids += ",";
      ids += id;
    }
    put("ingest.subset_ids", ids);
  }
  put("features.process_blocks", cfg.process_blocks ? "on" : "off");
  put("features.process_block_source",
      cfg.process_block_source == ProcessBlockSource::Counts ? "counts" : "tfidf");
  put("features.history_days", std::to_string(cfg.history_days));
  put("features.embed_dim", std::to_string(cfg.embed.dim));
  put("features.walk_len", std::to_string(cfg.embed.walk_len));
  put("features.walks_per_node", std::to_string(cfg.embed.walks_per_node));
  put("features.window", std::to_string(cfg.embed.window));
  put("features.negatives", std::to_string(cfg.embed.negatives));
  put("features.embed_epochs", std::to_string(cfg.embed.epochs));
  put("features.embed_lr", format_double(cfg.embed.lr));
  put("model.filters", std::to_string(cfg.model.gcn_filters));
  put("model.latent", std::to_string(cfg.model.latent));
  put("model.dropout", format_double(cfg.model.dropout_rate));
  put("model.epochs", std::to_string(cfg.model.epochs));
  put("model.lr", format_double(cfg.model.lr));
  put("model.batch_size", std::to_string(cfg.model.batch_size));
  put("model.variational", cfg.model.variational ? "on" : "off");
  put("model.use_embedding_block", cfg.model.use_embedding_block ? "on" : "off");
  put("model.kl_weight", format_double(cfg.model.kl_weight));
  put("model.alpha", format_double(cfg.model.alpha));
  put("model.beta", format_double(cfg.model.beta));
  put("model.gamma", format_double(cfg.model.gamma));
  put("model.delta", format_double(cfg.model.delta));
  put("loss.alpha_binds",
      cfg.model.alpha_binds == AlphaBinding::Stat ? "SF" : "PF");
  put("scoring.tr", cfg.tr_set ? format_double(cfg.score.tr) : "");
  put("scoring.selfdiff_window", std::to_string(cfg.score.selfdiff_window));
  put("scoring.selfdiff_cap", format_double(cfg.score.selfdiff_cap));
  put("scoring.retention", std::to_string(cfg.score.retention));
  put("scoring.explain_threshold", format_double(cfg.score.explain_threshold));
  put("run.partitions", std::to_string(cfg.partitions));
  put("run.seed", std::to_string(cfg.seed));
  put("run.out_dir", cfg.out_dir);
  put("run.days", cfg.days_from.empty()
                      ? ""
                      : cfg.days_from + (cfg.days_to != cfg.days_from
                                             ? ":" + cfg.days_to
                                             : ""));
  put("synth.n_machines", std::to_string(cfg.pop.n_machines));
  put("synth.n_servers", std::to_string(cfg.pop.n_shared_servers));
  put("synth.n_externals", std::to_string(cfg.pop.n_external_services));
  put("synth.servers_per_machine", std::to_string(cfg.pop.servers_per_machine));
  put("synth.externals_per_machine",
      std::to_string(cfg.pop.externals_per_machine));
  put("synth.events_per_day", format_double(cfg.pop.events_per_machine_per_day));
  put("synth.days", std::to_string(cfg.pop.days));
  put("synth.core_processes", std::to_string(cfg.pop.core_processes));
  put("synth.common_processes", std::to_string(cfg.pop.common_processes));
  put("synth.uncommon_processes", std::to_string(cfg.pop.uncommon_processes));
  put("synth.noise", format_double(cfg.pop.behavioral_noise));
  put("synth.p_new_external", format_double(cfg.pop.p_new_external));
  put("synth.p_new_process", format_double(cfg.pop.p_new_process));
  put("synth.start_date", cfg.pop.start_date);
  put("synth.seed", std::to_string(cfg.pop.seed));
  return m;
}

}  // namespace netgad
