// netgad command line: synthesize event logs, run the anomaly pipeline,
// summarize finished runs. Exit codes: 0 clean, 1 error, 2 anomalies found.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "netgad/pipeline.hpp"
#include "netgad/synth.hpp"

namespace {

using namespace netgad;

std::string join_args(int argc, char** argv) {
  std::string out;
  for (int i = 1; i < argc; ++i) {
    if (!out.empty()) out += ' ';
    out += argv[i];
  }
  return out;
}

struct CommonOpts {
  std::vector<std::string> configs;
  std::string preset;
  std::string out_dir;
  bool seed_set = false;
  uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.configs, "config file (key = value lines)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--preset", o.preset, "scenario preset")
      ->check(CLI::IsMember({"atm", "ad"}));
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--seed", o.seed, "master seed")
      ->each([&](const std::string&) { o.seed_set = true; });
}

// Presets first, config files next, explicit flags last.
RunConfig resolve_config(const CommonOpts& o) {
  RunConfig cfg;
  if (!o.preset.empty()) apply_preset(cfg, o.preset);
  for (const std::string& path : o.configs) apply_config_file(cfg, path);
  if (o.seed_set) {
    cfg.seed = o.seed;
    cfg.pop.seed = o.seed;
  }
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

int cmd_synth(const CommonOpts& opts, bool inject_attack_flag,
              const std::string& bruteforce_target) {
  RunConfig cfg = resolve_config(opts);
  std::filesystem::create_directories(cfg.out_dir);

  SynthResult data = generate_population(cfg.pop);
  nlohmann::json injections = nlohmann::json::array();
  if (inject_attack_flag) {
    AttackSpec spec;
    spec.seed = cfg.pop.seed;
    InjectionRecord rec = inject_attack(data, spec);
    injections.push_back(injection_to_json(rec, "attack"));
  }
  if (!bruteforce_target.empty()) {
    std::string target = bruteforce_target == "random" ? "" : bruteforce_target;
    InjectionRecord rec = inject_bruteforce(data, target, 19, cfg.pop.seed);
    injections.push_back(injection_to_json(rec, "bruteforce"));
  }

  write_events(data.events, out_path(cfg, "events.jsonl"));
  data.fleet.directory.save(out_path(cfg, "inventory.tsv"));

  nlohmann::json truth;
  truth["population"] = {{"machines", cfg.pop.n_machines},
                         {"days", cfg.pop.days},
                         {"start_date", cfg.pop.start_date},
                         {"events", data.events.size()},
                         {"seed", cfg.pop.seed}};
  truth["injections"] = injections;
  {
    std::ofstream out(out_path(cfg, "ground_truth.json"));
    if (!out) throw IoError("cannot write ground_truth.json");
    out << truth.dump(2) << '\n';
  }

  // A ready-to-run config fragment pointing at the generated files.
  {
    std::ofstream out(out_path(cfg, "run.conf"));
    if (!out) throw IoError("cannot write run.conf");
    out << "ingest.events = " << out_path(cfg, "events.jsonl") << "\n"
        << "ingest.inventory = " << out_path(cfg, "inventory.tsv") << "\n";
    std::string internal, subset;
    for (const Cidr& c : data.fleet.directory.internal_cidrs)
      internal += (internal.empty() ? "" : ",") + c.str();
    for (const Cidr& c : data.fleet.subset.cidrs)
      subset += (subset.empty() ? "" : ",") + c.str();
    out << "ingest.internal_cidrs = " << internal << "\n"
        << "ingest.subset_cidrs = " << subset << "\n"
        << "run.seed = " << cfg.pop.seed << "\n";
  }

  std::cout << "wrote " << data.events.size() << " events for "
            << cfg.pop.n_machines << " machines over " << cfg.pop.days
            << " days to " << cfg.out_dir << "\n";
  return 0;
}

int cmd_run(const CommonOpts& opts, const std::string& ablation,
            const std::string& days, const std::string& command) {
  RunConfig cfg = resolve_config(opts);
  if (!days.empty()) apply_config_key(cfg, "run.days", days);
  if (ablation == "ae") cfg.model.variational = false;
  else if (ablation == "no-embedding") cfg.model.use_embedding_block = false;

  if (cfg.events_path.empty()) {
    std::cerr << "error: no event log configured (set ingest.events)\n";
    return 1;
  }
  if (!std::filesystem::exists(cfg.events_path)) {
    std::cerr << "error: event log not found: " << cfg.events_path << "\n";
    return 1;
  }

  MachineDirectory dir;
  if (!cfg.inventory_path.empty())
    dir = MachineDirectory::load(cfg.internal_cidrs, cfg.inventory_path);
  else
    dir.internal_cidrs = cfg.internal_cidrs;

  ParseStats stats;
  std::vector<NetConnEvent> events = parse_events_file(cfg.events_path, &stats);
  if (stats.skipped > 0)
    std::cerr << "warning: skipped " << stats.skipped
              << " malformed event lines\n";
  if (events.empty()) {
    std::cerr << "error: no parseable events in " << cfg.events_path << "\n";
    return 1;
  }

  RunResult result = run_pipeline(cfg, events, dir, cfg.out_dir);

  std::vector<std::pair<std::string, std::string>> inputs;
  inputs.emplace_back("events", cfg.events_path);
  if (!cfg.inventory_path.empty())
    inputs.emplace_back("inventory", cfg.inventory_path);
  write_manifest(cfg.out_dir, cfg, inputs, command);

  std::cout << "scored " << result.scored_days.size() << " of "
            << result.all_days.size() << " days\n\n";
  print_run_summary(std::cout, cfg.out_dir);
  return result.exit_code;
}

int cmd_report(const std::string& run_dir) {
  if (run_dir.empty() || !std::filesystem::is_directory(run_dir)) {
    std::cerr << "error: run directory not found: " << run_dir << "\n";
    return 1;
  }
  bool any = false;
  for (const auto& e : std::filesystem::directory_iterator(run_dir))
    any |= e.path().filename().string().rfind("report_", 0) == 0;
  if (!any) {
    std::cerr << "error: no reports in " << run_dir << "\n";
    return 1;
  }
  print_run_summary(std::cout, run_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph-based anomaly detection over endpoint netconn logs"};
  app.require_subcommand(1);

  CommonOpts synth_opts, run_opts;
  bool inject_attack_flag = false;
  std::string bruteforce_target, ablation, days, report_dir;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic event log");
  add_common(synth, synth_opts);
  synth->add_flag("--inject-attack", inject_attack_flag,
                  "inject the two-target attack pattern into the final day");
  synth->add_option("--inject-bruteforce", bruteforce_target,
                    "inject 19 enumeration events from TARGET ('random' to pick)");

  CLI::App* run = app.add_subcommand("run", "score each day of an event log");
  add_common(run, run_opts);
  run->add_option("--ablation", ablation, "model variant")
      ->check(CLI::IsMember({"vae", "ae", "no-embedding"}));
  run->add_option("--days", days, "scored day range YYYY-MM-DD[:YYYY-MM-DD]");

  CLI::App* report = app.add_subcommand("report", "summarize a finished run");
  report->add_option("dir", report_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed())
      return cmd_synth(synth_opts, inject_attack_flag, bruteforce_target);
    if (run->parsed())
      return cmd_run(run_opts, ablation, days, join_args(argc, argv));
    return cmd_report(report_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
