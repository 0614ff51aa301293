#include "fiited/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <unordered_set>

#include <CLI11.hpp>
#include <json.hpp>

#include "fiited/config.hpp"
#include "fiited/snapshot.hpp"
#include "fiited/synthetic.hpp"
#include "fiited/trace.hpp"

namespace fiited {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "runs";
};

struct TrainOptions {
  std::optional<double> ratio;
  std::optional<std::size_t> chunks;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> samples;
  bool no_pruning = false;
  bool snapshot = false;
};

struct SimulateOptions {
  std::optional<double> ratio;
  std::optional<std::size_t> chunks;
  std::optional<double> exponent;
  std::optional<std::size_t> days;
  std::optional<std::size_t> samples;
  bool parallel = false;
};

struct ReportOptions {
  std::string metrics_dir;
  std::string csv;
};

struct SnapshotOptions {
  std::string action;
  std::string path;
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::uint64_t seed_from_env() {
  const char* raw = std::getenv("FIITED_SEED");
  if (raw == nullptr) return 0;
  const std::string text(raw);
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw UsageError("FIITED_SEED must be an unsigned integer, got '" + text + "'");
  }
  return v;
}

/// Config file, then FIITED_SEED, then --seed.
RunConfig base_config(const CommonOptions& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (std::getenv("FIITED_SEED") != nullptr) c.seed = seed_from_env();
  if (o.seed) c.seed = *o.seed;
  propagate_seed(c);
  return c;
}

/// Hash of the config with the seed zeroed: runs that differ only in seed share it.
std::string group_hash(const RunConfig& c) {
  RunConfig g = c;
  g.seed = 0;
  propagate_seed(g);
  return config_hash(g);
}

fs::path prepare_run_dir(const CommonOptions& o, const std::string& kind, const std::string& hash) {
  const fs::path dir = fs::path(o.out_dir) / (kind + "-" + hash);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create run directory " + dir.string() + ": " + ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::unique_ptr<SampleSource> open_source(const RunConfig& c, std::size_t samples) {
  if (!c.data.trace.empty()) {
    if (!fs::exists(c.data.trace)) throw std::runtime_error("trace file not found: " + c.data.trace);
    return std::make_unique<TraceReader>(c.data.trace);
  }
  return std::make_unique<SyntheticGenerator>(c.data.synthetic, 0, samples);
}

std::size_t count_distinct_keys(SampleSource& source) {
  std::unordered_set<std::uint64_t> keys;
  Batch b;
  source.reset();
  while (source.next_batch(4096, b)) {
    for (std::size_t s = 0; s < b.size(); ++s) {
      for (std::size_t f = 0; f < b.num_features; ++f) keys.insert(key_digest(b.key(s, f)));
    }
  }
  source.reset();
  return keys.size();
}

int cmd_train(const CommonOptions& common, const TrainOptions& o, std::ostream& out) {
  RunConfig c = base_config(common);
  auto& tc = c.train.trainer;
  if (o.ratio) c.train.mean_ratio = *o.ratio;
  if (o.chunks) tc.chunks = *o.chunks;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.samples) c.data.synthetic.samples = *o.samples;
  if (o.no_pruning) tc.pruning = false;
  c.data.synthetic.validate();
  resolve_ratios(c);

  auto source = open_source(c, 0);
  tc.model.num_features = source->num_features();
  tc.model.dense_dim = source->dense_dim();
  tc.validate();
  const std::size_t expected = count_distinct_keys(*source);

  std::unique_ptr<SyntheticGenerator> eval;
  if (c.data.trace.empty() && c.data.eval_samples > 0) {
    eval = std::make_unique<SyntheticGenerator>(c.data.synthetic, 1, c.data.eval_samples);
  }

  const std::string hash = config_hash(c);
  const fs::path dir = prepare_run_dir(common, "train", hash);
  write_text(dir / "config.json", config_to_json(c).dump(2) + "\n");

  Trainer trainer(tc, expected);
  const auto series = trainer.train(*source, c.train.epochs, eval.get());
  const std::string metrics_name = "metrics_" + hash + ".csv";
  series.write_csv((dir / metrics_name).string());
  std::string events;
  std::size_t evictions = 0;
  std::size_t allocations = 0;
  for (const auto& e : series.events) {
    events += e.to_json_line() + "\n";
    evictions += e.evicted;
    allocations += e.allocated;
  }
  write_text(dir / "events.jsonl", events);
  if (o.snapshot) save_snapshot(trainer.store(), (dir / "store.snapshot").string());

  const auto stats = trainer.store().stats();
  ordered_json s;
  s["kind"] = "train";
  s["seed"] = c.seed;
  s["config_hash"] = hash;
  s["group"] = group_hash(c);
  s["chunks"] = tc.chunks;
  s["pruning"] = tc.pruning;
  s["mean_ratio"] = tc.pruning ? tc.plan.mean_ratio() : 0.0;
  s["keep_budget"] = tc.pruning ? tc.plan.keep_budget() : 1.0;
  s["ratios"] = tc.pruning ? tc.plan.ratios : std::vector<double>{};
  s["iterations"] = trainer.iteration();
  s["events"] = series.events.size();
  s["evictions"] = evictions;
  s["allocations"] = allocations;
  s["expected_keys"] = expected;
  s["capacity_chunks"] = stats.capacity_chunks;
  s["arena_bytes"] = stats.arena_bytes;
  s["training_overhead_ratio"] = stats.training_overhead_ratio;
  s["inference_overhead_ratio"] = stats.inference_overhead_ratio;
  if (series.final_eval) {
    s["accuracy_source"] = "heldout";
    s["final_accuracy"] = series.final_eval->accuracy;
    s["final_loss"] = series.final_eval->loss;
  } else if (!series.rows.empty()) {
    s["accuracy_source"] = "last_window";
    s["final_accuracy"] = series.rows.back().accuracy;
    s["final_loss"] = series.rows.back().loss;
  }
  s["metrics_file"] = metrics_name;
  write_text(dir / "summary.json", s.dump(2) + "\n");

  out << "train run " << hash << ": " << trainer.iteration() << " iterations, " << series.events.size()
      << " pruning events";
  if (s.contains("final_accuracy")) out << ", accuracy " << fmt("%.4f", s["final_accuracy"].get<double>());
  out << "\n" << "wrote " << dir.string() << "\n";
  return 0;
}

AccessTrace load_accesses(const RunConfig& c) {
  auto source = open_source(c, c.simulate.samples);
  return collect_accesses(*source);
}

ordered_json sim_cell_json(const SimReport& r) {
  ordered_json j;
  j["label"] = "K=" + std::to_string(r.chunks) + " p=" + fmt("%g", r.mean_ratio) +
               (r.exponent ? " a=" + fmt("%g", *r.exponent) : std::string());
  j["chunks"] = r.chunks;
  j["mean_ratio"] = r.mean_ratio;
  j["exponent"] = r.exponent ? ordered_json(*r.exponent) : ordered_json(nullptr);
  j["evictions_per_event"] = r.mean_evictions_per_event();
  j["evictions_embedding_level"] = r.evictions_embedding_level();
  j["allocations_embedding_level"] = r.allocations_embedding_level();
  j["accesses_embedding_level"] = r.accesses_embedding_level();
  return j;
}

int cmd_simulate(const CommonOptions& common, const SimulateOptions& o, std::ostream& out) {
  RunConfig c = base_config(common);
  auto& sm = c.simulate;
  if (o.ratio) sm.mean_ratio = *o.ratio;
  if (o.chunks) sm.sim.plan.chunks = *o.chunks;
  if (o.exponent) sm.exponent = *o.exponent;
  if (o.days) sm.sim.days = *o.days;
  if (o.samples) sm.samples = *o.samples;
  c.data.synthetic.validate();
  resolve_ratios(c);
  sm.sim.plan.validate();

  const auto trace = load_accesses(c);
  const std::string hash = config_hash(c);
  const fs::path dir = prepare_run_dir(common, "simulate", hash);
  write_text(dir / "config.json", config_to_json(c).dump(2) + "\n");
  const auto report = simulate(trace, sm.sim);
  write_text(dir / "report.json", report.to_json() + "\n");

  ordered_json s = sim_cell_json(report);
  s["kind"] = "simulate";
  s["seed"] = c.seed;
  s["config_hash"] = hash;
  s["group"] = group_hash(c);
  s["evictions"] = report.evictions;
  s["allocations"] = report.allocations;
  write_text(dir / "summary.json", s.dump(2) + "\n");

  out << "simulate run " << hash << ": " << report.evictions << " evictions, " << report.allocations
      << " allocations, " << report.chunk_accesses << " live chunk accesses\n"
      << "wrote " << dir.string() << "\n";
  return 0;
}

int cmd_sweep(const CommonOptions& common, const SimulateOptions& o, std::ostream& out) {
  RunConfig c = base_config(common);
  auto& sm = c.simulate;
  if (o.days) sm.sim.days = *o.days;
  if (o.samples) sm.samples = *o.samples;
  c.data.synthetic.validate();
  resolve_ratios(c);

  const auto trace = load_accesses(c);
  const std::string hash = config_hash(c);
  const fs::path dir = prepare_run_dir(common, "sweep", hash);
  write_text(dir / "config.json", config_to_json(c).dump(2) + "\n");
  const auto reports = sweep(trace, sm.grid, sm.sim, o.parallel);
  write_text(dir / "sweep.csv", sweep_csv(reports));

  ordered_json s;
  s["kind"] = "sweep";
  s["seed"] = c.seed;
  s["config_hash"] = hash;
  s["group"] = group_hash(c);
  s["cells"] = ordered_json::array();
  for (const auto& r : reports) s["cells"].push_back(sim_cell_json(r));
  write_text(dir / "summary.json", s.dump(2) + "\n");

  out << "sweep run " << hash << ": " << reports.size() << " cells\n" << "wrote " << dir.string() << "\n";
  return 0;
}

struct Aggregate {
  std::string label;
  std::size_t runs = 0;
  std::map<std::string, std::vector<double>> metrics;
};

struct Stat {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

Stat summarize(const std::vector<double>& v) {
  Stat s;
  if (v.empty()) return s;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  for (const double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  return s;
}

std::string mean_pm(const std::vector<double>& v) {
  const Stat s = summarize(v);
  if (v.size() < 2) return fmt("%.4f", s.mean);
  return fmt("%.4f", s.mean) + " ± " + fmt("%.4f", (s.max - s.min) / 2.0) + " [" + fmt("%.4f", s.min) + ", " +
         fmt("%.4f", s.max) + "]";
}

using Section = std::map<std::string, Aggregate>;

void add_metric(Aggregate& a, const json& j, const char* key) {
  if (j.contains(key) && j.at(key).is_number()) a.metrics[key].push_back(j.at(key).get<double>());
}

void print_section(std::ostream& out, const std::string& title, const Section& sec, const std::vector<const char*>& cols) {
  out << "== " << title << " ==\n";
  std::vector<const Aggregate*> rows;
  for (const auto& [_, a] : sec) rows.push_back(&a);
  std::sort(rows.begin(), rows.end(), [](const Aggregate* x, const Aggregate* y) { return x->label < y->label; });
  for (const auto* a : rows) {
    out << a->label << "  runs=" << a->runs;
    for (const char* col : cols) {
      const auto it = a->metrics.find(col);
      if (it != a->metrics.end()) out << "  " << col << "=" << mean_pm(it->second);
    }
    out << "\n";
  }
}

void append_csv(std::string& csv, const std::string& section, const Section& sec) {
  for (const auto& [group, a] : sec) {
    for (const auto& [metric, values] : a.metrics) {
      const Stat s = summarize(values);
      csv += section + "," + group + ",\"" + a.label + "\"," + std::to_string(a.runs) + "," + metric + "," +
             shortest(s.mean) + "," + shortest(s.min) + "," + shortest(s.max) + "\n";
    }
  }
}

int cmd_report(const ReportOptions& o, std::ostream& out) {
  if (!fs::is_directory(o.metrics_dir)) throw std::runtime_error("metrics directory not found: " + o.metrics_dir);
  std::vector<fs::path> summaries;
  for (const auto& entry : fs::directory_iterator(o.metrics_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "summary.json")) summaries.push_back(entry.path() / "summary.json");
  }
  if (summaries.empty()) throw std::runtime_error("no runs found in " + o.metrics_dir);
  std::sort(summaries.begin(), summaries.end());

  Section train;
  Section churn;
  for (const auto& path : summaries) {
    std::ifstream in(path);
    json s;
    try {
      s = json::parse(in);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("malformed run summary " + path.string() + ": " + e.what());
    }
    const std::string kind = s.value("kind", "");
    const std::string group = s.value("group", path.parent_path().filename().string());
    if (kind == "train") {
      auto& a = train[group];
      a.label = "K=" + std::to_string(s.value("chunks", 0)) + " keep=" + fmt("%.2f", s.value("keep_budget", 1.0)) +
                (s.value("pruning", true) ? "" : " unpruned");
      ++a.runs;
      add_metric(a, s, "final_accuracy");
      add_metric(a, s, "final_loss");
      add_metric(a, s, "evictions");
    } else if (kind == "simulate" || kind == "sweep") {
      const json cells = kind == "sweep" ? s.at("cells") : json::array({s});
      for (const auto& cell : cells) {
        auto& a = churn[group + "/" + cell.value("label", "")];
        a.label = cell.value("label", "");
        ++a.runs;
        add_metric(a, cell, "evictions_per_event");
        add_metric(a, cell, "evictions_embedding_level");
        add_metric(a, cell, "allocations_embedding_level");
        add_metric(a, cell, "accesses_embedding_level");
      }
    }
  }
  if (train.empty() && churn.empty()) throw std::runtime_error("no runs found in " + o.metrics_dir);
  if (!train.empty()) print_section(out, "train: accuracy vs keep budget", train, {"final_accuracy", "final_loss"});
  if (!churn.empty()) {
    if (!train.empty()) out << "\n";
    print_section(out, "simulate: churn", churn,
                  {"evictions_per_event", "evictions_embedding_level", "allocations_embedding_level",
                   "accesses_embedding_level"});
  }
  if (!o.csv.empty()) {
    std::string csv = "section,group,label,runs,metric,mean,min,max\n";
    append_csv(csv, "train", train);
    append_csv(csv, "simulate", churn);
    write_text(o.csv, csv);
  }
  return 0;
}

int cmd_snapshot(const SnapshotOptions& o, std::ostream& out) {
  if (!fs::exists(o.path)) throw std::runtime_error("snapshot file not found: " + o.path);
  std::ifstream in(o.path, std::ios::binary);
  const auto h = read_snapshot_header(in);
  if (o.action == "inspect") {
    ordered_json j;
    j["version"] = h.version;
    j["scalar_bytes"] = h.scalar_bytes;
    j["chunks"] = h.config.chunks;
    j["dim"] = h.config.dim;
    j["capacity_chunks"] = h.config.capacity_chunks;
    j["table_entries"] = h.config.table_entries;
    j["num_features"] = h.config.num_features;
    j["payload"] = h.config.payload;
    j["utility_mode"] = h.config.utility_mode == UtilityMode::kGradient ? "gradient" : "frequency";
    j["gamma"] = h.config.gamma;
    j["total_allocations"] = h.total_allocations;
    j["total_evictions"] = h.total_evictions;
    out << j.dump(2) << "\n";
    return 0;
  }
  StoreStats stats;
  if (h.scalar_bytes == sizeof(double)) {
    stats = load_snapshot<double>(o.path).stats();
  } else if (h.scalar_bytes == sizeof(float)) {
    stats = load_snapshot<float>(o.path).stats();
  } else {
    throw SnapshotError("unsupported scalar width " + std::to_string(h.scalar_bytes));
  }
  out << "ok: " << stats.live_chunks << " live + " << stats.free_chunks << " free = " << stats.capacity_chunks
      << " slots, " << stats.seen_entries << " seen entries\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fine-grained embedding pruning: training, simulation and reporting", "fiited"};
  app.require_subcommand(1);

  CommonOptions common;
  TrainOptions train_opts;
  SimulateOptions sim_opts;
  ReportOptions report_opts;
  SnapshotOptions snap_opts;

  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON run config; omitted keys keep their defaults")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Seed override (takes precedence over FIITED_SEED)");
    sub->add_option("--out-dir", common.out_dir, "Directory receiving run outputs")->capture_default_str();
  };

  auto* train = app.add_subcommand("train", "Train the interaction model over the pruned store");
  add_common(train);
  train->add_option("--ratio", train_opts.ratio, "Average pruning ratio")->check(CLI::Range(0.0, 1.0));
  train->add_option("--chunks", train_opts.chunks, "Chunks per embedding (K)");
  train->add_option("--epochs", train_opts.epochs, "Training epochs");
  train->add_option("--samples", train_opts.samples, "Synthetic training samples");
  train->add_flag("--no-pruning", train_opts.no_pruning, "Train the unpruned baseline");
  train->add_flag("--snapshot", train_opts.snapshot, "Save the final store to store.snapshot");

  auto* sim = app.add_subcommand("simulate", "Replay accesses through the store without training");
  add_common(sim);
  sim->add_option("--ratio", sim_opts.ratio, "Average pruning ratio")->check(CLI::Range(0.0, 1.0));
  sim->add_option("--chunks", sim_opts.chunks, "Chunks per embedding (K)");
  sim->add_option("--exponent", sim_opts.exponent, "Power-law exponent for per-chunk ratios");
  sim->add_option("--days", sim_opts.days, "Trace segments, one pruning event each");
  sim->add_option("--samples", sim_opts.samples, "Samples replayed");

  auto* sw = app.add_subcommand("sweep", "Simulate every (K, ratio, exponent) cell of the configured grid");
  add_common(sw);
  sw->add_option("--days", sim_opts.days, "Trace segments, one pruning event each");
  sw->add_option("--samples", sim_opts.samples, "Samples replayed");
  sw->add_flag("--parallel", sim_opts.parallel, "Run cells concurrently");

  auto* report = app.add_subcommand("report", "Summarize the runs under a metrics directory");
  report->add_option("metrics-dir", report_opts.metrics_dir, "Directory holding run subdirectories")->required();
  report->add_option("--csv", report_opts.csv, "Also write the summary as CSV");

  auto* snap = app.add_subcommand("snapshot", "Inspect or verify a store snapshot");
  snap->add_option("action", snap_opts.action, "inspect | verify")->required()->check(CLI::IsMember({"inspect", "verify"}));
  snap->add_option("path", snap_opts.path, "Snapshot file")->required();

  std::vector<const char*> argv{"fiited"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << " (run with --help for usage)\n";
    return 2;
  }

  try {
    if (train->parsed()) return cmd_train(common, train_opts, out);
    if (sim->parsed()) return cmd_simulate(common, sim_opts, out);
    if (sw->parsed()) return cmd_sweep(common, sim_opts, out);
    if (report->parsed()) return cmd_report(report_opts, out);
    if (snap->parsed()) return cmd_snapshot(snap_opts, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace fiited
