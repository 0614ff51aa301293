#include "fiited/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "fiited/power_law.hpp"

namespace fiited {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

/// Reads fields of one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }
  ~Fields() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items()) {
      if (!used_.contains(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }
  Fields(const Fields&) = delete;
  Fields& operator=(const Fields&) = delete;

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
  }
  void get_optional(const char* key, std::optional<double>& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
    } else {
      double v = 0.0;
      get(key, v);
      out = v;
    }
  }
  /// Sub-object, or nullptr when absent.
  const json* child(const char* key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  [[nodiscard]] std::string path(const std::string& key) const { return where_ + "." + key; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

std::string mode_name(RatioMode m) { return m == RatioMode::kManual ? "manual" : "adaptive"; }
std::string mode_name(UtilityMode m) { return m == UtilityMode::kGradient ? "gradient" : "frequency"; }
std::string projection_name(DenseProjection p) { return p == DenseProjection::kLearned ? "learned" : "identity"; }

template <typename E>
E parse_enum(const std::string& where, const std::string& value, std::initializer_list<std::pair<const char*, E>> names) {
  std::string allowed;
  for (const auto& [name, v] : names) {
    if (value == name) return v;
    allowed += allowed.empty() ? name : std::string("|") + name;
  }
  throw ConfigError(where + ": '" + value + "' is not one of " + allowed);
}

void read_synthetic(const json& j, const std::string& where, SyntheticSpec& s) {
  Fields f(j, where);
  f.get("num_features", s.num_features);
  f.get("cardinalities", s.cardinalities);
  f.get("zipf_exponent", s.zipf_exponent);
  f.get("hot_fraction", s.hot_fraction);
  f.get("samples", s.samples);
  f.get("seed", s.seed);
  f.get("drift_period", s.drift_period);
  f.get("dense_dim", s.dense_dim);
  f.get("signal_column_fraction", s.signal_column_fraction);
  f.get("noise_column_scale", s.noise_column_scale);
  f.get("bias_scale", s.bias_scale);
  f.get("vector_scale", s.vector_scale);
}

void read_plan(const json& j, const std::string& where, PruningPlan& p) {
  Fields f(j, where);
  f.get("period", p.period);
  f.get("sample_size", p.sample_size);
  f.get("gamma", p.gamma);
  std::string mode = mode_name(p.mode);
  f.get("mode", mode);
  p.mode = parse_enum<RatioMode>(f.path("mode"), mode, {{"manual", RatioMode::kManual}, {"adaptive", RatioMode::kAdaptive}});
  f.get("ratios", p.ratios);
  f.get("global_ratio", p.global_ratio);
  f.get("enforce_trigger", p.enforce_trigger);
  f.get("clamp_max", p.clamp_max);
  f.get("parallel_thresholds", p.parallel_thresholds);
}

void read_model(const json& j, const std::string& where, ModelConfig& m) {
  Fields f(j, where);
  f.get("embedding_dim", m.embedding_dim);
  f.get("mlp_layers", m.mlp_layers);
  f.get("lr", m.lr);
  f.get("embedding_lr", m.embedding_lr);
  std::string proj = projection_name(m.projection);
  f.get("projection", proj);
  m.projection = parse_enum<DenseProjection>(
      f.path("projection"), proj, {{"learned", DenseProjection::kLearned}, {"identity", DenseProjection::kIdentity}});
}

void read_train(const json& j, TrainRunConfig& t) {
  Fields f(j, "train");
  auto& tc = t.trainer;
  f.get("epochs", t.epochs);
  f.get("chunks", tc.chunks);
  f.get("pruning", tc.pruning);
  f.get("mean_ratio", t.mean_ratio);
  f.get_optional("exponent", t.exponent);
  std::string umode = mode_name(tc.utility_mode);
  f.get("utility_mode", umode);
  tc.utility_mode = parse_enum<UtilityMode>(
      f.path("utility_mode"), umode, {{"gradient", UtilityMode::kGradient}, {"frequency", UtilityMode::kFrequency}});
  f.get("table_entries", tc.table_entries);
  f.get("batch_size", tc.batch_size);
  f.get("eval_every", tc.eval_every);
  f.get("pipeline_utility_updates", tc.pipeline_utility_updates);
  if (const auto* m = f.child("model")) read_model(*m, "train.model", tc.model);
  if (const auto* p = f.child("plan")) read_plan(*p, "train.plan", tc.plan);
  if (const auto* d = f.child("dimension")) {
    Fields g(*d, "train.dimension");
    g.get("enabled", tc.dimension.enabled);
    g.get("keep_ratio", tc.dimension.keep_ratio);
    g.get("cold_start_iters", tc.dimension.cold_start_iters);
  }
}

void read_simulate(const json& j, SimulateRunConfig& s) {
  Fields f(j, "simulate");
  f.get("chunks", s.sim.plan.chunks);
  f.get("days", s.sim.days);
  f.get("batch_size", s.sim.batch_size);
  f.get("dim", s.sim.dim);
  f.get("table_entries", s.sim.table_entries);
  f.get("samples", s.samples);
  f.get("mean_ratio", s.mean_ratio);
  f.get_optional("exponent", s.exponent);
  if (const auto* p = f.child("plan")) read_plan(*p, "simulate.plan", s.sim.plan);
  if (const auto* g = f.child("grid")) {
    Fields h(*g, "simulate.grid");
    h.get("chunks", s.grid.chunks);
    h.get("mean_ratios", s.grid.mean_ratios);
    h.get("exponents", s.grid.exponents);
  }
}

ordered_json plan_json(const PruningPlan& p) {
  ordered_json j;
  j["period"] = p.period;
  j["sample_size"] = p.sample_size;
  j["gamma"] = p.gamma;
  j["mode"] = mode_name(p.mode);
  j["ratios"] = p.ratios;
  j["global_ratio"] = p.global_ratio;
  j["enforce_trigger"] = p.enforce_trigger;
  j["clamp_max"] = p.clamp_max;
  j["parallel_thresholds"] = p.parallel_thresholds;
  return j;
}

ordered_json optional_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

}  // namespace

RunConfig config_from_json(const json& j) {
  RunConfig c;
  Fields f(j, "config");
  f.get("seed", c.seed);
  if (const auto* d = f.child("data")) {
    Fields g(*d, "data");
    g.get("trace", c.data.trace);
    g.get("eval_samples", c.data.eval_samples);
    if (const auto* s = g.child("synthetic")) read_synthetic(*s, "data.synthetic", c.data.synthetic);
  }
  if (const auto* t = f.child("train")) read_train(*t, c.train);
  if (const auto* s = f.child("simulate")) read_simulate(*s, c.simulate);
  return c;
}

ordered_json config_to_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  const auto& s = c.data.synthetic;
  j["data"] = {
      {"trace", c.data.trace},
      {"eval_samples", c.data.eval_samples},
      {"synthetic",
       {{"num_features", s.num_features},
        {"cardinalities", s.cardinalities},
        {"zipf_exponent", s.zipf_exponent},
        {"hot_fraction", s.hot_fraction},
        {"samples", s.samples},
        {"seed", s.seed},
        {"drift_period", s.drift_period},
        {"dense_dim", s.dense_dim},
        {"signal_column_fraction", s.signal_column_fraction},
        {"noise_column_scale", s.noise_column_scale},
        {"bias_scale", s.bias_scale},
        {"vector_scale", s.vector_scale}}},
  };
  const auto& tc = c.train.trainer;
  ordered_json train;
  train["epochs"] = c.train.epochs;
  train["chunks"] = tc.chunks;
  train["pruning"] = tc.pruning;
  train["mean_ratio"] = c.train.mean_ratio;
  train["exponent"] = optional_json(c.train.exponent);
  train["utility_mode"] = mode_name(tc.utility_mode);
  train["table_entries"] = tc.table_entries;
  train["batch_size"] = tc.batch_size;
  train["eval_every"] = tc.eval_every;
  train["pipeline_utility_updates"] = tc.pipeline_utility_updates;
  train["model"] = {
      {"embedding_dim", tc.model.embedding_dim},
      {"mlp_layers", tc.model.mlp_layers},
      {"lr", tc.model.lr},
      {"embedding_lr", tc.model.embedding_lr},
      {"projection", projection_name(tc.model.projection)},
  };
  train["plan"] = plan_json(tc.plan);
  train["dimension"] = {
      {"enabled", tc.dimension.enabled},
      {"keep_ratio", tc.dimension.keep_ratio},
      {"cold_start_iters", tc.dimension.cold_start_iters},
  };
  j["train"] = train;

  const auto& sm = c.simulate;
  ordered_json sim;
  sim["chunks"] = sm.sim.plan.chunks;
  sim["days"] = sm.sim.days;
  sim["batch_size"] = sm.sim.batch_size;
  sim["dim"] = sm.sim.dim;
  sim["table_entries"] = sm.sim.table_entries;
  sim["samples"] = sm.samples;
  sim["mean_ratio"] = sm.mean_ratio;
  sim["exponent"] = optional_json(sm.exponent);
  sim["plan"] = plan_json(sm.sim.plan);
  sim["grid"] = {
      {"chunks", sm.grid.chunks},
      {"mean_ratios", sm.grid.mean_ratios},
      {"exponents", sm.grid.exponents},
  };
  j["simulate"] = sim;
  return j;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

void propagate_seed(RunConfig& c) {
  c.data.synthetic.seed = c.seed;
  c.train.trainer.model.seed = c.seed;
  c.simulate.sim.seed = c.seed;
}

void resolve_ratios(RunConfig& c) {
  auto& tc = c.train.trainer;
  tc.model.num_features = c.data.synthetic.num_features;
  tc.model.dense_dim = c.data.synthetic.dense_dim;
  tc.plan.chunks = tc.chunks;
  if (c.train.exponent) {
    tc.plan.mode = RatioMode::kManual;
    tc.plan.ratios = fit_power_law_ratios(tc.chunks, *c.train.exponent, c.train.mean_ratio, tc.plan.clamp_max);
  }
  auto& sp = c.simulate.sim.plan;
  if (c.simulate.exponent) {
    sp.mode = RatioMode::kManual;
    sp.ratios = fit_power_law_ratios(sp.chunks, *c.simulate.exponent, c.simulate.mean_ratio, sp.clamp_max);
  }
  c.simulate.sim.exponent = c.simulate.exponent;
}

std::string config_hash(const RunConfig& c) {
  const std::string text = config_to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fiited
