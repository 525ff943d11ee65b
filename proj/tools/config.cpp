#include "config.hpp"

#include "cityest/errors.hpp"
#include "cityest/parallel.hpp"

#include <fstream>
#include <set>

namespace cityest::cli {

namespace {

using nlohmann::json;

// Typed access to one JSON object; reports unknown keys on finish().
class Section {
 public:
  Section(const json& doc, std::string name) : name_(std::move(name)) {
    if (doc.is_null()) return;
    if (!doc.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
    obj_ = &doc;
  }

  template <typename T>
  void get(const char* key, T& dst) {
    used_.insert(key);
    if (!obj_ || !obj_->contains(key)) return;
    try {
      dst = obj_->at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + where(key) + "' has the wrong type");
    }
  }

  template <typename T>
  void get(const char* key, std::optional<T>& dst) {
    used_.insert(key);
    if (!obj_ || !obj_->contains(key) || obj_->at(key).is_null()) return;
    T v{};
    get(key, v);
    dst = v;
  }

  void path(const char* key, std::optional<fs::path>& dst, const fs::path& base) {
    std::optional<std::string> s;
    get(key, s);
    if (s) dst = fs::path(*s).is_absolute() ? fs::path(*s) : base / *s;
  }

  const json& child(const char* key) {
    used_.insert(key);
    static const json null;
    return obj_ && obj_->contains(key) ? obj_->at(key) : null;
  }

  void finish() const {
    if (!obj_) return;
    for (const auto& [k, v] : obj_->items()) {
      if (!used_.contains(k)) throw ConfigError("unknown config key '" + where(k.c_str()) + "'");
    }
  }

 private:
  std::string where(const char* key) const { return name_.empty() ? key : name_ + "." + key; }

  std::string name_;
  const json* obj_ = nullptr;
  std::set<std::string> used_;
};

}  // namespace

unsigned PipelineConfig::worker_count() const { return threads == 0 ? default_threads() : threads; }

void PipelineConfig::validate() const {
  match.validate();
  spsa.validate();
  completion.validate();
  probe.validate();
  if (refine.max_iters < 1 || !(refine.stop_tol >= 0) || !(refine.damping > 0 && refine.damping <= 1)) {
    throw ConfigError("refine needs max_iters >= 1, stop_tol >= 0, damping in (0, 1]");
  }
  if (!(infer.lambda >= 0) || !(infer.tol > 0) || infer.max_iter < 1) {
    throw ConfigError("infer needs lambda >= 0, tol > 0, max_iter >= 1");
  }
  if (!(ue.tol > 0) || ue.max_iter < 1) throw ConfigError("ue needs tol > 0, max_iter >= 1");
  if (!(deterrence_scale > 0) || !(total_trips >= 0)) {
    throw ConfigError("demand needs deterrence_scale > 0, total_trips >= 0");
  }
  if (multipliers.empty()) throw ConfigError("scenarios.multipliers must not be empty");
  for (double m : multipliers)
    if (!(m > 0)) throw ConfigError("scenario multipliers must be positive");
  if (schedule_period < 1) throw ConfigError("scenarios.schedule_period must be >= 1");
  if (target_traces && *target_traces == 0) throw ConfigError("probe.target_traces must be positive");
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("--set key '" + key + "' has an empty component");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

nlohmann::json read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw ConfigError(path.string() + ": config must be a JSON object");
  return doc;
}

PipelineConfig parse_config(const nlohmann::json& doc, const fs::path& base_dir) {
  PipelineConfig c;
  Section root(doc, "");
  root.get("seed", c.seed);
  root.get("threads", c.threads);
  std::optional<fs::path> out_dir;
  root.path("out_dir", out_dir, base_dir);
  if (out_dir) c.out_dir = *out_dir;

  {
    Section s(root.child("paths"), "paths");
    auto& p = c.paths;
    s.path("osm", p.osm, base_dir);
    s.path("network", p.network, base_dir);
    s.path("taz", p.taz, base_dir);
    s.path("demand", p.demand, base_dir);
    s.path("scenarios", p.scenarios, base_dir);
    s.path("schedule", p.schedule, base_dir);
    s.path("traces", p.traces, base_dir);
    s.path("trips", p.trips, base_dir);
    s.path("matched", p.matched, base_dir);
    s.path("estimates", p.estimates, base_dir);
    s.path("baseline_estimates", p.baseline_estimates, base_dir);
    s.path("baseline_matched", p.baseline_matched, base_dir);
    s.path("od_dir", p.od_dir, base_dir);
    s.path("matrix", p.matrix, base_dir);
    s.path("completed", p.completed, base_dir);
    s.finish();
  }
  {
    Section s(root.child("time_grid"), "time_grid");
    double seconds = c.grid.interval_seconds();
    int count = c.grid.interval_count();
    s.get("interval_seconds", seconds);
    s.get("interval_count", count);
    s.finish();
    c.grid = TimeGrid(seconds, count);
  }
  {
    Section s(root.child("match"), "match");
    auto& m = c.match;
    s.get("gps_sigma", m.gps_sigma);
    s.get("nk_beta", m.nk_beta);
    s.get("tt_tau", m.tt_tau);
    s.get("radius", m.radius);
    s.get("max_candidates", m.max_candidates);
    s.get("gap_factor", m.gap_factor);
    s.get("backtrack_tolerance", m.backtrack_tolerance);
    s.finish();
  }
  {
    Section s(root.child("infer"), "infer");
    s.get("lambda", c.infer.lambda);
    s.get("tol", c.infer.tol);
    s.get("max_iter", c.infer.max_iter);
    s.finish();
  }
  {
    Section s(root.child("refine"), "refine");
    s.get("max_iters", c.refine.max_iters);
    s.get("stop_tol", c.refine.stop_tol);
    s.get("damping", c.refine.damping);
    s.finish();
  }
  {
    Section s(root.child("spsa"), "spsa");
    auto& p = c.spsa;
    s.get("a0", p.a0);
    s.get("c0", p.c0);
    s.get("alpha_decay", p.alpha_decay);
    s.get("gamma_decay", p.gamma_decay);
    s.get("max_outer", p.max_outer);
    s.get("mu", p.mu);
    s.get("stability", p.stability);
    s.get("record_every", p.record_every);
    s.get("max_log_step", p.max_log_step);
    s.get("reset_factor", p.reset_factor);
    s.get("initial_step", p.initial_step);
    s.get("weight_by_support", p.weight_by_support);
    s.finish();
  }
  {
    Section s(root.child("ue"), "ue");
    s.get("tol", c.ue.tol);
    s.get("max_iter", c.ue.max_iter);
    s.get("alpha", c.ue.vdf.alpha);
    s.get("beta", c.ue.vdf.beta);
    s.finish();
    c.scenario_assignment.vdf = c.ue.vdf;
  }
  {
    Section s(root.child("completion"), "completion");
    s.get("svt_threshold", c.completion.svt_threshold);
    s.get("step", c.completion.step);
    s.get("max_iter", c.completion.max_iter);
    s.get("tol", c.completion.tol);
    s.finish();
  }
  {
    Section s(root.child("probe"), "probe");
    s.get("sampling_period", c.probe.sampling_period);
    s.get("gps_sigma", c.probe.gps_sigma);
    s.get("penetration", c.probe.penetration);
    s.get("target_traces", c.target_traces);
    s.finish();
  }
  {
    Section s(root.child("demand"), "demand");
    s.get("deterrence_scale", c.deterrence_scale);
    s.get("total_trips", c.total_trips);
    s.finish();
  }
  {
    Section s(root.child("scenarios"), "scenarios");
    s.get("multipliers", c.multipliers);
    s.get("schedule_period", c.schedule_period);
    s.get("tol", c.scenario_assignment.tol);
    s.get("max_iter", c.scenario_assignment.max_iter);
    s.finish();
  }
  {
    Section s(root.child("grid"), "grid");
    auto& g = c.grid_fixture;
    s.get("rows", g.rows);
    s.get("cols", g.cols);
    s.get("spacing_m", g.spacing_m);
    s.get("arterial_every", g.arterial_every);
    s.get("taz_count", g.taz_count);
    double lat = g.origin.lat, lon = g.origin.lon;
    s.get("origin_lat", lat);
    s.get("origin_lon", lon);
    g.origin = {lat, lon};
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

}  // namespace cityest::cli
