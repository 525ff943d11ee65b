#include "cli.hpp"

#include "config.hpp"

#include "cityest/csv.hpp"
#include "cityest/errors.hpp"
#include "cityest/parallel.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace cityest::cli {

namespace {

using nlohmann::json;

struct Flags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out_dir;
  std::vector<std::string> overrides;
  std::optional<int> interval;
  std::map<std::string, std::optional<std::string>> paths;
};

// Files written by the running command, relative to the output directory.
class Run {
 public:
  Run(PipelineConfig cfg, std::optional<int> interval, std::ostream& out, std::ostream& err)
      : cfg(std::move(cfg)), interval(interval), out(out), err(err) {}

  PipelineConfig cfg;
  std::optional<int> interval;
  std::ostream& out;
  std::ostream& err;
  std::vector<fs::path> written;

  fs::path output(const fs::path& rel) const { return cfg.out_dir / rel; }

  fs::path input(const std::optional<fs::path>& given, const fs::path& default_rel, const char* what) const {
    const fs::path p = given ? *given : output(default_rel);
    if (!fs::exists(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
    return p;
  }

  bool available(const std::optional<fs::path>& given, const fs::path& default_rel) const {
    return fs::exists(given ? *given : output(default_rel));
  }

  void write(const fs::path& rel, const std::function<void(std::ostream&)>& body) {
    const fs::path p = output(rel);
    fs::create_directories(p.parent_path());
    {
      std::ofstream f(p, std::ios::binary | std::ios::trunc);
      if (!f) throw ConfigError("cannot write " + p.string());
      body(f);
      f.flush();
      if (!f) throw ConfigError("cannot write " + p.string());
    }
    std::error_code ec;
    fs::remove(fs::path(p.string() + ".partial"), ec);
    written.push_back(rel);
  }

  void mark_partial() {
    for (const auto& rel : written) {
      const fs::path p = output(rel);
      std::error_code ec;
      fs::rename(p, fs::path(p.string() + ".partial"), ec);
    }
  }
};

std::ifstream open_input(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + p.string());
  return in;
}

// Runs a reader, prefixing input errors with the file name.
template <typename Fn>
auto read_file(const fs::path& p, Fn&& fn) {
  auto in = open_input(p);
  try {
    return fn(in);
  } catch (const InputError& e) {
    const std::string what = e.what();
    if (what.find(p.string()) != std::string::npos) throw;
    throw InputError(p.string() + ": " + what);
  }
}

std::vector<fs::path> files_in(const fs::path& p, const std::string& prefix) {
  if (!fs::is_directory(p)) return {p};
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(p)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.starts_with(prefix) && name.ends_with(".csv")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InputError(p.string() + ": no " + prefix + "*.csv files");
  return files;
}

std::string padded(int k, int count) {
  const int width = static_cast<int>(std::to_string(std::max(0, count - 1)).size());
  std::ostringstream s;
  s << std::setw(width) << std::setfill('0') << k;
  return s.str();
}

// ---------------------------------------------------------------------------
// Loaders

RoadNetwork load_network(const Run& r) {
  return read_file(r.input(r.cfg.paths.network, "network.json", "network file"),
                   [](std::istream& in) { return read_network_json(in); });
}

std::vector<Taz> load_tazs(const Run& r, const RoadNetwork& net) {
  return read_file(r.input(r.cfg.paths.taz, "taz.csv", "TAZ file"),
                   [&](std::istream& in) { return read_taz_csv(in, net); });
}

DemandMatrix load_demand(const Run& r) {
  return read_file(r.input(r.cfg.paths.demand, "demand.csv", "demand file"),
                   [](std::istream& in) { return read_demand_csv(in); });
}

std::vector<GpsTrace> load_traces(const Run& r) {
  std::vector<GpsTrace> all;
  std::set<std::int64_t> ids;
  for (const auto& f : files_in(r.input(r.cfg.paths.traces, "traces", "trace input"), "traces_")) {
    auto traces = read_file(f, [&](std::istream& in) { return read_traces_csv(in, f.string()); });
    if (traces.empty()) throw InputError(f.string() + ": no trace points");
    for (auto& t : traces) {
      if (!ids.insert(t.vehicle_id).second) {
        throw InputError(f.string() + ": vehicle " + std::to_string(t.vehicle_id) + " appears in several files");
      }
      all.push_back(std::move(t));
    }
  }
  std::sort(all.begin(), all.end(), [](const GpsTrace& a, const GpsTrace& b) { return a.vehicle_id < b.vehicle_id; });
  return all;
}

std::vector<TruthTrip> load_trips(const Run& r, const RoadNetwork& net) {
  std::vector<TruthTrip> all;
  for (const auto& f : files_in(r.input(r.cfg.paths.trips, "trips", "trip input"), "trips_")) {
    auto trips = read_file(f, [&](std::istream& in) { return read_trips_csv(in, net); });
    for (auto& t : trips) all.push_back(std::move(t));
  }
  std::sort(all.begin(), all.end(), [](const TruthTrip& a, const TruthTrip& b) { return a.vehicle_id < b.vehicle_id; });
  return all;
}

std::vector<SegmentTimeEstimate> load_estimates(const Run& r, const RoadNetwork& net, const std::optional<fs::path>& p,
                                                const fs::path& def) {
  return read_file(r.input(p, def, "estimate file"), [&](std::istream& in) { return read_estimates_csv(in, net); });
}

std::vector<MatchedPath> load_matched(const Run& r, const RoadNetwork& net, const std::optional<fs::path>& p,
                                      const fs::path& def) {
  return read_file(r.input(p, def, "matched file"), [&](std::istream& in) { return read_matched_csv(in, net); });
}

std::vector<ScheduleRow> load_schedule(const Run& r) {
  return read_file(r.input(r.cfg.paths.schedule, "schedule.csv", "schedule file"),
                   [&](std::istream& in) { return read_schedule_csv(in, r.cfg.grid); });
}

// scenarios.csv lists id, multiplier and the truth file (relative to itself).
std::vector<GroundTruthScenario> load_scenarios(const Run& r, const RoadNetwork& net) {
  const auto index = r.input(r.cfg.paths.scenarios, "scenarios.csv", "scenario index");
  std::vector<std::pair<GroundTruthScenario, fs::path>> rows;
  read_file(index, [&](std::istream& in) {
    CsvReader csv(in, {"scenario", "demand_multiplier", "truth_file"}, index.string());
    while (csv.next()) {
      GroundTruthScenario s;
      s.id = static_cast<int>(csv.get_int(0));
      s.demand_multiplier = csv.get_double(1);
      rows.emplace_back(std::move(s), index.parent_path() / csv.get(2));
    }
    return 0;
  });
  if (rows.empty()) throw InputError(index.string() + ": no scenarios");
  std::vector<GroundTruthScenario> out;
  for (auto& [s, file] : rows) {
    if (!fs::exists(file)) throw InputError(index.string() + ": truth file not found: " + file.string());
    std::tie(s.time, s.flow) = read_file(file, [&](std::istream& in) { return read_truth_csv(in, net); });
    out.push_back(std::move(s));
  }
  return out;
}

// Interval -> state file in the od directory.
std::map<int, AssignmentResult> load_states(const Run& r, const RoadNetwork& net) {
  const auto dir = r.input(r.cfg.paths.od_dir, "od", "OD directory");
  std::map<int, AssignmentResult> out;
  for (const auto& f : files_in(dir, "state_")) {
    const auto stem = f.stem().string().substr(6);
    int k = -1;
    try {
      std::size_t used = 0;
      k = std::stoi(stem, &used);
      if (used != stem.size()) k = -1;
    } catch (const std::exception&) {
      k = -1;
    }
    if (k < 0 || k >= r.cfg.grid.interval_count()) throw InputError(f.string() + ": file name has no valid interval");
    out.emplace(k, read_file(f, [&](std::istream& in) { return read_state_csv(in, net, f.string()); }));
  }
  return out;
}

RefineOptions refine_options(const PipelineConfig& c) {
  auto o = c.refine;
  o.match = c.match;
  o.infer = c.infer;
  o.threads = c.worker_count();
  return o;
}

OdOptions od_options(const PipelineConfig& c) {
  OdOptions o;
  o.spsa = c.spsa;
  o.ue = c.ue;
  o.threads = c.worker_count();
  return o;
}

void log_warnings(Run& r, const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) r.err << "warning: " << w << '\n';
}

// ---------------------------------------------------------------------------
// Commands

void cmd_import_osm(Run& r) {
  if (!r.cfg.paths.osm) throw ConfigError("import-osm needs --osm <file>");
  const auto path = r.input(r.cfg.paths.osm, "", "OSM file");
  auto imp = read_file(path, [](std::istream& in) { return import_osm(in); });
  log_warnings(r, imp.warnings);
  r.write("network.json", [&](std::ostream& o) { write_network_json(imp.network, o); });
  r.out << "import-osm: " << imp.network.node_count() << " nodes, " << imp.network.segment_count() << " segments\n";
}

void cmd_gen_grid(Run& r) {
  const auto fx = make_grid(r.cfg.grid_fixture);
  r.write("network.json", [&](std::ostream& o) { write_network_json(fx.network, o); });
  r.write("taz.csv", [&](std::ostream& o) { write_taz_csv(fx.tazs, o); });
  r.out << "gen-grid: " << fx.network.segment_count() << " segments, " << fx.tazs.size() << " TAZs\n";
}

void cmd_gen_demand(Run& r) {
  const auto net = load_network(r);
  const auto tazs = load_tazs(r, net);
  const auto d = seed_gravity(net, tazs, r.cfg.deterrence_scale, r.cfg.total_trips);
  r.write("demand.csv", [&](std::ostream& o) { write_demand_csv(d, o); });
  r.out << "gen-demand: " << d.size() << " OD pairs, " << format_double(d.total()) << " trips/h\n";
}

void cmd_gen_scenarios(Run& r) {
  const auto net = load_network(r);
  const auto tazs = load_tazs(r, net);
  const auto base = load_demand(r);
  const auto sc = gen_scenarios(net, tazs, base, r.cfg.multipliers, r.cfg.scenario_assignment);
  for (const auto& s : sc) {
    r.write(fs::path("truth") / ("scenario_" + std::to_string(s.id) + ".csv"),
            [&](std::ostream& o) { write_truth_csv(net, s.time, s.flow, o); });
  }
  r.write("scenarios.csv", [&](std::ostream& o) {
    CsvWriter csv(o, {"scenario", "demand_multiplier", "truth_file"});
    for (const auto& s : sc) {
      csv << s.id << s.demand_multiplier << ("truth/scenario_" + std::to_string(s.id) + ".csv");
      csv.end_row();
    }
  });
  r.out << "gen-scenarios: " << sc.size() << " scenarios\n";
}

void cmd_gen_traces(Run& r) {
  const auto net = load_network(r);
  const auto tazs = load_tazs(r, net);
  const auto base = load_demand(r);
  const auto sc = load_scenarios(r, net);
  const auto& grid = r.cfg.grid;
  const auto schedule = periodic_schedule(sc, grid, r.cfg.schedule_period);
  auto probe = r.cfg.probe;
  probe.rng_seed = stage_seed(r.cfg.seed, "gen-traces");
  const auto trips = r.cfg.target_traces
                         ? generate_trips_target(net, tazs, base, schedule, grid, probe, *r.cfg.target_traces)
                         : generate_trips(net, tazs, base, schedule, grid, probe);
  const auto rows = schedule_rows(schedule, sc);
  std::map<int, int> scenario_of;
  for (const auto& row : rows) scenario_of[row.interval] = row.scenario;

  std::map<int, std::vector<GpsTrace>> traces;
  std::map<int, std::vector<TruthTrip>> by_scenario;
  for (const auto& t : trips) {
    auto tr = sample_trace(t, net, probe);
    if (tr.points.size() < 2) continue;
    const int s = scenario_of.at(grid.interval_of(t.departure));
    traces[s].push_back(std::move(tr));
    by_scenario[s].push_back(t);
  }
  r.write("schedule.csv", [&](std::ostream& o) { write_schedule_csv(rows, o); });
  std::size_t count = 0;
  for (const auto& [s, ts] : traces) {
    count += ts.size();
    r.write(fs::path("traces") / ("traces_s" + std::to_string(s) + ".csv"),
            [&](std::ostream& o) { write_traces_csv(ts, o); });
    r.write(fs::path("trips") / ("trips_s" + std::to_string(s) + ".csv"),
            [&](std::ostream& o) { write_trips_csv(by_scenario[s], net, o); });
  }
  r.out << "gen-traces: " << count << " traces over " << traces.size() << " scenarios\n";
}

void cmd_match(Run& r) {
  const auto net = load_network(r);
  const auto traces = load_traces(r);
  const auto& grid = r.cfg.grid;
  std::map<int, SegmentVector> times;
  if (r.cfg.paths.estimates) {
    for (auto& e : load_estimates(r, net, r.cfg.paths.estimates, "")) times.emplace(e.interval_index, e.time);
  }
  const SegmentVector ff = net.free_flow_times();
  const MapMatcher matcher(net);
  std::vector<MatchResult> results(traces.size());
  parallel_for(traces.size(), r.cfg.worker_count(), [&](std::size_t i) {
    const auto& pts = traces[i].points;
    auto it = times.find(grid.interval_of(0.5 * (pts.front().t + pts.back().t)));
    results[i] = matcher.match(traces[i], it == times.end() ? ff : it->second, r.cfg.match);
  });
  std::vector<MatchedPath> matched;
  for (auto& res : results) {
    log_warnings(r, res.diagnostics);
    for (auto& m : res.pieces) matched.push_back(std::move(m));
  }
  r.write("matched.csv", [&](std::ostream& o) { write_matched_csv(net, matched, o); });
  r.out << "match: " << matched.size() << " pieces from " << traces.size() << " traces\n";
}

void cmd_infer(Run& r) {
  const auto net = load_network(r);
  const auto traces = load_traces(r);
  auto matched = load_matched(r, net, r.cfg.paths.matched, "matched.csv");
  attach_points(net, traces, matched);
  const SegmentVector ff = net.free_flow_times();
  std::vector<SegmentTimeEstimate> est;
  for (const auto& [k, obs] : observations_from_matches(matched, r.cfg.grid)) {
    est.push_back(infer_times(obs, net, ff, r.cfg.infer));
  }
  r.write("estimates.csv", [&](std::ostream& o) { write_estimates_csv(net, est, o); });
  r.out << "infer: " << est.size() << " intervals\n";
}

void write_refine_outputs(Run& r, const RoadNetwork& net, const RefineResult& res, const std::string& prefix) {
  log_warnings(r, res.warnings);
  r.write(prefix + "matched.csv", [&](std::ostream& o) { write_matched_csv(net, res.matched, o); });
  r.write(prefix + "estimates.csv", [&](std::ostream& o) { write_estimates_csv(net, res.estimates, o); });
  r.write(prefix + "diagnostics.csv", [&](std::ostream& o) { write_diagnostics_csv(res.diagnostics, o); });
}

void cmd_refine(Run& r) {
  const auto net = load_network(r);
  const auto traces = load_traces(r);
  const auto res = refine(traces, net, r.cfg.grid, refine_options(r.cfg));
  write_refine_outputs(r, net, res, "");
  r.out << "refine: " << res.diagnostics.size() << " iterations, " << res.estimates.size() << " intervals\n";
}

void cmd_run_baseline(Run& r) {
  const auto net = load_network(r);
  const auto traces = load_traces(r);
  const auto res = run_baseline(traces, net, r.cfg.grid, refine_options(r.cfg));
  write_refine_outputs(r, net, res, "baseline_");
  r.out << "run-baseline: " << res.estimates.size() << " intervals\n";
}

void cmd_estimate_od(Run& r) {
  const auto net = load_network(r);
  const auto tazs = load_tazs(r, net);
  const auto seed = load_demand(r);
  auto est = load_estimates(r, net, r.cfg.paths.estimates, "estimates.csv");
  if (r.interval) {
    std::erase_if(est, [&](const SegmentTimeEstimate& e) { return e.interval_index != *r.interval; });
    if (est.empty()) throw InputError("no estimate for interval " + std::to_string(*r.interval));
  }
  const int count = r.cfg.grid.interval_count();
  std::map<int, OdEstimate> od;
  estimate_intervals(net, tazs, seed, est, od_options(r.cfg), r.cfg.seed, od, [&](int k, const OdEstimate& e) {
    const auto tag = padded(k, count);
    r.write(fs::path("od") / ("demand_" + tag + ".csv"), [&](std::ostream& o) { write_demand_csv(e.demand, o); });
    r.write(fs::path("od") / ("state_" + tag + ".csv"), [&](std::ostream& o) { write_state_csv(net, e.result, o); });
    r.write(fs::path("od") / ("objective_" + tag + ".csv"), [&](std::ostream& o) { write_objective_csv(e, o); });
  });
  const auto m = assemble_matrix(net, r.cfg.grid, od);
  r.write("matrix.csv", [&](std::ostream& o) { write_matrix_csv(m, o); });
  r.out << "estimate-od: " << od.size() << " intervals\n";
}

void cmd_complete(Run& r) {
  const auto net = load_network(r);
  const auto path = r.input(r.cfg.paths.matrix, "matrix.csv", "matrix file");
  const auto m = read_file(path, [&](std::istream& in) { return read_matrix_csv(in, net, r.cfg.grid, path.string()); });
  const auto res = complete(m, row_lower_bounds(m, net), r.cfg.completion);
  r.write("completed.csv", [&](std::ostream& o) { write_completed_csv(res, o); });
  const auto fallback = std::count(res.fallback_rows.begin(), res.fallback_rows.end(), true);
  r.out << "complete: " << res.iterations << " iterations, converged " << (res.converged ? "yes" : "no") << ", "
        << fallback << " free-flow rows\n";
}

void cmd_evaluate(Run& r) {
  const auto net = load_network(r);
  const auto& grid = r.cfg.grid;
  const auto cpath = r.input(r.cfg.paths.completed, "completed.csv", "completed file");
  const auto completed =
      read_file(cpath, [&](std::istream& in) { return read_completed_csv(in, net, grid, cpath.string()); });
  const auto baseline = load_estimates(r, net, r.cfg.paths.baseline_estimates, "baseline_estimates.csv");
  const auto schedule = load_schedule(r);
  std::map<int, SegmentVector> truth;
  for (auto& s : load_scenarios(r, net)) truth.emplace(s.id, std::move(s.time));

  const auto est_t = times_by_interval(completed, net);
  const auto base_t = times_by_interval(baseline, net, grid);
  std::vector<TruthTrip> trips;
  std::vector<MatchedPath> matched, base_matched;
  if (r.available(r.cfg.paths.trips, "trips")) {
    trips = load_trips(r, net);
    matched = load_matched(r, net, r.cfg.paths.matched, "matched.csv");
    base_matched = load_matched(r, net, r.cfg.paths.baseline_matched, "baseline_matched.csv");
  }
  EvaluationInput in{schedule, &truth, est_t, base_t, matched, base_matched, trips};
  const auto report = evaluate(net, in);
  r.write("report.json", [&](std::ostream& o) { write_report_json(report, o); });
  r.out << "evaluate: mse " << format_double(report.mse) << ", baseline mse " << format_double(report.baseline_mse)
        << ", gain " << format_double(report.gain_pct) << "%\n";
}

std::vector<SegmentVector> flows_from_states(const Run& r, const RoadNetwork& net) {
  std::map<int, SegmentVector> known;
  for (auto& [k, s] : load_states(r, net)) known.emplace(k, std::move(s.flow));
  return interpolate_intervals(known, r.cfg.grid.interval_count());
}

void cmd_export_voc(Run& r) {
  const auto net = load_network(r);
  const auto flows = flows_from_states(r, net);
  r.write("voc.csv", [&](std::ostream& o) { write_voc_csv(flows, net, r.cfg.grid, o); });
  r.out << "export-voc: " << flows.size() << " intervals\n";
}

void cmd_export_geojson(Run& r) {
  const auto net = load_network(r);
  const auto flows = flows_from_states(r, net);
  int k = 0;
  if (r.interval) {
    k = *r.interval;
    if (k < 0 || k >= static_cast<int>(flows.size())) throw ConfigError("--interval out of range");
  } else {
    const auto voc = voc_series(flows, net, r.cfg.grid);
    k = static_cast<int>(std::max_element(voc.begin(), voc.end()) - voc.begin());
  }
  r.write("map.geojson", [&](std::ostream& o) { write_geojson(net, flows[static_cast<std::size_t>(k)], o); });
  r.out << "export-geojson: interval " << k << '\n';
}

void write_manifest(Run& r) {
  auto files = r.written;
  std::sort(files.begin(), files.end());
  json doc;
  doc["seed"] = r.cfg.seed;
  auto& arr = doc["artifacts"] = json::array();
  for (const auto& rel : files) {
    const auto p = r.output(rel);
    arr.push_back({{"path", rel.generic_string()}, {"bytes", fs::file_size(p)}, {"sha256", sha256_hex(p)}});
  }
  r.write("manifest.json", [&](std::ostream& o) { o << doc.dump(2) << '\n'; });
}

void cmd_pipeline(Run& r) {
  auto& p = r.cfg.paths;
  const bool score = r.available(p.schedule, "schedule.csv") && r.available(p.scenarios, "scenarios.csv");
  cmd_refine(r);
  cmd_run_baseline(r);
  p.estimates = r.output("estimates.csv");
  cmd_estimate_od(r);
  p.matrix = r.output("matrix.csv");
  cmd_complete(r);
  if (score) {
    p.completed = r.output("completed.csv");
    p.baseline_estimates = r.output("baseline_estimates.csv");
    p.matched = r.output("matched.csv");
    p.baseline_matched = r.output("baseline_matched.csv");
    cmd_evaluate(r);
  }
  p.od_dir = r.output("od");
  cmd_export_voc(r);
  r.interval.reset();
  cmd_export_geojson(r);
  write_manifest(r);
}

struct Command {
  const char* name;
  const char* help;
  void (*fn)(Run&);
};

constexpr Command kCommands[] = {
    {"import-osm", "OSM XML subset to network.json", cmd_import_osm},
    {"gen-grid", "synthetic grid network.json and taz.csv", cmd_gen_grid},
    {"gen-demand", "gravity seed demand.csv", cmd_gen_demand},
    {"gen-scenarios", "system-optimal truth per demand multiplier", cmd_gen_scenarios},
    {"gen-traces", "probe trips and GPS traces over the weekly schedule", cmd_gen_traces},
    {"match", "map-match traces (free-flow or --estimates times)", cmd_match},
    {"infer", "travel times from traces and matched paths", cmd_infer},
    {"refine", "iterated matching and inference", cmd_refine},
    {"run-baseline", "single geometric match-then-infer pass", cmd_run_baseline},
    {"estimate-od", "bi-level OD estimation per estimated interval", cmd_estimate_od},
    {"complete", "low-rank completion of the weekly travel-time matrix", cmd_complete},
    {"evaluate", "metrics of completed times and baseline against truth", cmd_evaluate},
    {"export-voc", "weekly VOC series per road class", cmd_export_voc},
    {"export-geojson", "VOC map of one interval", cmd_export_geojson},
    {"pipeline", "refine, estimate-od, complete, evaluate, exports and manifest", cmd_pipeline},
};

PipelineConfig build_config(const Flags& f) {
  json doc = json::object();
  fs::path base = fs::current_path();
  if (f.config) {
    doc = read_config_file(*f.config);
    base = fs::absolute(*f.config).parent_path();
  }
  for (const auto& o : f.overrides) apply_override(doc, o);
  auto cfg = parse_config(doc, base);
  if (f.seed) cfg.seed = *f.seed;
  if (f.threads) cfg.threads = *f.threads;
  if (f.out_dir) cfg.out_dir = *f.out_dir;
  auto& p = cfg.paths;
  const std::map<std::string, std::optional<fs::path>*> slots = {
      {"osm", &p.osm},
      {"network", &p.network},
      {"taz", &p.taz},
      {"demand", &p.demand},
      {"scenarios", &p.scenarios},
      {"schedule", &p.schedule},
      {"traces", &p.traces},
      {"trips", &p.trips},
      {"matched", &p.matched},
      {"estimates", &p.estimates},
      {"baseline-estimates", &p.baseline_estimates},
      {"baseline-matched", &p.baseline_matched},
      {"od-dir", &p.od_dir},
      {"matrix", &p.matrix},
      {"completed", &p.completed},
  };
  for (const auto& [name, value] : f.paths) {
    if (value) *slots.at(name) = fs::path(*value);
  }
  return cfg;
}

int execute(const Command& cmd, const Flags& flags, std::ostream& out, std::ostream& err) {
  std::optional<Run> run;
  try {
    run.emplace(build_config(flags), flags.interval, out, err);
    cmd.fn(*run);
    return 0;
  } catch (const SolverError& e) {
    if (run) run->mark_partial();
    err << cmd.name << ": solver did not converge: " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    err << cmd.name << ": configuration error: " << e.what() << '\n';
    return 1;
  } catch (const InputError& e) {
    err << cmd.name << ": malformed input: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << cmd.name << ": " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

std::string sha256_hex(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + file.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream s;
  for (unsigned i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return s.str();
}

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"City-scale traffic-state estimation from GPS probe traces"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Flags flags;
  app.add_option("--config", flags.config, "JSON config file");
  app.add_option("--seed", flags.seed, "global RNG seed");
  app.add_option("--threads", flags.threads, "worker cap (default: machine parallelism)")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", flags.out_dir, "output directory");
  app.add_option("--set", flags.overrides, "config override section.key=value (repeatable)");
  app.add_option("--interval", flags.interval, "single interval (estimate-od, export-geojson)");
  for (const char* name : {"osm", "network", "taz", "demand", "scenarios", "schedule", "traces", "trips", "matched",
                           "estimates", "baseline-estimates", "baseline-matched", "od-dir", "matrix", "completed"}) {
    app.add_option(std::string("--") + name, flags.paths[name], std::string(name) + " input path");
  }
  std::vector<CLI::App*> subs;
  for (const auto& c : kCommands) subs.push_back(app.add_subcommand(c.name, c.help));

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (subs[i]->parsed()) return execute(kCommands[i], flags, out, err);
  }
  return 1;
}

}  // namespace cityest::cli
