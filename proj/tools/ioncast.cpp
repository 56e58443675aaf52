#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ioncast/checkpoint.hpp"
#include "ioncast/gnn.hpp"
#include "ioncast/lstm.hpp"
#include "ioncast/mesh.hpp"
#include "ioncast/synth.hpp"
#include "ioncast/train.hpp"

namespace fs = std::filesystem;
using namespace ioncast;
using nlohmann::json;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
  int threads = 0;
};

// ---- config ----

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"data",
       {"dir", "mag_file", "maps", "drivers_dir", "events", "drivers", "forcings", "coordinates", "tec_weight",
        "n_lat", "n_lon", "days", "seed", "start", "cadence", "storms_per_day", "quiet_events", "noise_std",
        "noise_rho"}},
      {"model", {}},  // checked by the architecture's own parser
      {"train",
       {"lr", "batch", "steps", "seed", "val_every", "val_starts", "val_horizon", "dilation", "holdout_fraction",
        "split_seed"}},
      {"eval", {"horizon", "start_stride", "area_weighted", "hexbin_max", "split", "precision", "svg"}},
      {"ablate", {"seeds", "rows", "ranges"}},
      {"output", {"dir"}},
  };
  return keys;
}

json scalar_from_text(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  char* end = nullptr;
  const long long i = std::strtoll(v.c_str(), &end, 10);
  if (!v.empty() && *end == '\0') return i;
  const double d = std::strtod(v.c_str(), &end);
  if (!v.empty() && *end == '\0') return d;
  return v;
}

// "value ; note" and "value # note" -> "value"
std::string strip_inline_comment(std::string v) {
  for (const char* mark : {" ;", "\t;", " #", "\t#"}) {
    const auto at = v.find(mark);
    if (at != std::string::npos) v.erase(at);
  }
  const auto end = v.find_last_not_of(" \t");
  v.erase(end == std::string::npos ? 0 : end + 1);
  return v;
}

json read_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  if (fs::path(path).extension() == ".json") {
    try {
      return json::parse(f);
    } catch (const json::exception& e) {
      throw ConfigError("config '" + path + "': " + e.what());
    }
  }
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(f, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  json out = json::object();
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config key '" + section + "' is outside any [section]");
    for (const auto& [key, value] : body) out[section][key] = scalar_from_text(strip_inline_comment(value.data()));
  }
  return out;
}

void check_keys(const json& cfg) {
  if (!cfg.is_object()) throw ConfigError("config must be a mapping of sections");
  for (const auto& [section, body] : cfg.items()) {
    auto it = known_keys().find(section);
    if (it == known_keys().end()) throw ConfigError("unknown config section '" + section + "'");
    if (!body.is_object()) throw ConfigError("config section '" + section + "' must be a mapping");
    if (section == "model") continue;
    for (const auto& [key, v] : body.items())
      if (!it->second.count(key)) throw ConfigError("unknown config key '" + section + "." + key + "'");
  }
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto a = item.find_first_not_of(" \t"), b = item.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

std::vector<std::string> list_value(const json& section, const std::string& key, const std::vector<std::string>& all) {
  if (!section.contains(key)) return all;
  const auto& v = section.at(key);
  if (v.is_array()) {
    std::vector<std::string> out;
    for (const auto& e : v) out.push_back(e.is_string() ? e.get<std::string>() : e.dump());
    return out;
  }
  if (v.is_number_integer()) return {v.dump()};
  if (!v.is_string()) throw ConfigError("'" + key + "' must be a list or a comma-separated string");
  const auto s = v.get<std::string>();
  if (s == "all") return all;
  if (s == "none" || s.empty()) return {};
  return split_list(s);
}

template <typename T>
T get_or(const json& section, const std::string& key, T fallback) {
  if (!section.contains(key)) return fallback;
  try {
    return section.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + section.at(key).dump());
  }
}

// Fully resolved configuration of a command.
struct Resolved {
  json cfg;  // echo
  std::string arch;
  json model;
  TrainConfig train;
  ProblemConfig problem;
  EvalConfig eval;
  std::string eval_split = "test";
  std::string precision = "double";
  std::string out_dir;
};

json section(const json& cfg, const std::string& name) {
  return cfg.contains(name) ? cfg.at(name) : json::object();
}

Resolved resolve(const Globals& g) {
  Resolved r;
  r.cfg = read_config_file(g.config);
  check_keys(r.cfg);
  if (g.seed) {
    r.cfg["train"]["seed"] = *g.seed;
    r.cfg["data"]["seed"] = *g.seed;
    r.cfg["model"]["seed"] = *g.seed;
  }
  if (!g.out.empty()) r.cfg["output"]["dir"] = g.out;
  r.out_dir = get_or<std::string>(section(r.cfg, "output"), "dir", "");

  auto model = section(r.cfg, "model");
  r.arch = get_or<std::string>(model, "arch", "gnn");
  if (r.arch != "gnn" && r.arch != "lstm") throw ConfigError("model.arch must be gnn or lstm, got '" + r.arch + "'");
  model.erase("arch");
  try {
    if (r.arch == "gnn") GnnConfig::from_json(model);
    else LstmConfig::from_json(model);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  r.model = model;

  auto tr = section(r.cfg, "train");
  try {
    r.problem.dilation = get_or<int>(tr, "dilation", 1);
    r.problem.holdout_fraction = get_or<double>(tr, "holdout_fraction", 0.1);
    r.problem.split_seed = get_or<std::uint64_t>(tr, "split_seed", 0);
    r.problem.context = get_or<int>(model, "context_len", 8);
    for (const char* k : {"dilation", "holdout_fraction", "split_seed"}) tr.erase(k);
    r.train = TrainConfig::from_json(tr, TrainConfig::for_arch(r.arch));
    if (!r.model.contains("seed")) r.model["seed"] = r.train.seed;

    auto ev = section(r.cfg, "eval");
    r.eval_split = get_or<std::string>(ev, "split", "test");
    r.precision = get_or<std::string>(ev, "precision", "double");
    for (const char* k : {"split", "precision", "svg"}) ev.erase(k);
    r.eval = EvalConfig::from_json(ev);
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
  if (r.eval_split != "test" && r.eval_split != "val") throw ConfigError("eval.split must be test or val");
  if (r.precision != "double" && r.precision != "float") throw ConfigError("eval.precision must be double or float");
  if (r.problem.holdout_fraction <= 0 || r.problem.holdout_fraction >= 1)
    throw ConfigError("train.holdout_fraction must be in (0, 1)");
  r.problem.eval_horizon = std::max(48, r.eval.horizon);
  r.eval.threads = g.threads;
  return r;
}

ChannelSpec channel_spec(const json& cfg, const std::string& arch, const Dataset& data) {
  const auto d = section(cfg, "data");
  const double w = get_or<double>(d, "tec_weight", arch == "gnn" ? 2.0 : 20.0);
  std::vector<std::string> coords(astro::mag_channel_names());
  return make_channel_spec(w, list_value(d, "drivers", data.driver_names),
                           list_value(d, "forcings", astro::forcing_channel_names()),
                           list_value(d, "coordinates", coords));
}

SynthConfig synth_config(const json& cfg) {
  const auto d = section(cfg, "data");
  SynthConfig c;
  c.n_lat = get_or<std::size_t>(d, "n_lat", c.n_lat);
  c.n_lon = get_or<std::size_t>(d, "n_lon", c.n_lon);
  c.days = get_or<int>(d, "days", c.days);
  c.seed = get_or<std::uint64_t>(d, "seed", c.seed);
  c.start = get_or<std::string>(d, "start", c.start);
  c.cadence = get_or<std::int64_t>(d, "cadence", c.cadence);
  c.storms_per_day = get_or<double>(d, "storms_per_day", c.storms_per_day);
  c.quiet_events = get_or<int>(d, "quiet_events", c.quiet_events);
  c.noise_std = get_or<double>(d, "noise_std", c.noise_std);
  c.noise_rho = get_or<double>(d, "noise_rho", c.noise_rho);
  if (c.n_lat < 3 || c.n_lon < 3 || c.days < 1 || c.cadence <= 0 || c.noise_std < 0 || std::abs(c.noise_rho) >= 1)
    throw ConfigError("data: synthetic dataset parameters out of range");
  parse_iso8601(c.start);
  return c;
}

std::string need_out(const Resolved& r) {
  if (r.out_dir.empty()) throw ConfigError("no output directory (use --out or [output] dir)");
  return r.out_dir;
}

// Refuses to reuse a nonempty directory unless --force, which clears it.
void prepare_out(const std::string& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw Error("output directory '" + dir + "' exists and is not empty (use --force to overwrite)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + p.string());
  f << text;
}

void write_config_echo(const std::string& dir, const json& cfg) { write_text(fs::path(dir) / "config.json", cfg.dump(2) + "\n"); }

DatasetFiles load_data(const json& cfg) {
  const auto d = section(cfg, "data");
  const auto dir = get_or<std::string>(d, "dir", "");
  if (dir.empty()) throw ConfigError("data.dir is required");
  return load_dataset(dir, get_or<std::string>(d, "mag_file", ""));
}

std::string split_json(const Problem& p) {
  json events = json::array();
  for (std::size_t i = 0; i < p.catalog().size(); ++i) {
    const auto& e = p.catalog().events[i];
    events.push_back({{"start", format_iso8601(e.start)},
                      {"end", format_iso8601(e.end)},
                      {"g_level", e.g_level},
                      {"split", to_string(p.split.assignment[i])}});
  }
  json warn = p.split.warnings;
  return json{{"holdout_fraction", p.split.holdout_fraction}, {"seed", p.split.seed}, {"events", events},
              {"warnings", warn}, {"train_sequences", p.train_starts.size()}}
             .dump(2) +
         "\n";
}

json model_json_with_arch(const Resolved& r) {
  auto m = r.model;
  m["context_len"] = r.problem.context;
  return m;
}

// Rebuilds the problem a checkpoint was trained on, with its normalizer.
Problem problem_for_checkpoint(const DatasetFiles& files, const Checkpoint& ck) {
  ProblemConfig pc;
  const auto& m = ck.meta;
  if (m.contains("problem")) {
    const auto& p = m["problem"];
    pc.context = p.value("context", pc.context);
    pc.eval_horizon = p.value("eval_horizon", pc.eval_horizon);
    pc.holdout_fraction = p.value("holdout_fraction", pc.holdout_fraction);
    pc.split_seed = p.value("split_seed", pc.split_seed);
    pc.dilation = p.value("dilation", pc.dilation);
  }
  auto p = make_problem(files, ck.spec, pc);
  p.norm = ck.normalizer;
  return p;
}

json problem_json(const ProblemConfig& p) {
  return {{"context", p.context},
          {"eval_horizon", p.eval_horizon},
          {"holdout_fraction", p.holdout_fraction},
          {"split_seed", p.split_seed},
          {"dilation", p.dilation}};
}

// ---- commands ----

int cmd_synth(const Globals& g) {
  auto r = resolve(g);
  const auto sc = synth_config(r.cfg);
  const auto dir = need_out(r);
  prepare_out(dir, g.force);
  const auto files = synth_dataset(sc);
  save_dataset(dir, files, r.cfg);
  write_config_echo(dir, r.cfg);
  std::cout << "wrote " << files.data.size() << " frames, " << files.raw_drivers.size() << " drivers, "
            << files.catalog.size() << " events to " << dir << "\n";
  return 0;
}

int cmd_ingest(const Globals& g) {
  auto r = resolve(g);
  const auto d = section(r.cfg, "data");
  const auto maps = get_or<std::string>(d, "maps", "");
  if (maps.empty()) throw ConfigError("data.maps (IONGRID of maps) is required for ingest");
  const auto files = ingest_dataset(maps, get_or<std::string>(d, "drivers_dir", ""), get_or<std::string>(d, "events", ""),
                                    get_or<std::string>(d, "mag_file", ""));
  const auto dir = need_out(r);
  prepare_out(dir, g.force);
  save_dataset(dir, files, r.cfg);
  write_config_echo(dir, r.cfg);
  std::cout << "ingested " << files.data.size() << " frames, " << files.raw_drivers.size() << " drivers, "
            << files.catalog.size() << " events into " << dir << "\n";
  return 0;
}

int cmd_mesh_info(int level, const std::string& grid) {
  if (level < 0 || level > 8) throw ConfigError("--level must be in 0..8");
  const auto ico = build_icosphere(level);
  const std::size_t V = ico.num_vertices(), E = ico.num_undirected_edges(), F = ico.finest_faces().size();
  std::cout << "V=" << V << " E=" << E << " F=" << F << "\n";
  const auto mm = build_multimesh(level);
  std::cout << "multimesh: vertices " << mm.num_vertices() << ", undirected edges " << mm.num_undirected_edges()
            << ", euler " << static_cast<long long>(V) - static_cast<long long>(E) + static_cast<long long>(F) << "\n";
  for (const auto& s : level_stats(mm))
    std::cout << "level " << s.level << ": V=" << s.vertices << " E=" << s.edges << " F=" << s.faces
              << " edge_deg min " << s.min_edge_deg << " mean " << s.mean_edge_deg << " max " << s.max_edge_deg << "\n";
  if (!grid.empty()) {
    const auto parts = split_list(grid, 'x');
    if (parts.size() != 2) throw ConfigError("--grid must look like 18x36");
    const LatLonGrid lg(std::stoul(parts[0]), std::stoul(parts[1]));
    const auto g2m = build_grid2mesh(lg, mm);
    const auto m2g = build_mesh2grid(mm, lg);
    const auto deg = m2g.receiver_degree();
    std::cout << "grid2mesh edges " << g2m.size() << ", mesh2grid edges " << m2g.size() << ", mesh2grid degree "
              << *std::min_element(deg.begin(), deg.end()) << ".." << *std::max_element(deg.begin(), deg.end())
              << "\n";
  }
  return 0;
}

int cmd_train(const Globals& g, bool dry_run, const std::string& resume_path) {
  auto r = resolve(g);
  const auto files = load_data(r.cfg);
  const auto spec = channel_spec(r.cfg, r.arch, files.data);
  const auto problem = make_problem(files, spec, r.problem);
  auto model = make_model<float>(r.arch, model_json_with_arch(r), spec, files.data);
  if (dry_run) {
    std::cout << "arch " << r.arch << ", parameters " << model->params().count() << ", channels "
              << spec.frame_size() << ", training sequences " << problem.train_starts.size() << "\n";
    return 0;
  }
  const auto dir = need_out(r);
  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) {
    resume = load_checkpoint(resume_path);
    require_same_spec(*resume, spec);
    fs::create_directories(dir);
  } else {
    prepare_out(dir, g.force);
  }
  write_config_echo(dir, r.cfg);
  write_text(fs::path(dir) / "normalizer.json", problem.norm.to_json().dump(2) + "\n");
  write_text(fs::path(dir) / "split.json", split_json(problem));

  const auto log_path = fs::path(dir) / "train_log.csv";
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!resume) log << log_csv_header() << "\n";
  TrainHooks hooks;
  hooks.checkpoint_dir = dir;
  hooks.meta = {{"run_config", r.cfg}, {"problem", problem_json(r.problem)}};
  hooks.resume = resume ? &*resume : nullptr;
  const auto t0 = std::chrono::steady_clock::now();
  hooks.on_row = [&](const LogRow& row) {
    log << format_log_row(row) << "\n";
    if (std::isfinite(row.val_rmse_1h)) {
      log.flush();
      const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cerr << "step " << row.step << " loss " << row.loss << " val_rmse 1h/6h/12h " << row.val_rmse_1h << " / "
                << row.val_rmse_6h << " / " << row.val_rmse_12h << " (" << std::round(el) << " s)\n";
    }
  };
  const auto res = train(*model, problem, r.train, hooks);
  std::cout << "trained to step " << res.final_step << "; best step " << res.best_step << " (score "
            << res.best_score << "), checkpoint " << (fs::path(dir) / "best.ckpt").string() << "\n";
  return 0;
}

int cmd_forecast(const Globals& g, const std::string& ckpt_path, const std::string& start, int horizon) {
  auto r = resolve(g);
  if (horizon < 1) throw ConfigError("--horizon must be >= 1");
  const auto ck = load_checkpoint(ckpt_path);
  json data_cfg = r.cfg;
  if (!section(r.cfg, "data").contains("dir") && ck.meta.contains("run_config")) data_cfg = ck.meta["run_config"];
  const auto files = load_data(data_cfg);
  auto model = model_from_checkpoint<float>(ck, files.data);
  const auto& d = files.data;
  const Timestamp t0 = parse_iso8601(start);
  const int ctx = model->context_len();
  const FrameAssembler frames(d, ck.spec);
  std::vector<Tensor<float>> window;
  for (int i = ctx; i >= 1; --i) {
    const Timestamp t = t0 - static_cast<std::int64_t>(i) * d.cadence;
    const auto idx = d.index_of(t);
    if (!idx)
      throw RolloutError("forecast from " + format_iso8601(t0) + " needs " + std::to_string(ctx) +
                         " context frames " + format_iso8601(t0 - ctx * d.cadence) + " .. " +
                         format_iso8601(t0 - d.cadence) + "; the dataset covers " +
                         (d.times.empty() ? std::string("nothing")
                                          : format_iso8601(d.times.front()) + " .. " + format_iso8601(d.times.back())));
    window.push_back(frames.frame(*idx));
  }
  Forecaster<float> fc(*model, ck.normalizer, [&](Timestamp t) { return frames.forcing(t); }, d.cadence);
  auto pred = fc.rollout(window, t0 - d.cadence, horizon);

  const auto dir = need_out(r);
  prepare_out(dir, g.force);
  GridStack stack;
  stack.cadence = static_cast<std::uint32_t>(d.cadence);
  stack.channels = ck.spec.frame_names();
  stack.height = d.grid.n_lat;
  stack.width = d.grid.n_lon;
  for (int i = 0; i < horizon; ++i) stack.times.push_back(t0 + static_cast<std::int64_t>(i) * d.cadence);
  stack.frames = pred;
  write_grid_stack((fs::path(dir) / "forecast.iongrid").string(), stack);

  // Per-node mean and spread of each driver channel over the forecast.
  const auto drivers = ck.spec.names_of(ChannelKind::Driver);
  const std::size_t HW = d.grid.size();
  std::ostringstream csv;
  csv.precision(8);
  csv << "row,col,lat,lon";
  for (const auto& n : drivers) csv << "," << n << "_mean," << n << "_std";
  csv << "\n";
  for (std::size_t row = 0; row < d.grid.n_lat; ++row)
    for (std::size_t col = 0; col < d.grid.n_lon; ++col) {
      const std::size_t n = row * d.grid.n_lon + col;
      csv << row << "," << col << "," << d.grid.lat_deg(row) << "," << d.grid.lon_deg(col);
      for (const auto& name : drivers) {
        const std::size_t c = ck.spec.frame_index(name);
        double s = 0.0, s2 = 0.0;
        for (const auto& f : pred) s += f[c * HW + n];
        const double m = s / horizon;
        for (const auto& f : pred) s2 += (f[c * HW + n] - m) * (f[c * HW + n] - m);
        csv << "," << m << "," << std::sqrt(s2 / horizon);
      }
      csv << "\n";
    }
  write_text(fs::path(dir) / "forecast_drivers.csv", csv.str());
  auto echo = r.cfg;
  echo["forecast"] = {{"checkpoint", ckpt_path}, {"start", format_iso8601(t0)}, {"horizon", horizon}};
  write_config_echo(dir, echo);
  std::cout << "wrote " << horizon << " frames from " << format_iso8601(t0) << " to "
            << (fs::path(dir) / "forecast.iongrid").string() << "\n";
  return 0;
}

int cmd_evaluate(const Globals& g, const std::string& ckpt_path, bool svg) {
  auto r = resolve(g);
  const auto ck = load_checkpoint(ckpt_path);
  json data_cfg = r.cfg;
  if (!section(r.cfg, "data").contains("dir") && ck.meta.contains("run_config")) data_cfg = ck.meta["run_config"];
  const auto files = load_data(data_cfg);
  const auto problem = problem_for_checkpoint(files, ck);
  const auto events = problem.events(r.eval_split == "test" ? Split::Test : Split::Val);
  MetricReport m;
  if (r.precision == "double") {
    auto model = model_from_checkpoint<double>(ck, files.data);
    m = evaluate(problem, events, model_predictor(*model, problem), r.eval);
  } else {
    auto model = model_from_checkpoint<float>(ck, files.data);
    m = evaluate(problem, events, model_predictor(*model, problem), r.eval);
  }
  const auto p = evaluate(problem, events, persistence_predictor(problem), r.eval);
  const auto dir = need_out(r);
  prepare_out(dir, g.force);
  const auto cad = files.data.cadence;
  write_text(fs::path(dir) / "lead_curve.csv", lead_curve_csv(m, p, cad));
  if (svg) write_text(fs::path(dir) / "lead_curve.svg", lead_curve_svg(m, p, cad, "RMSE vs lead time"));
  write_text(fs::path(dir) / "bands.csv", band_csv(m));
  write_text(fs::path(dir) / "levels.csv", level_csv(m));
  write_text(fs::path(dir) / "hexbin.csv", hexbin_csv(m));
  write_text(fs::path(dir) / "persistence_bands.csv", band_csv(p));
  write_text(fs::path(dir) / "persistence_levels.csv", level_csv(p));
  const int H = m.horizon;
  json summary{{"events", events.size()},
               {"starts", m.n_starts},
               {"split", r.eval_split},
               {"model_mean_rmse", m.mean_rmse(1, H)},
               {"persistence_mean_rmse", p.mean_rmse(1, H)}};
  if (H >= 48) {
    summary["model_mean_rmse_16_48"] = m.mean_rmse(16, 48);
    summary["persistence_mean_rmse_16_48"] = p.mean_rmse(16, 48);
  }
  write_text(fs::path(dir) / "summary.json", summary.dump(2) + "\n");
  auto echo = r.cfg;
  echo["evaluate"] = {{"checkpoint", ckpt_path}};
  write_config_echo(dir, echo);
  std::cout << "evaluated " << m.n_starts << " starts over " << events.size() << " events; mean RMSE model "
            << m.mean_rmse(1, H) << " persistence " << p.mean_rmse(1, H) << " TECU\n";
  return 0;
}

std::vector<DateRange> parse_ranges(const std::string& s) {
  std::vector<DateRange> out;
  for (const auto& item : split_list(s, ';')) {
    const auto at = item.find('@'), dots = item.find("..");
    if (at == std::string::npos || dots == std::string::npos || dots < at)
      throw ConfigError("ablate.ranges entries look like name@2015-09-01..2015-10-01, got '" + item + "'");
    out.push_back({item.substr(0, at), parse_iso8601(item.substr(at + 1, dots - at - 1)),
                   parse_iso8601(item.substr(dots + 2))});
  }
  if (out.empty()) throw ConfigError("ablate.ranges is empty");
  return out;
}

int cmd_ablate(const Globals& g, bool dry_run, bool date_ranges) {
  auto r = resolve(g);
  const auto ab = section(r.cfg, "ablate");
  std::vector<std::uint64_t> seeds;
  for (const auto& s : list_value(ab, "seeds", {"0", "1", "2"})) seeds.push_back(std::stoull(s));
  auto plan = default_ablation_plan();
  if (ab.contains("rows")) {
    std::vector<AblationRow> chosen;
    for (const auto& s : list_value(ab, "rows", {})) {
      const auto i = std::stoul(s);
      if (i >= plan.size()) throw ConfigError("ablate.rows index " + s + " out of range 0..7");
      chosen.push_back(plan[i]);
    }
    plan = chosen;
  }
  const auto files_needed = !dry_run;
  RunSpec base;
  base.arch = r.arch;
  base.model = model_json_with_arch(r);
  base.problem = r.problem;
  base.train = r.train;
  base.eval = r.eval;
  const double w = get_or<double>(section(r.cfg, "data"), "tec_weight", r.arch == "gnn" ? 2.0 : 20.0);
  base.spec = make_channel_spec(w, {}, {}, {});
  if (dry_run) {
    std::cout << "input_features,residual,channels\n";
    for (const auto& row : plan)
      std::cout << "\"" << row.name << "\"," << (row.residual ? "true" : "false") << ","
                << ablation_spec(row, w).frame_size() << "\n";
    return 0;
  }
  (void)files_needed;
  const auto files = load_data(r.cfg);
  const auto dir = need_out(r);
  prepare_out(dir, g.force);
  write_config_echo(dir, r.cfg);
  auto progress = [](const std::string& m) { std::cerr << m << "\n"; };
  if (date_ranges) {
    if (!ab.contains("ranges")) throw ConfigError("ablate.ranges is required with --date-ranges");
    base.spec = channel_spec(r.cfg, r.arch, files.data);
    const auto rows = run_date_range_experiment(files, base, parse_ranges(ab.at("ranges").get<std::string>()), progress);
    write_text(fs::path(dir) / "date_ranges.csv", date_range_csv(rows));
    std::cout << date_range_csv(rows);
    return 0;
  }
  const auto rows = run_ablation(files, base, plan, seeds, progress);
  write_text(fs::path(dir) / "ablation.csv", ablation_csv(rows));
  std::cout << ablation_csv(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ioncast: global TEC forecasting on icosahedral meshes"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  if (const char* t = std::getenv("IONCAST_THREADS")) g.threads = std::atoi(t);
  app.add_option("--config", g.config, "INI config file (or .json mirror)");
  app.add_option("--seed", g.seed, "override train.seed and data.seed");
  app.add_option("--out", g.out, "output directory (overrides [output] dir)");
  app.add_flag("--force", g.force, "overwrite a nonempty output directory");
  app.add_option("--threads", g.threads, "evaluation threads (default $IONCAST_THREADS or 1)");

  auto* synth = app.add_subcommand("synth", "generate the synthetic dataset");
  auto* ingest = app.add_subcommand("ingest", "import maps, driver CSVs and an event list");
  auto* mesh = app.add_subcommand("mesh-info", "print icosphere and multimesh statistics");
  int level = 0;
  std::string grid;
  mesh->add_option("--level", level, "refinement level")->required();
  mesh->add_option("--grid", grid, "also build grid<->mesh graphs for an HxW grid");
  auto* trn = app.add_subcommand("train", "train a model");
  bool dry = false;
  std::string resume;
  trn->add_flag("--dry-run", dry, "validate the config and print the parameter count");
  trn->add_option("--resume", resume, "continue from a checkpoint");
  auto* fc = app.add_subcommand("forecast", "roll a checkpoint forward from a start time");
  std::string ckpt, start;
  int horizon = 48;
  fc->add_option("--checkpoint", ckpt)->required();
  fc->add_option("--start", start, "time of the first forecast frame")->required();
  fc->add_option("--horizon", horizon, "number of frames");
  auto* ev = app.add_subcommand("evaluate", "score a checkpoint and persistence on held-out events");
  bool no_svg = false;
  ev->add_option("--checkpoint", ckpt)->required();
  ev->add_flag("--no-svg", no_svg, "skip the SVG chart");
  auto* abl = app.add_subcommand("ablate", "input-group ablation or date-range experiment");
  bool abl_dry = false, ranges = false;
  abl->add_flag("--dry-run", abl_dry, "print the experiment rows without training");
  abl->add_flag("--date-ranges", ranges, "run the date-range experiment from ablate.ranges");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (g.threads < 1) g.threads = 1;

  try {
    if (*synth) return cmd_synth(g);
    if (*ingest) return cmd_ingest(g);
    if (*mesh) return cmd_mesh_info(level, grid);
    if (*trn) return cmd_train(g, dry, resume);
    if (*fc) return cmd_forecast(g, ckpt, start, horizon);
    if (*ev) return cmd_evaluate(g, ckpt, !no_svg);
    if (*abl) return cmd_ablate(g, abl_dry, ranges);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
