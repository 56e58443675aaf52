#include <cmath>
#include <set>
#include <sstream>

#include "ioncast/train.hpp"

namespace ioncast {

std::vector<AblationRow> default_ablation_plan() {
  const std::vector<std::string> all_drivers{"kp", "ap", "f107", "s107", "m107", "y107", "symh",
                                             "bx", "by", "bz",   "vx",   "vy",   "vz"};
  const auto& forcings = astro::forcing_channel_names();
  const auto& mag = astro::mag_channel_names();
  return {
      {"JPLD", {}, {}, {}, true},
      {"JPLD + F10.7", {"f107"}, {}, {}, true},
      {"JPLD + F10.7, S10.7, M10.7, JB2008", {"f107", "s107", "m107", "y107"}, {}, {}, true},
      {"JPLD + Ap & Kp", {"ap", "kp"}, {}, {}, true},
      {"JPLD + Bx/By/Bz & vx/vy/vz (Omniweb)", {"bx", "by", "bz", "vx", "vy", "vz"}, {}, {}, true},
      {"JPLD + Orbital Mechanics + Quasi-Dipole", {}, forcings, mag, true},
      {"JPLD + All (Non-Residual Target)", all_drivers, forcings, mag, false},
      {"JPLD + All", all_drivers, forcings, mag, true},
  };
}

ChannelSpec ablation_spec(const AblationRow& row, double tec_weight) {
  return make_channel_spec(tec_weight, row.drivers, row.forcings, row.coordinates);
}

namespace {

double target_weight(const ChannelSpec& spec) {
  for (const auto& c : spec.channels())
    if (c.kind == ChannelKind::Target) return c.loss_weight;
  throw ConfigError("channel spec has no target channel");
}

struct TrainedRun {
  std::unique_ptr<Model<float>> model;
  TrainResult result;
};

TrainedRun train_run(const DatasetFiles& files, const Problem& problem, const RunSpec& run, std::uint64_t seed,
                     bool residual) {
  auto mj = run.model;
  mj["seed"] = seed;
  mj["residual"] = residual;
  mj["context_len"] = problem.context;
  TrainedRun out;
  out.model = make_model<float>(run.arch, mj, problem.spec, files.data);
  auto tc = run.train;
  tc.seed = seed;
  out.result = train(*out.model, problem, tc);
  load_params(*out.model, out.result.best);
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(8);
  s << v;
  return s.str();
}

}  // namespace

std::vector<AblationResult> run_ablation(const DatasetFiles& files, const RunSpec& base,
                                         const std::vector<AblationRow>& plan, const std::vector<std::uint64_t>& seeds,
                                         const std::function<void(const std::string&)>& progress) {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  const double w = target_weight(base.spec);
  std::vector<AblationResult> out;
  for (const auto& row : plan) {
    const auto problem = make_problem(files, ablation_spec(row, w), base.problem);
    const auto events = problem.events(Split::Val);
    AblationResult r;
    r.name = row.name;
    r.residual = row.residual;
    r.n_channels = problem.spec.frame_size();
    std::vector<double> pooled;
    for (auto seed : seeds) {
      auto run = train_run(files, problem, base, seed, row.residual);
      const auto rep = evaluate(problem, events, model_predictor(*run.model, problem), base.eval);
      double s = 0.0;
      for (double v : rep.per_event_mean) s += v;
      r.seed_scores.push_back(s / static_cast<double>(rep.per_event_mean.size()));
      pooled.insert(pooled.end(), rep.per_event_mean.begin(), rep.per_event_mean.end());
      if (progress) progress(row.name + " seed " + std::to_string(seed) + ": " + num(r.seed_scores.back()));
    }
    double m = 0.0;
    for (double v : pooled) m += v;
    m /= static_cast<double>(pooled.size());
    double var = 0.0;
    for (double v : pooled) var += (v - m) * (v - m);
    r.mean = m;
    r.std = pooled.size() > 1 ? std::sqrt(var / static_cast<double>(pooled.size() - 1)) : 0.0;
    out.push_back(std::move(r));
  }
  return out;
}

std::string ablation_csv(const std::vector<AblationResult>& rows) {
  std::string out = "input_features,residual,channels,rmse_mean,rmse_std,seed_scores\n";
  for (const auto& r : rows) {
    std::string seeds;
    for (std::size_t i = 0; i < r.seed_scores.size(); ++i) seeds += (i ? ";" : "") + num(r.seed_scores[i]);
    out += csv_field(r.name) + "," + (r.residual ? "true" : "false") + "," + std::to_string(r.n_channels) + "," +
           num(r.mean) + "," + num(r.std) + "," + seeds + "\n";
  }
  return out;
}

std::vector<DateRangeResult> run_date_range_experiment(const DatasetFiles& files, const RunSpec& base,
                                                       const std::vector<DateRange>& ranges,
                                                       const std::function<void(const std::string&)>& progress) {
  if (ranges.empty()) throw ConfigError("date-range experiment needs at least one range");
  auto pc = base.problem;
  pc.dilation = 1;
  const auto problem = make_problem(files, base.spec, pc);
  const auto& times = files.data.times;
  const std::size_t span = static_cast<std::size_t>(problem.context);

  std::vector<std::vector<std::size_t>> per_range;
  for (const auto& r : ranges) {
    std::vector<std::size_t> s;
    for (auto i : problem.train_starts)
      if (times[i] >= r.start && times[i + span] <= r.end) s.push_back(i);
    if (s.empty())
      throw ConfigError("date range '" + r.name + "' (" + format_iso8601(r.start) + " .. " + format_iso8601(r.end) +
                        ") contains no training sequences");
    per_range.push_back(std::move(s));
  }
  std::size_t n = per_range.front().size();
  for (const auto& s : per_range) n = std::min(n, s.size());

  const auto events = problem.events(Split::Test);
  std::vector<DateRangeResult> out;
  for (std::size_t k = 0; k < ranges.size(); ++k) {
    Problem p = problem;
    p.train_starts = thin_evenly(per_range[k], n);
    const bool residual = base.model.value("residual", true);
    auto run = train_run(files, p, base, base.train.seed, residual);
    const auto rep = evaluate(p, events, model_predictor(*run.model, p), base.eval);
    DateRangeResult r;
    r.name = ranges[k].name;
    r.n_sequences = p.train_starts.size();
    for (const auto& [g, curve] : rep.rmse_by_level) {
      double s = 0.0;
      for (double v : curve) s += v;
      r.rmse_by_level[g] = s / static_cast<double>(curve.size());
    }
    r.rmse_all = rep.mean_rmse(1, rep.horizon);
    if (progress) progress(r.name + ": " + num(r.rmse_all));
    out.push_back(std::move(r));
  }
  return out;
}

std::string date_range_csv(const std::vector<DateRangeResult>& rows) {
  std::set<int> levels;
  for (const auto& r : rows)
    for (const auto& [g, v] : r.rmse_by_level) levels.insert(g);
  std::string out = "range,sequences";
  for (int g : levels) out += ",G" + std::to_string(g);
  out += ",all\n";
  for (const auto& r : rows) {
    out += csv_field(r.name) + "," + std::to_string(r.n_sequences);
    for (int g : levels) {
      auto it = r.rmse_by_level.find(g);
      out += "," + (it == r.rmse_by_level.end() ? std::string() : num(it->second));
    }
    out += "," + num(r.rmse_all) + "\n";
  }
  return out;
}

}  // namespace ioncast
