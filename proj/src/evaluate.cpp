#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <thread>

#include "ioncast/train.hpp"

namespace ioncast {

LatBand lat_band(double lat_deg) {
  const double a = std::abs(lat_deg);
  if (a <= 30.0) return LatBand::Low;
  if (a <= 60.0) return LatBand::Mid;
  return LatBand::High;
}

void EvalConfig::validate() const {
  if (horizon < 1) throw ConfigError("eval.horizon must be >= 1");
  if (start_stride < 1) throw ConfigError("eval.start_stride must be >= 1");
  if (threads < 1) throw ConfigError("eval.threads must be >= 1");
}

nlohmann::json EvalConfig::to_json() const {
  return {{"horizon", horizon},
          {"start_stride", start_stride},
          {"area_weighted", area_weighted},
          {"hexbin_max", hexbin_max},
          {"threads", threads}};
}

EvalConfig EvalConfig::from_json(const nlohmann::json& j) {
  EvalConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "horizon") c.horizon = v.get<int>();
    else if (key == "start_stride") c.start_stride = v.get<int>();
    else if (key == "area_weighted") c.area_weighted = v.get<bool>();
    else if (key == "hexbin_max") c.hexbin_max = v.get<std::size_t>();
    else if (key == "threads") c.threads = v.get<int>();
    else throw ConfigError("eval: unknown config key '" + key + "'");
  }
  c.validate();
  return c;
}

double MetricReport::mean_rmse(int first, int last) const {
  if (first < 1 || last > horizon || first > last)
    throw ArgumentError("lead range " + std::to_string(first) + ".." + std::to_string(last) + " outside 1.." +
                        std::to_string(horizon));
  double s = 0.0;
  for (int l = first; l <= last; ++l) s += rmse_by_lead[static_cast<std::size_t>(l - 1)];
  return s / (last - first + 1);
}

std::vector<std::size_t> event_starts(const Problem& problem, const StormEvent& event, int horizon, int stride) {
  const auto& times = problem.data().times;
  const auto cadence = problem.data().cadence;
  const std::size_t ctx = static_cast<std::size_t>(problem.context);
  const std::size_t h = static_cast<std::size_t>(horizon);
  std::vector<std::size_t> out;
  int seen = 0;
  for (std::size_t s = 0; s < times.size(); ++s) {
    if (!event.contains(times[s])) continue;
    if (s + 1 < ctx || s + h >= times.size()) continue;
    const std::size_t first = s + 1 - ctx;
    if (times[s + h] - times[first] != static_cast<std::int64_t>(ctx - 1 + h) * cadence) continue;
    if (seen++ % stride == 0) out.push_back(s);
  }
  return out;
}

namespace {

std::vector<Tensor<double>> physical_frames(const FrameAssembler& frames, std::size_t first, std::size_t count) {
  std::vector<Tensor<double>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(frames.frame(first + i).cast<double>());
  return out;
}

struct Job {
  std::size_t event;
  std::size_t start;
};

struct JobResult {
  std::vector<double> sse, weight;
  std::array<std::vector<double>, 3> band_sse, band_weight;
  std::vector<HexbinPoint> hexbin;
};

std::vector<double> rmse_of(const std::vector<double>& sse, const std::vector<double>& w) {
  std::vector<double> out(sse.size());
  for (std::size_t i = 0; i < sse.size(); ++i) out[i] = w[i] > 0 ? std::sqrt(sse[i] / w[i]) : 0.0;
  return out;
}

}  // namespace

template <typename T>
Predictor model_predictor(Model<T>& model, const Problem& problem) {
  auto frames = std::make_shared<FrameAssembler>(problem.data(), problem.spec);
  auto fc = std::make_shared<Forecaster<T>>(
      model, problem.norm, [frames](Timestamp t) { return frames->forcing(t); }, problem.data().cadence);
  return [fc](const std::vector<Tensor<double>>& window, Timestamp t_last, int k) {
    std::vector<Tensor<T>> w;
    w.reserve(window.size());
    for (const auto& f : window) w.push_back(f.template cast<T>());
    std::vector<Tensor<double>> out;
    for (auto& f : fc->rollout(std::move(w), t_last, k)) out.push_back(f.template cast<double>());
    return out;
  };
}

template Predictor model_predictor<float>(Model<float>&, const Problem&);
template Predictor model_predictor<double>(Model<double>&, const Problem&);

Predictor persistence_predictor(const Problem& problem) {
  auto frames = std::make_shared<FrameAssembler>(problem.data(), problem.spec);
  const auto spec = problem.spec;
  const auto cadence = problem.data().cadence;
  return [frames, spec, cadence](const std::vector<Tensor<double>>& window, Timestamp t_last, int k) {
    return persistence_forecast<double>(window, spec, [&](Timestamp t) { return frames->forcing(t); }, t_last, cadence,
                                        k);
  };
}

MetricReport evaluate(const Problem& problem, const std::vector<StormEvent>& events, const Predictor& predictor,
                      const EvalConfig& config) {
  config.validate();
  const auto& d = problem.data();
  const FrameAssembler frames(d, problem.spec);
  const std::size_t ctx = static_cast<std::size_t>(problem.context);
  const int H = config.horizon;
  const std::size_t Hs = static_cast<std::size_t>(H);

  std::vector<Job> jobs;
  for (std::size_t e = 0; e < events.size(); ++e) {
    const auto starts = event_starts(problem, events[e], H, config.start_stride);
    if (starts.empty())
      throw EvaluationError("event " + format_iso8601(events[e].start) + " .. " + format_iso8601(events[e].end) +
                            " has no start with " + std::to_string(ctx) + " context frames and a " +
                            std::to_string(H) + "-step horizon");
    for (auto s : starts) {
      for (std::size_t i = s + 1 - ctx; i <= s + Hs; ++i)
        if (problem.masks.train[i])
          throw EvaluationError("leak guard: rollout from " + format_iso8601(d.times[s]) + " reads " +
                                format_iso8601(d.times[i]) + ", which is in the training mask");
      jobs.push_back({e, s});
    }
  }

  std::vector<std::size_t> targets;
  for (const auto& name : problem.spec.names_of(ChannelKind::Target)) targets.push_back(problem.spec.frame_index(name));
  const std::size_t HW = d.grid.size();
  std::vector<double> node_w(HW, 1.0);
  std::vector<int> node_band(HW);
  for (std::size_t r = 0; r < d.grid.n_lat; ++r)
    for (std::size_t c = 0; c < d.grid.n_lon; ++c) {
      const double lat = d.grid.lat_deg(r);
      node_band[r * d.grid.n_lon + c] = static_cast<int>(lat_band(lat));
      if (config.area_weighted) node_w[r * d.grid.n_lon + c] = std::cos(lat * M_PI / 180.0);
    }
  const std::size_t per_job = Hs * targets.size() * HW;
  const std::size_t total = jobs.size() * per_job;
  const std::size_t hex_stride =
      config.hexbin_max == 0 ? 0 : std::max<std::size_t>(1, (total + config.hexbin_max - 1) / config.hexbin_max);

  auto run = [&](std::size_t j) {
    JobResult r;
    r.sse.assign(Hs, 0.0);
    r.weight.assign(Hs, 0.0);
    for (int b = 0; b < 3; ++b) {
      r.band_sse[b].assign(Hs, 0.0);
      r.band_weight[b].assign(Hs, 0.0);
    }
    const std::size_t s = jobs[j].start;
    auto window = physical_frames(frames, s + 1 - ctx, ctx);
    const auto pred = predictor(window, d.times[s], H);
    if (pred.size() != Hs) throw EvaluationError("predictor returned " + std::to_string(pred.size()) + " frames");
    for (std::size_t l = 0; l < Hs; ++l) {
      const auto truth = frames.frame(s + 1 + l);
      for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        const std::size_t c = targets[ti];
        for (std::size_t n = 0; n < HW; ++n) {
          const double t = truth[c * HW + n], p = pred[l][c * HW + n];
          const double e2 = (p - t) * (p - t), w = node_w[n];
          r.sse[l] += w * e2;
          r.weight[l] += w;
          r.band_sse[node_band[n]][l] += w * e2;
          r.band_weight[node_band[n]][l] += w;
          const std::size_t idx = j * per_job + (l * targets.size() + ti) * HW + n;
          if (hex_stride && idx % hex_stride == 0)
            r.hexbin.push_back({static_cast<float>(t), static_cast<float>(p), static_cast<int>(l + 1)});
        }
      }
    }
    return r;
  };

  std::vector<JobResult> results(jobs.size());
  const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(config.threads), jobs.size());
  if (nt <= 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) results[j] = run(j);
  } else {
    std::vector<std::exception_ptr> errors(nt);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nt; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t j = t; j < jobs.size(); j += nt) results[j] = run(j);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  // Merge in job order so the sums do not depend on the thread count.
  MetricReport rep;
  rep.horizon = H;
  rep.n_starts = jobs.size();
  rep.sse_by_lead.assign(Hs, 0.0);
  rep.weight_by_lead.assign(Hs, 0.0);
  for (int b = 0; b < 3; ++b) {
    rep.sse_by_band[b].assign(Hs, 0.0);
    rep.weight_by_band[b].assign(Hs, 0.0);
  }
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> level;
  std::vector<std::vector<double>> ev_sse(events.size(), std::vector<double>(Hs, 0.0)), ev_w = ev_sse;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const auto& r = results[j];
    auto& lv = level[events[jobs[j].event].g_level];
    lv.first.resize(Hs, 0.0);
    lv.second.resize(Hs, 0.0);
    for (std::size_t l = 0; l < Hs; ++l) {
      rep.sse_by_lead[l] += r.sse[l];
      rep.weight_by_lead[l] += r.weight[l];
      for (int b = 0; b < 3; ++b) {
        rep.sse_by_band[b][l] += r.band_sse[b][l];
        rep.weight_by_band[b][l] += r.band_weight[b][l];
      }
      lv.first[l] += r.sse[l];
      lv.second[l] += r.weight[l];
      ev_sse[jobs[j].event][l] += r.sse[l];
      ev_w[jobs[j].event][l] += r.weight[l];
    }
    rep.hexbin.insert(rep.hexbin.end(), r.hexbin.begin(), r.hexbin.end());
  }
  rep.rmse_by_lead = rmse_of(rep.sse_by_lead, rep.weight_by_lead);
  for (int b = 0; b < 3; ++b) rep.rmse_by_band[b] = rmse_of(rep.sse_by_band[b], rep.weight_by_band[b]);
  for (const auto& [g, sw] : level) rep.rmse_by_level[g] = rmse_of(sw.first, sw.second);
  for (std::size_t e = 0; e < events.size(); ++e) {
    const auto curve = rmse_of(ev_sse[e], ev_w[e]);
    double s = 0.0;
    for (double v : curve) s += v;
    rep.per_event_mean.push_back(s / static_cast<double>(Hs));
  }
  return rep;
}

// ---- reports ----

namespace {

std::string num(double v) {
  std::ostringstream s;
  s.precision(8);
  s << v;
  return s.str();
}

}  // namespace

std::string lead_curve_csv(const MetricReport& model, const MetricReport& persistence, std::int64_t cadence) {
  if (model.horizon != persistence.horizon) throw ArgumentError("lead curves need equal horizons");
  std::string out = "lead,hours,model_rmse,persistence_rmse\n";
  for (int l = 1; l <= model.horizon; ++l)
    out += std::to_string(l) + "," + num(l * cadence / 3600.0) + "," + num(model.rmse_by_lead[l - 1]) + "," +
           num(persistence.rmse_by_lead[l - 1]) + "\n";
  return out;
}

std::string band_csv(const MetricReport& r) {
  std::string out = "band,lead,rmse\n";
  for (int b = 0; b < 3; ++b)
    for (int l = 1; l <= r.horizon; ++l)
      out += std::string(kBandNames[b]) + "," + std::to_string(l) + "," + num(r.rmse_by_band[b][l - 1]) + "\n";
  return out;
}

std::string level_csv(const MetricReport& r) {
  std::string out = "g_level,lead,rmse\n";
  for (const auto& [g, curve] : r.rmse_by_level)
    for (int l = 1; l <= r.horizon; ++l)
      out += "G" + std::to_string(g) + "," + std::to_string(l) + "," + num(curve[l - 1]) + "\n";
  return out;
}

std::string hexbin_csv(const MetricReport& r) {
  std::string out = "truth,prediction,lead\n";
  for (const auto& p : r.hexbin) out += num(p.truth) + "," + num(p.prediction) + "," + std::to_string(p.lead) + "\n";
  return out;
}

std::string lead_curve_svg(const MetricReport& model, const MetricReport& persistence, std::int64_t cadence,
                           const std::string& title) {
  const double W = 640, H = 400, L = 60, R = 20, T = 40, B = 50;
  const double xmax = model.horizon * cadence / 3600.0;
  double ymax = 0.0;
  for (double v : model.rmse_by_lead) ymax = std::max(ymax, v);
  for (double v : persistence.rmse_by_lead) ymax = std::max(ymax, v);
  ymax = ymax > 0 ? ymax * 1.1 : 1.0;
  auto x = [&](double hours) { return L + (W - L - R) * hours / xmax; };
  auto y = [&](double v) { return H - B - (H - T - B) * v / ymax; };
  auto line = [&](const std::vector<double>& v, const char* color) {
    std::string pts;
    for (std::size_t i = 0; i < v.size(); ++i)
      pts += num(x((i + 1) * cadence / 3600.0)) + "," + num(y(v[i])) + " ";
    return "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts +
           "\"/>\n";
  };
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(H) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(W / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" + title + "</text>\n";
  s += "<line x1=\"" + num(L) + "\" y1=\"" + num(H - B) + "\" x2=\"" + num(W - R) + "\" y2=\"" + num(H - B) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(L) + "\" y1=\"" + num(T) + "\" x2=\"" + num(L) + "\" y2=\"" + num(H - B) +
       "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 6; ++i) {
    const double hv = xmax * i / 6.0, yv = ymax * i / 5.0;
    s += "<text x=\"" + num(x(hv)) + "\" y=\"" + num(H - B + 18) + "\" text-anchor=\"middle\" font-size=\"11\">" +
         num(std::round(hv * 10) / 10) + "</text>\n";
    if (i <= 5)
      s += "<text x=\"" + num(L - 6) + "\" y=\"" + num(y(yv) + 4) + "\" text-anchor=\"end\" font-size=\"11\">" +
           num(std::round(yv * 10) / 10) + "</text>\n";
  }
  s += "<text x=\"" + num(W / 2) + "\" y=\"" + num(H - 12) +
       "\" text-anchor=\"middle\" font-size=\"12\">Lead time (hours)</text>\n";
  s += "<text x=\"16\" y=\"" + num(H / 2) + "\" transform=\"rotate(-90 16 " + num(H / 2) +
       ")\" text-anchor=\"middle\" font-size=\"12\">RMSE (TECU)</text>\n";
  s += line(persistence.rmse_by_lead, "#888888");
  s += line(model.rmse_by_lead, "#1f77b4");
  s += "<text x=\"" + num(L + 10) + "\" y=\"" + num(T + 12) +
       "\" font-size=\"12\" fill=\"#1f77b4\">model</text>\n";
  s += "<text x=\"" + num(L + 10) + "\" y=\"" + num(T + 28) +
       "\" font-size=\"12\" fill=\"#888888\">persistence</text>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace ioncast
