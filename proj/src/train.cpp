#include "ioncast/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "ioncast/ops.hpp"

namespace ioncast {

std::vector<StormEvent> Problem::events(Split s) const {
  std::vector<StormEvent> out;
  for (auto i : split.events_in(s)) out.push_back(catalog().events[i]);
  return out;
}

Problem make_problem(const DatasetFiles& files, ChannelSpec spec, const ProblemConfig& config) {
  if (config.context < 1) throw ConfigError("context must be >= 1");
  if (config.eval_horizon < 1) throw ConfigError("eval_horizon must be >= 1");
  if (config.dilation < 1) throw ConfigError("dilation must be >= 1");
  const auto& predicted = spec.predicted();
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] != i) throw ConfigError("channel spec must list predicted channels before forcings");

  Problem p;
  p.files = &files;
  p.spec = std::move(spec);
  p.context = config.context;
  p.eval_horizon = config.eval_horizon;
  const auto& d = files.data;
  p.split = build_splits(files.catalog, config.holdout_fraction, config.split_seed);
  const std::int64_t margin = static_cast<std::int64_t>(config.context + config.eval_horizon) * d.cadence;
  p.masks = build_masks(d.times, files.catalog, p.split, margin);
  p.train_starts = sample_sequences(d.times, d.cadence, config.context, 1, config.dilation, p.masks.train);
  FrameAssembler frames(d, p.spec);
  p.norm = Normalizer::fit(frames, mask_indices(p.masks.train));
  return p;
}

template <typename T>
Var<T> step_loss(Graph<T>& g, Model<T>& model, std::span<const Tensor<T>> window, const Tensor<T>& target,
                 Var<T>* forcing_rows) {
  const auto& spec = model.spec();
  const std::size_t P = spec.predicted().size(), F = spec.forcings().size();
  if (window.empty() || target.rank() != 3 || target.dim(0) != P + F)
    throw DimensionError("step_loss: target " + shape_str(target.shape()) + " does not match the channel spec");
  const std::size_t HW = target.size() / target.dim(0);
  const Shape pshape{P, target.dim(1), target.dim(2)};
  Tensor<T> forcing_next({F, target.dim(1), target.dim(2)});
  std::copy(target.ptr() + P * HW, target.ptr() + (P + F) * HW, forcing_next.ptr());

  auto pred = model.forward(g, window, forcing_next);
  if (model.residual()) {
    Tensor<T> last(pshape);
    std::copy(window.back().ptr(), window.back().ptr() + P * HW, last.ptr());
    pred = ops::add(g.constant(std::move(last)), pred);
  }
  Var<T> full = pred;
  if (F) {
    auto rows = g.variable(forcing_next);
    if (forcing_rows) *forcing_rows = rows;
    full = ops::concat<T>({pred, rows}, 0);
  }
  return ops::weighted_mse(full, g.constant(target), spec.frame_loss_weights());
}

template Var<float> step_loss<float>(Graph<float>&, Model<float>&, std::span<const Tensor<float>>, const Tensor<float>&,
                                     Var<float>*);
template Var<double> step_loss<double>(Graph<double>&, Model<double>&, std::span<const Tensor<double>>,
                                       const Tensor<double>&, Var<double>*);

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
  if (steps < 0) throw ConfigError("train.steps must be >= 0");
  if (val_every < 1) throw ConfigError("train.val_every must be >= 1");
  if (val_starts < 1) throw ConfigError("train.val_starts must be >= 1");
  if (val_horizon < 48) throw ConfigError("train.val_horizon must cover 12 h (>= 48 steps)");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},         {"batch", batch},           {"steps", steps},           {"seed", seed},
          {"val_every", val_every}, {"val_starts", val_starts}, {"val_horizon", val_horizon}};
}

TrainConfig TrainConfig::for_arch(const std::string& arch) {
  TrainConfig c;
  if (arch == "gnn") {
    c.lr = 3e-4;
    c.batch = 1;
  } else if (arch == "lstm") {
    c.lr = 2e-4;
    c.batch = 4;
  } else {
    throw ConfigError("unknown architecture '" + arch + "'");
  }
  return c;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig base) {
  TrainConfig c = base;
  for (const auto& [key, v] : j.items()) {
    if (key == "lr") c.lr = v.get<double>();
    else if (key == "batch") c.batch = v.get<int>();
    else if (key == "steps") c.steps = v.get<int>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "val_every") c.val_every = v.get<int>();
    else if (key == "val_starts") c.val_starts = v.get<int>();
    else if (key == "val_horizon") c.val_horizon = v.get<int>();
    else throw ConfigError("train: unknown config key '" + key + "'");
  }
  c.validate();
  return c;
}

std::string log_csv_header() { return "step,loss,val_rmse_1h,val_rmse_6h,val_rmse_12h"; }

std::string format_log_row(const LogRow& r) {
  std::ostringstream s;
  s.precision(9);
  auto put = [&](double v) {
    s << ',';
    if (std::isfinite(v)) s << v;
  };
  s << r.step;
  put(r.loss);
  put(r.val_rmse_1h);
  put(r.val_rmse_6h);
  put(r.val_rmse_12h);
  return s.str();
}

namespace {

std::vector<std::size_t> target_channels(const ChannelSpec& spec) {
  std::vector<std::size_t> out;
  for (const auto& name : spec.names_of(ChannelKind::Target)) out.push_back(spec.frame_index(name));
  return out;
}

template <typename T>
std::vector<Tensor<T>> load_frames(const FrameAssembler& frames, std::size_t first, std::size_t count,
                                   const Normalizer* norm) {
  std::vector<Tensor<T>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto f = frames.frame(first + i).template cast<T>();
    if (norm) norm->apply(f);
    out.push_back(std::move(f));
  }
  return out;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

// Evenly spaced validation starts over all validation events.
std::vector<std::size_t> validation_starts(const Problem& problem, int n, int horizon) {
  std::vector<std::size_t> all;
  for (const auto& e : problem.events(Split::Val)) {
    auto s = event_starts(problem, e, horizon, 1);
    all.insert(all.end(), s.begin(), s.end());
  }
  if (all.empty()) throw ConfigError("no admissible validation rollout starts");
  return thin_evenly(all, std::min<std::size_t>(all.size(), static_cast<std::size_t>(n)));
}

}  // namespace

std::vector<std::size_t> thin_evenly(const std::vector<std::size_t>& starts, std::size_t n) {
  std::vector<std::size_t> out;
  if (n == 0 || starts.empty()) return out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(starts[k * starts.size() / n]);
  return out;
}

std::size_t training_sample(const std::vector<std::size_t>& starts, std::uint64_t seed, std::int64_t k) {
  if (starts.empty() || k < 0) throw ArgumentError("training_sample: no samples or negative index");
  const auto n = static_cast<std::int64_t>(starts.size());
  std::vector<std::size_t> perm(starts.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(k / n)));
  std::shuffle(perm.begin(), perm.end(), rng);
  return starts[perm[static_cast<std::size_t>(k % n)]];
}

std::array<double, 3> validation_rmse(Model<float>& model, const Problem& problem, int n_starts, int horizon) {
  const auto frames = problem.frames();
  const auto& d = problem.data();
  const auto targets = target_channels(problem.spec);
  Forecaster<float> fc(model, problem.norm, [&](Timestamp t) { return frames.forcing(t); }, d.cadence);
  const int ctx = model.context_len();
  const std::array<int, 3> leads{4, 24, 48};
  std::array<double, 3> sse{}, count{};
  for (auto s : validation_starts(problem, n_starts, horizon)) {
    auto window = load_frames<float>(frames, s + 1 - ctx, ctx, nullptr);
    auto pred = fc.rollout(std::move(window), d.times[s], horizon);
    for (std::size_t k = 0; k < leads.size(); ++k) {
      const auto truth = frames.frame(s + leads[k]);
      const auto& p = pred[leads[k] - 1];
      const std::size_t HW = truth.size() / truth.dim(0);
      for (auto c : targets)
        for (std::size_t n = 0; n < HW; ++n) {
          const double e = static_cast<double>(p[c * HW + n]) - truth[c * HW + n];
          sse[k] += e * e;
          count[k] += 1;
        }
    }
  }
  return {std::sqrt(sse[0] / count[0]), std::sqrt(sse[1] / count[1]), std::sqrt(sse[2] / count[2])};
}

TrainResult train(Model<float>& model, const Problem& problem, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  const int ctx = model.context_len();
  if (ctx != problem.context)
    throw ConfigError("model context " + std::to_string(ctx) + " differs from the problem's " +
                      std::to_string(problem.context));
  if (!(model.spec() == problem.spec)) throw ConfigError("model and problem use different channel specs");
  const auto& starts = problem.train_starts;
  if (starts.empty()) throw ConfigError("no training sequences");
  const auto frames = problem.frames();
  auto& params = model.params();

  AdamState<float> adam;
  adam.hyper.lr = config.lr;
  std::int64_t step0 = 0;
  if (hooks.resume) {
    require_same_spec(*hooks.resume, problem.spec);
    load_params(model, *hooks.resume);
    adam = load_adam<float>(*hooks.resume);
    adam.hyper.lr = config.lr;
    step0 = hooks.resume->meta.value("step", std::int64_t{0});
  }

  const bool on_disk = !hooks.checkpoint_dir.empty();
  const std::string best_path = on_disk ? (std::filesystem::path(hooks.checkpoint_dir) / "best.ckpt").string() : "";
  const std::string last_path = on_disk ? (std::filesystem::path(hooks.checkpoint_dir) / "last.ckpt").string() : "";
  std::string last_good = hooks.resume ? "(resumed checkpoint)" : "(none)";

  auto checkpoint = [&](std::int64_t step, double score) {
    auto meta = hooks.meta;
    meta["step"] = step;
    meta["val_score"] = score;
    meta["train"] = config.to_json();
    return make_checkpoint(model, problem.norm, &adam, meta);
  };

  TrainResult result;
  result.best_score = std::numeric_limits<double>::infinity();
  result.final_step = step0;
  bool have_best = false;
  if (hooks.resume && hooks.resume->meta.contains("val_score")) {
    const double s = hooks.resume->meta["val_score"].get<double>();
    if (std::isfinite(s)) {
      result.best = *hooks.resume;
      result.best_score = s;
      result.best_step = step0;
      have_best = true;
    }
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::int64_t step = step0 + 1; step <= config.steps; ++step) {
    params.zero_grad();
    double loss_sum = 0.0;
    for (int b = 0; b < config.batch; ++b) {
      const std::int64_t k = (step - 1) * config.batch + b;
      const std::size_t s = training_sample(starts, config.seed, k);
      auto window = load_frames<float>(frames, s, static_cast<std::size_t>(ctx), &problem.norm);
      auto target = frames.frame(s + ctx);
      problem.norm.apply(target);
      Graph<float> g(true, mix_seed(config.seed ^ 0x9e3779b97f4a7c15ULL, static_cast<std::uint64_t>(k)));
      auto loss = step_loss<float>(g, model, window, target);
      loss_sum += loss.value()[0];
      g.backward(config.batch == 1 ? loss : ops::scale(loss, 1.0f / static_cast<float>(config.batch)));
    }
    const double loss = loss_sum / config.batch;
    if (!std::isfinite(loss))
      throw TrainingError("non-finite training loss at step " + std::to_string(step) +
                          "; last good checkpoint: " + last_good);
    try {
      adam_step(params, adam);
    } catch (const TrainingError& e) {
      throw TrainingError(std::string(e.what()) + " at step " + std::to_string(step) +
                          "; last good checkpoint: " + last_good);
    }

    LogRow row{step, loss, nan, nan, nan};
    if (step % config.val_every == 0 || step == config.steps) {
      const auto v = validation_rmse(model, problem, config.val_starts, config.val_horizon);
      row.val_rmse_1h = v[0];
      row.val_rmse_6h = v[1];
      row.val_rmse_12h = v[2];
      const double score = (v[0] + v[1] + v[2]) / 3.0;
      auto ck = checkpoint(step, score);
      if (on_disk) {
        save_checkpoint(last_path, ck);
        last_good = last_path;
      }
      if (!have_best || score < result.best_score) {
        result.best_score = score;
        result.best_step = step;
        if (on_disk) save_checkpoint(best_path, ck);
        result.best = std::move(ck);
        have_best = true;
      }
    }
    result.log.push_back(row);
    result.final_step = step;
    if (hooks.on_row) hooks.on_row(row);
  }
  if (!have_best) {
    // No training steps ran: the current parameters are the best known.
    result.best = checkpoint(result.final_step, nan);
    if (on_disk) save_checkpoint(best_path, result.best);
  }
  return result;
}

}  // namespace ioncast
