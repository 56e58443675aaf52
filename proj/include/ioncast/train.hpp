#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ioncast/adam.hpp"
#include "ioncast/checkpoint.hpp"
#include "ioncast/model.hpp"

namespace ioncast {

// Dataset, channel spec, splits and normalization shared by training and
// evaluation. The split margin is (context + eval_horizon) cadence steps.
struct Problem {
  const DatasetFiles* files = nullptr;
  ChannelSpec spec;
  SplitSpec split;
  SplitMasks masks;
  Normalizer norm;
  int context = 8;
  int eval_horizon = 48;
  std::vector<std::size_t> train_starts;  // first context frame of each training sample

  const Dataset& data() const { return files->data; }
  const EventCatalog& catalog() const { return files->catalog; }
  FrameAssembler frames() const { return FrameAssembler(files->data, spec); }
  std::vector<StormEvent> events(Split s) const;
};

struct ProblemConfig {
  int context = 8;
  int eval_horizon = 48;
  double holdout_fraction = 0.1;
  std::uint64_t split_seed = 0;
  int dilation = 1;
};

Problem make_problem(const DatasetFiles& files, ChannelSpec spec, const ProblemConfig& config);

// Differentiable one-step loss in normalized space. `window` holds context
// frames and `target` the next frame, all normalized. The prediction is placed
// into a full frame whose forcing rows come from `target`; those rows enter as
// leaves with loss weight 0. When `forcing_rows` is given it receives that leaf.
template <typename T>
Var<T> step_loss(Graph<T>& g, Model<T>& model, std::span<const Tensor<T>> window, const Tensor<T>& target,
                 Var<T>* forcing_rows = nullptr);

struct TrainConfig {
  double lr = 1e-3;
  int batch = 1;
  int steps = 2000;
  std::uint64_t seed = 0;
  int val_every = 250;
  int val_starts = 4;    // validation rollouts per check
  int val_horizon = 48;  // steps per validation rollout

  void validate() const;  // ConfigError
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  // Keys in `j` override `base`.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
  // Published per-architecture settings: gnn lr 3e-4 batch 1, lstm lr 2e-4 batch 4.
  static TrainConfig for_arch(const std::string& arch);
};

// NaN marks columns without a validation pass at that step.
struct LogRow {
  std::int64_t step = 0;
  double loss = 0.0;
  double val_rmse_1h = 0.0;
  double val_rmse_6h = 0.0;
  double val_rmse_12h = 0.0;
};

std::string log_csv_header();  // step,loss,val_rmse_1h,val_rmse_6h,val_rmse_12h
std::string format_log_row(const LogRow& r);

struct TrainResult {
  Checkpoint best;
  std::int64_t best_step = 0;
  double best_score = 0.0;  // mean of the three validation RMSEs
  std::vector<LogRow> log;
  std::int64_t final_step = 0;
};

struct TrainHooks {
  // Directory for best.ckpt and last.ckpt; empty keeps checkpoints in memory.
  std::string checkpoint_dir;
  nlohmann::json meta = nlohmann::json::object();  // copied into every checkpoint
  std::function<void(const LogRow&)> on_row;
  // Continue from a checkpoint (parameters, Adam moments, step counter).
  const Checkpoint* resume = nullptr;
};

// Start index of training sample k (counting across batches): position
// k mod n of the epoch's shuffle, seeded by (seed, k / n).
std::size_t training_sample(const std::vector<std::size_t>& starts, std::uint64_t seed, std::int64_t k);

// Single-step supervised training with Adam. Sample order is a per-epoch
// shuffle seeded by (seed, epoch), so a resumed run sees the same samples as
// an uninterrupted one. TrainingError on a non-finite loss.
TrainResult train(Model<float>& model, const Problem& problem, const TrainConfig& config, const TrainHooks& hooks = {});

// Validation RMSE of the target channels at leads 4, 24 and 48 from evenly
// spaced starts in the validation events.
std::array<double, 3> validation_rmse(Model<float>& model, const Problem& problem, int n_starts, int horizon);

// ---- evaluation ----

// k frames after the window's last frame, stamped t_last + i * cadence.
using Predictor =
    std::function<std::vector<Tensor<double>>(const std::vector<Tensor<double>>& window, Timestamp t_last, int k)>;

template <typename T>
Predictor model_predictor(Model<T>& model, const Problem& problem);
Predictor persistence_predictor(const Problem& problem);

enum class LatBand { Low, Mid, High };
inline constexpr std::array<const char*, 3> kBandNames{"low", "mid", "high"};
LatBand lat_band(double lat_deg);  // low |lat| <= 30, mid <= 60, high above

struct EvalConfig {
  int horizon = 48;
  int start_stride = 1;       // every n-th admissible start
  bool area_weighted = false;  // cos(latitude) weights
  std::size_t hexbin_max = 20000;
  int threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& j);
};

struct HexbinPoint {
  float truth;
  float prediction;
  int lead;
};

// RMSE over target channels in physical units. Sums are kept so reports can be
// merged and decomposed.
struct MetricReport {
  int horizon = 0;
  std::size_t n_starts = 0;
  std::vector<double> rmse_by_lead;                  // [horizon], lead 1 first
  std::array<std::vector<double>, 3> rmse_by_band;   // [band][horizon]
  std::map<int, std::vector<double>> rmse_by_level;  // G-level -> [horizon]
  std::vector<double> sse_by_lead, weight_by_lead;
  std::array<std::vector<double>, 3> sse_by_band, weight_by_band;
  std::vector<HexbinPoint> hexbin;
  std::vector<double> per_event_mean;  // mean over leads of each event's RMSE curve

  // Mean RMSE over leads [first, last], 1-based inclusive.
  double mean_rmse(int first, int last) const;
};

// Admissible starts (index of the last context frame) of an event.
std::vector<std::size_t> event_starts(const Problem& problem, const StormEvent& event, int horizon, int stride);

// Leak guard: EvaluationError if any frame read by a rollout (context and
// truth) lies in the training mask, or an event yields no admissible start.
MetricReport evaluate(const Problem& problem, const std::vector<StormEvent>& events, const Predictor& predictor,
                      const EvalConfig& config);

// ---- reports ----

std::string lead_curve_csv(const MetricReport& model, const MetricReport& persistence, std::int64_t cadence);
std::string band_csv(const MetricReport& r);
std::string level_csv(const MetricReport& r);
std::string hexbin_csv(const MetricReport& r);
// RMSE against lead time in hours, model and persistence lines.
std::string lead_curve_svg(const MetricReport& model, const MetricReport& persistence, std::int64_t cadence,
                           const std::string& title);

// ---- experiments ----

struct RunSpec {
  std::string arch = "gnn";
  nlohmann::json model = nlohmann::json::object();
  ChannelSpec spec;
  ProblemConfig problem;
  TrainConfig train;
  EvalConfig eval;
};

struct AblationRow {
  std::string name;
  std::vector<std::string> drivers;
  std::vector<std::string> forcings;
  std::vector<std::string> coordinates;
  bool residual = true;
};

// The eight input-group experiments, in table order.
std::vector<AblationRow> default_ablation_plan();
ChannelSpec ablation_spec(const AblationRow& row, double tec_weight);

struct AblationResult {
  std::string name;
  bool residual = true;
  std::size_t n_channels = 0;
  std::vector<double> seed_scores;  // per seed, mean over events
  double mean = 0.0;                // over (seed, event) pairs
  double std = 0.0;
};

// One model per row and seed, scored on the validation events by the RMSE
// averaged over leads 1..horizon. `base.spec` supplies the target weight.
std::vector<AblationResult> run_ablation(const DatasetFiles& files, const RunSpec& base,
                                         const std::vector<AblationRow>& plan, const std::vector<std::uint64_t>& seeds,
                                         const std::function<void(const std::string&)>& progress = {});
std::string ablation_csv(const std::vector<AblationResult>& rows);

struct DateRange {
  std::string name;
  Timestamp start = 0;
  Timestamp end = 0;  // inclusive
};

// Evenly spaced subset of `n` items from `starts`: index floor(k * size / n).
std::vector<std::size_t> thin_evenly(const std::vector<std::size_t>& starts, std::size_t n);

struct DateRangeResult {
  std::string name;
  std::size_t n_sequences = 0;
  std::map<int, double> rmse_by_level;  // mean over leads, test events
  double rmse_all = 0.0;
};

// Per range: training starts restricted to the range (and the training mask),
// thinned to the smallest range's count, then the ordinary train/evaluate path
// on the test events. ConfigError when a range has no training sequences.
std::vector<DateRangeResult> run_date_range_experiment(const DatasetFiles& files, const RunSpec& base,
                                                       const std::vector<DateRange>& ranges,
                                                       const std::function<void(const std::string&)>& progress = {});
std::string date_range_csv(const std::vector<DateRangeResult>& rows);

}  // namespace ioncast
