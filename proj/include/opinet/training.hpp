#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "opinet/adam.hpp"
#include "opinet/dataio.hpp"
#include "opinet/dataset.hpp"
#include "opinet/deeponet.hpp"
#include "opinet/losses.hpp"
#include "opinet/metrics.hpp"
#include "opinet/ntk.hpp"

namespace opinet {

struct AblationFlags {
  bool use_ntk = true;
  bool use_se = true;
};

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded shuffle of [0, n) cut into train / val / test (test takes the rest).
Split make_split(std::size_t n, const SplitSpec& spec);

/// Settings shared by both experiments.
struct TrainOptions {
  OptimizerConfig opt;
  NtkSchedule ntk;
  LossWeights weights;
  AblationFlags flags;
  /// Assemble the Gram every ntk.period steps; off means no kernel work at all.
  bool observe_ntk = true;
  /// Stop after this many optimizer steps; 0 runs opt.epochs full epochs.
  std::size_t max_steps = 0;
  std::uint64_t seed = 0;
  /// Print a progress line to stderr every this many steps (0 = quiet).
  std::size_t log_every = 0;
};

struct HistoryRow {
  long step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  LossReport loss;
  /// Present on steps where the kernel was measured.
  std::optional<NtkReportRow> ntk;
};

struct TrainHistory {
  std::vector<HistoryRow> rows;
  std::vector<std::string> warnings;

  std::vector<NtkReportRow> ntk_rows() const;
};

void write_history_csv(std::ostream& out, const TrainHistory& history);
void write_ntk_report_csv(std::ostream& out, const TrainHistory& history);

struct TrainResult {
  DeepONetModel model;
  TrainHistory history;
};

// --- source localization -------------------------------------------------

struct FluidsTrainConfig : TrainOptions {
  DeepONetConfig model;
  PhysicsConfig physics;
  /// Samples per batch that also evaluate the physics loss (the first ones of
  /// each batch); 0 means the whole batch.
  std::size_t physics_batch = 4;
  /// Let the physics loss move the predicted sources (through f_pred and u).
  bool physics_to_head = false;
  SplitSpec split;

  FluidsTrainConfig();
  void validate() const;
};

/// Model sized for the dataset: 4 branch inputs, a head reading (u, v, p),
/// field scales from the training samples, SE blocks iff flags.use_se.
DeepONetModel make_fluids_model(const FluidsTrainConfig& cfg, const Dataset& data, const std::vector<std::size_t>& train);

/// NTK probe: the sample's labels and its first probe_size receivers.
ProbeSet fluids_probe(const SampleRecord& sample, std::size_t probe_size);

/// Minibatch Adam on alpha L_data + beta L_phys + gamma L_source (+ w L_ntk).
/// L_data fits the forward operator (field u) on the true sources; the inverse
/// head feeds L_source and, through f_pred, L_phys.
TrainResult train_source_localization(const Dataset& data, const std::vector<std::size_t>& train, DeepONetModel model,
                                      const FluidsTrainConfig& cfg);

struct LocalizationRow {
  std::size_t sample = 0;
  std::size_t source = 0;
  SourceSpec truth;
  SourceSpec predicted;
  double location_error = 0.0;
  double strength_error = 0.0;
};

struct LocalizationReport {
  std::vector<LocalizationRow> rows;
  double mean_location_error = 0.0;
  double mean_strength_error = 0.0;
};

/// Predicted sources matched to the labels (Hungarian on location distance).
LocalizationReport evaluate_localization(const DeepONetModel& model, const Dataset& data,
                                         const std::vector<std::size_t>& indices);
/// Same report for an arbitrary predictor (used to check the report itself).
LocalizationReport evaluate_localization(
    const std::function<std::vector<SourceSpec>(const SampleRecord&)>& predict, const Dataset& data,
    const std::vector<std::size_t>& indices);

void write_localization_csv(std::ostream& out, const LocalizationReport& report);
/// True vs predicted coordinates (x and y series) with the diagonal y = x.
void write_scatter_svg(std::ostream& out, const LocalizationReport& report);

// --- image reconstruction ------------------------------------------------

struct ImageTrainConfig : TrainOptions {
  DeepONetConfig model;
  MaskSpec mask;
  SplitSpec split;
  /// Evaluation runs (distinct mask draws over the held-out images).
  std::size_t eval_runs = 10;
  /// Keep observed pixels and take the model only inside the mask.
  bool composite = true;

  ImageTrainConfig();
  void validate() const;
};

/// Pixel coordinates for the trunk: (x, y) in [0, 1], plus a channel
/// coordinate when channels > 1. [C*H*W x trunk_in], channel-major.
Tensor pixel_grid(std::size_t channels, std::size_t height, std::size_t width);

DeepONetModel make_image_model(const ImageTrainConfig& cfg, std::size_t channels, std::size_t height,
                               std::size_t width);

/// Model output for corrupted images [B x C x H x W]; composite blends in
/// the observed pixels outside the masks [B x H x W].
Tensor reconstruct(const DeepONetModel& model, const Tensor& corrupted, const Tensor& masks, bool composite);

/// NTK probe: image `index` corrupted with seed mix_seed(cfg.seed, 2) and
/// probe_size evenly strided pixels.
ProbeSet image_probe(const ImageBatch& images, std::size_t index, const ImageTrainConfig& cfg);

/// alpha MSE + delta perceptual; masks are redrawn every batch from the state rng.
TrainResult train_reconstruction(const ImageBatch& images, const std::vector<std::size_t>& train, DeepONetModel model,
                                 const ImageTrainConfig& cfg);

struct ReconstructionReport {
  MetricReport model;
  MetricReport baseline;  // corrupted input vs clean
  std::vector<MetricSample> model_runs;
  std::vector<MetricSample> baseline_runs;
};

ReconstructionReport evaluate_reconstruction(const DeepONetModel& model, const ImageBatch& images,
                                             const std::vector<std::size_t>& indices, const ImageTrainConfig& cfg);

/// "split,run,psnr,ssim,mse" per run for model and baseline, then the
/// mean/std summary rows.
void write_reconstruction_csv(std::ostream& out, const ReconstructionReport& report);

// --- ablation --------------------------------------------------------------

struct AblationRow {
  AblationFlags flags;
  MetricReport metrics;
};

/// Trains (use_ntk, use_se) in {(0,0), (1,0), (0,1), (1,1)} with shared seeds
/// and split, evaluating each on the same held-out images.
std::vector<AblationRow> run_ablation(const ImageBatch& images, const ImageTrainConfig& cfg);
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

}  // namespace opinet
