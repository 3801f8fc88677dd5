#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "emoattr/dataset.hpp"
#include "emoattr/model.hpp"

namespace emoattr {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 16;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  double val_fraction = 0.10;
  double test_fraction = 0.15;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Weight each BCE term by inverse class frequency; off by default so the
  // natural 1-vs-5 imbalance is preserved.
  bool use_class_weights = false;

  void validate() const;
};

// Disjoint, exhaustive, seed-deterministic index partition, stratified by the
// binary (target vs rest) label. Validation is carved out of what remains
// after the test portion.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

SplitIndices split_dataset(const Dataset& dataset, EmotionLabel target,
                           std::uint64_t seed, double val_fraction,
                           double test_fraction);

// ----------------------------------------------------------------------------
// Adam
// ----------------------------------------------------------------------------

struct AdamState {
  std::size_t step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

AdamState init_adam(const ParameterStore& params);

// One bias-corrected Adam update over the trainable entries. Non-trainable
// entries are never touched.
void adam_step(ParameterStore& params,
               const std::map<std::string, Tensor>& grads, AdamState& state,
               const TrainConfig& config);

// ----------------------------------------------------------------------------
// Training loop
// ----------------------------------------------------------------------------

struct EpochRecord {
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
};

// Mini-batch BCE minimization with Adam. Per-epoch train loss and validation
// accuracy are recorded; on return the model holds the parameters (and
// batch-norm stats) of the best validation epoch, earliest on ties. A
// divergence (non-finite loss) raises a training error naming the epoch.
TrainHistory train(EmotionModel& model, const Dataset& dataset,
                   const std::vector<std::size_t>& train_idx,
                   const std::vector<std::size_t>& val_idx,
                   const TrainConfig& config);

// Fraction of samples whose thresholded probability (>= threshold counts as
// positive) matches the binary label.
double evaluate_accuracy(const EmotionModel& model, const Dataset& dataset,
                         const std::vector<std::size_t>& indices,
                         double threshold = 0.5);

// ----------------------------------------------------------------------------
// Multi-seed protocol
// ----------------------------------------------------------------------------

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double test_accuracy = 0.0;
  std::size_t best_epoch = 0;
};

struct RunResult {
  std::vector<SeedOutcome> runs;

  // Successful runs only.
  std::vector<double> accuracies() const;
  double mean() const;
  double stddev() const;  // population standard deviation
};

// Independent split + training per seed (run seed = config.seed + s, which
// also varies the partition). Training failures are recorded per seed; the
// remaining seeds still run.
RunResult multi_seed_eval(const ModelConfig& model_config, EmotionLabel target,
                          const Dataset& dataset, const TrainConfig& config,
                          std::size_t n_seeds = 10);

// ----------------------------------------------------------------------------
// Grid search over (F, Q, R)
// ----------------------------------------------------------------------------

struct GridSpec {
  std::vector<std::size_t> conv_filters;
  std::vector<std::size_t> lstm_units;
  std::vector<std::size_t> fc1_neurons;

  void validate() const;

  // Coarse grid spanning F in [16,50], Q in [30,68], R in [33,74].
  static GridSpec default_grid();
};

struct GridCell {
  ModelConfig config;
  double mean_val_accuracy = 0.0;
  std::size_t trainable_params = 0;
  std::size_t order = 0;  // enumeration position in the grid
  std::vector<double> per_seed_val_accuracy;
  std::size_t failures = 0;
};

struct GridResult {
  ModelConfig best;
  std::vector<GridCell> leaderboard;  // sorted best first
};

// Exhaustive search scored by mean best-validation accuracy over `seeds`
// seeds; ties prefer fewer trainable parameters, then earlier grid order.
GridResult grid_search(const GridSpec& grid, const Dataset& dataset,
                       EmotionLabel target, const ModelConfig& base_config,
                       const TrainConfig& train_config, std::size_t seeds = 3);

}  // namespace emoattr
