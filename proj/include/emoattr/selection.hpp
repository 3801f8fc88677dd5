#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emoattr/attribution.hpp"
#include "emoattr/dataset.hpp"
#include "emoattr/training.hpp"

namespace emoattr {

// ----------------------------------------------------------------------------
// Typical-baseline selection
// ----------------------------------------------------------------------------

// One representative sample per emotion, stored as a position into
// Dataset::samples.
struct BaselineSet {
  std::map<EmotionLabel, std::size_t> chosen;

  std::size_t at(EmotionLabel e) const;
  bool has(EmotionLabel e) const { return chosen.count(e) > 0; }
};

using EmotionScorers = std::map<EmotionLabel, const ScoreFunction*>;

struct BaselineOptions {
  // Candidate sample positions; empty means the whole dataset.
  std::vector<std::size_t> candidates;
  // Manual picks by sample id, taking precedence over the scorers.
  std::map<EmotionLabel, std::string> overrides;
};

// For each emotion with a scorer (or an override): the candidate sample of
// that emotion maximizing the scorer, earliest position on ties.
BaselineSet select_typical_baselines(const Dataset& dataset,
                                     const EmotionScorers& scorers,
                                     const BaselineOptions& options = {});

// ----------------------------------------------------------------------------
// Dataset-wide aggregation
// ----------------------------------------------------------------------------

struct GlobalAttributionOptions {
  // Average only over samples carrying the target emotion instead of the
  // whole training set.
  bool target_samples_only = false;
  // When false, missing complementary baselines are skipped instead of being
  // an error (reduced mode for small experiments).
  bool require_all_baselines = true;
};

struct GlobalAttribution {
  EmotionLabel emotion = EmotionLabel::Anger;
  AttributionMask mask;
  std::size_t sample_count = 0;  // samples averaged per baseline
  std::vector<std::string> baseline_ids;
  std::size_t steps = 0;  // m used per attribution
};

// Per-baseline mean of per-sample masks over the training samples, then the
// mean across the complementary-emotion baselines.
GlobalAttribution global_attribution(EmotionLabel emotion,
                                     const ScoreFunction& f,
                                     const Dataset& dataset,
                                     const std::vector<std::size_t>& train_idx,
                                     const BaselineSet& baselines,
                                     const IGConfig& config = {},
                                     const GlobalAttributionOptions& options = {});
GlobalAttribution global_attribution(EmotionLabel emotion,
                                     const EmotionModel& model,
                                     const Dataset& dataset,
                                     const std::vector<std::size_t>& train_idx,
                                     const BaselineSet& baselines,
                                     const IGConfig& config = {},
                                     const GlobalAttributionOptions& options = {});

// ----------------------------------------------------------------------------
// Ranking and subsetting
// ----------------------------------------------------------------------------

struct LandmarkRanking {
  std::vector<std::size_t> order;  // landmark positions, most important first
  GlobalAttribution source;
};

// Descending score, ascending index on ties; always a full permutation.
LandmarkRanking rank_landmarks(const GlobalAttribution& g);

// Keeps the top-k landmarks in ranking order and composes landmark_map so it
// still points at original landmark ids.
Dataset subset_dataset(const Dataset& dataset, const LandmarkRanking& ranking,
                       std::size_t k);

// ----------------------------------------------------------------------------
// Retraining pipeline
// ----------------------------------------------------------------------------

// Reference (F, Q, R) per emotion for the standard ladder sizes
// {234, 128, 64, 32, 16}; nullopt for other sizes.
struct TunedHyperparameters {
  std::size_t conv_filters;
  std::size_t lstm_units;
  std::size_t fc1_neurons;
};

std::optional<TunedHyperparameters> tuned_hyperparameters(EmotionLabel emotion,
                                                          std::size_t k);

// Grid built from the reference values observed at subset size k across all
// six emotions; falls back to the generic default grid for other sizes.
GridSpec default_grid_for_subset(std::size_t k);

struct PipelineOptions {
  std::vector<std::size_t> ladder;  // strictly decreasing subset sizes
  std::map<std::size_t, GridSpec> grids;  // per-k overrides
  std::size_t grid_seeds = 3;
  std::size_t eval_seeds = 10;
  IGConfig ig;
  GlobalAttributionOptions attribution;
  std::map<EmotionLabel, std::string> baseline_overrides;
  // When false, skip the per-k grid search and use the tuned reference
  // hyperparameters (or the full model's F,Q,R) directly.
  bool run_grid_search = true;
};

struct ReportRow {
  std::size_t k = 0;
  ModelConfig config;
  RunResult result;
  bool failed = false;
  std::string error;
};

struct SelectionReport {
  EmotionLabel emotion = EmotionLabel::Anger;
  std::vector<ReportRow> rows;  // full-L row first, then the ladder
  LandmarkRanking ranking;
};

// Runs global attribution once with the full-size model as F, ranks the
// landmarks, then per ladder size: subset, per-k hyperparameter choice, and
// the multi-seed evaluation. A failed row is recorded and the rest proceed.
SelectionReport selection_pipeline(EmotionLabel emotion, const Dataset& dataset,
                                   const EmotionModel& full_model,
                                   const PipelineOptions& options,
                                   const TrainConfig& train_config);

}  // namespace emoattr
