#include "emoattr/selection.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "emoattr/error.hpp"

namespace emoattr {

std::size_t BaselineSet::at(EmotionLabel e) const {
  auto it = chosen.find(e);
  if (it == chosen.end()) {
    throw CoverageError("no baseline chosen for emotion " + to_string(e));
  }
  return it->second;
}

// ============================================================================
// Typical-baseline selection
// ============================================================================

BaselineSet select_typical_baselines(const Dataset& dataset,
                                     const EmotionScorers& scorers,
                                     const BaselineOptions& options) {
  std::vector<std::size_t> candidates = options.candidates;
  if (candidates.empty()) {
    candidates.resize(dataset.samples.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i] = i;
  }
  for (std::size_t i : candidates) {
    if (i >= dataset.samples.size()) {
      throw ArgumentError("baseline candidate index " + std::to_string(i) +
                          " out of range");
    }
  }

  BaselineSet out;
  for (EmotionLabel e : kAllEmotions) {
    const auto override_it = options.overrides.find(e);
    const auto scorer_it = scorers.find(e);
    if (override_it == options.overrides.end() && scorer_it == scorers.end()) {
      continue;
    }

    if (override_it != options.overrides.end()) {
      const std::string& id = override_it->second;
      bool found = false;
      for (std::size_t i : candidates) {
        if (dataset.samples[i].id != id) continue;
        if (dataset.samples[i].label != e) {
          throw ValidationError("baseline override '" + id + "' carries label " +
                                to_string(dataset.samples[i].label) +
                                ", expected " + to_string(e));
        }
        out.chosen[e] = i;
        found = true;
        break;
      }
      if (!found) {
        throw ArgumentError("baseline override '" + id +
                            "' not found among the candidate samples");
      }
      continue;
    }

    const ScoreFunction* f = scorer_it->second;
    if (f == nullptr) {
      throw ArgumentError("null scorer for emotion " + to_string(e));
    }
    bool found = false;
    double best_score = 0.0;
    std::size_t best_idx = 0;
    for (std::size_t i : candidates) {
      if (dataset.samples[i].label != e) continue;
      const double s = f->score(sample_input(dataset.samples[i]));
      // Strict improvement keeps the earliest position on ties.
      if (!found || s > best_score) {
        found = true;
        best_score = s;
        best_idx = i;
      }
    }
    if (!found) {
      throw CoverageError("emotion " + to_string(e) +
                          " has no samples among the baseline candidates");
    }
    out.chosen[e] = best_idx;
  }
  return out;
}

// ============================================================================
// Dataset-wide aggregation
// ============================================================================

GlobalAttribution global_attribution(EmotionLabel emotion,
                                     const ScoreFunction& f,
                                     const Dataset& dataset,
                                     const std::vector<std::size_t>& train_idx,
                                     const BaselineSet& baselines,
                                     const IGConfig& config,
                                     const GlobalAttributionOptions& options) {
  if (train_idx.empty()) {
    throw ArgumentError("global_attribution: empty training set");
  }
  std::vector<std::size_t> scope;
  for (std::size_t i : train_idx) {
    if (i >= dataset.samples.size()) {
      throw ArgumentError("global_attribution: sample index " +
                          std::to_string(i) + " out of range");
    }
    if (!options.target_samples_only ||
        dataset.samples[i].label == emotion) {
      scope.push_back(i);
    }
  }
  if (scope.empty()) {
    throw ArgumentError(
        "global_attribution: no samples to attribute (target-only mode and no "
        "sample carries " + to_string(emotion) + ")");
  }

  std::vector<std::size_t> baseline_idx;
  for (EmotionLabel e : kAllEmotions) {
    if (e == emotion) continue;
    if (baselines.has(e)) {
      baseline_idx.push_back(baselines.at(e));
    } else if (options.require_all_baselines) {
      throw CoverageError("missing baseline for complementary emotion " +
                          to_string(e));
    }
  }
  if (baseline_idx.empty()) {
    throw CoverageError("global_attribution: no complementary baselines");
  }

  const std::size_t L = dataset.num_landmarks;
  const double n_samples = static_cast<double>(scope.size());
  const double n_baselines = static_cast<double>(baseline_idx.size());
  std::vector<double> nested(L, 0.0);
  std::vector<double> flat(L, 0.0);

  GlobalAttribution out;
  for (std::size_t b : baseline_idx) {
    const Tensor base = sample_input(dataset.samples[b]);
    out.baseline_ids.push_back(dataset.samples[b].id);
    std::vector<double> per_baseline(L, 0.0);
    for (std::size_t s : scope) {
      const AttributionMask mask = attribution_mask(
          integrated_gradients(f, sample_input(dataset.samples[s]), base, config));
      for (std::size_t n = 0; n < L; ++n) {
        per_baseline[n] += mask.scores[n];
        flat[n] += mask.scores[n];
      }
    }
    for (std::size_t n = 0; n < L; ++n) {
      nested[n] += per_baseline[n] / n_samples;
    }
  }
  for (std::size_t n = 0; n < L; ++n) {
    nested[n] /= n_baselines;
    flat[n] /= n_baselines * n_samples;
    // With one shared sample set per baseline the nested mean must equal the
    // flat mean; disagreement means the aggregation is broken.
    if (std::abs(nested[n] - flat[n]) >
        1e-12 * std::max(1.0, std::abs(nested[n]))) {
      throw NumericalError(
          "global_attribution: samples-then-baselines mean disagrees with the "
          "flat mean at landmark " + std::to_string(n));
    }
  }

  out.emotion = emotion;
  out.mask.scores = std::move(nested);
  out.sample_count = scope.size();
  out.steps = config.steps;
  return out;
}

GlobalAttribution global_attribution(EmotionLabel emotion,
                                     const EmotionModel& model,
                                     const Dataset& dataset,
                                     const std::vector<std::size_t>& train_idx,
                                     const BaselineSet& baselines,
                                     const IGConfig& config,
                                     const GlobalAttributionOptions& options) {
  return global_attribution(emotion, ModelScore(model), dataset, train_idx,
                            baselines, config, options);
}

// ============================================================================
// Ranking and subsetting
// ============================================================================

LandmarkRanking rank_landmarks(const GlobalAttribution& g) {
  LandmarkRanking ranking;
  ranking.source = g;
  ranking.order.resize(g.mask.scores.size());
  for (std::size_t i = 0; i < ranking.order.size(); ++i) ranking.order[i] = i;
  std::sort(ranking.order.begin(), ranking.order.end(),
            [&g](std::size_t a, std::size_t b) {
              if (g.mask.scores[a] != g.mask.scores[b]) {
                return g.mask.scores[a] > g.mask.scores[b];
              }
              return a < b;
            });
  return ranking;
}

Dataset subset_dataset(const Dataset& dataset, const LandmarkRanking& ranking,
                       std::size_t k) {
  const std::size_t L = dataset.num_landmarks;
  if (k < 1 || k > L) {
    throw ArgumentError("subset size " + std::to_string(k) +
                        " out of range [1, " + std::to_string(L) + "]");
  }
  if (ranking.order.size() != L) {
    throw ArgumentError("ranking covers " + std::to_string(ranking.order.size()) +
                        " landmarks, dataset has " + std::to_string(L));
  }
  std::vector<bool> seen(L, false);
  for (std::size_t n : ranking.order) {
    if (n >= L || seen[n]) {
      throw ArgumentError("ranking is not a permutation of 0.." +
                          std::to_string(L - 1));
    }
    seen[n] = true;
  }

  const std::vector<std::size_t>& source_map =
      dataset.landmark_map.empty() ? identity_landmark_map(L)
                                   : dataset.landmark_map;
  Dataset out;
  out.num_frames = dataset.num_frames;
  out.num_landmarks = k;
  out.crop_size = dataset.crop_size;
  out.landmark_map.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    out.landmark_map[j] = source_map[ranking.order[j]];
  }
  const std::size_t P = dataset.num_frames;
  out.samples.reserve(dataset.samples.size());
  for (const VideoSample& s : dataset.samples) {
    VideoSample sub;
    sub.id = s.id;
    sub.label = s.label;
    sub.augmented = s.augmented;
    sub.frames = Tensor({P, std::size_t{2}, k});
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t j = 0; j < k; ++j) {
          sub.frames[(p * 2 + c) * k + j] =
              s.frames[(p * 2 + c) * L + ranking.order[j]];
        }
      }
    }
    out.samples.push_back(std::move(sub));
  }
  return out;
}

// ============================================================================
// Tuned reference hyperparameters for the standard ladder
// ============================================================================

namespace {

struct TunedRow {
  std::size_t k;
  EmotionLabel emotion;
  std::size_t f, q, r;
};

const TunedRow kTunedTable[] = {
    {234, EmotionLabel::Anger, 25, 31, 54},
    {234, EmotionLabel::Disgust, 35, 50, 63},
    {234, EmotionLabel::Fear, 39, 51, 34},
    {234, EmotionLabel::Happiness, 50, 58, 63},
    {234, EmotionLabel::Sadness, 24, 68, 54},
    {234, EmotionLabel::Surprise, 30, 58, 63},
    {128, EmotionLabel::Anger, 25, 31, 54},
    {128, EmotionLabel::Disgust, 39, 30, 63},
    {128, EmotionLabel::Fear, 39, 51, 34},
    {128, EmotionLabel::Happiness, 39, 68, 72},
    {128, EmotionLabel::Sadness, 39, 58, 74},
    {128, EmotionLabel::Surprise, 40, 68, 73},
    {64, EmotionLabel::Anger, 25, 31, 54},
    {64, EmotionLabel::Disgust, 39, 30, 33},
    {64, EmotionLabel::Fear, 39, 51, 34},
    {64, EmotionLabel::Happiness, 16, 58, 52},
    {64, EmotionLabel::Sadness, 39, 68, 64},
    {64, EmotionLabel::Surprise, 40, 58, 63},
    {32, EmotionLabel::Anger, 25, 31, 54},
    {32, EmotionLabel::Disgust, 39, 50, 63},
    {32, EmotionLabel::Fear, 39, 61, 64},
    {32, EmotionLabel::Happiness, 16, 58, 52},
    {32, EmotionLabel::Sadness, 39, 58, 74},
    {32, EmotionLabel::Surprise, 30, 58, 63},
    {16, EmotionLabel::Anger, 25, 31, 54},
    {16, EmotionLabel::Disgust, 39, 50, 53},
    {16, EmotionLabel::Fear, 24, 68, 64},
    {16, EmotionLabel::Happiness, 16, 58, 52},
    {16, EmotionLabel::Sadness, 39, 58, 64},
    {16, EmotionLabel::Surprise, 40, 58, 63},
};

}  // namespace

std::optional<TunedHyperparameters> tuned_hyperparameters(EmotionLabel emotion,
                                                          std::size_t k) {
  for (const TunedRow& row : kTunedTable) {
    if (row.k == k && row.emotion == emotion) {
      return TunedHyperparameters{row.f, row.q, row.r};
    }
  }
  return std::nullopt;
}

GridSpec default_grid_for_subset(std::size_t k) {
  std::set<std::size_t> fs, qs, rs;
  for (const TunedRow& row : kTunedTable) {
    if (row.k != k) continue;
    fs.insert(row.f);
    qs.insert(row.q);
    rs.insert(row.r);
  }
  if (fs.empty()) return GridSpec::default_grid();
  GridSpec grid;
  grid.conv_filters.assign(fs.begin(), fs.end());
  grid.lstm_units.assign(qs.begin(), qs.end());
  grid.fc1_neurons.assign(rs.begin(), rs.end());
  return grid;
}

// ============================================================================
// Retraining pipeline
// ============================================================================

SelectionReport selection_pipeline(EmotionLabel emotion, const Dataset& dataset,
                                   const EmotionModel& full_model,
                                   const PipelineOptions& options,
                                   const TrainConfig& train_config) {
  train_config.validate();
  const std::size_t L = dataset.num_landmarks;
  if (full_model.config.num_landmarks != L ||
      full_model.config.num_frames != dataset.num_frames) {
    throw ShapeError("full model expects (P,L) = (" +
                     std::to_string(full_model.config.num_frames) + ", " +
                     std::to_string(full_model.config.num_landmarks) +
                     "), dataset has (" + std::to_string(dataset.num_frames) +
                     ", " + std::to_string(L) + ")");
  }
  for (std::size_t i = 0; i + 1 < options.ladder.size(); ++i) {
    if (options.ladder[i] <= options.ladder[i + 1]) {
      throw ArgumentError("ladder sizes must be strictly decreasing");
    }
  }
  for (std::size_t k : options.ladder) {
    if (k < 1 || k > L) {
      throw ArgumentError("ladder size " + std::to_string(k) +
                          " out of range [1, " + std::to_string(L) + "]");
    }
  }

  // The attribution scope is the non-test portion of the seed's partition.
  SplitIndices split =
      split_dataset(dataset, emotion, train_config.seed,
                    train_config.val_fraction, train_config.test_fraction);
  std::vector<std::size_t> attr_scope = split.train;
  attr_scope.insert(attr_scope.end(), split.val.begin(), split.val.end());
  std::sort(attr_scope.begin(), attr_scope.end());

  // Without per-emotion classifiers at hand, baseline choice falls back to
  // the tie rule (earliest training sample of each complementary emotion);
  // overrides take precedence.
  ConstantScore flat_scorer(0.0);
  EmotionScorers scorers;
  for (EmotionLabel e : kAllEmotions) {
    if (e == emotion) continue;
    for (std::size_t i : attr_scope) {
      if (dataset.samples[i].label == e) {
        scorers[e] = &flat_scorer;
        break;
      }
    }
  }
  BaselineOptions bopt;
  bopt.candidates = attr_scope;
  bopt.overrides = options.baseline_overrides;
  const BaselineSet baselines = select_typical_baselines(dataset, scorers, bopt);

  SelectionReport report;
  report.emotion = emotion;
  const GlobalAttribution ga =
      global_attribution(emotion, full_model, dataset, attr_scope, baselines,
                         options.ig, options.attribution);
  report.ranking = rank_landmarks(ga);

  auto eval_row = [&](std::size_t k, const Dataset& data,
                      const ModelConfig& config) {
    ReportRow row;
    row.k = k;
    row.config = config;
    try {
      row.result = multi_seed_eval(config, emotion, data, train_config,
                                   options.eval_seeds);
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    report.rows.push_back(std::move(row));
  };

  eval_row(L, dataset, full_model.config);

  for (std::size_t k : options.ladder) {
    if (k == L) {
      // Already covered by the full-size row.
      continue;
    }
    ReportRow row;
    row.k = k;
    try {
      const Dataset sub = subset_dataset(dataset, report.ranking, k);
      ModelConfig base = full_model.config;
      base.num_landmarks = k;
      base.kernel_cols = std::min(base.kernel_cols, k);
      if (options.run_grid_search) {
        const GridSpec grid = options.grids.count(k) > 0
                                  ? options.grids.at(k)
                                  : default_grid_for_subset(k);
        const GridResult searched = grid_search(grid, sub, emotion, base,
                                                train_config,
                                                options.grid_seeds);
        row.config = searched.best;
      } else {
        row.config = base;
        if (const auto tuned = tuned_hyperparameters(emotion, k)) {
          row.config.conv_filters = tuned->conv_filters;
          row.config.lstm_units = tuned->lstm_units;
          row.config.fc1_neurons = tuned->fc1_neurons;
        }
      }
      row.result = multi_seed_eval(row.config, emotion, sub, train_config,
                                   options.eval_seeds);
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace emoattr
