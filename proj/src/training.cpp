#include "emoattr/training.hpp"

#include <algorithm>
#include <cmath>

#include "emoattr/error.hpp"
#include "emoattr/ops.hpp"
#include "emoattr/rng.hpp"

namespace emoattr {

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (batch_size < 2) {
    throw ConfigError("batch_size must be at least 2, got " +
                      std::to_string(batch_size));
  }
  if (val_fraction <= 0.0 || val_fraction >= 1.0) {
    throw ConfigError("val_fraction must lie in (0, 1)");
  }
  if (test_fraction < 0.0 || test_fraction >= 1.0) {
    throw ConfigError("test_fraction must lie in [0, 1)");
  }
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 ||
      adam_beta2 >= 1.0) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (adam_eps <= 0.0) throw ConfigError("adam_eps must be positive");
}

// ============================================================================
// Splitting
// ============================================================================

SplitIndices split_dataset(const Dataset& dataset, EmotionLabel target,
                           std::uint64_t seed, double val_fraction,
                           double test_fraction) {
  if (val_fraction <= 0.0 || val_fraction >= 1.0) {
    throw ConfigError("val_fraction must lie in (0, 1)");
  }
  if (test_fraction < 0.0 || test_fraction >= 1.0) {
    throw ConfigError("test_fraction must lie in [0, 1)");
  }

  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    (dataset.samples[i].label == target ? positives : negatives).push_back(i);
  }

  Rng rng(mix_seed(seed, 0x5147));
  SplitIndices out;
  for (const auto* klass : {&positives, &negatives}) {
    std::vector<std::size_t> idx = *klass;
    const std::size_t n = idx.size();
    const bool positive_class = klass == &positives;
    if (n < 3) {
      throw StratificationError(
          std::string(positive_class ? "positive" : "negative") +
          " class has only " + std::to_string(n) +
          " samples; need at least 3 to cover train/val/test");
    }
    rng.shuffle(idx);
    std::size_t n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(n)));
    if (test_fraction > 0.0 && n_test == 0) n_test = 1;
    std::size_t n_val = static_cast<std::size_t>(
        std::llround(val_fraction * static_cast<double>(n - n_test)));
    if (n_val == 0) n_val = 1;
    if (n_test + n_val >= n) {
      throw StratificationError(
          std::string(positive_class ? "positive" : "negative") +
          " class with " + std::to_string(n) +
          " samples leaves no training data after test/val split");
    }
    out.test.insert(out.test.end(), idx.begin(), idx.begin() + n_test);
    out.val.insert(out.val.end(), idx.begin() + n_test,
                   idx.begin() + n_test + n_val);
    out.train.insert(out.train.end(), idx.begin() + n_test + n_val, idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

// ============================================================================
// Adam
// ============================================================================

AdamState init_adam(const ParameterStore& params) {
  AdamState state;
  for (const auto& [name, entry] : params.entries()) {
    if (!entry.trainable) continue;
    state.m.emplace(name, Tensor(entry.value.shape()));
    state.v.emplace(name, Tensor(entry.value.shape()));
  }
  return state;
}

void adam_step(ParameterStore& params,
               const std::map<std::string, Tensor>& grads, AdamState& state,
               const TrainConfig& config) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.adam_beta1, t);
  const double bc2 = 1.0 - std::pow(config.adam_beta2, t);
  for (auto& [name, entry] : params.entries()) {
    if (!entry.trainable) continue;
    const auto git = grads.find(name);
    if (git == grads.end()) {
      throw ArgumentError("adam_step: missing gradient for '" + name + "'");
    }
    const Tensor& g = git->second;
    if (!(g.shape() == entry.value.shape())) {
      throw ShapeError("adam_step: gradient shape " + shape_str(g.shape()) +
                       " does not match parameter '" + name + "' shape " +
                       shape_str(entry.value.shape()));
    }
    const auto mit = state.m.find(name);
    const auto vit = state.v.find(name);
    if (mit == state.m.end() || vit == state.v.end()) {
      throw ArgumentError("adam_step: state has no moments for '" + name + "'");
    }
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * g[i];
      v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      entry.value[i] -=
          config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
  }
}

// ============================================================================
// Training loop
// ============================================================================

namespace {

std::vector<double> gather_labels(const Dataset& dataset,
                                  const std::vector<std::size_t>& indices,
                                  EmotionLabel target) {
  std::vector<double> labels;
  labels.reserve(indices.size());
  for (std::size_t i : indices) {
    labels.push_back(binary_label(dataset.samples[i], target));
  }
  return labels;
}

}  // namespace

TrainHistory train(EmotionModel& model, const Dataset& dataset,
                   const std::vector<std::size_t>& train_idx,
                   const std::vector<std::size_t>& val_idx,
                   const TrainConfig& config) {
  config.validate();
  if (dataset.num_frames != model.config.num_frames ||
      dataset.num_landmarks != model.config.num_landmarks) {
    throw ShapeError("dataset (P,L) = (" + std::to_string(dataset.num_frames) +
                     ", " + std::to_string(dataset.num_landmarks) +
                     ") does not match model (P,L) = (" +
                     std::to_string(model.config.num_frames) + ", " +
                     std::to_string(model.config.num_landmarks) + ")");
  }
  if (train_idx.empty()) throw ArgumentError("train: empty training set");
  if (val_idx.empty()) throw ArgumentError("train: empty validation set");

  TrainHistory history;
  if (config.epochs == 0) return history;

  const std::vector<double> train_labels =
      gather_labels(dataset, train_idx, model.target);
  std::vector<double> sample_weights;  // parallel to train_idx
  if (config.use_class_weights) {
    double n_pos = 0.0;
    for (double y : train_labels) n_pos += y;
    const double n_neg = static_cast<double>(train_labels.size()) - n_pos;
    if (n_pos > 0.0 && n_neg > 0.0) {
      const double total = static_cast<double>(train_labels.size());
      const double w_pos = total / (2.0 * n_pos);
      const double w_neg = total / (2.0 * n_neg);
      sample_weights.reserve(train_labels.size());
      for (double y : train_labels) {
        sample_weights.push_back(y == 1.0 ? w_pos : w_neg);
      }
    }
  }

  Rng shuffle_rng(mix_seed(config.seed, 0x0001));
  Rng dropout_rng(mix_seed(config.seed, 0x0002));
  AdamState opt = init_adam(model.params);

  ParameterStore best_params = model.params;
  BatchNormState best_bn = model.bn_state;
  double best_acc = -1.0;
  std::size_t best_epoch = 0;

  // Positions into train_idx, reshuffled every epoch.
  std::vector<std::size_t> order(train_idx.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    try {
      shuffle_rng.shuffle(order);
      double loss_sum = 0.0;
      for (std::size_t start = 0; start < order.size();
           start += config.batch_size) {
        const std::size_t stop =
            std::min(order.size(), start + config.batch_size);
        std::vector<std::size_t> chunk;
        std::vector<double> chunk_labels;
        std::vector<double> chunk_weights;
        chunk.reserve(stop - start);
        for (std::size_t i = start; i < stop; ++i) {
          chunk.push_back(train_idx[order[i]]);
          chunk_labels.push_back(train_labels[order[i]]);
          if (!sample_weights.empty()) {
            chunk_weights.push_back(sample_weights[order[i]]);
          }
        }
        Tensor batch = make_batch(dataset, chunk);
        Tape tape;
        GraphResult g = training_graph(tape, model, batch, dropout_rng);
        Var loss = bce(tape, g.probs, chunk_labels, chunk_weights);
        std::vector<Tensor> grads = tape.backward(loss);
        std::map<std::string, Tensor> param_grads;
        for (const auto& [name, node] : g.param_nodes) {
          param_grads.emplace(name,
                              std::move(grads[static_cast<std::size_t>(node)]));
        }
        adam_step(model.params, param_grads, opt, config);
        loss_sum += loss.value().item() * static_cast<double>(chunk.size());
      }
      EpochRecord record;
      record.train_loss = loss_sum / static_cast<double>(train_idx.size());
      record.val_accuracy = evaluate_accuracy(model, dataset, val_idx);
      history.epochs.push_back(record);
      if (record.val_accuracy > best_acc) {
        best_acc = record.val_accuracy;
        best_epoch = epoch;
        best_params = model.params;
        best_bn = model.bn_state;
      }
    } catch (const NumericalError& e) {
      throw TrainingError("training diverged at epoch " +
                          std::to_string(epoch) + ": " + e.what());
    }
  }

  if (config.epochs > 0) {
    model.params = best_params;
    model.bn_state = best_bn;
    history.best_epoch = best_epoch;
    history.best_val_accuracy = best_acc;
  }
  return history;
}

double evaluate_accuracy(const EmotionModel& model, const Dataset& dataset,
                         const std::vector<std::size_t>& indices,
                         double threshold) {
  if (indices.empty()) throw ArgumentError("evaluate_accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t i : indices) {
    const VideoSample& s = dataset.samples[i];
    const double p = forward(model, sample_input(s));
    const double predicted = p >= threshold ? 1.0 : 0.0;
    if (predicted == binary_label(s, model.target)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

// ============================================================================
// Multi-seed protocol
// ============================================================================

std::vector<double> RunResult::accuracies() const {
  std::vector<double> out;
  for (const SeedOutcome& run : runs) {
    if (!run.failed) out.push_back(run.test_accuracy);
  }
  return out;
}

double RunResult::mean() const {
  const std::vector<double> acc = accuracies();
  if (acc.empty()) throw ArgumentError("RunResult: no successful runs");
  double total = 0.0;
  for (double a : acc) total += a;
  return total / static_cast<double>(acc.size());
}

double RunResult::stddev() const {
  const std::vector<double> acc = accuracies();
  if (acc.empty()) throw ArgumentError("RunResult: no successful runs");
  const double mu = mean();
  double ss = 0.0;
  for (double a : acc) ss += (a - mu) * (a - mu);
  return std::sqrt(ss / static_cast<double>(acc.size()));
}

RunResult multi_seed_eval(const ModelConfig& model_config, EmotionLabel target,
                          const Dataset& dataset, const TrainConfig& config,
                          std::size_t n_seeds) {
  if (n_seeds == 0) throw ArgumentError("multi_seed_eval: n_seeds must be >= 1");
  RunResult result;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    const std::uint64_t run_seed = config.seed + s;
    SeedOutcome outcome;
    outcome.seed = run_seed;
    try {
      SplitIndices split = split_dataset(dataset, target, run_seed,
                                         config.val_fraction,
                                         config.test_fraction);
      EmotionModel model =
          build_model(model_config, target, mix_seed(run_seed, 0x33));
      TrainConfig run_config = config;
      run_config.seed = run_seed;
      TrainHistory history =
          train(model, dataset, split.train, split.val, run_config);
      outcome.best_epoch = history.best_epoch;
      outcome.test_accuracy = evaluate_accuracy(model, dataset, split.test);
    } catch (const TrainingError& e) {
      outcome.failed = true;
      outcome.error = e.what();
    } catch (const NumericalError& e) {
      outcome.failed = true;
      outcome.error = e.what();
    }
    result.runs.push_back(std::move(outcome));
  }
  return result;
}

// ============================================================================
// Grid search
// ============================================================================

void GridSpec::validate() const {
  if (conv_filters.empty() || lstm_units.empty() || fc1_neurons.empty()) {
    throw ConfigError("grid candidate lists must be non-empty");
  }
}

GridSpec GridSpec::default_grid() {
  GridSpec grid;
  grid.conv_filters = {16, 25, 33, 42, 50};
  grid.lstm_units = {30, 40, 49, 59, 68};
  grid.fc1_neurons = {33, 43, 54, 64, 74};
  return grid;
}

GridResult grid_search(const GridSpec& grid, const Dataset& dataset,
                       EmotionLabel target, const ModelConfig& base_config,
                       const TrainConfig& train_config, std::size_t seeds) {
  grid.validate();
  if (seeds == 0) throw ArgumentError("grid_search: seeds must be >= 1");

  GridResult result;
  std::size_t order = 0;
  for (std::size_t f : grid.conv_filters) {
    for (std::size_t q : grid.lstm_units) {
      for (std::size_t r : grid.fc1_neurons) {
        GridCell cell;
        cell.config = base_config;
        cell.config.conv_filters = f;
        cell.config.lstm_units = q;
        cell.config.fc1_neurons = r;
        cell.config.validate();
        cell.order = order++;
        {
          EmotionModel probe = build_model(cell.config, target, 0);
          cell.trainable_params = parameter_count(probe).first;
        }
        double acc_sum = 0.0;
        for (std::size_t s = 0; s < seeds; ++s) {
          const std::uint64_t run_seed = train_config.seed + s;
          try {
            SplitIndices split = split_dataset(dataset, target, run_seed,
                                               train_config.val_fraction,
                                               train_config.test_fraction);
            EmotionModel model =
                build_model(cell.config, target, mix_seed(run_seed, 0x33));
            TrainConfig run_config = train_config;
            run_config.seed = run_seed;
            TrainHistory history =
                train(model, dataset, split.train, split.val, run_config);
            cell.per_seed_val_accuracy.push_back(history.best_val_accuracy);
            acc_sum += history.best_val_accuracy;
          } catch (const TrainingError&) {
            cell.failures += 1;
          } catch (const NumericalError&) {
            cell.failures += 1;
          }
        }
        cell.mean_val_accuracy =
            cell.per_seed_val_accuracy.empty()
                ? -1.0
                : acc_sum / static_cast<double>(cell.per_seed_val_accuracy.size());
        result.leaderboard.push_back(std::move(cell));
      }
    }
  }

  std::stable_sort(result.leaderboard.begin(), result.leaderboard.end(),
                   [](const GridCell& a, const GridCell& b) {
                     if (a.mean_val_accuracy != b.mean_val_accuracy) {
                       return a.mean_val_accuracy > b.mean_val_accuracy;
                     }
                     if (a.trainable_params != b.trainable_params) {
                       return a.trainable_params < b.trainable_params;
                     }
                     return a.order < b.order;
                   });
  if (result.leaderboard.front().mean_val_accuracy < 0.0) {
    throw TrainingError("grid_search: every cell failed on every seed");
  }
  result.best = result.leaderboard.front().config;
  return result;
}

}  // namespace emoattr
