#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "emoattr/dataset.hpp"
#include "emoattr/error.hpp"
#include "emoattr/model.hpp"
#include "emoattr/rng.hpp"
#include "emoattr/training.hpp"
#include "helpers.hpp"

using namespace emoattr;
using emoattr::testing::planted_spec;
using emoattr::testing::tiny_config;

namespace {

// Noiseless, strongly planted, trivially separable data.
Dataset easy_dataset(std::size_t samples_per_class = 20, std::uint64_t seed = 1) {
  SyntheticSpec spec = planted_spec(6, 2, 4, 0.0, samples_per_class, seed);
  return generate_synthetic(spec);
}

TrainConfig fast_config(std::uint64_t seed = 0) {
  TrainConfig tc;
  tc.learning_rate = 0.02;
  tc.batch_size = 8;
  tc.epochs = 25;
  tc.seed = seed;
  tc.val_fraction = 0.2;
  tc.test_fraction = 0.2;
  return tc;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config validation
// ---------------------------------------------------------------------------

TEST_CASE("train config validation") {
  TrainConfig tc;
  CHECK_NOTHROW(tc.validate());
  tc.batch_size = 1;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.learning_rate = 0.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.val_fraction = 1.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.test_fraction = 1.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}

// ---------------------------------------------------------------------------
// Stratified splitting
// ---------------------------------------------------------------------------

TEST_CASE("split is disjoint, exhaustive, sorted, and deterministic") {
  Dataset ds = easy_dataset(20);
  SplitIndices a = split_dataset(ds, EmotionLabel::Surprise, 5, 0.10, 0.15);
  SplitIndices b = split_dataset(ds, EmotionLabel::Surprise, 5, 0.10, 0.15);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);

  std::vector<std::size_t> all;
  for (const auto* part : {&a.train, &a.val, &a.test}) {
    CHECK(std::is_sorted(part->begin(), part->end()));
    all.insert(all.end(), part->begin(), part->end());
  }
  std::sort(all.begin(), all.end());
  REQUIRE(all.size() == ds.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);

  SplitIndices c = split_dataset(ds, EmotionLabel::Surprise, 6, 0.10, 0.15);
  CHECK_FALSE(a.train == c.train);  // seed moves the partition
}

TEST_CASE("split is stratified with per-class llround arithmetic") {
  Dataset ds = easy_dataset(20);  // 20 positive, 20 negative
  SplitIndices s = split_dataset(ds, EmotionLabel::Surprise, 3, 0.10, 0.15);
  // Per class: test = llround(0.15*20) = 3; val = llround(0.10*17) = 2.
  CHECK(s.test.size() == 6);
  CHECK(s.val.size() == 4);
  CHECK(s.train.size() == 30);
  auto positives_in = [&](const std::vector<std::size_t>& idx) {
    std::size_t count = 0;
    for (std::size_t i : idx) {
      count += ds.samples[i].label == EmotionLabel::Surprise;
    }
    return count;
  };
  CHECK(positives_in(s.test) == 3);
  CHECK(positives_in(s.val) == 2);
  CHECK(positives_in(s.train) == 15);
}

TEST_CASE("a 574-sample imbalanced set splits 438/49/87") {
  // 96 positives + 478 negatives; the 87-sample test bench needs
  // test_fraction = 87/574.
  Dataset ds;
  ds.num_frames = 2;
  ds.num_landmarks = 2;
  ds.landmark_map = identity_landmark_map(2);
  const EmotionLabel negatives[] = {EmotionLabel::Anger, EmotionLabel::Disgust,
                                    EmotionLabel::Fear, EmotionLabel::Sadness,
                                    EmotionLabel::Surprise};
  for (std::size_t i = 0; i < 574; ++i) {
    VideoSample s;
    s.id = "s" + std::to_string(i);
    s.label = i < 96 ? EmotionLabel::Happiness : negatives[i % 5];
    s.frames = Tensor::full({2, 2, 2}, 0.5);
    ds.samples.push_back(std::move(s));
  }
  SplitIndices s =
      split_dataset(ds, EmotionLabel::Happiness, 0, 0.10, 87.0 / 574.0);
  // Hand-computed: positives 15 test, 8 val, 73 train;
  // negatives 72 test, 41 val, 365 train.
  CHECK(s.test.size() == 87);
  CHECK(s.val.size() == 49);
  CHECK(s.train.size() == 438);
}

TEST_CASE("split needs three samples per class and room for training") {
  Dataset ds = easy_dataset(20);
  // Shrink one class below 3.
  Dataset skewed = ds;
  skewed.samples.erase(
      std::remove_if(skewed.samples.begin(), skewed.samples.end(),
                     [](const VideoSample& s) {
                       return s.label == EmotionLabel::Surprise &&
                              s.id != "synth-pos-0" && s.id != "synth-pos-1";
                     }),
      skewed.samples.end());
  CHECK_THROWS_AS(split_dataset(skewed, EmotionLabel::Surprise, 0, 0.10, 0.15),
                  StratificationError);

  // Fractions that consume a 3-sample class entirely.
  Dataset tiny;
  tiny.num_frames = 2;
  tiny.num_landmarks = 2;
  tiny.landmark_map = identity_landmark_map(2);
  for (std::size_t i = 0; i < 6; ++i) {
    VideoSample s;
    s.id = "t" + std::to_string(i);
    s.label = i < 3 ? EmotionLabel::Anger : EmotionLabel::Fear;
    s.frames = Tensor::full({2, 2, 2}, 0.5);
    tiny.samples.push_back(std::move(s));
  }
  CHECK_THROWS_AS(split_dataset(tiny, EmotionLabel::Anger, 0, 0.4, 0.5),
                  StratificationError);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

TEST_CASE("first adam step has the closed form -lr*g/(|g|+eps)") {
  ParameterStore params;
  params.add("w", Tensor({3}, {1.0, -2.0, 0.5}), true);
  AdamState state = init_adam(params);
  TrainConfig tc;
  tc.learning_rate = 0.05;
  std::map<std::string, Tensor> grads;
  grads.emplace("w", Tensor({3}, {0.3, -0.7, 0.0}));
  adam_step(params, grads, state, tc);

  const double expect[3] = {
      1.0 - 0.05 * 0.3 / (0.3 + tc.adam_eps),
      -2.0 - 0.05 * (-0.7) / (0.7 + tc.adam_eps),
      0.5,  // zero gradient moves nothing
  };
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(params.get("w")[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
  CHECK(state.step == 1);
}

TEST_CASE("adam matches an independent reference over several steps") {
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ParameterStore params;
  params.add("w", Tensor({2}, {0.4, -0.3}), true);
  AdamState state = init_adam(params);
  TrainConfig tc;
  tc.learning_rate = lr;

  // Plain-array re-implementation, written independently of the library.
  double theta[2] = {0.4, -0.3};
  double m[2] = {0, 0}, v[2] = {0, 0};
  const std::vector<std::vector<double>> grad_seq = {
      {0.1, -0.2}, {-0.05, 0.15}, {0.2, 0.2}, {0.0, -0.1}};
  for (std::size_t t = 0; t < grad_seq.size(); ++t) {
    std::map<std::string, Tensor> grads;
    grads.emplace("w", Tensor({2}, std::vector<double>(grad_seq[t])));
    adam_step(params, grads, state, tc);
    for (int i = 0; i < 2; ++i) {
      const double g = grad_seq[t][i];
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double mhat = m[i] / (1 - std::pow(b1, double(t + 1)));
      const double vhat = v[i] / (1 - std::pow(b2, double(t + 1)));
      theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
  CHECK(params.get("w")[0] == doctest::Approx(theta[0]).epsilon(1e-13));
  CHECK(params.get("w")[1] == doctest::Approx(theta[1]).epsilon(1e-13));
}

TEST_CASE("adam skips frozen parameters and validates gradients") {
  ParameterStore params;
  params.add("frozen", Tensor({2}, {1.0, 2.0}), false);
  params.add("live", Tensor({2}, {1.0, 2.0}), true);
  AdamState state = init_adam(params);
  TrainConfig tc;

  std::map<std::string, Tensor> grads;
  grads.emplace("live", Tensor({2}, {0.5, 0.5}));
  // No gradient needed for the frozen entry.
  adam_step(params, grads, state, tc);
  CHECK(params.get("frozen") == Tensor({2}, {1.0, 2.0}));
  CHECK_FALSE(params.get("live") == Tensor({2}, {1.0, 2.0}));

  std::map<std::string, Tensor> missing;
  CHECK_THROWS_AS(adam_step(params, missing, state, tc), ArgumentError);

  std::map<std::string, Tensor> wrong_shape;
  wrong_shape.emplace("live", Tensor({3}));
  CHECK_THROWS_AS(adam_step(params, wrong_shape, state, tc), ShapeError);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TEST_CASE("training fits trivially separable data and restores the best epoch") {
  Dataset ds = easy_dataset();
  SplitIndices split = split_dataset(ds, EmotionLabel::Surprise, 0, 0.2, 0.2);
  ModelConfig mc = tiny_config(6, 4);
  mc.dropout_rate = 0.0;
  EmotionModel model = build_model(mc, EmotionLabel::Surprise, 3);
  TrainConfig tc = fast_config();

  TrainHistory history = train(model, ds, split.train, split.val, tc);
  REQUIRE(history.epochs.size() == tc.epochs);
  CHECK(history.epochs.front().train_loss > history.epochs.back().train_loss);
  CHECK(history.best_val_accuracy >= 0.9);

  // best_epoch points at the first maximum of the recorded curve.
  double running_max = -1.0;
  std::size_t first_max = 0;
  for (std::size_t e = 0; e < history.epochs.size(); ++e) {
    if (history.epochs[e].val_accuracy > running_max) {
      running_max = history.epochs[e].val_accuracy;
      first_max = e;
    }
  }
  CHECK(history.best_epoch == first_max);
  CHECK(history.best_val_accuracy == running_max);

  // The returned parameters really are the best-epoch snapshot.
  CHECK(evaluate_accuracy(model, ds, split.val) == history.best_val_accuracy);
}

TEST_CASE("training is deterministic given the seed") {
  Dataset ds = easy_dataset();
  SplitIndices split = split_dataset(ds, EmotionLabel::Surprise, 1, 0.2, 0.2);
  ModelConfig mc = tiny_config(6, 4);
  TrainConfig tc = fast_config(4);
  tc.epochs = 5;

  EmotionModel m1 = build_model(mc, EmotionLabel::Surprise, 8);
  EmotionModel m2 = build_model(mc, EmotionLabel::Surprise, 8);
  TrainHistory h1 = train(m1, ds, split.train, split.val, tc);
  TrainHistory h2 = train(m2, ds, split.train, split.val, tc);

  REQUIRE(h1.epochs.size() == h2.epochs.size());
  for (std::size_t e = 0; e < h1.epochs.size(); ++e) {
    CHECK(h1.epochs[e].train_loss == h2.epochs[e].train_loss);
    CHECK(h1.epochs[e].val_accuracy == h2.epochs[e].val_accuracy);
  }
  for (const auto& name : m1.params.names()) {
    CHECK(m1.params.get(name) == m2.params.get(name));
  }
}

TEST_CASE("zero epochs leaves the model and history empty-handed") {
  Dataset ds = easy_dataset();
  SplitIndices split = split_dataset(ds, EmotionLabel::Surprise, 0, 0.2, 0.2);
  ModelConfig mc = tiny_config(6, 4);
  EmotionModel model = build_model(mc, EmotionLabel::Surprise, 3);
  const Tensor before = model.params.get("lstm.wx");
  TrainConfig tc = fast_config();
  tc.epochs = 0;
  TrainHistory history = train(model, ds, split.train, split.val, tc);
  CHECK(history.epochs.empty());
  CHECK(model.params.get("lstm.wx") == before);
}

TEST_CASE("balanced class weights reproduce the unweighted run exactly") {
  // With equal class counts the weights total/(2*n_class) collapse to 1.
  Dataset ds = easy_dataset();
  SplitIndices split = split_dataset(ds, EmotionLabel::Surprise, 2, 0.2, 0.2);
  ModelConfig mc = tiny_config(6, 4);
  TrainConfig tc = fast_config(9);
  tc.epochs = 4;

  EmotionModel plain = build_model(mc, EmotionLabel::Surprise, 5);
  TrainHistory h_plain = train(plain, ds, split.train, split.val, tc);

  tc.use_class_weights = true;
  EmotionModel weighted = build_model(mc, EmotionLabel::Surprise, 5);
  TrainHistory h_weighted = train(weighted, ds, split.train, split.val, tc);

  // The split above is stratified over the whole set but not necessarily
  // balanced inside train_idx; recompute to decide whether bitwise equality
  // is actually promised here.
  std::size_t pos = 0;
  for (std::size_t i : split.train) {
    pos += ds.samples[i].label == EmotionLabel::Surprise;
  }
  if (2 * pos == split.train.size()) {
    for (std::size_t e = 0; e < h_plain.epochs.size(); ++e) {
      CHECK(h_plain.epochs[e].train_loss == h_weighted.epochs[e].train_loss);
    }
    for (const auto& name : plain.params.names()) {
      CHECK(plain.params.get(name) == weighted.params.get(name));
    }
  } else {
    // Imbalanced: the weighted run must differ.
    CHECK_FALSE(plain.params.get("lstm.wx") == weighted.params.get("lstm.wx"));
  }
}

TEST_CASE("an exploding learning rate raises TrainingError") {
  Dataset ds = easy_dataset();
  SplitIndices split = split_dataset(ds, EmotionLabel::Surprise, 0, 0.2, 0.2);
  ModelConfig mc = tiny_config(6, 4);
  EmotionModel model = build_model(mc, EmotionLabel::Surprise, 3);
  TrainConfig tc = fast_config();
  tc.learning_rate = 1e200;
  tc.epochs = 3;
  CHECK_THROWS_WITH_AS(train(model, ds, split.train, split.val, tc),
                       doctest::Contains("diverged"), TrainingError);
}

TEST_CASE("train validates its index sets") {
  Dataset ds = easy_dataset();
  SplitIndices split = split_dataset(ds, EmotionLabel::Surprise, 0, 0.2, 0.2);
  ModelConfig mc = tiny_config(6, 4);
  EmotionModel model = build_model(mc, EmotionLabel::Surprise, 3);
  TrainConfig tc = fast_config();
  CHECK_THROWS_AS(train(model, ds, {}, split.val, tc), ArgumentError);
  CHECK_THROWS_AS(train(model, ds, split.train, {}, tc), ArgumentError);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

TEST_CASE("evaluate_accuracy matches a hand-rolled loop") {
  Dataset ds = easy_dataset();
  ModelConfig mc = tiny_config(6, 4);
  EmotionModel model = build_model(mc, EmotionLabel::Surprise, 3);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) idx.push_back(i);

  std::size_t hits = 0;
  for (std::size_t i : idx) {
    const double p = forward(model, sample_input(ds.samples[i]));
    const bool predicted = p >= 0.5;
    const bool actual = ds.samples[i].label == EmotionLabel::Surprise;
    hits += predicted == actual;
  }
  CHECK(evaluate_accuracy(model, ds, idx) ==
        doctest::Approx(double(hits) / double(idx.size())).epsilon(1e-15));

  // Threshold 0 predicts everything positive.
  CHECK(evaluate_accuracy(model, ds, idx, 0.0) ==
        doctest::Approx(0.5).epsilon(1e-15));

  CHECK_THROWS_AS(evaluate_accuracy(model, ds, {}), ArgumentError);
}

// ---------------------------------------------------------------------------
// Multi-seed protocol
// ---------------------------------------------------------------------------

TEST_CASE("multi_seed_eval varies the seed and reports every run") {
  Dataset ds = easy_dataset();
  ModelConfig mc = tiny_config(6, 4);
  mc.dropout_rate = 0.0;
  TrainConfig tc = fast_config(100);
  tc.epochs = 6;

  RunResult result = multi_seed_eval(mc, EmotionLabel::Surprise, ds, tc, 3);
  REQUIRE(result.runs.size() == 3);
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(result.runs[s].seed == 100 + s);
    CHECK_FALSE(result.runs[s].failed);
  }
  CHECK(result.accuracies().size() == 3);

  RunResult again = multi_seed_eval(mc, EmotionLabel::Surprise, ds, tc, 3);
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(result.runs[s].test_accuracy == again.runs[s].test_accuracy);
  }
  CHECK_THROWS_AS(multi_seed_eval(mc, EmotionLabel::Surprise, ds, tc, 0),
                  ArgumentError);
}

TEST_CASE("RunResult summarizes successes only") {
  RunResult r;
  r.runs.push_back({0, false, "", 0.5, 0});
  r.runs.push_back({1, true, "boom", 0.0, 0});
  r.runs.push_back({2, false, "", 0.9, 0});
  CHECK(r.accuracies() == std::vector<double>({0.5, 0.9}));
  CHECK(r.mean() == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(r.stddev() == doctest::Approx(0.2).epsilon(1e-12));

  RunResult empty;
  empty.runs.push_back({0, true, "boom", 0.0, 0});
  CHECK_THROWS_AS(empty.mean(), ArgumentError);
  CHECK_THROWS_AS(empty.stddev(), ArgumentError);
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

TEST_CASE("grid search enumerates, scores, and orders every cell") {
  Dataset ds = easy_dataset(12);
  ModelConfig base = tiny_config(6, 4);
  base.dropout_rate = 0.0;
  TrainConfig tc = fast_config(7);
  tc.epochs = 4;

  GridSpec grid;
  grid.conv_filters = {1, 2};
  grid.lstm_units = {2};
  grid.fc1_neurons = {3, 4};
  GridResult result = grid_search(grid, ds, EmotionLabel::Surprise, base, tc, 2);

  REQUIRE(result.leaderboard.size() == 4);
  std::set<std::size_t> orders;
  for (const GridCell& cell : result.leaderboard) {
    CHECK(cell.per_seed_val_accuracy.size() == 2);
    CHECK(cell.failures == 0);
    orders.insert(cell.order);
  }
  CHECK(orders.size() == 4);  // every combination appears exactly once

  // Sorted best-first: mean desc, then fewer trainable params, then order.
  for (std::size_t i = 0; i + 1 < result.leaderboard.size(); ++i) {
    const GridCell& a = result.leaderboard[i];
    const GridCell& b = result.leaderboard[i + 1];
    const bool ordered =
        a.mean_val_accuracy > b.mean_val_accuracy ||
        (a.mean_val_accuracy == b.mean_val_accuracy &&
         (a.trainable_params < b.trainable_params ||
          (a.trainable_params == b.trainable_params && a.order < b.order)));
    CHECK(ordered);
  }
  CHECK(result.best.conv_filters == result.leaderboard[0].config.conv_filters);
  CHECK(result.best.lstm_units == result.leaderboard[0].config.lstm_units);
  CHECK(result.best.fc1_neurons == result.leaderboard[0].config.fc1_neurons);

  GridResult again = grid_search(grid, ds, EmotionLabel::Surprise, base, tc, 2);
  CHECK(again.best.conv_filters == result.best.conv_filters);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(again.leaderboard[i].mean_val_accuracy ==
          result.leaderboard[i].mean_val_accuracy);
  }
}

TEST_CASE("grid spec defaults and validation") {
  GridSpec grid = GridSpec::default_grid();
  CHECK(grid.conv_filters == std::vector<std::size_t>({16, 25, 33, 42, 50}));
  CHECK(grid.lstm_units == std::vector<std::size_t>({30, 40, 49, 59, 68}));
  CHECK(grid.fc1_neurons == std::vector<std::size_t>({33, 43, 54, 64, 74}));

  grid.lstm_units.clear();
  CHECK_THROWS_AS(grid.validate(), ConfigError);
}
