#include "emoattr/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "emoattr/attribution.hpp"
#include "emoattr/dataset.hpp"
#include "emoattr/error.hpp"
#include "emoattr/export.hpp"
#include "emoattr/fsio.hpp"
#include "emoattr/model.hpp"
#include "emoattr/rng.hpp"
#include "emoattr/selection.hpp"
#include "emoattr/training.hpp"

namespace emoattr {
namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Option parsing helpers
// ---------------------------------------------------------------------------

std::vector<std::size_t> parse_size_list(const std::string& text,
                                         const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || v < 0) {
      throw ConfigError(std::string(what) + ": not a number: '" + item + "'");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
  return out;
}

std::map<EmotionLabel, std::string> parse_baseline_overrides(
    const std::vector<std::string>& entries) {
  std::map<EmotionLabel, std::string> out;
  for (const auto& entry : entries) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 >= entry.size()) {
      throw ConfigError("--baseline-override expects EMOTION=SAMPLE_ID, got '" +
                        entry + "'");
    }
    out[emotion_from_string(entry.substr(0, eq))] = entry.substr(eq + 1);
  }
  return out;
}

json load_json_file(const std::string& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw IoError("cannot parse " + path + ": " + e.what());
  }
}

// Overlays the network-size keys of a config file onto defaults. The input
// shape (landmarks, frames) always comes from the dataset, not the file.
ModelConfig overlay_model_config(ModelConfig base, const json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "conv_filters") {
      base.conv_filters = value.get<std::size_t>();
    } else if (key == "lstm_units") {
      base.lstm_units = value.get<std::size_t>();
    } else if (key == "fc1_neurons") {
      base.fc1_neurons = value.get<std::size_t>();
    } else if (key == "kernel_rows") {
      base.kernel_rows = value.get<std::size_t>();
    } else if (key == "kernel_cols") {
      base.kernel_cols = value.get<std::size_t>();
    } else if (key == "dropout_rate") {
      base.dropout_rate = value.get<double>();
    } else if (key == "randomized_conv") {
      base.randomized_conv = value.get<bool>();
    } else if (key == "bn_momentum") {
      base.bn_momentum = value.get<double>();
    } else if (key == "bn_eps") {
      base.bn_eps = value.get<double>();
    } else {
      throw ConfigError("model config: unknown key '" + key + "'");
    }
  }
  return base;
}

GridSpec grid_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("grid file must be a JSON object");
  GridSpec grid;
  for (const auto& [key, value] : j.items()) {
    std::vector<std::size_t>* axis = nullptr;
    if (key == "conv_filters") {
      axis = &grid.conv_filters;
    } else if (key == "lstm_units") {
      axis = &grid.lstm_units;
    } else if (key == "fc1_neurons") {
      axis = &grid.fc1_neurons;
    } else {
      throw ConfigError("grid file: unknown key '" + key + "'");
    }
    if (!value.is_array()) {
      throw ConfigError("grid file: '" + key + "' must be an array");
    }
    for (const auto& v : value) axis->push_back(v.get<std::size_t>());
  }
  grid.validate();
  return grid;
}

std::size_t find_sample(const Dataset& dataset, const std::string& id) {
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    if (dataset.samples[i].id == id) return i;
  }
  throw ArgumentError("no sample with id '" + id + "'");
}

std::vector<std::size_t> all_indices(const Dataset& dataset) {
  std::vector<std::size_t> idx(dataset.samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

void write_summary(const std::string& out_dir, const json& j) {
  write_file_atomic(out_dir + "/summary.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthOpts {
  std::string out;
  std::string emotion = "Surprise";
  std::string informative;
  std::size_t landmarks = 64;
  std::size_t frames = 8;
  std::size_t per_class = 120;
  double amplitude = 0.3;
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;
};

int run_synth(const SynthOpts& o) {
  SyntheticSpec spec;
  spec.num_landmarks = o.landmarks;
  spec.num_frames = o.frames;
  spec.samples_per_class = o.per_class;
  spec.amplitude = o.amplitude;
  spec.noise_sigma = o.noise_sigma;
  spec.seed = o.seed;
  spec.target = emotion_from_string(o.emotion);
  if (!o.informative.empty()) {
    spec.informative = parse_size_list(o.informative, "--informative");
  }

  std::vector<std::string> warnings;
  Dataset dataset = generate_synthetic(spec, &warnings);
  const std::string manifest = o.out + "/dataset.json";
  save_dataset(dataset, manifest);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  write_summary(o.out, {{"command", "synth"},
                        {"manifest", manifest},
                        {"samples", dataset.samples.size()},
                        {"num_landmarks", dataset.num_landmarks},
                        {"num_frames", dataset.num_frames},
                        {"target", to_string(spec.target)},
                        {"informative", spec.informative},
                        {"amplitude", spec.amplitude},
                        {"noise_sigma", spec.noise_sigma},
                        {"seed", spec.seed},
                        {"warnings", warnings}});
  std::cout << "wrote " << dataset.samples.size() << " samples to " << manifest
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOpts {
  std::string manifest;
  std::string emotion;
  std::string out;
  std::string config;
  std::uint64_t seed = 0;
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double learning_rate = 1e-4;
  double val_fraction = 0.10;
  double test_fraction = 0.15;
  bool class_weights = false;
  bool randomized_conv = false;
  bool augment = false;
};

TrainConfig train_config_from(const TrainOpts& o) {
  TrainConfig tc;
  tc.learning_rate = o.learning_rate;
  tc.batch_size = o.batch_size;
  tc.epochs = o.epochs;
  tc.seed = o.seed;
  tc.val_fraction = o.val_fraction;
  tc.test_fraction = o.test_fraction;
  tc.use_class_weights = o.class_weights;
  return tc;
}

ModelConfig model_config_from(const TrainOpts& o, const Dataset& dataset) {
  ModelConfig mc;
  if (!o.config.empty()) {
    mc = overlay_model_config(mc, load_json_file(o.config));
  }
  if (o.randomized_conv) mc.randomized_conv = true;
  mc.num_landmarks = dataset.num_landmarks;
  mc.num_frames = dataset.num_frames;
  mc.kernel_cols = std::min(mc.kernel_cols, dataset.num_landmarks);
  return mc;
}

int run_train(const TrainOpts& o) {
  Dataset dataset = load_dataset(o.manifest);
  if (o.augment) dataset = augment_dataset(dataset);
  const EmotionLabel target = emotion_from_string(o.emotion);

  const TrainConfig tc = train_config_from(o);
  const ModelConfig mc = model_config_from(o, dataset);

  const SplitIndices split =
      split_dataset(dataset, target, tc.seed, tc.val_fraction, tc.test_fraction);
  EmotionModel model = build_model(mc, target, mix_seed(tc.seed, 0x33));
  const TrainHistory history = train(model, dataset, split.train, split.val, tc);

  json summary = {{"command", "train"},
                  {"emotion", to_string(target)},
                  {"seed", tc.seed},
                  {"epochs", tc.epochs},
                  {"train_samples", split.train.size()},
                  {"val_samples", split.val.size()},
                  {"test_samples", split.test.size()},
                  {"trainable_params", parameter_count(model).first},
                  {"best_epoch", history.best_epoch},
                  {"best_val_accuracy", history.best_val_accuracy}};
  if (!split.test.empty()) {
    const double test_acc = evaluate_accuracy(model, dataset, split.test);
    summary["test_accuracy"] = test_acc;
    std::cout << "test accuracy " << format_value(test_acc) << "\n";
  }

  const std::string checkpoint = o.out + "/model.json";
  save_model(model, checkpoint);
  export_history_csv({{tc.seed, history}}, o.out + "/history.csv");
  summary["checkpoint"] = checkpoint;
  summary["history"] = o.out + "/history.csv";
  write_summary(o.out, summary);

  std::cout << "best val accuracy " << format_value(history.best_val_accuracy)
            << " at epoch " << history.best_epoch << "\n"
            << "saved " << checkpoint << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOpts {
  std::string checkpoint;
  std::string manifest;
  std::string out;
  double threshold = 0.5;
};

int run_eval(const EvalOpts& o) {
  const EmotionModel model = load_model(o.checkpoint);
  const Dataset dataset = load_dataset(o.manifest);
  const double accuracy =
      evaluate_accuracy(model, dataset, all_indices(dataset), o.threshold);
  std::cout << "accuracy " << format_value(accuracy) << "\n";
  if (!o.out.empty()) {
    write_summary(o.out, {{"command", "eval"},
                          {"checkpoint", o.checkpoint},
                          {"manifest", o.manifest},
                          {"emotion", to_string(model.target)},
                          {"samples", dataset.samples.size()},
                          {"threshold", o.threshold},
                          {"accuracy", accuracy}});
  }
  return 0;
}

// ---------------------------------------------------------------------------
// attribute
// ---------------------------------------------------------------------------

struct AttributeOpts {
  std::string checkpoint;
  std::string manifest;
  std::string sample;
  std::string baseline;
  std::string out;
  std::size_t steps = 50;
};

int run_attribute(const AttributeOpts& o) {
  const EmotionModel model = load_model(o.checkpoint);
  const Dataset dataset = load_dataset(o.manifest);
  const VideoSample& sample = dataset.samples[find_sample(dataset, o.sample)];
  const VideoSample& baseline =
      dataset.samples[find_sample(dataset, o.baseline)];
  const Tensor x = sample_input(sample);
  const Tensor b = sample_input(baseline);

  IGConfig config;
  config.steps = o.steps;
  AttributionTensor attribution = integrated_gradients(model, x, b, config);
  attribution.sample_id = sample.id;
  attribution.baseline_id = baseline.id;

  const double gap = completeness_gap(model, x, b, attribution);
  const AttributionMask mask = attribution_mask(attribution);
  const AlphaCurve curve = alpha_curve(model, x, b, o.steps);

  export_attribution_csv(attribution, o.out + "/attribution.csv");
  export_mask_csv(mask, o.out + "/mask.csv");
  export_alpha_csv(curve, o.out + "/alpha.csv");

  const double score_input = forward(model, x);
  const double score_baseline = forward(model, b);
  write_summary(o.out, {{"command", "attribute"},
                        {"emotion", to_string(model.target)},
                        {"sample", sample.id},
                        {"baseline", baseline.id},
                        {"steps", o.steps},
                        {"score_input", score_input},
                        {"score_baseline", score_baseline},
                        {"completeness_gap", gap},
                        {"attribution", o.out + "/attribution.csv"},
                        {"mask", o.out + "/mask.csv"},
                        {"alpha_curve", o.out + "/alpha.csv"}});

  std::cout << "score " << format_value(score_input) << " (baseline "
            << format_value(score_baseline) << ")\n"
            << "completeness gap " << format_value(gap) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// global-attr
// ---------------------------------------------------------------------------

struct GlobalAttrOpts {
  std::string checkpoint;
  std::string manifest;
  std::string out;
  std::size_t steps = 50;
  std::vector<std::string> overrides;
  bool target_only = false;
  bool allow_missing = false;
};

int run_global_attr(const GlobalAttrOpts& o) {
  const EmotionModel model = load_model(o.checkpoint);
  const Dataset dataset = load_dataset(o.manifest);
  const EmotionLabel target = model.target;
  const std::vector<std::size_t> indices = all_indices(dataset);

  // Without per-emotion scorers every complementary sample ties at zero, so
  // the earliest sample of each emotion becomes its baseline; overrides can
  // substitute hand-picked representatives.
  const ConstantScore zero(0.0);
  EmotionScorers scorers;
  for (const auto& sample : dataset.samples) {
    if (sample.label != target) scorers[sample.label] = &zero;
  }
  BaselineOptions baseline_options;
  baseline_options.overrides = parse_baseline_overrides(o.overrides);
  const BaselineSet baselines =
      select_typical_baselines(dataset, scorers, baseline_options);

  IGConfig config;
  config.steps = o.steps;
  GlobalAttributionOptions options;
  options.target_samples_only = o.target_only;
  options.require_all_baselines = !o.allow_missing;
  const GlobalAttribution global =
      global_attribution(target, model, dataset, indices, baselines, config,
                         options);
  const LandmarkRanking ranking = rank_landmarks(global);

  export_mask_csv(global.mask, o.out + "/global_mask.csv");
  export_ranking_csv(ranking, o.out + "/ranking.csv");

  write_summary(o.out, {{"command", "global-attr"},
                        {"emotion", to_string(target)},
                        {"samples_per_baseline", global.sample_count},
                        {"baselines", global.baseline_ids},
                        {"steps", global.steps},
                        {"mask", o.out + "/global_mask.csv"},
                        {"ranking", o.out + "/ranking.csv"}});

  std::cout << "averaged " << global.sample_count << " samples over "
            << global.baseline_ids.size() << " baselines\ntop landmarks:";
  const std::size_t shown = std::min<std::size_t>(10, ranking.order.size());
  for (std::size_t i = 0; i < shown; ++i) std::cout << ' ' << ranking.order[i];
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// select
// ---------------------------------------------------------------------------

struct SelectOpts {
  TrainOpts train;  // manifest/emotion/out/config plus training knobs
  std::string checkpoint;
  std::string ladder;
  std::string grid_file;
  std::size_t eval_seeds = 10;
  std::size_t grid_seeds = 3;
  std::size_t steps = 50;
  std::size_t plot_top = 0;  // 0 = smallest ladder size
  std::vector<std::string> overrides;
  bool no_grid_search = false;
  bool target_only = false;
  bool allow_missing = false;
};

std::vector<std::size_t> default_ladder(std::size_t num_landmarks) {
  std::vector<std::size_t> ladder;
  for (std::size_t k : {std::size_t{234}, std::size_t{128}, std::size_t{64},
                        std::size_t{32}, std::size_t{16}}) {
    if (k <= num_landmarks) ladder.push_back(k);
  }
  if (ladder.empty()) {
    throw ConfigError("no default ladder for " +
                      std::to_string(num_landmarks) +
                      " landmarks; pass --ladder explicitly");
  }
  return ladder;
}

int run_select(const SelectOpts& o) {
  Dataset dataset = load_dataset(o.train.manifest);
  if (o.train.augment) dataset = augment_dataset(dataset);
  const EmotionLabel target = emotion_from_string(o.train.emotion);
  const TrainConfig tc = train_config_from(o.train);
  const std::string& out = o.train.out;

  json summary = {{"command", "select"}, {"emotion", to_string(target)}};

  EmotionModel full_model;
  if (!o.checkpoint.empty()) {
    full_model = load_model(o.checkpoint);
    if (full_model.target != target) {
      throw ConfigError("checkpoint targets " + to_string(full_model.target) +
                        ", not " + to_string(target));
    }
    summary["full_model"] = o.checkpoint;
  } else {
    const ModelConfig mc = model_config_from(o.train, dataset);
    const SplitIndices split = split_dataset(dataset, target, tc.seed,
                                             tc.val_fraction, tc.test_fraction);
    full_model = build_model(mc, target, mix_seed(tc.seed, 0x33));
    std::cout << "training full-size model (" << dataset.num_landmarks
              << " landmarks, " << tc.epochs << " epochs)\n";
    const TrainHistory history =
        train(full_model, dataset, split.train, split.val, tc);
    std::cout << "full model best val accuracy "
              << format_value(history.best_val_accuracy) << " at epoch "
              << history.best_epoch << "\n";
    save_model(full_model, out + "/full_model.json");
    summary["full_model"] = out + "/full_model.json";
    summary["full_model_best_val_accuracy"] = history.best_val_accuracy;
  }

  PipelineOptions options;
  options.ladder = o.ladder.empty()
                       ? default_ladder(dataset.num_landmarks)
                       : parse_size_list(o.ladder, "--ladder");
  options.grid_seeds = o.grid_seeds;
  options.eval_seeds = o.eval_seeds;
  options.ig.steps = o.steps;
  options.attribution.target_samples_only = o.target_only;
  options.attribution.require_all_baselines = !o.allow_missing;
  options.baseline_overrides = parse_baseline_overrides(o.overrides);
  options.run_grid_search = !o.no_grid_search;
  if (!o.grid_file.empty()) {
    const GridSpec grid = grid_from_json(load_json_file(o.grid_file));
    for (std::size_t k : options.ladder) options.grids[k] = grid;
  }

  const SelectionReport report =
      selection_pipeline(target, dataset, full_model, options, tc);

  export_report_csv(report, out + "/report.csv");
  export_ranking_csv(report.ranking, out + "/ranking.csv");
  export_mask_csv(report.ranking.source.mask, out + "/global_mask.csv");
  summary["report"] = out + "/report.csv";
  summary["ranking"] = out + "/ranking.csv";
  summary["mask"] = out + "/global_mask.csv";

  if (!dataset.samples.empty() && !options.ladder.empty()) {
    std::size_t top = o.plot_top == 0 ? options.ladder.back() : o.plot_top;
    top = std::min(top, dataset.num_landmarks);
    export_landmark_plot(report.ranking.source.mask,
                         frame_of(dataset.samples.front()), top,
                         out + "/landmarks.svg");
    summary["plot"] = out + "/landmarks.svg";
  }

  json rows = json::array();
  for (const ReportRow& row : report.rows) {
    json entry = {{"k", row.k},
                  {"conv_filters", row.config.conv_filters},
                  {"lstm_units", row.config.lstm_units},
                  {"fc1_neurons", row.config.fc1_neurons}};
    const std::vector<double> accuracies = row.result.accuracies();
    if (row.failed || accuracies.empty()) {
      entry["failed"] = true;
      if (!row.error.empty()) entry["error"] = row.error;
      std::cout << "k=" << row.k << " failed"
                << (row.error.empty() ? "" : ": " + row.error) << "\n";
    } else {
      entry["mean_accuracy"] = row.result.mean();
      entry["std_accuracy"] = row.result.stddev();
      entry["accuracies"] = accuracies;
      std::cout << "k=" << row.k << " accuracy "
                << format_mean_std(row.result.mean(), row.result.stddev())
                << " (F=" << row.config.conv_filters
                << " Q=" << row.config.lstm_units
                << " R=" << row.config.fc1_neurons << ")\n";
    }
    rows.push_back(entry);
  }
  summary["rows"] = rows;
  write_summary(out, summary);
  std::cout << "report written to " << out << "/report.csv\n";
  return 0;
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

struct PlotOpts {
  std::string manifest;
  std::string mask;
  std::string out;
  std::string sample;
  std::size_t top = 16;
  std::size_t frame = 0;
};

int run_plot(const PlotOpts& o) {
  const Dataset dataset = load_dataset(o.manifest);
  if (dataset.samples.empty()) {
    throw ArgumentError("manifest has no samples to use as plot reference");
  }
  const AttributionMask mask = load_mask_csv(o.mask);
  if (mask.scores.size() != dataset.num_landmarks) {
    throw ArgumentError("mask covers " + std::to_string(mask.scores.size()) +
                        " landmarks but the manifest has " +
                        std::to_string(dataset.num_landmarks));
  }
  const VideoSample& reference =
      o.sample.empty() ? dataset.samples.front()
                       : dataset.samples[find_sample(dataset, o.sample)];
  const std::size_t top = std::min(o.top, dataset.num_landmarks);
  const std::string path = o.out + "/landmarks.svg";
  export_landmark_plot(mask, frame_of(reference, o.frame), top, path);
  write_summary(o.out, {{"command", "plot"},
                        {"mask", o.mask},
                        {"reference", reference.id},
                        {"frame", o.frame},
                        {"top", top},
                        {"plot", path}});
  std::cout << "wrote " << path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Wiring
// ---------------------------------------------------------------------------

void add_train_options(CLI::App* cmd, TrainOpts& o) {
  cmd->add_option("--manifest", o.manifest, "Dataset manifest (JSON)")
      ->required();
  cmd->add_option("--emotion", o.emotion, "Target emotion label")->required();
  cmd->add_option("--out", o.out, "Output directory")->required();
  cmd->add_option("--config", o.config,
                  "Model config JSON (network sizes; the input shape always "
                  "comes from the manifest)");
  cmd->add_option("--seed", o.seed, "Base RNG seed")->capture_default_str();
  cmd->add_option("--epochs", o.epochs, "Training epochs")
      ->capture_default_str();
  cmd->add_option("--batch-size", o.batch_size, "Mini-batch size")
      ->capture_default_str();
  cmd->add_option("--lr", o.learning_rate, "Adam learning rate")
      ->capture_default_str();
  cmd->add_option("--val-fraction", o.val_fraction,
                  "Validation share of the non-test samples")
      ->capture_default_str();
  cmd->add_option("--test-fraction", o.test_fraction,
                  "Held-out test share of the dataset")
      ->capture_default_str();
  cmd->add_flag("--class-weights", o.class_weights,
                "Weight the loss by inverse class frequency");
  cmd->add_flag("--randomized-conv", o.randomized_conv,
                "Freeze the conv layer at its random initialization");
  cmd->add_flag("--augment", o.augment,
                "Add horizontally mirrored copies of every sample before "
                "splitting");
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{
      "Facial-emotion classifiers on landmark time series: training, "
      "integrated-gradients attribution, and landmark subset selection"};
  app.require_subcommand(1);

  SynthOpts synth_opts;
  TrainOpts train_opts;
  EvalOpts eval_opts;
  AttributeOpts attribute_opts;
  GlobalAttrOpts global_opts;
  SelectOpts select_opts;
  PlotOpts plot_opts;
  int status = 0;

  CLI::App* synth =
      app.add_subcommand("synth", "Generate a synthetic planted-signal dataset");
  synth->add_option("--out", synth_opts.out, "Output directory")->required();
  synth->add_option("--emotion", synth_opts.emotion, "Target emotion label")
      ->capture_default_str();
  synth->add_option("--seed", synth_opts.seed, "RNG seed")
      ->capture_default_str();
  synth->add_option("--landmarks", synth_opts.landmarks, "Landmarks per frame")
      ->capture_default_str();
  synth->add_option("--frames", synth_opts.frames, "Frames per sample")
      ->capture_default_str();
  synth->add_option("--per-class", synth_opts.per_class, "Samples per class")
      ->capture_default_str();
  synth->add_option("--informative", synth_opts.informative,
                    "Comma-separated landmark ids carrying the planted drift");
  synth->add_option("--amplitude", synth_opts.amplitude,
                    "Planted drift amplitude")
      ->capture_default_str();
  synth->add_option("--noise-sigma", synth_opts.noise_sigma,
                    "Gaussian coordinate noise")
      ->capture_default_str();
  synth->callback([&] { status = run_synth(synth_opts); });

  CLI::App* train_cmd =
      app.add_subcommand("train", "Train a binary one-vs-rest classifier");
  add_train_options(train_cmd, train_opts);
  train_cmd->callback([&] { status = run_train(train_opts); });

  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "Accuracy of a checkpoint over every sample in a manifest");
  eval_cmd->add_option("--checkpoint", eval_opts.checkpoint, "Model checkpoint")
      ->required();
  eval_cmd->add_option("--manifest", eval_opts.manifest, "Dataset manifest")
      ->required();
  eval_cmd->add_option("--out", eval_opts.out,
                       "Optional directory for the run summary");
  eval_cmd->add_option("--threshold", eval_opts.threshold,
                       "Positive-class decision threshold")
      ->capture_default_str();
  eval_cmd->callback([&] { status = run_eval(eval_opts); });

  CLI::App* attribute = app.add_subcommand(
      "attribute", "Integrated gradients for one sample/baseline pair");
  attribute
      ->add_option("--checkpoint", attribute_opts.checkpoint, "Model checkpoint")
      ->required();
  attribute->add_option("--manifest", attribute_opts.manifest, "Dataset manifest")
      ->required();
  attribute->add_option("--sample", attribute_opts.sample, "Sample id to explain")
      ->required();
  attribute->add_option("--baseline", attribute_opts.baseline, "Baseline sample id")
      ->required();
  attribute->add_option("--out", attribute_opts.out, "Output directory")
      ->required();
  attribute->add_option("--m", attribute_opts.steps, "Riemann-sum steps")
      ->capture_default_str();
  attribute->callback([&] { status = run_attribute(attribute_opts); });

  CLI::App* global_attr = app.add_subcommand(
      "global-attr",
      "Dataset-wide attribution mask averaged over complementary baselines");
  global_attr
      ->add_option("--checkpoint", global_opts.checkpoint, "Model checkpoint")
      ->required();
  global_attr->add_option("--manifest", global_opts.manifest, "Dataset manifest")
      ->required();
  global_attr->add_option("--out", global_opts.out, "Output directory")
      ->required();
  global_attr->add_option("--m", global_opts.steps, "Riemann-sum steps")
      ->capture_default_str();
  global_attr->add_option("--baseline-override", global_opts.overrides,
                          "EMOTION=SAMPLE_ID baseline picks (repeatable)");
  global_attr->add_flag("--target-only", global_opts.target_only,
                        "Average only over samples of the target emotion");
  global_attr->add_flag("--allow-missing-baselines", global_opts.allow_missing,
                        "Skip complementary emotions absent from the manifest");
  global_attr->callback([&] { status = run_global_attr(global_opts); });

  CLI::App* select = app.add_subcommand(
      "select",
      "Rank landmarks by global attribution and retrain on shrinking subsets");
  add_train_options(select, select_opts.train);
  select->add_option("--checkpoint", select_opts.checkpoint,
                     "Reuse a trained full-size model instead of training one");
  select->add_option("--ladder", select_opts.ladder,
                     "Comma-separated subset sizes, largest first "
                     "(default 234,128,64,32,16 clipped to the dataset)");
  select->add_option("--grid", select_opts.grid_file,
                     "Grid JSON with conv_filters/lstm_units/fc1_neurons "
                     "arrays, applied at every subset size");
  select->add_option("--seeds", select_opts.eval_seeds,
                     "Seeds per subset evaluation")
      ->capture_default_str();
  select->add_option("--grid-seeds", select_opts.grid_seeds,
                     "Seeds per grid-search cell")
      ->capture_default_str();
  select->add_option("--m", select_opts.steps, "Riemann-sum steps")
      ->capture_default_str();
  select->add_option("--plot-top", select_opts.plot_top,
                     "Landmarks to circle in the plot (default: smallest "
                     "ladder size)");
  select->add_option("--baseline-override", select_opts.overrides,
                     "EMOTION=SAMPLE_ID baseline picks (repeatable)");
  select->add_flag("--no-grid-search", select_opts.no_grid_search,
                   "Use tuned reference hyperparameters instead of searching");
  select->add_flag("--target-only", select_opts.target_only,
                   "Average attributions only over target-emotion samples");
  select->add_flag("--allow-missing-baselines", select_opts.allow_missing,
                   "Skip complementary emotions absent from the dataset");
  select->callback([&] { status = run_select(select_opts); });

  CLI::App* plot = app.add_subcommand(
      "plot", "Render a landmark mask as an SVG scatter over a sample frame");
  plot->add_option("--manifest", plot_opts.manifest, "Dataset manifest")
      ->required();
  plot->add_option("--mask", plot_opts.mask, "Mask CSV (landmark,score)")
      ->required();
  plot->add_option("--out", plot_opts.out, "Output directory")->required();
  plot->add_option("--sample", plot_opts.sample,
                   "Reference sample id (default: first in the manifest)");
  plot->add_option("--top", plot_opts.top, "Landmarks to circle")
      ->capture_default_str();
  plot->add_option("--frame", plot_opts.frame, "Reference frame index")
      ->capture_default_str();
  plot->callback([&] { status = run_plot(plot_opts); });

  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.push_back("emoattr");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(argv_storage.size());
  for (const auto& a : argv_storage) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return status;
}

}  // namespace emoattr
