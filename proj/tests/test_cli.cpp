#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "emoattr/cli.hpp"
#include "emoattr/dataset.hpp"
#include "emoattr/export.hpp"
#include "emoattr/fsio.hpp"
#include "emoattr/model.hpp"
#include "emoattr/training.hpp"
#include "helpers.hpp"

using namespace emoattr;
using namespace emoattr::testing;
using nlohmann::json;

namespace {

bool exists(const std::string& path) {
  return std::filesystem::exists(path);
}

json read_json(const std::string& path) {
  return json::parse(read_text_file(path));
}

// Shared scratch area: one synthetic dataset plus a trained checkpoint that
// the individual cases build on.
struct CliFixture {
  TempDir dir;
  std::string manifest;
  std::string config;
  std::string checkpoint;

  CliFixture() {
    manifest = dir.str("data") + "/dataset.json";
    REQUIRE(run_cli({"synth", "--out", dir.str("data"), "--seed", "9",
                     "--landmarks", "10", "--frames", "4", "--per-class", "12",
                     "--informative", "0,5", "--noise-sigma", "0.01"}) == 0);

    config = dir.str("config.json");
    write_file_atomic(config,
                      "{\"conv_filters\":2,\"lstm_units\":3,\"fc1_neurons\":4,"
                      "\"dropout_rate\":0.0,\"bn_momentum\":0.9}\n");

    checkpoint = dir.str("model") + "/model.json";
    REQUIRE(run_cli({"train", "--manifest", manifest, "--emotion", "Surprise",
                     "--out", dir.str("model"), "--config", config, "--seed",
                     "1", "--epochs", "8", "--batch-size", "8", "--lr", "0.02",
                     "--val-fraction", "0.2", "--test-fraction", "0.2"}) == 0);
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// Exit codes
// ---------------------------------------------------------------------------

TEST_CASE("usage mistakes exit with 2") {
  CHECK(run_cli({}) == 2);
  CHECK(run_cli({"bogus"}) == 2);
  CHECK(run_cli({"synth", "--nope"}) == 2);
  CHECK(run_cli({"train"}) == 2);  // missing required options
  CHECK(run_cli({"eval", "--checkpoint", "x"}) == 2);
}

TEST_CASE("help exits with 0") {
  CHECK(run_cli({"--help"}) == 0);
  CHECK(run_cli({"synth", "--help"}) == 0);
  CHECK(run_cli({"select", "--help"}) == 0);
}

TEST_CASE("runtime failures exit with 1") {
  TempDir dir;
  CHECK(run_cli({"eval", "--checkpoint", dir.str("absent.json"), "--manifest",
                 dir.str("absent2.json")}) == 1);
  CHECK(run_cli({"train", "--manifest", dir.str("absent.json"), "--emotion",
                 "Surprise", "--out", dir.str("out")}) == 1);
  CHECK(run_cli({"synth", "--out", dir.str("s"), "--emotion", "Joyful"}) == 1);
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

TEST_CASE("synth writes a loadable manifest and is seed-deterministic") {
  TempDir dir;
  const std::vector<std::string> base = {
      "synth",        "--seed",   "4",  "--landmarks", "6",
      "--frames",     "3",        "--per-class", "5",  "--noise-sigma",
      "0.01"};
  auto with_out = [&](const std::string& out) {
    std::vector<std::string> args = base;
    args.push_back("--out");
    args.push_back(out);
    return args;
  };
  REQUIRE(run_cli(with_out(dir.str("a"))) == 0);
  REQUIRE(run_cli(with_out(dir.str("b"))) == 0);

  const Dataset ds = load_dataset(dir.str("a") + "/dataset.json");
  CHECK(ds.samples.size() == 10);
  CHECK(ds.num_landmarks == 6);
  CHECK(ds.num_frames == 3);

  const json summary = read_json(dir.str("a") + "/summary.json");
  CHECK(summary.at("command") == "synth");
  CHECK(summary.at("samples") == 10);
  CHECK(summary.at("target") == "Surprise");

  CHECK(read_text_file(dir.str("a") + "/dataset.json") ==
        read_text_file(dir.str("b") + "/dataset.json"));
  const std::string payload = "/dataset_data/000000_synth-pos-0.lmk";
  CHECK(read_text_file(dir.str("a") + payload) ==
        read_text_file(dir.str("b") + payload));
}

// ---------------------------------------------------------------------------
// train and eval
// ---------------------------------------------------------------------------

TEST_CASE("train produces a checkpoint that eval reproduces in-process") {
  CliFixture fx;
  CHECK(exists(fx.checkpoint));
  CHECK(exists(fx.dir.str("model") + "/history.csv"));

  const json summary = read_json(fx.dir.str("model") + "/summary.json");
  CHECK(summary.at("command") == "train");
  CHECK(summary.at("emotion") == "Surprise");
  CHECK(summary.at("train_samples").get<std::size_t>() +
            summary.at("val_samples").get<std::size_t>() +
            summary.at("test_samples").get<std::size_t>() ==
        24);
  CHECK(summary.at("best_val_accuracy").get<double>() >= 0.0);
  CHECK(summary.at("best_val_accuracy").get<double>() <= 1.0);
  CHECK(summary.at("checkpoint") == fx.checkpoint);

  const EmotionModel model = load_model(fx.checkpoint);
  CHECK(model.target == EmotionLabel::Surprise);
  CHECK(model.config.conv_filters == 2);
  CHECK(model.config.num_landmarks == 10);

  // eval over the whole manifest must agree exactly with calling the library.
  REQUIRE(run_cli({"eval", "--checkpoint", fx.checkpoint, "--manifest",
                   fx.manifest, "--out", fx.dir.str("eval")}) == 0);
  const json eval_summary = read_json(fx.dir.str("eval") + "/summary.json");
  const Dataset ds = load_dataset(fx.manifest);
  std::vector<std::size_t> all(ds.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  CHECK(eval_summary.at("accuracy").get<double>() ==
        evaluate_accuracy(model, ds, all));
  CHECK(eval_summary.at("samples") == 24);
}

// ---------------------------------------------------------------------------
// attribute and plot
// ---------------------------------------------------------------------------

TEST_CASE("attribute exports the mask that the library computes") {
  CliFixture fx;
  const std::string out = fx.dir.str("attr");
  REQUIRE(run_cli({"attribute", "--checkpoint", fx.checkpoint, "--manifest",
                   fx.manifest, "--sample", "synth-pos-0", "--baseline",
                   "synth-neg-0", "--out", out, "--m", "8"}) == 0);
  CHECK(exists(out + "/attribution.csv"));
  CHECK(exists(out + "/alpha.csv"));

  const json summary = read_json(out + "/summary.json");
  CHECK(summary.at("sample") == "synth-pos-0");
  CHECK(summary.at("baseline") == "synth-neg-0");
  CHECK(summary.at("steps") == 8);
  CHECK(summary.at("completeness_gap").get<double>() >= 0.0);

  // Round-trip: mask.csv parses back to the bit-exact in-process mask.
  const EmotionModel model = load_model(fx.checkpoint);
  const Dataset ds = load_dataset(fx.manifest);
  const Tensor x = sample_input(ds.samples[0]);
  Tensor b;
  for (const auto& s : ds.samples) {
    if (s.id == "synth-neg-0") b = sample_input(s);
  }
  IGConfig cfg;
  cfg.steps = 8;
  const AttributionMask expect =
      attribution_mask(integrated_gradients(model, x, b, cfg));
  const AttributionMask loaded = load_mask_csv(out + "/mask.csv");
  REQUIRE(loaded.scores.size() == expect.scores.size());
  for (std::size_t n = 0; n < expect.scores.size(); ++n) {
    CHECK(loaded.scores[n] == expect.scores[n]);
  }
  CHECK(summary.at("score_input").get<double>() == forward(model, x));

  CHECK(run_cli({"attribute", "--checkpoint", fx.checkpoint, "--manifest",
                 fx.manifest, "--sample", "nope", "--baseline", "synth-neg-0",
                 "--out", out, "--m", "4"}) == 1);
}

TEST_CASE("plot renders an SVG for a stored mask") {
  CliFixture fx;
  const std::string attr = fx.dir.str("attr");
  REQUIRE(run_cli({"attribute", "--checkpoint", fx.checkpoint, "--manifest",
                   fx.manifest, "--sample", "synth-pos-1", "--baseline",
                   "synth-neg-1", "--out", attr, "--m", "4"}) == 0);

  const std::string out = fx.dir.str("plot");
  REQUIRE(run_cli({"plot", "--manifest", fx.manifest, "--mask",
                   attr + "/mask.csv", "--out", out, "--top", "4", "--sample",
                   "synth-neg-3"}) == 0);
  const std::string svg = read_text_file(out + "/landmarks.svg");
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(svg.find("<svg") != std::string::npos);
  const json summary = read_json(out + "/summary.json");
  CHECK(summary.at("reference") == "synth-neg-3");
  CHECK(summary.at("top") == 4);

  CHECK(run_cli({"plot", "--manifest", fx.manifest, "--mask",
                 attr + "/mask.csv", "--out", out, "--sample", "nope"}) == 1);

  // A mask whose landmark count disagrees with the manifest is rejected.
  const std::string short_mask = fx.dir.str("short.csv");
  write_file_atomic(short_mask, "landmark,score\n0,0.5\n1,0.25\n2,0.125\n");
  CHECK(run_cli({"plot", "--manifest", fx.manifest, "--mask", short_mask,
                 "--out", out}) == 1);
}

// ---------------------------------------------------------------------------
// global-attr
// ---------------------------------------------------------------------------

TEST_CASE("global-attr averages over the five complementary baselines") {
  CliFixture fx;
  const std::string out = fx.dir.str("global");
  REQUIRE(run_cli({"global-attr", "--checkpoint", fx.checkpoint, "--manifest",
                   fx.manifest, "--out", out, "--m", "4"}) == 0);
  const json summary = read_json(out + "/summary.json");
  CHECK(summary.at("emotion") == "Surprise");
  CHECK(summary.at("baselines").size() == 5);
  CHECK(summary.at("samples_per_baseline") == 24);
  CHECK(exists(out + "/ranking.csv"));
  CHECK(load_mask_csv(out + "/global_mask.csv").scores.size() == 10);

  // synth-neg-5 carries Anger (the complementary cycle repeats every five).
  const std::string with_override = fx.dir.str("global2");
  REQUIRE(run_cli({"global-attr", "--checkpoint", fx.checkpoint, "--manifest",
                   fx.manifest, "--out", with_override, "--m", "4",
                   "--baseline-override", "Anger=synth-neg-5"}) == 0);
  const json overridden = read_json(with_override + "/summary.json");
  const auto& ids = overridden.at("baselines");
  CHECK(std::find(ids.begin(), ids.end(), json("synth-neg-5")) != ids.end());

  CHECK(run_cli({"global-attr", "--checkpoint", fx.checkpoint, "--manifest",
                 fx.manifest, "--out", out, "--baseline-override",
                 "Anger=synth-pos-0"}) == 1);  // label mismatch
  CHECK(run_cli({"global-attr", "--checkpoint", fx.checkpoint, "--manifest",
                 fx.manifest, "--out", out, "--baseline-override",
                 "Anger"}) == 1);  // malformed
}

// ---------------------------------------------------------------------------
// select
// ---------------------------------------------------------------------------

TEST_CASE("select trains, ranks, retrains the ladder, and writes the report") {
  CliFixture fx;
  const std::string grid = fx.dir.str("grid.json");
  write_file_atomic(
      grid, "{\"conv_filters\":[2],\"lstm_units\":[3],\"fc1_neurons\":[4]}\n");

  const std::string out = fx.dir.str("select");
  REQUIRE(run_cli({"select", "--manifest", fx.manifest, "--emotion", "Surprise",
                   "--out", out, "--config", fx.config, "--seed", "1",
                   "--epochs", "6", "--batch-size", "8", "--lr", "0.02",
                   "--val-fraction", "0.2", "--test-fraction", "0.2",
                   "--ladder", "6,3", "--grid", grid, "--seeds", "2",
                   "--grid-seeds", "1", "--m", "4"}) == 0);

  for (const char* artifact : {"/full_model.json", "/report.csv",
                               "/ranking.csv", "/global_mask.csv",
                               "/landmarks.svg", "/summary.json"}) {
    CHECK(exists(out + artifact));
  }

  const json summary = read_json(out + "/summary.json");
  REQUIRE(summary.at("rows").size() == 3);
  CHECK(summary.at("rows")[0].at("k") == 10);
  CHECK(summary.at("rows")[1].at("k") == 6);
  CHECK(summary.at("rows")[2].at("k") == 3);
  for (const auto& row : summary.at("rows")) {
    if (row.contains("failed")) continue;
    CHECK(row.at("accuracies").size() == 2);
  }

  const std::string report = read_text_file(out + "/report.csv");
  CHECK(report.rfind("emotion,10,6,3\n", 0) == 0);
  CHECK(report.find("Surprise,") != std::string::npos);
}

TEST_CASE("select reuses a checkpoint instead of retraining the full model") {
  CliFixture fx;
  const std::string out = fx.dir.str("select2");
  REQUIRE(run_cli({"select", "--manifest", fx.manifest, "--emotion", "Surprise",
                   "--out", out, "--checkpoint", fx.checkpoint, "--seed", "1",
                   "--epochs", "6", "--batch-size", "8", "--lr", "0.02",
                   "--val-fraction", "0.2", "--test-fraction", "0.2",
                   "--ladder", "4", "--no-grid-search", "--seeds", "1", "--m",
                   "4"}) == 0);
  const json summary = read_json(out + "/summary.json");
  CHECK(summary.at("full_model") == fx.checkpoint);
  CHECK_FALSE(exists(out + "/full_model.json"));
  REQUIRE(summary.at("rows").size() == 2);
  CHECK(summary.at("rows")[1].at("k") == 4);

  // The checkpoint's emotion must match the requested one.
  CHECK(run_cli({"select", "--manifest", fx.manifest, "--emotion", "Anger",
                 "--out", out, "--checkpoint", fx.checkpoint, "--ladder",
                 "4"}) == 1);
  // Malformed and out-of-range ladders are runtime errors, not usage errors.
  CHECK(run_cli({"select", "--manifest", fx.manifest, "--emotion", "Surprise",
                 "--out", out, "--checkpoint", fx.checkpoint, "--ladder",
                 "3,abc"}) == 1);
  CHECK(run_cli({"select", "--manifest", fx.manifest, "--emotion", "Surprise",
                 "--out", out, "--checkpoint", fx.checkpoint, "--ladder",
                 "12,3", "--seeds", "1", "--no-grid-search"}) == 1);
}
