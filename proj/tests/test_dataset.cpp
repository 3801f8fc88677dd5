#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "emoattr/dataset.hpp"
#include "emoattr/error.hpp"
#include "emoattr/fsio.hpp"
#include "emoattr/rng.hpp"
#include "helpers.hpp"

using namespace emoattr;
using emoattr::testing::TempDir;

namespace {

Dataset small_dataset(std::size_t P = 3, std::size_t L = 4) {
  Dataset ds;
  ds.num_frames = P;
  ds.num_landmarks = L;
  ds.landmark_map = identity_landmark_map(L);
  Rng rng(17);
  const EmotionLabel labels[] = {EmotionLabel::Happiness, EmotionLabel::Anger,
                                 EmotionLabel::Surprise};
  for (int i = 0; i < 3; ++i) {
    VideoSample s;
    s.id = "clip-" + std::to_string(i);
    s.label = labels[i];
    s.frames = emoattr::testing::random_tensor({P, 2, L}, rng, 0.0, 1.0);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace

TEST_CASE("manifest round-trip preserves every sample bit-exactly") {
  TempDir tmp;
  Dataset ds = small_dataset();
  ds.samples[1].augmented = true;
  const std::string manifest = tmp.str("set.json");
  save_dataset(ds, manifest);
  Dataset back = load_dataset(manifest);

  CHECK(back.num_frames == ds.num_frames);
  CHECK(back.num_landmarks == ds.num_landmarks);
  CHECK(back.crop_size == ds.crop_size);
  CHECK(back.landmark_map == ds.landmark_map);
  REQUIRE(back.samples.size() == ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].id == ds.samples[i].id);
    CHECK(back.samples[i].label == ds.samples[i].label);
    CHECK(back.samples[i].augmented == ds.samples[i].augmented);
    CHECK(back.samples[i].frames == ds.samples[i].frames);
  }
}

TEST_CASE("csv payloads load with one frame per row") {
  TempDir tmp;
  // P=2, L=2: rows are x0,x1,y0,y1.
  write_file_atomic(tmp.str("clip.csv"),
                    "0.1,0.2,0.3,0.4\n0.5,0.6,0.7,0.8\n");
  write_file_atomic(
      tmp.str("set.json"),
      R"({"format": "emoattr-dataset", "version": 1, "num_frames": 2,
          "num_landmarks": 2, "crop_size": 300,
          "samples": [{"id": "c", "label": "Anger", "file": "clip.csv"}]})");
  Dataset ds = load_dataset(tmp.str("set.json"));
  REQUIRE(ds.samples.size() == 1);
  const Tensor& f = ds.samples[0].frames;
  REQUIRE(f.shape() == std::vector<std::size_t>({2, 2, 2}));
  CHECK(f[0] == 0.1);  // frame 0, x, landmark 0
  CHECK(f[1] == 0.2);
  CHECK(f[2] == 0.3);  // frame 0, y
  CHECK(f[3] == 0.4);
  CHECK(f[4] == 0.5);  // frame 1, x
}

TEST_CASE("loading reports which sample is broken") {
  TempDir tmp;
  Dataset ds = small_dataset();
  const std::string manifest = tmp.str("set.json");
  save_dataset(ds, manifest);

  // Truncate the second payload.
  const std::string victim = tmp.str("set_data/000001_clip-1.lmk");
  REQUIRE(std::filesystem::exists(victim));
  std::filesystem::resize_file(victim, 10);
  CHECK_THROWS_WITH_AS(load_dataset(manifest), doctest::Contains("clip-1"),
                       IoError);
}

TEST_CASE("loading rejects garbage manifests and payloads") {
  TempDir tmp;
  CHECK_THROWS_AS(load_dataset(tmp.str("missing.json")), IoError);

  write_file_atomic(tmp.str("bad.json"), "not json at all");
  CHECK_THROWS_AS(load_dataset(tmp.str("bad.json")), IoError);

  write_file_atomic(tmp.str("wrong.json"),
                    R"({"format": "other-format", "version": 1})");
  CHECK_THROWS_AS(load_dataset(tmp.str("wrong.json")), IoError);

  // Valid manifest, payload with a bad magic number.
  write_file_atomic(tmp.str("clip.lmk"), std::string(64, 'x'));
  write_file_atomic(
      tmp.str("set.json"),
      R"({"format": "emoattr-dataset", "version": 1, "num_frames": 2,
          "num_landmarks": 2, "crop_size": 300,
          "samples": [{"id": "c", "label": "Anger", "file": "clip.lmk"}]})");
  CHECK_THROWS_AS(load_dataset(tmp.str("set.json")), IoError);
}

TEST_CASE("dataset validation catches duplicates, shapes, and ranges") {
  Dataset ds = small_dataset();
  ds.samples[2].id = ds.samples[0].id;
  CHECK_THROWS_AS(ds.validate(), ValidationError);

  ds = small_dataset();
  ds.samples[0].frames = Tensor({3, 2, 5});
  CHECK_THROWS_AS(ds.validate(), ValidationError);

  ds = small_dataset();
  ds.samples[0].frames[0] = 1.1;
  CHECK_THROWS_AS(ds.validate(), ValidationError);

  // A hair outside [0,1] is within the documented 1e-6 tolerance.
  ds = small_dataset();
  ds.samples[0].frames[0] = 1.0 + 5e-7;
  CHECK_NOTHROW(ds.validate());
}

TEST_CASE("normalize_coords scales by the crop size") {
  Tensor raw({2, 2}, {0.0, 30.0, 150.0, 300.0});
  Tensor scaled = normalize_coords(raw, 300.0);
  CHECK(scaled[0] == 0.0);
  CHECK(scaled[1] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(scaled[3] == 1.0);

  Tensor bad({1}, {301.0});
  CHECK_THROWS_AS(normalize_coords(bad, 300.0), ValidationError);
  Tensor negative({1}, {-1.0});
  CHECK_THROWS_AS(normalize_coords(negative, 300.0), ValidationError);
}

TEST_CASE("flip_augment mirrors one coordinate row and tags the copy") {
  Dataset ds = small_dataset(2, 3);
  const VideoSample& s = ds.samples[0];
  VideoSample fx = flip_augment(s, FlipAxis::X);
  CHECK(fx.id == s.id + "-flip");
  CHECK(fx.augmented);
  CHECK(fx.label == s.label);
  const std::size_t L = 3;
  for (std::size_t p = 0; p < 2; ++p) {
    for (std::size_t n = 0; n < L; ++n) {
      CHECK(fx.frames[(p * 2 + 0) * L + n] ==
            doctest::Approx(1.0 - s.frames[(p * 2 + 0) * L + n])
                .epsilon(1e-12));
      CHECK(fx.frames[(p * 2 + 1) * L + n] == s.frames[(p * 2 + 1) * L + n]);
    }
  }
  VideoSample fy = flip_augment(s, FlipAxis::Y);
  for (std::size_t n = 0; n < L; ++n) {
    CHECK(fy.frames[n] == s.frames[n]);  // x row untouched
    CHECK(fy.frames[L + n] ==
          doctest::Approx(1.0 - s.frames[L + n]).epsilon(1e-12));
  }
}

TEST_CASE("augment_dataset appends one flipped copy per sample") {
  Dataset ds = small_dataset();
  Dataset doubled = augment_dataset(ds);
  REQUIRE(doubled.samples.size() == 2 * ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(doubled.samples[i].id == ds.samples[i].id);
    CHECK(doubled.samples[ds.samples.size() + i].id ==
          ds.samples[i].id + "-flip");
  }
  CHECK_NOTHROW(doubled.validate());
}

TEST_CASE("sample_input, binary_label, and make_batch agree on layout") {
  Dataset ds = small_dataset(3, 4);
  Tensor x = sample_input(ds.samples[0]);
  CHECK(x.shape() == std::vector<std::size_t>({3, 2, 4, 1}));
  CHECK(x.values() == ds.samples[0].frames.values());

  CHECK(binary_label(ds.samples[0], EmotionLabel::Happiness) == 1.0);
  CHECK(binary_label(ds.samples[0], EmotionLabel::Anger) == 0.0);

  Tensor batch = make_batch(ds, {2, 0});
  REQUIRE(batch.shape() == std::vector<std::size_t>({2, 3, 2, 4, 1}));
  const std::size_t stride = 3 * 2 * 4;
  for (std::size_t i = 0; i < stride; ++i) {
    CHECK(batch[i] == ds.samples[2].frames[i]);
    CHECK(batch[stride + i] == ds.samples[0].frames[i]);
  }
}

// ---------------------------------------------------------------------------
// Synthetic planted-signal data
// ---------------------------------------------------------------------------

TEST_CASE("generate_synthetic is deterministic and correctly labelled") {
  SyntheticSpec spec = emoattr::testing::planted_spec(10, 2, 4, 0.01, 6, 42);
  spec.target = EmotionLabel::Fear;
  Dataset a = generate_synthetic(spec);
  Dataset b = generate_synthetic(spec);
  REQUIRE(a.samples.size() == 12);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].frames == b.samples[i].frames);
    CHECK(a.samples[i].id == b.samples[i].id);
  }

  // Positives first, carrying the target label.
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(a.samples[i].label == EmotionLabel::Fear);
    CHECK(a.samples[i].id == "synth-pos-" + std::to_string(i));
  }
  // Negatives cycle the five complementary emotions in enumeration order.
  std::vector<EmotionLabel> complementary;
  for (EmotionLabel e : kAllEmotions) {
    if (e != EmotionLabel::Fear) complementary.push_back(e);
  }
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(a.samples[6 + i].label == complementary[i % 5]);
  }
  // Different seeds give different data.
  spec.seed = 43;
  Dataset c = generate_synthetic(spec);
  CHECK_FALSE(a.samples[0].frames == c.samples[0].frames);
}

TEST_CASE("noiseless positives drift linearly on informative landmarks only") {
  SyntheticSpec spec;
  spec.num_landmarks = 6;
  spec.num_frames = 5;
  spec.samples_per_class = 3;
  spec.informative = {1, 4};
  spec.amplitude = 0.3;
  spec.noise_sigma = 0.0;
  spec.seed = 7;
  Dataset ds = generate_synthetic(spec);

  const std::size_t L = 6, P = 5;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const VideoSample& s = ds.samples[i];
    const bool positive = s.label == spec.target;
    for (std::size_t n = 0; n < L; ++n) {
      const bool informative = n == 1 || n == 4;
      for (std::size_t c = 0; c < 2; ++c) {
        const double base = s.frames[(0 * 2 + c) * L + n];
        for (std::size_t p = 1; p < P; ++p) {
          const double expect =
              positive && informative
                  ? base + spec.amplitude * static_cast<double>(p) /
                               static_cast<double>(P - 1)
                  : base;
          CHECK(s.frames[(p * 2 + c) * L + n] ==
                doctest::Approx(expect).epsilon(1e-12));
        }
      }
    }
  }

  // The separation oracle sees the plant exactly.
  std::vector<double> sep = landmark_separation(ds, spec.target);
  REQUIRE(sep.size() == L);
  for (std::size_t n = 0; n < L; ++n) {
    if (n == 1 || n == 4) {
      CHECK(sep[n] == doctest::Approx(spec.amplitude).epsilon(1e-9));
    } else {
      CHECK(sep[n] == doctest::Approx(0.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("synthetic coordinates always stay in [0,1]") {
  SyntheticSpec spec = emoattr::testing::planted_spec(8, 3, 4, 0.5, 10, 3);
  Dataset ds = generate_synthetic(spec);  // large sigma forces clamping
  for (const auto& s : ds.samples) {
    for (std::size_t i = 0; i < s.frames.size(); ++i) {
      CHECK(s.frames[i] >= 0.0);
      CHECK(s.frames[i] <= 1.0);
    }
  }
}

TEST_CASE("an oversized amplitude triggers the clamp warning") {
  SyntheticSpec spec = emoattr::testing::planted_spec(6, 2, 4, 0.0, 4, 1);
  spec.amplitude = 5.0;  // drift far beyond the unit box
  std::vector<std::string> warnings;
  generate_synthetic(spec, &warnings);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("clamp") != std::string::npos);

  warnings.clear();
  spec.amplitude = 0.3;
  generate_synthetic(spec, &warnings);
  CHECK(warnings.empty());
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec spec = emoattr::testing::planted_spec(8, 2, 4, 0.02, 5, 0);
  CHECK_NOTHROW(spec.validate());
  spec.informative = {3, 3};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.informative = {8};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = emoattr::testing::planted_spec(8, 2, 1, 0.02, 5, 0);
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = emoattr::testing::planted_spec(8, 2, 4, 0.02, 5, 0);
  spec.amplitude = 0.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("landmark_separation needs both classes") {
  Dataset ds = small_dataset();
  CHECK_THROWS_AS(landmark_separation(ds, EmotionLabel::Disgust),
                  ArgumentError);  // no positives
  for (auto& s : ds.samples) s.label = EmotionLabel::Disgust;
  CHECK_THROWS_AS(landmark_separation(ds, EmotionLabel::Disgust),
                  ArgumentError);  // no negatives
}
