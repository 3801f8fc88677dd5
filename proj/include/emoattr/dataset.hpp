#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emoattr/labels.hpp"
#include "emoattr/tensor.hpp"

namespace emoattr {

// One landmark video: P frames of L (x, y) coordinate pairs in [0,1].
struct VideoSample {
  std::string id;
  Tensor frames;  // (P, 2, L)
  EmotionLabel label = EmotionLabel::Anger;
  bool augmented = false;
};

struct Dataset {
  std::size_t num_frames = 0;     // P
  std::size_t num_landmarks = 0;  // L
  std::size_t crop_size = 300;    // pixel box the coordinates were scaled by
  std::vector<std::size_t> landmark_map;  // position -> original landmark id
  std::vector<VideoSample> samples;

  void validate() const;
};

// Identity map 0..L-1.
std::vector<std::size_t> identity_landmark_map(std::size_t num_landmarks);

// Sample frames with the trailing channel axis the model expects: (P,2,L,1).
Tensor sample_input(const VideoSample& sample);

// 1.0 when the sample carries the target label, else 0.0.
double binary_label(const VideoSample& sample, EmotionLabel target);

// Stacks the given samples into a (B,P,2,L,1) batch in index order.
Tensor make_batch(const Dataset& dataset, const std::vector<std::size_t>& indices);

// ----------------------------------------------------------------------------
// Persistence: a JSON manifest naming per-sample payload files. Payloads are
// either binary .lmk (16-byte header: "LMKD", u32 version, u32 P, u32 L, then
// P*2*L little-endian doubles) or a .csv alternative with one row per frame
// holding x_0..x_{L-1},y_0..y_{L-1}.
// ----------------------------------------------------------------------------

Dataset load_dataset(const std::string& manifest_path);

// Writes the manifest at `manifest_path` and sample payloads under a sibling
// "<stem>_data" directory.
void save_dataset(const Dataset& dataset, const std::string& manifest_path);

// Divides raw pixel coordinates (values in [0, crop_size]) by crop_size.
Tensor normalize_coords(const Tensor& raw, double crop_size);

enum class FlipAxis {
  X,  // mirror about the vertical axis: x -> 1 - x
  Y,  // upside-down: y -> 1 - y
};

VideoSample flip_augment(const VideoSample& sample, FlipAxis axis = FlipAxis::X);

// Appends a flipped copy of every sample; ids get a "-flip" suffix.
Dataset augment_dataset(const Dataset& dataset, FlipAxis axis = FlipAxis::X);

// ----------------------------------------------------------------------------
// Synthetic planted-signal data: positive samples drift the coordinates of
// the informative landmarks monotonically across frames; negatives do not.
// ----------------------------------------------------------------------------

struct SyntheticSpec {
  std::size_t num_landmarks = 64;   // L
  std::size_t num_frames = 8;       // P
  std::size_t samples_per_class = 120;
  std::vector<std::size_t> informative;  // the planted landmark set S
  double amplitude = 0.3;
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;
  EmotionLabel target = EmotionLabel::Surprise;

  void validate() const;
};

// Deterministic in all SyntheticSpec fields (including seed). Positives
// carry the target label; negatives cycle through the five complementary
// emotions. If the realized drift on informative coordinates falls well
// short of `amplitude` (clamping to [0,1] erased it), a warning is appended.
Dataset generate_synthetic(const SyntheticSpec& spec,
                           std::vector<std::string>* warnings = nullptr);

// Per-landmark class separation: |mean positive drift - mean negative drift|
// of last-frame-minus-first-frame coordinates. Planted landmarks score near
// the amplitude, the rest near zero.
std::vector<double> landmark_separation(const Dataset& dataset,
                                        EmotionLabel target);

}  // namespace emoattr
