#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "emoattr/attribution.hpp"
#include "emoattr/dataset.hpp"
#include "emoattr/model.hpp"
#include "emoattr/rng.hpp"
#include "emoattr/training.hpp"

namespace emoattr::testing {

// Unique scratch directory, removed when the test object goes out of scope.
class TempDir {
 public:
  TempDir() {
    static std::atomic<unsigned> counter{0};
    const auto stamp =
        std::to_string(
            std::hash<std::string>{}(std::filesystem::current_path().string())) +
        "-" + std::to_string(counter++);
    path_ = std::filesystem::temp_directory_path() / ("emoattr-test-" + stamp);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str(const std::string& leaf = "") const {
    return leaf.empty() ? path_.string() : (path_ / leaf).string();
  }

 private:
  std::filesystem::path path_;
};

// F(x) = bias + sum_i w_i x_i. Integrated gradients have the closed form
// w_i * (x_i - x'_i) for every step count, which makes this the exactness
// oracle for the Riemann sum.
class LinearScore : public ScoreFunction {
 public:
  LinearScore(Tensor weights, double bias)
      : weights_(std::move(weights)), bias_(bias) {}

  double score(const Tensor& x) const override {
    double s = bias_;
    for (std::size_t i = 0; i < x.size(); ++i) s += weights_[i] * x[i];
    return s;
  }
  ForwardGradient score_with_gradient(const Tensor& x) const override {
    return {score(x), weights_.reshaped(x.shape())};
  }

 private:
  Tensor weights_;
  double bias_;
};

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng,
                            double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Informative landmarks spread evenly over [0, L).
inline std::vector<std::size_t> spread_landmarks(std::size_t count,
                                                 std::size_t num_landmarks) {
  std::vector<std::size_t> s;
  for (std::size_t i = 0; i < count; ++i) {
    s.push_back(i * num_landmarks / count);
  }
  return s;
}

inline SyntheticSpec planted_spec(std::size_t num_landmarks,
                                  std::size_t informative,
                                  std::size_t num_frames, double noise_sigma,
                                  std::size_t samples_per_class,
                                  std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_landmarks = num_landmarks;
  spec.num_frames = num_frames;
  spec.samples_per_class = samples_per_class;
  spec.informative = spread_landmarks(informative, num_landmarks);
  spec.noise_sigma = noise_sigma;
  spec.seed = seed;
  return spec;
}

// Smallest config that still exercises every layer.
inline ModelConfig tiny_config(std::size_t num_landmarks,
                               std::size_t num_frames) {
  ModelConfig config;
  config.conv_filters = 2;
  config.lstm_units = 3;
  config.fc1_neurons = 4;
  config.dropout_rate = 0.25;
  // Short test runs take only a handful of optimizer steps; the default
  // running-stat momentum of 0.99 would leave the inference-time batch norm
  // statistics stuck near their initial values.
  config.bn_momentum = 0.9;
  config.num_landmarks = num_landmarks;
  config.num_frames = num_frames;
  return config;
}

}  // namespace emoattr::testing
