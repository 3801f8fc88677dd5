#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>

#include "emoattr/labels.hpp"
#include "emoattr/ops.hpp"
#include "emoattr/params.hpp"
#include "emoattr/rng.hpp"
#include "emoattr/tape.hpp"
#include "emoattr/tensor.hpp"

namespace emoattr {

// Architecture knobs for one binary classifier. A frame is a 2xL image of
// landmark coordinates; the conv kernel must fit inside it.
struct ModelConfig {
  std::size_t conv_filters = 8;    // F: feature maps out of the conv layer
  std::size_t lstm_units = 8;      // Q: recurrent state width
  std::size_t fc1_neurons = 16;    // R: first fully connected layer
  std::size_t kernel_rows = 2;     // kh, spans the two coordinate rows
  std::size_t kernel_cols = 3;     // kw, spans adjacent landmarks
  double dropout_rate = 0.5;
  bool randomized_conv = false;    // freeze conv kernels at their random init
  std::size_t num_landmarks = 0;   // L
  std::size_t num_frames = 0;      // P
  double bn_momentum = 0.99;
  double bn_eps = 1e-3;

  void validate() const;

  std::size_t conv_out_rows() const { return 2 - kernel_rows + 1; }
  std::size_t conv_out_cols() const { return num_landmarks - kernel_cols + 1; }
  // Flattened per-frame feature vector fed to the LSTM.
  std::size_t frame_features() const {
    return conv_out_rows() * conv_out_cols() * conv_filters;
  }
};

struct EmotionModel {
  ModelConfig config;
  EmotionLabel target = EmotionLabel::Anger;
  std::uint64_t seed = 0;
  ParameterStore params;
  BatchNormState bn_state{1};
};

// Builds the layer stack conv -> relu -> batch norm -> LSTM -> dropout ->
// FC1 -> FC2 -> softmax with fan-scaled uniform weight init drawn from the
// seed. With randomized_conv the conv kernels and bias are non-trainable.
EmotionModel build_model(const ModelConfig& config, EmotionLabel target,
                         std::uint64_t seed);

// A tape-recorded forward pass over a batch. The input leaf carries the raw
// batch tensor, so Tape::backward exposes the gradient with respect to it.
struct GraphResult {
  Var input;                               // leaf, shape of the given batch
  Var probs;                               // (B,) positive-class probability
  Var softmax;                             // (B,2) both class components
  std::map<std::string, NodeId> param_nodes;
};

// Inference graph: running batch-norm stats, dropout disabled. `batch` is
// (B,P,2,L,1), or a single (P,2,L,1) sample treated as B = 1.
GraphResult inference_graph(Tape& tape, const EmotionModel& model,
                            const Tensor& batch);

// Training graph: batch statistics (running stats updated in place on the
// model) and active dropout driven by `dropout_rng`.
GraphResult training_graph(Tape& tape, EmotionModel& model, const Tensor& batch,
                           Rng& dropout_rng);

// Positive-class probability for one sample, inference mode.
double forward(const EmotionModel& model, const Tensor& sample);

struct ForwardGradient {
  double probability;
  Tensor gradient;  // same shape as the sample
};

// F(x) together with dF/dx, inference mode.
ForwardGradient input_gradient(const EmotionModel& model, const Tensor& sample);

// (trainable, frozen) element counts over the parameter store.
std::pair<std::size_t, std::size_t> parameter_count(const EmotionModel& model);

// JSON checkpoint holding config, target, seed, parameters and running
// batch-norm stats; loads back bit-identically.
void save_model(const EmotionModel& model, const std::string& path);
EmotionModel load_model(const std::string& path);

}  // namespace emoattr
