#include "emoattr/model.hpp"

#include <cmath>
#include <vector>

#include "json.hpp"

#include "emoattr/error.hpp"
#include "emoattr/fsio.hpp"

namespace emoattr {

void ModelConfig::validate() const {
  if (num_landmarks == 0) throw ConfigError("num_landmarks must be positive");
  if (num_frames == 0) throw ConfigError("num_frames must be positive");
  if (conv_filters == 0) throw ConfigError("conv_filters must be positive");
  if (lstm_units == 0) throw ConfigError("lstm_units must be positive");
  if (fc1_neurons == 0) throw ConfigError("fc1_neurons must be positive");
  if (kernel_rows == 0 || kernel_rows > 2) {
    throw ConfigError("kernel_rows must be 1 or 2 (frame image has 2 rows), got " +
                      std::to_string(kernel_rows));
  }
  if (kernel_cols == 0 || kernel_cols > num_landmarks) {
    throw ConfigError("kernel_cols must lie in [1, " +
                      std::to_string(num_landmarks) + "], got " +
                      std::to_string(kernel_cols));
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ConfigError("dropout_rate must lie in [0, 1)");
  }
  if (bn_momentum < 0.0 || bn_momentum >= 1.0) {
    throw ConfigError("bn_momentum must lie in [0, 1)");
  }
  if (bn_eps <= 0.0) throw ConfigError("bn_eps must be positive");
}

namespace {

Tensor fan_scaled_uniform(Rng& rng, std::vector<std::size_t> shape,
                          std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

// Validates batch shape and [0,1] coordinate range; returns the batch size
// (a rank-4 single sample counts as 1).
std::size_t check_batch(const ModelConfig& cfg, const Tensor& batch) {
  const auto& s = batch.shape();
  const bool single = s.size() == 4 && s[0] == cfg.num_frames && s[1] == 2 &&
                      s[2] == cfg.num_landmarks && s[3] == 1;
  const bool batched = s.size() == 5 && s[1] == cfg.num_frames && s[2] == 2 &&
                       s[3] == cfg.num_landmarks && s[4] == 1;
  if (!single && !batched) {
    throw ShapeError("model input must be (P,2,L,1) or (B,P,2,L,1) with P=" +
                     std::to_string(cfg.num_frames) + ", L=" +
                     std::to_string(cfg.num_landmarks) + "; got " +
                     shape_str(s));
  }
  constexpr double kTol = 1e-6;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i] < -kTol || batch[i] > 1.0 + kTol) {
      throw ValidationError("input coordinate " + std::to_string(batch[i]) +
                            " at flat index " + std::to_string(i) +
                            " lies outside [0,1] (tolerance 1e-6)");
    }
  }
  return batched ? s[0] : 1;
}

GraphResult build_graph(Tape& tape, const EmotionModel& model,
                        BatchNormState& bn, const Tensor& batch, bool training,
                        Rng* dropout_rng) {
  const ModelConfig& cfg = model.config;
  cfg.validate();
  const std::size_t B = check_batch(cfg, batch);
  const std::size_t P = cfg.num_frames;
  const std::size_t L = cfg.num_landmarks;
  const std::size_t F = cfg.conv_filters;
  const std::size_t Q = cfg.lstm_units;
  const std::size_t Ho = cfg.conv_out_rows();
  const std::size_t Wo = cfg.conv_out_cols();
  const std::size_t D = cfg.frame_features();

  GraphResult r;
  r.input = tape.leaf(batch);
  std::map<std::string, Var> p;
  for (const auto& [name, entry] : model.params.entries()) {
    Var v = tape.leaf(entry.value);
    p.emplace(name, v);
    r.param_nodes[name] = v.id;
  }

  Var x = reshape(tape, r.input, {B * P, 2, L, 1});
  x = conv2d(tape, x, p.at("conv.kernels"), p.at("conv.bias"));
  x = relu(tape, x);
  x = reshape(tape, x, {B * P * Ho * Wo, F});
  x = batch_norm(tape, x, p.at("bn.gamma"), p.at("bn.beta"), bn, training,
                 cfg.bn_momentum, cfg.bn_eps);
  x = reshape(tape, x, {B, P, D});

  LstmWeights w{p.at("lstm.wx"), p.at("lstm.wh"), p.at("lstm.bias")};
  LstmState state{tape.leaf(Tensor({B, Q})), tape.leaf(Tensor({B, Q}))};
  for (std::size_t frame = 0; frame < P; ++frame) {
    state = lstm_step(tape, select_frame(tape, x, frame), state, w);
  }

  Var h = state.h;
  if (training) h = dropout(tape, h, cfg.dropout_rate, true, *dropout_rng);
  Var fc1 = relu(tape, dense(tape, h, p.at("fc1.weight"), p.at("fc1.bias")));
  Var logits = dense(tape, fc1, p.at("fc2.weight"), p.at("fc2.bias"));
  r.softmax = softmax_rows(tape, logits);
  r.probs = select_col(tape, r.softmax, 1);
  return r;
}

}  // namespace

EmotionModel build_model(const ModelConfig& config, EmotionLabel target,
                         std::uint64_t seed) {
  config.validate();
  const std::size_t F = config.conv_filters;
  const std::size_t Q = config.lstm_units;
  const std::size_t R = config.fc1_neurons;
  const std::size_t kh = config.kernel_rows;
  const std::size_t kw = config.kernel_cols;
  const std::size_t D = config.frame_features();

  EmotionModel model;
  model.config = config;
  model.target = target;
  model.seed = seed;
  model.bn_state = BatchNormState(F);

  Rng rng(mix_seed(seed, 0x11));
  const bool conv_trainable = !config.randomized_conv;
  // Draw order is fixed; same seed means bit-identical parameters.
  model.params.add("conv.kernels",
                   fan_scaled_uniform(rng, {kh, kw, 1, F}, kh * kw, kh * kw * F),
                   conv_trainable);
  model.params.add("conv.bias", Tensor({F}), conv_trainable);
  model.params.add("bn.gamma", Tensor::full({F}, 1.0), true);
  model.params.add("bn.beta", Tensor({F}), true);
  model.params.add("lstm.wx", fan_scaled_uniform(rng, {D, 4 * Q}, D, 4 * Q), true);
  model.params.add("lstm.wh", fan_scaled_uniform(rng, {Q, 4 * Q}, Q, 4 * Q), true);
  model.params.add("lstm.bias", Tensor({4 * Q}), true);
  model.params.add("fc1.weight", fan_scaled_uniform(rng, {Q, R}, Q, R), true);
  model.params.add("fc1.bias", Tensor({R}), true);
  model.params.add("fc2.weight", fan_scaled_uniform(rng, {R, 2}, R, 2), true);
  model.params.add("fc2.bias", Tensor({2}), true);
  return model;
}

GraphResult inference_graph(Tape& tape, const EmotionModel& model,
                            const Tensor& batch) {
  // The inference path only reads the running stats; a copy keeps the model
  // const.
  BatchNormState state = model.bn_state;
  return build_graph(tape, model, state, batch, false, nullptr);
}

GraphResult training_graph(Tape& tape, EmotionModel& model, const Tensor& batch,
                           Rng& dropout_rng) {
  return build_graph(tape, model, model.bn_state, batch, true, &dropout_rng);
}

double forward(const EmotionModel& model, const Tensor& sample) {
  if (sample.shape().size() != 4) {
    throw ShapeError("forward expects a single (P,2,L,1) sample, got shape " +
                     shape_str(sample.shape()));
  }
  Tape tape;
  GraphResult g = inference_graph(tape, model, sample);
  return g.probs.value()[0];
}

ForwardGradient input_gradient(const EmotionModel& model, const Tensor& sample) {
  if (sample.shape().size() != 4) {
    throw ShapeError("input_gradient expects a single (P,2,L,1) sample, got shape " +
                     shape_str(sample.shape()));
  }
  Tape tape;
  GraphResult g = inference_graph(tape, model, sample);
  std::vector<Tensor> grads = tape.backward(g.probs);
  return {g.probs.value()[0], grads[static_cast<std::size_t>(g.input.id)]};
}

std::pair<std::size_t, std::size_t> parameter_count(const EmotionModel& model) {
  // With everything trainable the first count is kh*kw*F + F (conv) + 2F
  // (batch norm) + 4Q(D+Q+1) (LSTM) + QR + R (FC1) + 2R + 2 (FC2), with
  // D = (3-kh)(L-kw+1)F; the randomized-conv variant moves the conv terms
  // into the frozen count.
  return {model.params.element_count(true), model.params.element_count(false)};
}

namespace {

using nlohmann::json;

json tensor_to_json(const Tensor& t) {
  json j;
  j["shape"] = t.shape();
  j["values"] = t.values();
  return j;
}

Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                j.at("values").get<std::vector<double>>());
}

}  // namespace

void save_model(const EmotionModel& model, const std::string& path) {
  json j;
  j["format"] = "emoattr-checkpoint";
  j["version"] = 1;
  j["target"] = to_string(model.target);
  j["seed"] = model.seed;
  json cfg;
  cfg["conv_filters"] = model.config.conv_filters;
  cfg["lstm_units"] = model.config.lstm_units;
  cfg["fc1_neurons"] = model.config.fc1_neurons;
  cfg["kernel_rows"] = model.config.kernel_rows;
  cfg["kernel_cols"] = model.config.kernel_cols;
  cfg["dropout_rate"] = model.config.dropout_rate;
  cfg["randomized_conv"] = model.config.randomized_conv;
  cfg["num_landmarks"] = model.config.num_landmarks;
  cfg["num_frames"] = model.config.num_frames;
  cfg["bn_momentum"] = model.config.bn_momentum;
  cfg["bn_eps"] = model.config.bn_eps;
  j["config"] = cfg;
  json params;
  for (const auto& [name, entry] : model.params.entries()) {
    json p = tensor_to_json(entry.value);
    p["trainable"] = entry.trainable;
    params[name] = p;
  }
  j["params"] = params;
  j["bn"] = {{"mean", model.bn_state.mean.values()},
             {"var", model.bn_state.var.values()}};
  write_file_atomic(path, j.dump(2) + "\n");
}

EmotionModel load_model(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw IoError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  if (j.value("format", "") != "emoattr-checkpoint") {
    throw IoError("'" + path + "' is not a model checkpoint");
  }
  if (j.value("version", 0) != 1) {
    throw IoError("unsupported checkpoint version in '" + path + "'");
  }
  EmotionModel model;
  const json& cfg = j.at("config");
  model.config.conv_filters = cfg.at("conv_filters").get<std::size_t>();
  model.config.lstm_units = cfg.at("lstm_units").get<std::size_t>();
  model.config.fc1_neurons = cfg.at("fc1_neurons").get<std::size_t>();
  model.config.kernel_rows = cfg.at("kernel_rows").get<std::size_t>();
  model.config.kernel_cols = cfg.at("kernel_cols").get<std::size_t>();
  model.config.dropout_rate = cfg.at("dropout_rate").get<double>();
  model.config.randomized_conv = cfg.at("randomized_conv").get<bool>();
  model.config.num_landmarks = cfg.at("num_landmarks").get<std::size_t>();
  model.config.num_frames = cfg.at("num_frames").get<std::size_t>();
  model.config.bn_momentum = cfg.at("bn_momentum").get<double>();
  model.config.bn_eps = cfg.at("bn_eps").get<double>();
  model.config.validate();
  model.target = emotion_from_string(j.at("target").get<std::string>());
  model.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& [name, p] : j.at("params").items()) {
    model.params.add(name, tensor_from_json(p), p.at("trainable").get<bool>());
  }
  model.bn_state = BatchNormState(model.config.conv_filters);
  model.bn_state.mean =
      Tensor({model.config.conv_filters}, j.at("bn").at("mean").get<std::vector<double>>());
  model.bn_state.var =
      Tensor({model.config.conv_filters}, j.at("bn").at("var").get<std::vector<double>>());
  return model;
}

}  // namespace emoattr
