#pragma once

#include <string>
#include <utility>
#include <vector>

#include "emoattr/model.hpp"
#include "emoattr/tensor.hpp"

namespace emoattr {

struct IGConfig {
  std::size_t steps = 50;          // m, the Riemann-sum resolution
  bool include_alpha_zero = true;  // whether alpha curves start at the baseline
};

// The scalar function F being attributed: a score and its input gradient.
class ScoreFunction {
 public:
  virtual ~ScoreFunction() = default;
  virtual double score(const Tensor& x) const = 0;
  virtual ForwardGradient score_with_gradient(const Tensor& x) const = 0;
};

// F = positive-class probability of a trained classifier, inference mode.
class ModelScore : public ScoreFunction {
 public:
  explicit ModelScore(const EmotionModel& model) : model_(&model) {}
  double score(const Tensor& x) const override { return forward(*model_, x); }
  ForwardGradient score_with_gradient(const Tensor& x) const override {
    return input_gradient(*model_, x);
  }

 private:
  const EmotionModel* model_;
};

// Fixed score everywhere, zero gradient. Exercises tie rules and degenerate
// paths without a trained model.
class ConstantScore : public ScoreFunction {
 public:
  explicit ConstantScore(double value) : value_(value) {}
  double score(const Tensor&) const override { return value_; }
  ForwardGradient score_with_gradient(const Tensor& x) const override {
    return {value_, Tensor(x.shape())};
  }

 private:
  double value_;
};

// Per-feature attributions for one (input, baseline) pair.
struct AttributionTensor {
  Tensor values;  // same shape as the attributed input
  std::string sample_id;
  std::string baseline_id;
  std::size_t steps = 0;
};

// Per-landmark importance: absolute attributions summed over frames and both
// coordinate channels.
struct AttributionMask {
  std::vector<double> scores;
};

struct AlphaCurve {
  std::vector<std::pair<double, double>> points;  // (alpha, score), alpha ascending
};

// The m points x' + (k/m)(x - x') for k = 1..m; the last equals the input
// exactly.
std::vector<Tensor> interpolate_path(const Tensor& baseline, const Tensor& input,
                                     std::size_t m);

// IG_i = (x_i - x'_i)/m * sum over k of dF/dx_i at the k-th path point; one
// backward pass per step.
AttributionTensor integrated_gradients(const ScoreFunction& f,
                                       const Tensor& input,
                                       const Tensor& baseline,
                                       const IGConfig& config = {});
AttributionTensor integrated_gradients(const EmotionModel& model,
                                       const Tensor& input,
                                       const Tensor& baseline,
                                       const IGConfig& config = {});

// |sum of attributions - (F(input) - F(baseline))|.
double completeness_gap(const ScoreFunction& f, const Tensor& input,
                        const Tensor& baseline,
                        const AttributionTensor& attributions);
double completeness_gap(const EmotionModel& model, const Tensor& input,
                        const Tensor& baseline,
                        const AttributionTensor& attributions);

// Requires a (P,2,L,1) attribution tensor.
AttributionMask attribution_mask(const AttributionTensor& a);

// Same reduction over a single coordinate channel (0 = x, 1 = y).
AttributionMask attribution_mask_coord(const AttributionTensor& a,
                                       std::size_t coord);

// F evaluated along the interpolation path, at alpha = 0 (optional), 1/m,
// ..., 1.
AlphaCurve alpha_curve(const ScoreFunction& f, const Tensor& input,
                       const Tensor& baseline, std::size_t m,
                       bool include_alpha_zero = true);
AlphaCurve alpha_curve(const EmotionModel& model, const Tensor& input,
                       const Tensor& baseline, std::size_t m,
                       bool include_alpha_zero = true);

}  // namespace emoattr
