#include "emoattr/attribution.hpp"

#include <cmath>

#include "emoattr/error.hpp"

namespace emoattr {

namespace {

void check_pair(const Tensor& input, const Tensor& baseline) {
  if (!input.same_shape(baseline)) {
    throw ShapeError("input shape " + shape_str(input.shape()) +
                     " does not match baseline shape " +
                     shape_str(baseline.shape()));
  }
}

Tensor path_point(const Tensor& baseline, const Tensor& input, std::size_t k,
                  std::size_t m) {
  if (k == m) return input;  // exact, no floating-point residue
  const double alpha = static_cast<double>(k) / static_cast<double>(m);
  Tensor point(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    point[i] = baseline[i] + alpha * (input[i] - baseline[i]);
  }
  return point;
}

}  // namespace

std::vector<Tensor> interpolate_path(const Tensor& baseline, const Tensor& input,
                                     std::size_t m) {
  check_pair(input, baseline);
  if (m == 0) throw ConfigError("interpolate_path: m must be >= 1");
  std::vector<Tensor> path;
  path.reserve(m);
  for (std::size_t k = 1; k <= m; ++k) {
    path.push_back(path_point(baseline, input, k, m));
  }
  return path;
}

AttributionTensor integrated_gradients(const ScoreFunction& f,
                                       const Tensor& input,
                                       const Tensor& baseline,
                                       const IGConfig& config) {
  check_pair(input, baseline);
  if (config.steps == 0) throw ConfigError("integrated_gradients: m must be >= 1");
  const std::size_t m = config.steps;

  Tensor grad_sum(input.shape());
  for (std::size_t k = 1; k <= m; ++k) {
    ForwardGradient fg;
    try {
      fg = f.score_with_gradient(path_point(baseline, input, k, m));
    } catch (const NumericalError& e) {
      throw NumericalError("integrated_gradients step " + std::to_string(k) +
                           " of " + std::to_string(m) + ": " + e.what());
    }
    if (!fg.gradient.all_finite()) {
      throw NumericalError("integrated_gradients: non-finite gradient at step " +
                           std::to_string(k) + " of " + std::to_string(m));
    }
    for (std::size_t i = 0; i < grad_sum.size(); ++i) {
      grad_sum[i] += fg.gradient[i];
    }
  }

  AttributionTensor out;
  out.steps = m;
  out.values = Tensor(input.shape());
  const double m_inv = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < input.size(); ++i) {
    out.values[i] = (input[i] - baseline[i]) * m_inv * grad_sum[i];
  }
  return out;
}

AttributionTensor integrated_gradients(const EmotionModel& model,
                                       const Tensor& input,
                                       const Tensor& baseline,
                                       const IGConfig& config) {
  return integrated_gradients(ModelScore(model), input, baseline, config);
}

double completeness_gap(const ScoreFunction& f, const Tensor& input,
                        const Tensor& baseline,
                        const AttributionTensor& attributions) {
  check_pair(input, baseline);
  if (!attributions.values.same_shape(input)) {
    throw ShapeError("attribution shape " +
                     shape_str(attributions.values.shape()) +
                     " does not match input shape " + shape_str(input.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < attributions.values.size(); ++i) {
    total += attributions.values[i];
  }
  return std::abs(total - (f.score(input) - f.score(baseline)));
}

double completeness_gap(const EmotionModel& model, const Tensor& input,
                        const Tensor& baseline,
                        const AttributionTensor& attributions) {
  return completeness_gap(ModelScore(model), input, baseline, attributions);
}

namespace {

AttributionMask reduce_mask(const AttributionTensor& a, bool both,
                            std::size_t coord) {
  const auto& shape = a.values.shape();
  if (shape.size() != 4 || shape[1] != 2 || shape[3] != 1) {
    throw ShapeError("attribution_mask expects a (P,2,L,1) tensor, got " +
                     shape_str(shape));
  }
  const std::size_t P = shape[0];
  const std::size_t L = shape[2];
  AttributionMask mask;
  mask.scores.assign(L, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t j = 0; j < 2; ++j) {
      if (!both && j != coord) continue;
      for (std::size_t n = 0; n < L; ++n) {
        mask.scores[n] += std::abs(a.values[(p * 2 + j) * L + n]);
      }
    }
  }
  return mask;
}

}  // namespace

AttributionMask attribution_mask(const AttributionTensor& a) {
  return reduce_mask(a, true, 0);
}

AttributionMask attribution_mask_coord(const AttributionTensor& a,
                                       std::size_t coord) {
  if (coord > 1) {
    throw ArgumentError("coordinate channel must be 0 (x) or 1 (y), got " +
                        std::to_string(coord));
  }
  return reduce_mask(a, false, coord);
}

AlphaCurve alpha_curve(const ScoreFunction& f, const Tensor& input,
                       const Tensor& baseline, std::size_t m,
                       bool include_alpha_zero) {
  check_pair(input, baseline);
  if (m == 0) throw ConfigError("alpha_curve: m must be >= 1");
  AlphaCurve curve;
  if (include_alpha_zero) {
    curve.points.emplace_back(0.0, f.score(baseline));
  }
  for (std::size_t k = 1; k <= m; ++k) {
    const double alpha = static_cast<double>(k) / static_cast<double>(m);
    curve.points.emplace_back(alpha, f.score(path_point(baseline, input, k, m)));
  }
  return curve;
}

AlphaCurve alpha_curve(const EmotionModel& model, const Tensor& input,
                       const Tensor& baseline, std::size_t m,
                       bool include_alpha_zero) {
  return alpha_curve(ModelScore(model), input, baseline, m, include_alpha_zero);
}

}  // namespace emoattr
