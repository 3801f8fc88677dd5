#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emoattr/attribution.hpp"
#include "emoattr/selection.hpp"
#include "emoattr/training.hpp"

namespace emoattr {

// Shortest exact decimal form (17 significant digits), so CSV round-trips
// reproduce the double bit-for-bit.
std::string format_value(double v);

// "mean±std" with three decimals, e.g. "0.974±0.020".
std::string format_mean_std(double mean, double stddev);

// landmark,score
void export_mask_csv(const AttributionMask& mask, const std::string& path);

// rank,landmark,score
void export_ranking_csv(const LandmarkRanking& ranking, const std::string& path);

// frame,coordinate,landmark,value
void export_attribution_csv(const AttributionTensor& a, const std::string& path);

// alpha,probability
void export_alpha_csv(const AlphaCurve& curve, const std::string& path);

struct SeedHistory {
  std::uint64_t seed = 0;
  TrainHistory history;
};

// seed,epoch,train_loss,val_acc
void export_history_csv(const std::vector<SeedHistory>& runs,
                        const std::string& path);

// rank,conv_filters,lstm_units,fc1_neurons,mean_val_acc,trainable_params,failures
void export_leaderboard_csv(const GridResult& result, const std::string& path);

// One header row "emotion,<k>,<k>,..." and one row of mean±std cells in the
// report's row order (full size first, then the ladder).
void export_report_csv(const SelectionReport& report, const std::string& path);

// Inverse of export_mask_csv: reads a "landmark,score" table back into a
// mask. Landmark ids must form 0..L-1 (any order, no gaps or repeats).
AttributionMask load_mask_csv(const std::string& path);

// First frame of a sample as a (2,L) coordinate matrix, for plotting.
Tensor frame_of(const VideoSample& sample, std::size_t frame = 0);

// Deterministic SVG scatter of all landmarks at the reference coordinates,
// with the top-k scored landmarks circled.
void export_landmark_plot(const AttributionMask& mask,
                          const Tensor& reference_frame, std::size_t top_k,
                          const std::string& path);

}  // namespace emoattr
