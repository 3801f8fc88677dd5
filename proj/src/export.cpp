#include "emoattr/export.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "emoattr/error.hpp"
#include "emoattr/fsio.hpp"

namespace emoattr {

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_mean_std(double mean, double stddev) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f±%.3f", mean, stddev);
  return buf;
}

void export_mask_csv(const AttributionMask& mask, const std::string& path) {
  std::ostringstream out;
  out << "landmark,score\n";
  for (std::size_t n = 0; n < mask.scores.size(); ++n) {
    out << n << ',' << format_value(mask.scores[n]) << '\n';
  }
  write_file_atomic(path, out.str());
}

void export_ranking_csv(const LandmarkRanking& ranking,
                        const std::string& path) {
  std::ostringstream out;
  out << "rank,landmark,score\n";
  for (std::size_t rank = 0; rank < ranking.order.size(); ++rank) {
    const std::size_t n = ranking.order[rank];
    out << rank << ',' << n << ','
        << format_value(ranking.source.mask.scores[n]) << '\n';
  }
  write_file_atomic(path, out.str());
}

void export_attribution_csv(const AttributionTensor& a,
                            const std::string& path) {
  const auto& shape = a.values.shape();
  if (shape.size() != 4 || shape[1] != 2 || shape[3] != 1) {
    throw ShapeError("attribution export expects a (P,2,L,1) tensor, got " +
                     shape_str(shape));
  }
  const std::size_t P = shape[0];
  const std::size_t L = shape[2];
  std::ostringstream out;
  out << "frame,coordinate,landmark,value\n";
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t n = 0; n < L; ++n) {
        out << p << ',' << (c == 0 ? 'x' : 'y') << ',' << n << ','
            << format_value(a.values[(p * 2 + c) * L + n]) << '\n';
      }
    }
  }
  write_file_atomic(path, out.str());
}

void export_alpha_csv(const AlphaCurve& curve, const std::string& path) {
  std::ostringstream out;
  out << "alpha,probability\n";
  for (const auto& [alpha, prob] : curve.points) {
    out << format_value(alpha) << ',' << format_value(prob) << '\n';
  }
  write_file_atomic(path, out.str());
}

void export_history_csv(const std::vector<SeedHistory>& runs,
                        const std::string& path) {
  std::ostringstream out;
  out << "seed,epoch,train_loss,val_acc\n";
  for (const SeedHistory& run : runs) {
    for (std::size_t e = 0; e < run.history.epochs.size(); ++e) {
      out << run.seed << ',' << e << ','
          << format_value(run.history.epochs[e].train_loss) << ','
          << format_value(run.history.epochs[e].val_accuracy) << '\n';
    }
  }
  write_file_atomic(path, out.str());
}

void export_leaderboard_csv(const GridResult& result, const std::string& path) {
  std::ostringstream out;
  out << "rank,conv_filters,lstm_units,fc1_neurons,mean_val_acc,"
         "trainable_params,failures\n";
  for (std::size_t i = 0; i < result.leaderboard.size(); ++i) {
    const GridCell& cell = result.leaderboard[i];
    out << i << ',' << cell.config.conv_filters << ','
        << cell.config.lstm_units << ',' << cell.config.fc1_neurons << ','
        << format_value(cell.mean_val_accuracy) << ',' << cell.trainable_params
        << ',' << cell.failures << '\n';
  }
  write_file_atomic(path, out.str());
}

void export_report_csv(const SelectionReport& report, const std::string& path) {
  std::ostringstream out;
  out << "emotion";
  for (const ReportRow& row : report.rows) out << ',' << row.k;
  out << '\n';
  if (!report.rows.empty()) {
    out << to_string(report.emotion);
    for (const ReportRow& row : report.rows) {
      if (row.failed || row.result.accuracies().empty()) {
        out << ",failed";
      } else {
        out << ',' << format_mean_std(row.result.mean(), row.result.stddev());
      }
    }
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

AttributionMask load_mask_csv(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "landmark,score") {
    throw IoError("mask csv " + path + ": expected 'landmark,score' header");
  }
  std::map<std::size_t, double> by_landmark;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw IoError("mask csv " + path + ": line " + std::to_string(line_no) +
                    " has no comma");
    }
    try {
      const std::size_t n = std::stoull(line.substr(0, comma));
      const double score = std::stod(line.substr(comma + 1));
      if (!by_landmark.emplace(n, score).second) {
        throw IoError("mask csv " + path + ": landmark " + std::to_string(n) +
                      " listed twice");
      }
    } catch (const IoError&) {
      throw;
    } catch (const std::exception&) {
      throw IoError("mask csv " + path + ": cannot parse line " +
                    std::to_string(line_no) + ": '" + line + "'");
    }
  }
  AttributionMask mask;
  mask.scores.resize(by_landmark.size());
  for (const auto& [n, score] : by_landmark) {
    if (n >= mask.scores.size()) {
      throw IoError("mask csv " + path + ": landmark ids must cover 0.." +
                    std::to_string(mask.scores.size() - 1) + ", got " +
                    std::to_string(n));
    }
    mask.scores[n] = score;
  }
  return mask;
}

Tensor frame_of(const VideoSample& sample, std::size_t frame) {
  const auto& shape = sample.frames.shape();
  if (shape.size() != 3 || frame >= shape[0]) {
    throw ArgumentError("sample '" + sample.id + "' has no frame " +
                        std::to_string(frame));
  }
  const std::size_t L = shape[2];
  Tensor out({std::size_t{2}, L});
  for (std::size_t i = 0; i < 2 * L; ++i) {
    out[i] = sample.frames[frame * 2 * L + i];
  }
  return out;
}

void export_landmark_plot(const AttributionMask& mask,
                          const Tensor& reference_frame, std::size_t top_k,
                          const std::string& path) {
  const auto& shape = reference_frame.shape();
  if (shape.size() != 2 || shape[0] != 2) {
    throw ShapeError("reference frame must be a (2,L) matrix, got " +
                     shape_str(shape));
  }
  const std::size_t L = shape[1];
  if (mask.scores.size() != L) {
    throw ArgumentError("mask covers " + std::to_string(mask.scores.size()) +
                        " landmarks, reference frame has " + std::to_string(L));
  }
  if (top_k > L) {
    throw ArgumentError("top_k = " + std::to_string(top_k) + " exceeds " +
                        std::to_string(L) + " landmarks");
  }

  std::vector<std::size_t> order(L);
  for (std::size_t i = 0; i < L; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&mask](std::size_t a, std::size_t b) {
    if (mask.scores[a] != mask.scores[b]) {
      return mask.scores[a] > mask.scores[b];
    }
    return a < b;
  });
  std::vector<bool> circled(L, false);
  for (std::size_t i = 0; i < top_k; ++i) circled[order[i]] = true;

  const double size = 600.0;
  const double margin = 20.0;
  auto px = [&](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", margin + v * size);
    return std::string(buf);
  };

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" "
         "height=\"640\" viewBox=\"0 0 640 640\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"640\" height=\"640\" fill=\"white\"/>\n";
  for (std::size_t n = 0; n < L; ++n) {
    out << "<circle cx=\"" << px(reference_frame[n]) << "\" cy=\""
        << px(reference_frame[L + n]) << "\" r=\"3\" fill=\"#555555\"/>\n";
  }
  for (std::size_t n = 0; n < L; ++n) {
    if (!circled[n]) continue;
    out << "<circle cx=\"" << px(reference_frame[n]) << "\" cy=\""
        << px(reference_frame[L + n])
        << "\" r=\"8\" fill=\"none\" stroke=\"#1f5fd0\" stroke-width=\"2\"/>\n";
  }
  out << "</svg>\n";
  write_file_atomic(path, out.str());
}

}  // namespace emoattr
