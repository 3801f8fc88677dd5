#include "emoattr/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>
#include <sstream>

#include "json.hpp"

#include "emoattr/error.hpp"
#include "emoattr/fsio.hpp"
#include "emoattr/rng.hpp"

namespace emoattr {

namespace {

constexpr double kCoordTol = 1e-6;
constexpr char kLmkMagic[4] = {'L', 'M', 'K', 'D'};
constexpr std::uint32_t kLmkVersion = 1;

void check_coords(const Tensor& frames, const std::string& sample_id) {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i] < -kCoordTol || frames[i] > 1.0 + kCoordTol) {
      throw ValidationError("sample '" + sample_id + "': coordinate " +
                            std::to_string(frames[i]) +
                            " lies outside [0,1]");
    }
  }
}

}  // namespace

void Dataset::validate() const {
  if (!landmark_map.empty() && landmark_map.size() != num_landmarks) {
    throw ValidationError("landmark_map has " +
                          std::to_string(landmark_map.size()) +
                          " entries for " + std::to_string(num_landmarks) +
                          " landmarks");
  }
  std::set<std::string> ids;
  for (const VideoSample& s : samples) {
    if (!ids.insert(s.id).second) {
      throw ValidationError("duplicate sample id '" + s.id + "'");
    }
    const auto& shape = s.frames.shape();
    if (shape.size() != 3 || shape[0] != num_frames || shape[1] != 2 ||
        shape[2] != num_landmarks) {
      throw ValidationError("sample '" + s.id + "': frames shape " +
                            shape_str(shape) + " does not match (P,2,L) = (" +
                            std::to_string(num_frames) + ", 2, " +
                            std::to_string(num_landmarks) + ")");
    }
    check_coords(s.frames, s.id);
  }
}

std::vector<std::size_t> identity_landmark_map(std::size_t num_landmarks) {
  std::vector<std::size_t> map(num_landmarks);
  for (std::size_t i = 0; i < num_landmarks; ++i) map[i] = i;
  return map;
}

Tensor sample_input(const VideoSample& sample) {
  const auto& s = sample.frames.shape();
  if (s.size() != 3) {
    throw ShapeError("sample '" + sample.id + "' frames must have rank 3, got " +
                     shape_str(s));
  }
  return sample.frames.reshaped({s[0], s[1], s[2], 1});
}

double binary_label(const VideoSample& sample, EmotionLabel target) {
  return sample.label == target ? 1.0 : 0.0;
}

Tensor make_batch(const Dataset& dataset, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ArgumentError("make_batch: empty index list");
  const std::size_t P = dataset.num_frames;
  const std::size_t L = dataset.num_landmarks;
  const std::size_t per = P * 2 * L;
  Tensor batch({indices.size(), P, 2, L, 1});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= dataset.samples.size()) {
      throw ArgumentError("make_batch: index " + std::to_string(indices[b]) +
                          " out of range");
    }
    const Tensor& frames = dataset.samples[indices[b]].frames;
    for (std::size_t i = 0; i < per; ++i) batch[b * per + i] = frames[i];
  }
  return batch;
}

// ============================================================================
// Payload files
// ============================================================================

namespace {

template <typename T>
void append_raw(std::string& buf, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T read_raw(const std::string& buf, std::size_t& offset) {
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

std::string encode_lmk(const Tensor& frames, std::size_t P, std::size_t L) {
  std::string buf;
  buf.reserve(16 + frames.size() * sizeof(double));
  buf.append(kLmkMagic, 4);
  append_raw(buf, kLmkVersion);
  append_raw(buf, static_cast<std::uint32_t>(P));
  append_raw(buf, static_cast<std::uint32_t>(L));
  for (std::size_t i = 0; i < frames.size(); ++i) append_raw(buf, frames[i]);
  return buf;
}

Tensor decode_lmk(const std::string& buf, const std::string& path) {
  if (buf.size() < 16 || std::memcmp(buf.data(), kLmkMagic, 4) != 0) {
    throw IoError("'" + path + "' is not a landmark payload (bad magic)");
  }
  std::size_t offset = 4;
  const auto version = read_raw<std::uint32_t>(buf, offset);
  if (version != kLmkVersion) {
    throw IoError("'" + path + "': unsupported payload version " +
                  std::to_string(version));
  }
  const auto P = read_raw<std::uint32_t>(buf, offset);
  const auto L = read_raw<std::uint32_t>(buf, offset);
  const std::size_t expect = static_cast<std::size_t>(P) * 2 * L;
  if (buf.size() != 16 + expect * sizeof(double)) {
    throw IoError("'" + path + "': payload size does not match header (P=" +
                  std::to_string(P) + ", L=" + std::to_string(L) + ")");
  }
  Tensor frames({P, std::size_t{2}, L});
  for (std::size_t i = 0; i < expect; ++i) {
    frames[i] = read_raw<double>(buf, offset);
  }
  return frames;
}

Tensor decode_csv_frames(const std::string& text, const std::string& path) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError("'" + path + "': cannot parse '" + cell + "' as a number");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("'" + path + "': no frame rows");
  const std::size_t width = rows[0].size();
  if (width == 0 || width % 2 != 0) {
    throw IoError("'" + path + "': rows must hold 2*L values, got " +
                  std::to_string(width));
  }
  const std::size_t L = width / 2;
  const std::size_t P = rows.size();
  Tensor frames({P, std::size_t{2}, L});
  for (std::size_t p = 0; p < P; ++p) {
    if (rows[p].size() != width) {
      throw IoError("'" + path + "': row " + std::to_string(p) +
                    " has " + std::to_string(rows[p].size()) +
                    " values, expected " + std::to_string(width));
    }
    for (std::size_t i = 0; i < width; ++i) frames[p * width + i] = rows[p][i];
  }
  return frames;
}

std::string sanitize_id(const std::string& id) {
  std::string out;
  for (char c : id) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '.' ||
                          c == '_' || c == '-'
                      ? c
                      : '_');
  }
  return out;
}

}  // namespace

Dataset load_dataset(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("manifest '" + manifest_path + "' is not valid JSON: " +
                  e.what());
  }
  if (j.value("format", "") != "emoattr-dataset") {
    throw IoError("'" + manifest_path + "' is not a dataset manifest");
  }
  if (j.value("version", 0) != 1) {
    throw IoError("unsupported manifest version in '" + manifest_path + "'");
  }

  Dataset ds;
  ds.num_frames = j.at("num_frames").get<std::size_t>();
  ds.num_landmarks = j.at("num_landmarks").get<std::size_t>();
  ds.crop_size = j.value("crop_size", std::size_t{300});
  if (j.contains("landmark_map")) {
    ds.landmark_map = j.at("landmark_map").get<std::vector<std::size_t>>();
  } else {
    ds.landmark_map = identity_landmark_map(ds.num_landmarks);
  }

  const fs::path base = fs::path(manifest_path).parent_path();
  for (const auto& rec : j.at("samples")) {
    VideoSample s;
    s.id = rec.at("id").get<std::string>();
    s.label = emotion_from_string(rec.at("label").get<std::string>());
    s.augmented = rec.value("augmented", false);
    const std::string file = rec.at("file").get<std::string>();
    const fs::path payload = base / file;
    std::string raw;
    try {
      raw = read_text_file(payload.string());
    } catch (const IoError& e) {
      throw IoError("sample '" + s.id + "': " + e.what());
    }
    try {
      if (payload.extension() == ".csv") {
        s.frames = decode_csv_frames(raw, payload.string());
      } else {
        s.frames = decode_lmk(raw, payload.string());
      }
    } catch (const IoError& e) {
      throw IoError("sample '" + s.id + "': " + e.what());
    }
    ds.samples.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& dataset, const std::string& manifest_path) {
  namespace fs = std::filesystem;
  dataset.validate();
  const fs::path manifest(manifest_path);
  const std::string stem = manifest.stem().string();
  const fs::path data_dir = manifest.parent_path() / (stem + "_data");

  nlohmann::json j;
  j["format"] = "emoattr-dataset";
  j["version"] = 1;
  j["num_frames"] = dataset.num_frames;
  j["num_landmarks"] = dataset.num_landmarks;
  j["crop_size"] = dataset.crop_size;
  if (!dataset.landmark_map.empty()) j["landmark_map"] = dataset.landmark_map;
  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const VideoSample& s = dataset.samples[i];
    char index[16];
    std::snprintf(index, sizeof(index), "%06zu", i);
    const std::string file = std::string(index) + "_" + sanitize_id(s.id) + ".lmk";
    write_file_atomic((data_dir / file).string(),
                      encode_lmk(s.frames, dataset.num_frames,
                                 dataset.num_landmarks));
    nlohmann::json rec;
    rec["id"] = s.id;
    rec["label"] = to_string(s.label);
    rec["file"] = stem + "_data/" + file;
    rec["augmented"] = s.augmented;
    samples.push_back(rec);
  }
  j["samples"] = samples;
  write_file_atomic(manifest_path, j.dump(2) + "\n");
}

Tensor normalize_coords(const Tensor& raw, double crop_size) {
  if (crop_size <= 0.0) {
    throw ValidationError("crop size must be positive, got " +
                          std::to_string(crop_size));
  }
  Tensor out(raw.shape());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] < 0.0 || raw[i] > crop_size) {
      throw ValidationError("raw coordinate " + std::to_string(raw[i]) +
                            " lies outside [0, " + std::to_string(crop_size) +
                            "]");
    }
    out[i] = raw[i] / crop_size;
  }
  return out;
}

VideoSample flip_augment(const VideoSample& sample, FlipAxis axis) {
  const auto& shape = sample.frames.shape();
  if (shape.size() != 3 || shape[1] != 2) {
    throw ShapeError("flip_augment expects (P,2,L) frames, got " +
                     shape_str(shape));
  }
  check_coords(sample.frames, sample.id);
  const std::size_t P = shape[0];
  const std::size_t L = shape[2];
  const std::size_t row = axis == FlipAxis::X ? 0 : 1;
  VideoSample out = sample;
  out.id = sample.id + "-flip";
  out.augmented = true;
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t n = 0; n < L; ++n) {
      double& v = out.frames[(p * 2 + row) * L + n];
      v = std::clamp(1.0 - v, 0.0, 1.0);
    }
  }
  return out;
}

Dataset augment_dataset(const Dataset& dataset, FlipAxis axis) {
  Dataset out = dataset;
  out.samples.reserve(dataset.samples.size() * 2);
  for (const VideoSample& s : dataset.samples) {
    out.samples.push_back(flip_augment(s, axis));
  }
  return out;
}

// ============================================================================
// Synthetic planted-signal data
// ============================================================================

void SyntheticSpec::validate() const {
  if (num_landmarks == 0) throw ConfigError("num_landmarks must be positive");
  if (num_frames < 2) {
    throw ConfigError("num_frames must be at least 2 so a drift can exist");
  }
  if (samples_per_class == 0) {
    throw ConfigError("samples_per_class must be positive");
  }
  if (amplitude <= 0.0) throw ConfigError("amplitude must be positive");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be non-negative");
  std::set<std::size_t> seen;
  for (std::size_t n : informative) {
    if (n >= num_landmarks) {
      throw ConfigError("informative landmark " + std::to_string(n) +
                        " out of range for L=" + std::to_string(num_landmarks));
    }
    if (!seen.insert(n).second) {
      throw ConfigError("informative landmark " + std::to_string(n) +
                        " listed twice");
    }
  }
}

Dataset generate_synthetic(const SyntheticSpec& spec,
                           std::vector<std::string>* warnings) {
  spec.validate();
  const std::size_t L = spec.num_landmarks;
  const std::size_t P = spec.num_frames;

  std::vector<bool> informative(L, false);
  for (std::size_t n : spec.informative) informative[n] = true;

  std::vector<EmotionLabel> complementary;
  for (EmotionLabel e : kAllEmotions) {
    if (e != spec.target) complementary.push_back(e);
  }

  // Base positions leave headroom for the drift so the signal survives the
  // [0,1] clamp; an oversized amplitude shrinks the headroom and trips the
  // warning below.
  const double base_low = 0.1;
  const double base_high = std::max(base_low + 0.05, 0.9 - spec.amplitude);

  Rng rng(mix_seed(spec.seed, 0x5EED));
  Dataset ds;
  ds.num_frames = P;
  ds.num_landmarks = L;
  ds.landmark_map = identity_landmark_map(L);

  double drift_sum = 0.0;
  std::size_t drift_count = 0;

  auto make_sample = [&](bool positive, std::size_t index) {
    VideoSample s;
    s.id = (positive ? "synth-pos-" : "synth-neg-") + std::to_string(index);
    s.label = positive ? spec.target
                       : complementary[index % complementary.size()];
    s.frames = Tensor({P, std::size_t{2}, L});
    for (std::size_t n = 0; n < L; ++n) {
      const double bx = rng.uniform(base_low, base_high);
      const double by = rng.uniform(base_low, base_high);
      for (std::size_t p = 0; p < P; ++p) {
        const double drift =
            positive && informative[n]
                ? spec.amplitude * static_cast<double>(p) /
                      static_cast<double>(P - 1)
                : 0.0;
        const double x = bx + drift + rng.normal(0.0, spec.noise_sigma);
        const double y = by + drift + rng.normal(0.0, spec.noise_sigma);
        s.frames[(p * 2 + 0) * L + n] = std::clamp(x, 0.0, 1.0);
        s.frames[(p * 2 + 1) * L + n] = std::clamp(y, 0.0, 1.0);
      }
      if (positive && informative[n]) {
        drift_sum += s.frames[((P - 1) * 2 + 0) * L + n] - s.frames[0 * L + n];
        drift_sum +=
            s.frames[((P - 1) * 2 + 1) * L + n] - s.frames[(0 * 2 + 1) * L + n];
        drift_count += 2;
      }
    }
    ds.samples.push_back(std::move(s));
  };

  for (std::size_t i = 0; i < spec.samples_per_class; ++i) make_sample(true, i);
  for (std::size_t i = 0; i < spec.samples_per_class; ++i) make_sample(false, i);

  if (warnings != nullptr && drift_count > 0) {
    const double realized = drift_sum / static_cast<double>(drift_count);
    if (realized < 0.5 * spec.amplitude) {
      warnings->push_back(
          "planted drift mostly erased by the [0,1] clamp: realized " +
          std::to_string(realized) + " of amplitude " +
          std::to_string(spec.amplitude));
    }
  }
  ds.validate();
  return ds;
}

std::vector<double> landmark_separation(const Dataset& dataset,
                                        EmotionLabel target) {
  const std::size_t L = dataset.num_landmarks;
  const std::size_t P = dataset.num_frames;
  std::vector<double> pos_drift(L, 0.0), neg_drift(L, 0.0);
  std::size_t pos_count = 0, neg_count = 0;
  for (const VideoSample& s : dataset.samples) {
    const bool positive = s.label == target;
    std::vector<double>& acc = positive ? pos_drift : neg_drift;
    (positive ? pos_count : neg_count) += 1;
    for (std::size_t n = 0; n < L; ++n) {
      const double dx =
          s.frames[((P - 1) * 2 + 0) * L + n] - s.frames[(0 * 2 + 0) * L + n];
      const double dy =
          s.frames[((P - 1) * 2 + 1) * L + n] - s.frames[(0 * 2 + 1) * L + n];
      acc[n] += 0.5 * (dx + dy);
    }
  }
  if (pos_count == 0 || neg_count == 0) {
    throw ArgumentError("landmark_separation requires samples of both classes");
  }
  std::vector<double> sep(L);
  for (std::size_t n = 0; n < L; ++n) {
    sep[n] = std::abs(pos_drift[n] / static_cast<double>(pos_count) -
                      neg_drift[n] / static_cast<double>(neg_count));
  }
  return sep;
}

}  // namespace emoattr
