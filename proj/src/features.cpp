// Copyright 2026 The sofi authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sofi/features.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

#include "sofi/allpole.hpp"
#include "sofi/formant.hpp"
#include "sofi/util.hpp"

namespace sofi {

MatrixXd FeatureTrack::to_matrix() const {
  const Index m = frames();
  MatrixXd out(m, 9);
  out.col(0) = log_f0;
  out.col(1) = voicing;
  out.block(0, 2, m, 4) = formants;
  out.col(6) = tilt;
  out.col(7) = centroid;
  out.col(8) = log_energy;
  return out;
}

F0Estimate estimate_f0(const AudioBuffer& audio, const StftConfig& config) {
  config.validate();
  audio.validate();
  const Index num_frames = config.num_frames(audio.size());
  const Index w = config.window_size;
  const double fs = audio.sample_rate;
  const Index lag_min = static_cast<Index>(std::floor(fs / kF0MaxHz));
  const Index lag_max = std::min<Index>(static_cast<Index>(std::ceil(fs / kF0MinHz)), w - 2);
  if (lag_min < 1 || lag_min >= lag_max)
    throw std::invalid_argument("estimate_f0: window too short for the F0 search band");

  F0Estimate out;
  out.f0 = VectorXd::Zero(num_frames);
  out.voicing = VectorXd::Zero(num_frames);

  ArrayXd ncc(lag_max + 2);
  for (Index m = 0; m < num_frames; ++m) {
    ArrayXd frame = extract_frame(audio.samples, config, m);
    frame -= frame.mean();
    const double rms = std::sqrt(frame.square().mean());
    if (rms < 1e-5) continue;

    // Prefix sums of squares for the per-lag normalization terms.
    ArrayXd sq_prefix(w + 1);
    sq_prefix(0) = 0.0;
    for (Index t = 0; t < w; ++t) sq_prefix(t + 1) = sq_prefix(t) + frame(t) * frame(t);

    ncc.setZero();
    for (Index lag = lag_min - 1; lag <= lag_max + 1 && lag < w; ++lag) {
      const Index n = w - lag;
      const double cross = (frame.head(n) * frame.tail(n)).sum();
      const double e0 = sq_prefix(n);
      const double e1 = sq_prefix(w) - sq_prefix(lag);
      const double denom = std::sqrt(e0 * e1);
      ncc(lag) = denom > 0.0 ? cross / denom : 0.0;
    }

    double best = 0.0;
    for (Index lag = lag_min; lag <= lag_max; ++lag) best = std::max(best, ncc(lag));
    if (best < kVoicingThreshold) continue;

    // Shortest strong local peak wins, so harmonics of the period do not
    // drag the estimate an octave down.
    Index peak = 0;
    const double accept = std::max(kVoicingThreshold, 0.87 * best);
    for (Index lag = lag_min; lag <= lag_max; ++lag) {
      if (ncc(lag) >= accept && ncc(lag) >= ncc(lag - 1) && ncc(lag) >= ncc(lag + 1)) {
        peak = lag;
        break;
      }
    }
    if (peak == 0) continue;

    double refined = static_cast<double>(peak);
    const double denom = ncc(peak - 1) - 2.0 * ncc(peak) + ncc(peak + 1);
    if (denom < 0.0) {
      const double delta = 0.5 * (ncc(peak - 1) - ncc(peak + 1)) / denom;
      if (std::abs(delta) <= 0.5) refined += delta;
    }
    const double f0 = std::clamp(fs / refined, kF0MinHz, kF0MaxHz);
    out.f0(m) = f0;
    out.voicing(m) = 1.0;
  }
  return out;
}

VectorXd interpolate_log_f0(const VectorXd& f0, const VectorXd& voicing) {
  if (f0.size() != voicing.size())
    throw std::invalid_argument("interpolate_log_f0: length mismatch");
  const Index m = f0.size();
  if ((voicing.array() > 0.5).count() == 0)
    throw DataError("interpolate_log_f0: no voiced frames");

  VectorXd out(m);
  Index prev = -1;
  for (Index i = 0; i < m; ++i) {
    if (voicing(i) <= 0.5) continue;
    const double value = std::log(f0(i));
    if (prev < 0) {
      for (Index j = 0; j <= i; ++j) out(j) = value;
    } else {
      const double left = out(prev);
      for (Index j = prev + 1; j <= i; ++j) {
        const double t = static_cast<double>(j - prev) / static_cast<double>(i - prev);
        out(j) = (1.0 - t) * left + t * value;
      }
    }
    prev = i;
  }
  for (Index j = prev + 1; j < m; ++j) out(j) = out(prev);
  return out;
}

double spectral_tilt(const ArrayXd& frame) {
  const Index n = frame.size();
  const double r0 = frame.square().sum();
  if (r0 < kSilenceFloor) return 0.0;
  const double r1 = (frame.head(n - 1) * frame.tail(n - 1)).sum();
  return r1 / r0;
}

double spectral_centroid(const ArrayXd& magnitude, double sample_rate) {
  const Index n = magnitude.size();
  const Index half = n / 2;
  double weighted = 0.0, total = 0.0;
  for (Index k = 0; k <= half; ++k) {
    const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n);
    weighted += f * magnitude(k);
    total += magnitude(k);
  }
  return total > 0.0 ? weighted / total : 0.0;
}

double frame_energy(const ArrayXd& frame) { return std::log(frame.square().sum() + kEnergyFloor); }

FeatureTrack extract_features(const AudioBuffer& audio, const StftConfig& config) {
  const ComplexSpectrogram spec = stft(audio, config);
  const Index m = spec.frames();
  const ArrayXd window = make_window(config.window_kind, config.window_size);
  const double fs = audio.sample_rate;

  FeatureTrack track;
  track.sample_rate = audio.sample_rate;
  track.tilt.resize(m);
  track.centroid.resize(m);
  track.log_energy.resize(m);
  track.silent.assign(m, false);

  for (Index i = 0; i < m; ++i) {
    const ArrayXd frame = extract_frame(audio.samples, config, i) * window;
    track.silent[i] = frame.square().sum() < kSilenceFloor;
    track.tilt(i) = spectral_tilt(frame);
    track.centroid(i) = spectral_centroid(spec.data.row(i).cwiseAbs().transpose().array(), fs);
    track.log_energy(i) = frame_energy(frame);
  }

  const F0Estimate f0 = estimate_f0(audio, config);
  track.voicing = f0.voicing;
  if ((f0.voicing.array() > 0.5).count() > 0) {
    track.log_f0 = interpolate_log_f0(f0.f0, f0.voicing);
  } else {
    // All-unvoiced input: hold the geometric center of the search band.
    track.log_f0 = VectorXd::Constant(m, std::log(std::sqrt(kF0MinHz * kF0MaxHz)));
  }

  try {
    const FormantTrack formants = extract_formant_track(audio, config);
    track.formants = formants.frequency;
  } catch (const DataError&) {
    // Silent signal: neutral schwa-like slots, frames stay flagged.
    track.formants.resize(m, 4);
    for (Index s = 0; s < 4; ++s)
      track.formants.col(s).setConstant((static_cast<double>(s) + 0.5) * 1000.0);
  }
  return track;
}

void NormalizationSpec::validate() const {
  if (min_values.size() != 9 || max_values.size() != 9)
    throw std::invalid_argument("NormalizationSpec: expected 9 features");
  for (Index i = 0; i < 9; ++i) {
    if (!(min_values(i) < max_values(i)))
      throw DataError(std::string("NormalizationSpec: degenerate range for feature '") +
                      kFeatureNames[static_cast<size_t>(i)] + "' (min == max)");
  }
}

MatrixXd normalize(const MatrixXd& features, const NormalizationSpec& spec) {
  spec.validate();
  if (features.cols() != 9) throw std::invalid_argument("normalize: expected 9 feature columns");
  MatrixXd out(features.rows(), 9);
  for (Index c = 0; c < 9; ++c) {
    const double lo = spec.min_values(c), hi = spec.max_values(c);
    out.col(c) = (2.0 * (features.col(c).array() - lo) / (hi - lo) - 1.0).matrix();
  }
  return out;
}

MatrixXd denormalize(const MatrixXd& features, const NormalizationSpec& spec) {
  spec.validate();
  if (features.cols() != 9) throw std::invalid_argument("denormalize: expected 9 feature columns");
  MatrixXd out(features.rows(), 9);
  for (Index c = 0; c < 9; ++c) {
    const double lo = spec.min_values(c), hi = spec.max_values(c);
    out.col(c) = ((features.col(c).array() + 1.0) * 0.5 * (hi - lo) + lo).matrix();
  }
  return out;
}

namespace {

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  return out;
}

nlohmann::ordered_json norm_to_json(const NormalizationSpec& spec) {
  nlohmann::ordered_json features = nlohmann::ordered_json::array();
  for (Index i = 0; i < 9; ++i) {
    features.push_back({{"name", kFeatureNames[static_cast<size_t>(i)]},
                        {"min", spec.min_values(i)},
                        {"max", spec.max_values(i)}});
  }
  return nlohmann::ordered_json{{"features", features}};
}

}  // namespace

void write_features_csv(const std::string& path, const FeatureTrack& track) {
  std::ofstream out = open_output(path);
  out << "frame";
  for (const char* name : kFeatureNames) out << ',' << name;
  out << '\n';
  const MatrixXd data = track.to_matrix();
  out.precision(12);
  for (Index i = 0; i < data.rows(); ++i) {
    out << i;
    for (Index c = 0; c < 9; ++c) out << ',' << data(i, c);
    out << '\n';
  }
}

void write_features_json(const std::string& path, const FeatureTrack& track,
                         const StftConfig& config, const NormalizationSpec* norm) {
  nlohmann::ordered_json doc;
  doc["sample_rate"] = track.sample_rate;
  doc["hop_size"] = config.hop_size;
  doc["window_size"] = config.window_size;
  doc["fft_size"] = config.fft_size;
  doc["num_frames"] = track.frames();
  doc["columns"] = kFeatureNames;
  if (norm != nullptr) doc["normalization"] = norm_to_json(*norm);
  const MatrixXd data = track.to_matrix();
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (Index i = 0; i < data.rows(); ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (Index c = 0; c < 9; ++c) row.push_back(data(i, c));
    rows.push_back(std::move(row));
  }
  doc["frames"] = std::move(rows);
  std::ofstream out = open_output(path);
  out << doc.dump(2) << '\n';
}

void write_normalization_json(const std::string& path, const NormalizationSpec& spec) {
  spec.validate();
  std::ofstream out = open_output(path);
  out << norm_to_json(spec).dump(2) << '\n';
}

NormalizationSpec read_normalization_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open normalization spec: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed normalization spec " + path + ": " + e.what());
  }
  NormalizationSpec spec;
  spec.min_values.resize(9);
  spec.max_values.resize(9);
  const auto& features = doc.at("features");
  if (features.size() != 9) throw DataError("normalization spec must list 9 features");
  for (Index i = 0; i < 9; ++i) {
    const auto& f = features[static_cast<size_t>(i)];
    if (f.at("name") != kFeatureNames[static_cast<size_t>(i)])
      throw DataError("normalization spec feature order mismatch at '" +
                      f.at("name").get<std::string>() + "'");
    spec.min_values(i) = f.at("min").get<double>();
    spec.max_values(i) = f.at("max").get<double>();
  }
  spec.validate();
  return spec;
}

}  // namespace sofi
