// Copyright 2026 The sofi authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// The nine per-frame phonetic features: log F0, voicing flag, F1-F4,
// spectral tilt, spectral centroid and log frame energy, plus the affine
// [-1, 1] normalization used when feeding them to downstream consumers.

#ifndef SOFI_FEATURES_HPP
#define SOFI_FEATURES_HPP

#include <array>
#include <string>
#include <vector>

#include "sofi/stft.hpp"
#include "sofi/types.hpp"

namespace sofi {

inline constexpr double kF0MinHz = 75.0;
inline constexpr double kF0MaxHz = 500.0;
inline constexpr double kVoicingThreshold = 0.3;
inline constexpr double kEnergyFloor = 1e-10;

inline constexpr std::array<const char*, 9> kFeatureNames = {
    "log_f0", "voicing", "f1", "f2", "f3", "f4", "tilt", "centroid", "log_energy"};

/// Per-frame feature streams, frame-aligned with the STFT grid.
struct FeatureTrack {
  VectorXd log_f0;
  VectorXd voicing;
  MatrixXd formants;  // M x 4
  VectorXd tilt;
  VectorXd centroid;
  VectorXd log_energy;
  std::vector<bool> silent;
  int sample_rate = 22050;

  Index frames() const { return log_f0.size(); }

  /// M x 9 matrix in kFeatureNames column order.
  MatrixXd to_matrix() const;
};

struct F0Estimate {
  VectorXd f0;       // Hz where voiced, 0 elsewhere
  VectorXd voicing;  // 0 or 1
};

/// Normalized-autocorrelation pitch tracker over the 75-500 Hz band with
/// parabolic peak interpolation. Voicing requires both a normalized peak
/// above kVoicingThreshold and non-silent frame energy.
F0Estimate estimate_f0(const AudioBuffer& audio, const StftConfig& config);

/// Log F0 on voiced frames, linearly interpolated in the log domain across
/// unvoiced gaps, edges held. Throws DataError when no frame is voiced.
VectorXd interpolate_log_f0(const VectorXd& f0, const VectorXd& voicing);

/// First-order reflection coefficient r(1)/r(0) of a frame; 0 for silent
/// frames (energy below kSilenceFloor).
double spectral_tilt(const ArrayXd& frame);

/// Magnitude-weighted mean frequency over the one-sided bins (DC included)
/// of a full-length magnitude row; 0 when the spectrum is all zero.
double spectral_centroid(const ArrayXd& magnitude, double sample_rate);

/// log(sum s^2 + kEnergyFloor).
double frame_energy(const ArrayXd& frame);

/// All nine features for every frame of the STFT grid. Degenerate inputs
/// (silence, all-unvoiced) produce flagged frames with neutral fill values,
/// never NaN.
FeatureTrack extract_features(const AudioBuffer& audio, const StftConfig& config);

/// Per-feature min/max estimates backing the affine map to [-1, 1].
struct NormalizationSpec {
  VectorXd min_values;  // 9
  VectorXd max_values;  // 9

  void validate() const;
};

/// x -> 2 (x - min) / (max - min) - 1, per feature column. Out-of-range
/// inputs map outside [-1, 1]; no clamping.
MatrixXd normalize(const MatrixXd& features, const NormalizationSpec& spec);
MatrixXd denormalize(const MatrixXd& features, const NormalizationSpec& spec);

/// CSV serialization: header `frame,log_f0,voicing,f1,f2,f3,f4,tilt,centroid,log_energy`.
void write_features_csv(const std::string& path, const FeatureTrack& track);

/// JSON container with fs/hop/window metadata and the per-frame features;
/// includes the normalization spec when given.
void write_features_json(const std::string& path, const FeatureTrack& track,
                         const StftConfig& config, const NormalizationSpec* norm = nullptr);

void write_normalization_json(const std::string& path, const NormalizationSpec& spec);
NormalizationSpec read_normalization_json(const std::string& path);

}  // namespace sofi

#endif  // SOFI_FEATURES_HPP
