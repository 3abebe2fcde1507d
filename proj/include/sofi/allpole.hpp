// Copyright 2026 The sofi authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Reflection-coefficient parameterization, Levinson recursions, all-pole
// envelope construction and STFT-domain filtering / inverse filtering.
//
// Two reflection-coefficient sign conventions appear in the literature. The
// lattice convention used by the frame set satisfies
//   a_i = [a_{i-1}, 0] + k_i * reverse([a_{i-1}, 0]),
// while Levinson-Durbin analysis reports PARCOR coefficients (normalized
// correlations), which are the negation: durbin a == levinson_forward(-parcor).

#ifndef SOFI_ALLPOLE_HPP
#define SOFI_ALLPOLE_HPP

#include <vector>

#include "sofi/stft.hpp"
#include "sofi/types.hpp"

namespace sofi {

/// |k| is clamped to this bound after tanh and during analysis.
inline constexpr double kReflectionLimit = 1.0 - 1e-7;

/// Frames whose zero-lag autocorrelation falls below this are treated as
/// silent and get an identity filter with a small fixed gain.
inline constexpr double kSilenceFloor = 1e-10;
inline constexpr double kSilentFrameGain = 1e-5;

/// Per-frame all-pole filter parameters. Rows are frames.
///   theta    M x P      unconstrained envelope parameters
///   k        M x P      reflection coefficients, |k| < 1
///   a        M x (P+1)  monic predictor polynomials, a(m, 0) == 1
///   log_gain M          log of the positive per-frame gain
struct AllPoleFrameSet {
  MatrixXd theta;
  MatrixXd k;
  MatrixXd a;
  VectorXd log_gain;

  Index frames() const { return k.rows(); }
  Index order() const { return k.cols(); }
  VectorXd gain() const { return log_gain.array().exp(); }

  /// Checks all structural invariants, including that `a` is the exact
  /// forward-Levinson image of `k`.
  void validate() const;
};

/// k = clamp(tanh(theta)), g = exp(log_gain). Throws on non-finite input.
void reparameterize(const MatrixXd& theta, const VectorXd& log_gain, MatrixXd& k_out,
                    VectorXd& gain_out);

/// Forward Levinson recursion, one frame: k (P) -> monic a (P+1).
VectorXd levinson_forward(const VectorXd& k);
/// All frames at once: k (M x P) -> a (M x (P+1)).
MatrixXd levinson_forward(const MatrixXd& k);

/// Inverse of the forward recursion. Throws NumericalError if the
/// polynomial is unstable (some |k_i| >= 1 emerges on the way down).
VectorXd levinson_backward(const VectorXd& a);
MatrixXd levinson_backward(const MatrixXd& a);

struct LevinsonDurbinResult {
  VectorXd a;          // monic prediction-error filter, length order+1
  VectorXd parcor;     // PARCOR reflection coefficients, length order
  double pred_err = 0; // final prediction error energy, r0 * prod(1 - k_i^2)
  bool clamped = false;
};

/// Levinson-Durbin analysis of an autocorrelation sequence r(0..P).
/// Emergent |k| >= kReflectionLimit is clamped and flagged.
/// Throws NumericalError if r(0) <= 0.
LevinsonDurbinResult levinson_durbin(const VectorXd& autocorr);

/// Autocorrelation r(0..max_lag) of a frame.
VectorXd autocorrelation(const ArrayXd& frame, Index max_lag);

/// Frame-set factories. Each fills theta/k/a/log_gain consistently
/// (theta = atanh(k) when built from k or a).
AllPoleFrameSet frames_from_unconstrained(const MatrixXd& theta, const VectorXd& log_gain);
AllPoleFrameSet frames_from_reflection(const MatrixXd& k, const VectorXd& log_gain);
AllPoleFrameSet frames_from_polynomials(const MatrixXd& a, const VectorXd& log_gain);

struct FrameAnalysis {
  AllPoleFrameSet frames;
  std::vector<bool> silent;   // per frame: below the silence floor
  std::vector<bool> clamped;  // per frame: some reflection coefficient clamped
};

/// Per-frame LPC analysis on the shared STFT grid: window each frame with
/// the config's analysis window, autocorrelate, run Levinson-Durbin. The
/// per-frame gain is sqrt(prediction error energy). Optional first-order
/// pre-emphasis is applied to the whole signal before framing.
FrameAnalysis analyze_frames(const AudioBuffer& audio, const StftConfig& config, Index order,
                             double preemphasis = 0.0);

/// H(m, n) = g_m / (FFT(a_m, N)(n) + epsilon).
ComplexSpectrogram envelope_spectrum(const AllPoleFrameSet& frames, const StftConfig& config);

/// x = ISTFT(H .* STFT(e)). Frame counts of the excitation STFT and the
/// frame set must agree.
AudioBuffer filter_stft(const AudioBuffer& excitation, const AllPoleFrameSet& frames,
                        const StftConfig& config);

/// e = ISTFT(STFT(x) ./ (H + epsilon)); the analysis counterpart of
/// filter_stft used to extract the residual excitation.
AudioBuffer inverse_filter(const AudioBuffer& audio, const AllPoleFrameSet& frames,
                           const StftConfig& config);

}  // namespace sofi

#endif  // SOFI_ALLPOLE_HPP
