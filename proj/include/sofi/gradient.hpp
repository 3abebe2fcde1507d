// Copyright 2026 The sofi authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Reverse-mode differentiation of the synthesis chain
//   theta, log_gain, excitation
//     -> reflection coefficients -> predictor polynomials -> envelope H
//     -> H .* STFT(e) -> ISTFT -> loss,
// with hand-derived adjoints per stage, plus the log-spectral-distance loss,
// a finite-difference certification harness and gradient-descent fitting.
//
// Complex adjoint convention: for a complex intermediate z, the stored
// adjoint is dL/dRe(z) + i dL/dIm(z). Holomorphic stages w = f(z) then
// propagate as z_adj += conj(f'(z)) * w_adj.

#ifndef SOFI_GRADIENT_HPP
#define SOFI_GRADIENT_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sofi/allpole.hpp"
#include "sofi/stft.hpp"
#include "sofi/types.hpp"

namespace sofi {

enum class LossKind { LogSpectralDistance, WaveformL2, SpectralLogL1 };
enum class Reduction { Sum, Mean };

struct LossSpec {
  LossKind kind = LossKind::LogSpectralDistance;
  Reduction reduction = Reduction::Mean;
};

/// Loss target: a per-bin magnitude envelope for the LSD loss, audio for the
/// waveform losses.
struct LossTarget {
  MatrixXd envelope_magnitude;  // M x N, used by LogSpectralDistance
  ArrayXd audio;                // length T, used by WaveformL2 / SpectralLogL1
};

LossTarget envelope_target(MatrixXd magnitude);
LossTarget audio_target(ArrayXd audio);

/// Reduction over |log|H_hat| - log|H_target||; mean by default so
/// tolerances are size-independent, sum gives the unnormalized distance
/// (sum == mean * M * N).
double lsd_loss(const ComplexSpectrogram& h_hat, const ComplexSpectrogram& h_target,
                Reduction reduction = Reduction::Mean);
double lsd_loss(const MatrixXd& mag_hat, const MatrixXd& mag_target,
                Reduction reduction = Reduction::Mean);

/// One recorded forward pass plus matching adjoint buffers. Adjoints are
/// zero until backward() runs; backward(0) therefore leaves them zero.
class GradientTape {
 public:
  explicit GradientTape(StftConfig config);

  /// Runs the chain and records every stage. For the LSD loss the
  /// excitation may be empty (the loss is reached from the envelope alone
  /// and d/de is identically zero). Throws NumericalError naming the stage
  /// if any intermediate becomes non-finite.
  double forward(const MatrixXd& theta, const VectorXd& log_gain, const ArrayXd& excitation,
                 const LossTarget& target, const LossSpec& loss);

  /// Reverse pass seeded with dL/dloss = seed.
  void backward(double seed = 1.0);

  double loss_value() const { return loss_value_; }
  const MatrixXd& theta_grad() const { return theta_grad_; }
  const VectorXd& log_gain_grad() const { return log_gain_grad_; }
  const ArrayXd& excitation_grad() const { return excitation_grad_; }

  /// Residual entering the absolute value of an L1-type loss (empty for
  /// WaveformL2); used by the finite-difference harness to detect kink
  /// crossings.
  const MatrixXd& l1_residual() const { return u_; }

 private:
  StftConfig config_;

  // primals
  MatrixXd theta_, k_raw_, k_;
  VectorXd log_gain_, gain_;
  std::vector<MatrixXd> levinson_steps_;  // per frame, row i = a^(i)
  MatrixXd a_;
  MatrixXcd env_a_fft_, h_;
  ArrayXd excitation_;
  MatrixXcd e_spec_, x_spec_;
  ArrayXd x_;
  MatrixXcd out_spec_;  // STFT of x for SpectralLogL1
  MatrixXd u_;          // L1 residual (LSD / SpectralLogL1)
  ArrayXd residual_;    // x - target for WaveformL2
  LossSpec loss_spec_;
  double weight_ = 1.0;
  double mag_floor_ = 0.0;
  double loss_value_ = 0.0;
  bool has_filter_chain_ = false;
  bool forward_done_ = false;

  // adjoints
  MatrixXd theta_grad_;
  VectorXd log_gain_grad_;
  ArrayXd excitation_grad_;
};

/// Forward pass only (no recording); optionally reports the L1 residual for
/// kink detection.
double chain_loss(const MatrixXd& theta, const VectorXd& log_gain, const ArrayXd& excitation,
                  const LossTarget& target, const LossSpec& loss, const StftConfig& config,
                  MatrixXd* l1_residual = nullptr);

/// Convenience wrapper running one tape forward+backward.
struct ForwardBackwardResult {
  double loss = 0.0;
  MatrixXd theta_grad;
  VectorXd log_gain_grad;
  ArrayXd excitation_grad;
};
ForwardBackwardResult forward_backward(const MatrixXd& theta, const VectorXd& log_gain,
                                       const ArrayXd& excitation, const LossTarget& target,
                                       const LossSpec& loss, const StftConfig& config);

struct GradCheckOptions {
  int theta_coords = 48;
  int log_gain_coords = 8;
  int excitation_coords = 52;
  double step = 1e-5;       // scaled by max(1, |coordinate|)
  double kink_tol = 1e-6;   // L1 residuals closer to zero than this skip the coordinate
  std::uint64_t seed = 1;
};

struct CoordinateCheck {
  std::string group;  // "theta" | "log_gain" | "excitation"
  Index row = 0;
  Index col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool skipped = false;  // perturbation crossed or touched an L1 kink
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  CoordinateCheck worst;
  double max_rel_theta = 0.0;
  double max_rel_log_gain = 0.0;
  double max_rel_excitation = 0.0;
  int checked = 0;
  int skipped = 0;
  std::vector<CoordinateCheck> coordinates;
};

/// Central finite differences against the analytic gradients over a random
/// sample of coordinates. Deterministic for a fixed seed.
GradCheckReport finite_diff_check(const MatrixXd& theta, const VectorXd& log_gain,
                                  const ArrayXd& excitation, const LossTarget& target,
                                  const LossSpec& loss, const StftConfig& config,
                                  const GradCheckOptions& options);

/// Comparison step of the harness, exposed so corrupted gradients can be
/// detected in self-tests.
GradCheckReport compare_gradients(const std::vector<CoordinateCheck>& coords);

/// Random filter parameters whose per-frame envelopes stay within a
/// speech-like dynamic range (|H| within [1e-3, 1e3]). Central differences
/// at the fixed 1e-5 step are only meaningful when the envelope's curvature
/// length scale stays well above the step, which near-unit-circle poles
/// (|H| ~ 1e5) violate; per-frame rejection sampling keeps points clear of
/// that regime. Deterministic for a given engine state.
struct StablePoint {
  MatrixXd theta;
  VectorXd log_gain;
};
StablePoint random_stable_point(std::mt19937_64& rng, Index frames, Index order,
                                const StftConfig& config);

struct FitResult {
  MatrixXd theta;
  VectorXd log_gain;
  ArrayXd excitation;
  std::vector<double> loss_curve;  // loss before each accepted step, then final
  int iterations = 0;
};

/// Gradient descent with Armijo backtracking from theta = 0, log_gain = 0
/// on the mean LSD against a target magnitude envelope (M x N).
/// Throws NumericalError on divergence (loss > 10 x initial).
FitResult fit_envelope(const MatrixXd& target_magnitude, Index order, int iterations,
                       double initial_step, const StftConfig& config);

/// Gradient descent on the excitation from zeros under mean waveform L2
/// against target audio, with the filter frames held fixed.
FitResult fit_excitation(const AudioBuffer& target, const AllPoleFrameSet& frames, int iterations,
                         double initial_step, const StftConfig& config);

/// JSON serialization of reports (deterministic field order).
std::string gradcheck_report_json(const GradCheckReport& report, const GradCheckOptions& options);
std::string fit_report_json(const FitResult& result);

}  // namespace sofi

#endif  // SOFI_GRADIENT_HPP
