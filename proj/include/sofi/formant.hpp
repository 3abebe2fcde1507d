// Copyright 2026 The sofi authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Durand-Kerner polynomial root finding, pole <-> formant conversion,
// formant track extraction and pole relocation for formant manipulation.

#ifndef SOFI_FORMANT_HPP
#define SOFI_FORMANT_HPP

#include <array>
#include <complex>
#include <limits>
#include <vector>

#include "sofi/allpole.hpp"
#include "sofi/stft.hpp"
#include "sofi/types.hpp"

namespace sofi {

/// Formant candidate gates: frequency must lie in
/// [kMinFormantHz, fs/2 - kMinFormantHz] and bandwidth below the cap.
inline constexpr double kMinFormantHz = 50.0;
inline constexpr double kMaxFormantBandwidthHz = 700.0;
/// Relocated formants are clamped to [kRelocateMarginHz, fs/2 - kRelocateMarginHz].
inline constexpr double kRelocateMarginHz = 60.0;

/// A vocal-tract resonance realized as a conjugate pole pair.
struct Formant {
  double frequency = 0;   // Hz
  double bandwidth = 0;   // Hz
  double pole_radius = 0; // in (0, 1)
  double pole_angle = 0;  // radians in (0, pi)

  static Formant from_pole(std::complex<double> pole, double sample_rate);
};

struct RootFindResult {
  VectorXcd roots;
  bool converged = false;
  int iterations = 0;
};

/// Simultaneous Durand-Kerner iteration for all roots of a polynomial given
/// by coefficients in descending powers (leading coefficient first, nonzero).
/// Converges when the largest per-iteration root movement drops below
/// `movement_tol`; otherwise returns the best iterate with converged=false.
RootFindResult durand_kerner(const VectorXcd& coeffs, int max_iter = 100,
                             double movement_tol = 1e-12);
RootFindResult durand_kerner(const VectorXd& coeffs, int max_iter = 100,
                             double movement_tol = 1e-12);

/// Horner evaluation of a polynomial in descending-power form.
std::complex<double> polynomial_eval(const VectorXcd& coeffs, std::complex<double> z);

/// max_i |p(root_i)| / ||coeffs||_1, the normalized residual of a root set.
double max_root_residual(const VectorXcd& coeffs, const VectorXcd& roots);

/// Monic polynomial with the given roots, descending powers.
VectorXcd polynomial_from_roots(const VectorXcd& roots);
/// Same, asserting the imaginary residue of a conjugate-closed root set
/// stays below 1e-12 before truncation to real coefficients.
VectorXd real_polynomial_from_roots(const VectorXcd& roots);

/// Keeps one root per conjugate pair (positive imaginary part), converts to
/// frequency/bandwidth, applies the candidate gates and sorts ascending.
std::vector<Formant> roots_to_formants(const VectorXcd& roots, double sample_rate);

/// Per-frame formant tracks on the shared STFT grid. `valid` records which
/// slots were measured; invalid slots of the returned frequencies and
/// bandwidths are filled by per-slot linear interpolation (edges held) and
/// frequencies are then median-filtered with kernel 3.
struct FormantTrack {
  MatrixXd frequency;  // M x 4
  MatrixXd bandwidth;  // M x 4
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> valid;  // M x 4
  double sample_rate = 22050;

  Index frames() const { return frequency.rows(); }
};

/// Window, autocorrelate through a true-envelope smoothed power spectrum
/// (harmonic structure removed with an F0-adaptive lifter), order-10
/// Levinson-Durbin, Durand-Kerner, gate and keep the lowest four formants
/// per frame, then post-process. Optional pre-emphasis is off by default:
/// on flat-excitation material it drags the order-10 fit toward high
/// frequencies. Throws DataError on an all-silent signal.
FormantTrack extract_formant_track(const AudioBuffer& audio, const StftConfig& config,
                                   Index order = 10, double preemphasis = 0.0);

/// Per-slot relocation request: scale the measured frequency, or move it to
/// an absolute target when target_hz is finite.
struct FormantShift {
  std::array<double, 4> scale{1.0, 1.0, 1.0, 1.0};
  std::array<double, 4> target_hz{std::numeric_limits<double>::quiet_NaN(),
                                  std::numeric_limits<double>::quiet_NaN(),
                                  std::numeric_limits<double>::quiet_NaN(),
                                  std::numeric_limits<double>::quiet_NaN()};

  bool is_identity() const;
};

/// Moves the formant-bearing pole pairs of a monic stable polynomial to the
/// requested frequencies, keeping pole radii and all other roots unchanged.
/// Requested frequencies are clamped to the relocation band; if the clamped
/// targets violate F1 < F2 < F3 < F4, throws DataError naming the pair.
VectorXd relocate_formants(const VectorXd& a, const FormantShift& shift, double sample_rate);

}  // namespace sofi

#endif  // SOFI_FORMANT_HPP
