// Copyright 2026 The sofi authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sofi/formant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sofi/features.hpp"
#include "sofi/util.hpp"

namespace sofi {

using std::complex;

Formant Formant::from_pole(complex<double> pole, double sample_rate) {
  Formant f;
  f.pole_radius = std::abs(pole);
  f.pole_angle = std::arg(pole);
  f.frequency = f.pole_angle * sample_rate / (2.0 * M_PI);
  f.bandwidth = -std::log(f.pole_radius) * sample_rate / M_PI;
  return f;
}

RootFindResult durand_kerner(const VectorXcd& coeffs, int max_iter, double movement_tol) {
  const Index degree = coeffs.size() - 1;
  if (degree < 1) throw std::invalid_argument("durand_kerner: degree must be >= 1");
  if (std::abs(coeffs(0)) == 0.0)
    throw std::invalid_argument("durand_kerner: leading coefficient is zero");

  const VectorXcd monic = coeffs / coeffs(0);

  RootFindResult res;
  res.roots.resize(degree);
  const complex<double> seed(0.4, 0.9);
  complex<double> power = 1.0;
  for (Index i = 0; i < degree; ++i) {
    power *= seed;
    res.roots(i) = power;
  }

  for (int iter = 0; iter < max_iter; ++iter) {
    double max_move = 0.0;
    for (Index i = 0; i < degree; ++i) {
      complex<double> denom = 1.0;
      for (Index j = 0; j < degree; ++j) {
        if (j != i) denom *= (res.roots(i) - res.roots(j));
      }
      if (denom == complex<double>(0.0, 0.0)) {
        // Coincident iterates: nudge apart and retry next sweep.
        res.roots(i) += complex<double>(1e-8, 1e-8);
        max_move = std::max(max_move, 1e-8);
        continue;
      }
      const complex<double> delta = polynomial_eval(monic, res.roots(i)) / denom;
      res.roots(i) -= delta;
      max_move = std::max(max_move, std::abs(delta));
    }
    res.iterations = iter + 1;
    if (max_move < movement_tol) {
      res.converged = true;
      break;
    }
    // High-degree polynomials can cycle on rounding noise without the
    // movement ever dropping below the threshold; machine-level residuals
    // mean the roots are converged regardless.
    if (max_move < 1e-9 && max_root_residual(monic, res.roots) < 1e-14) {
      res.converged = true;
      break;
    }
  }
  return res;
}

RootFindResult durand_kerner(const VectorXd& coeffs, int max_iter, double movement_tol) {
  return durand_kerner(VectorXcd(coeffs.cast<complex<double>>()), max_iter, movement_tol);
}

complex<double> polynomial_eval(const VectorXcd& coeffs, complex<double> z) {
  complex<double> acc = 0.0;
  for (Index i = 0; i < coeffs.size(); ++i) acc = acc * z + coeffs(i);
  return acc;
}

double max_root_residual(const VectorXcd& coeffs, const VectorXcd& roots) {
  const double norm1 = coeffs.cwiseAbs().sum();
  double worst = 0.0;
  for (Index i = 0; i < roots.size(); ++i)
    worst = std::max(worst, std::abs(polynomial_eval(coeffs, roots(i))) / norm1);
  return worst;
}

VectorXcd polynomial_from_roots(const VectorXcd& roots) {
  VectorXcd poly = VectorXcd::Zero(roots.size() + 1);
  poly(0) = 1.0;
  for (Index i = 0; i < roots.size(); ++i) {
    for (Index j = i + 1; j >= 1; --j) poly(j) -= roots(i) * poly(j - 1);
  }
  return poly;
}

VectorXd real_polynomial_from_roots(const VectorXcd& roots) {
  const VectorXcd poly = polynomial_from_roots(roots);
  const double scale = 1.0 + poly.real().cwiseAbs().maxCoeff();
  if (poly.imag().cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw NumericalError("real_polynomial_from_roots: root set is not conjugate-closed");
  return poly.real();
}

std::vector<Formant> roots_to_formants(const VectorXcd& roots, double sample_rate) {
  std::vector<Formant> out;
  for (Index i = 0; i < roots.size(); ++i) {
    if (roots(i).imag() <= 0.0) continue;  // keep one root per conjugate pair
    const Formant f = Formant::from_pole(roots(i), sample_rate);
    if (f.pole_radius >= 1.0 || f.pole_radius <= 0.0) continue;
    if (f.frequency < kMinFormantHz || f.frequency > sample_rate / 2.0 - kMinFormantHz) continue;
    if (f.bandwidth > kMaxFormantBandwidthHz) continue;
    out.push_back(f);
  }
  std::sort(out.begin(), out.end(),
            [](const Formant& a, const Formant& b) { return a.frequency < b.frequency; });
  return out;
}

namespace {

/// Autocorrelation of the true spectral envelope of a windowed frame.
/// The envelope is the fixed point of cepstral smoothing under a
/// max(spectrum, envelope) update, so it rides the harmonic peaks instead
/// of averaging the comb; the lifter cutoff tracks the frame's pitch
/// period. This removes the harmonic-capture bias that a raw
/// autocorrelation fit inherits from periodic excitation.
VectorXd envelope_autocorrelation(const ArrayXd& windowed_frame, Index fft_size, Index order,
                                  Index lifter_cutoff) {
  VectorXcd padded = VectorXcd::Zero(fft_size);
  padded.head(windowed_frame.size()).real() = windowed_frame.matrix();
  const ArrayXd log_power = (dft(padded).array().abs2() + 1e-300).log();

  ArrayXd envelope = log_power;
  VectorXcd buf(fft_size);
  const Index roll = lifter_cutoff / 2;
  for (int iter = 0; iter < 8; ++iter) {
    buf.real() = log_power.max(envelope).matrix();
    buf.imag().setZero();
    VectorXcd cepstrum = idft(buf);
    for (Index q = 1; q <= fft_size / 2; ++q) {
      double w = 0.0;
      if (q <= lifter_cutoff)
        w = 1.0;
      else if (q <= lifter_cutoff + roll)
        w = 0.5 + 0.5 * std::cos(M_PI * static_cast<double>(q - lifter_cutoff) / roll);
      cepstrum(q) *= w;
      cepstrum(fft_size - q) *= w;
    }
    const ArrayXd next = dft(cepstrum).real().array();
    const double change = (next - envelope).abs().maxCoeff();
    envelope = next;
    if (iter > 0 && change < 1e-3) break;
  }

  buf.real() = envelope.exp().matrix();
  buf.imag().setZero();
  const VectorXcd acf = idft(buf);
  VectorXd r(order + 1);
  for (Index k = 0; k <= order; ++k) r(k) = acf(k).real();
  return r;
}

}  // namespace

FormantTrack extract_formant_track(const AudioBuffer& audio, const StftConfig& config,
                                   Index order, double preemphasis) {
  config.validate();
  audio.validate();
  const Index m = config.num_frames(audio.size());
  const ArrayXd window = make_window(config.window_kind, config.window_size);

  ArrayXd x = audio.samples;
  if (preemphasis != 0.0) {
    for (Index t = x.size() - 1; t >= 1; --t) x(t) -= preemphasis * x(t - 1);
  }

  const F0Estimate f0 = estimate_f0(audio, config);

  FormantTrack track;
  track.sample_rate = audio.sample_rate;
  track.frequency = MatrixXd::Zero(m, 4);
  track.bandwidth = MatrixXd::Zero(m, 4);
  track.valid.setConstant(m, 4, false);

  bool any_valid = false;
  for (Index i = 0; i < m; ++i) {
    const ArrayXd frame = extract_frame(x, config, i) * window;
    if (frame.square().sum() < kSilenceFloor) continue;
    Index cutoff = 110;
    if (f0.voicing(i) > 0.5)
      cutoff = std::clamp<Index>(
          static_cast<Index>(audio.sample_rate / (2.0 * f0.f0(i))), 24, 110);
    const VectorXd r = envelope_autocorrelation(frame, config.fft_size, order, cutoff);
    if (!(r(0) > 0.0)) continue;
    const LevinsonDurbinResult ld = levinson_durbin(r);
    const RootFindResult rf = durand_kerner(ld.a);
    const std::vector<Formant> formants = roots_to_formants(rf.roots, audio.sample_rate);
    const Index count = std::min<Index>(4, static_cast<Index>(formants.size()));
    for (Index s = 0; s < count; ++s) {
      track.frequency(i, s) = formants[s].frequency;
      track.bandwidth(i, s) = formants[s].bandwidth;
      track.valid(i, s) = true;
      any_valid = true;
    }
  }
  if (!any_valid) throw DataError("extract_formant_track: no formants found (silent signal?)");

  // Per-slot linear interpolation across invalid frames, edges held.
  for (Index s = 0; s < 4; ++s) {
    Index prev = -1;
    for (Index i = 0; i < m; ++i) {
      if (!track.valid(i, s)) continue;
      if (prev < 0) {
        for (Index j = 0; j < i; ++j) {
          track.frequency(j, s) = track.frequency(i, s);
          track.bandwidth(j, s) = track.bandwidth(i, s);
        }
      } else {
        for (Index j = prev + 1; j < i; ++j) {
          const double t = static_cast<double>(j - prev) / static_cast<double>(i - prev);
          track.frequency(j, s) =
              (1.0 - t) * track.frequency(prev, s) + t * track.frequency(i, s);
          track.bandwidth(j, s) =
              (1.0 - t) * track.bandwidth(prev, s) + t * track.bandwidth(i, s);
        }
      }
      prev = i;
    }
    if (prev < 0) {
      // Slot never measured anywhere: hold a nominal value so downstream
      // consumers never see NaN. Flags stay false.
      const double nominal = (static_cast<double>(s) + 0.5) * 1000.0;
      track.frequency.col(s).setConstant(nominal);
      track.bandwidth.col(s).setConstant(100.0);
    } else {
      for (Index j = prev + 1; j < m; ++j) {
        track.frequency(j, s) = track.frequency(prev, s);
        track.bandwidth(j, s) = track.bandwidth(prev, s);
      }
    }
    track.frequency.col(s) = median_filter3(VectorXd(track.frequency.col(s)));
  }
  return track;
}

bool FormantShift::is_identity() const {
  for (int i = 0; i < 4; ++i) {
    if (scale[i] != 1.0 || std::isfinite(target_hz[i])) return false;
  }
  return true;
}

VectorXd relocate_formants(const VectorXd& a, const FormantShift& shift, double sample_rate) {
  if (a(0) != 1.0) throw std::invalid_argument("relocate_formants: polynomial must be monic");
  const Index degree = a.size() - 1;
  const RootFindResult rf = durand_kerner(a);
  if (!rf.converged)
    throw NumericalError("relocate_formants: root finding did not converge");

  // Split the root set into conjugate-pair representatives and real roots.
  std::vector<complex<double>> reps, negatives;
  std::vector<double> reals;
  for (Index i = 0; i < degree; ++i) {
    const complex<double> z = rf.roots(i);
    const double tol = 1e-8 * (1.0 + std::abs(z));
    if (z.imag() > tol)
      reps.push_back(z);
    else if (z.imag() < -tol)
      negatives.push_back(z);
    else
      reals.push_back(z.real());
  }
  if (reps.size() != negatives.size())
    throw NumericalError("relocate_formants: conjugate pairing failed");

  // Gate and order the formant-bearing representatives, remembering which
  // rep carries each slot.
  struct Candidate {
    double frequency;
    size_t rep;
  };
  std::vector<Candidate> candidates;
  for (size_t i = 0; i < reps.size(); ++i) {
    const Formant f = Formant::from_pole(reps[i], sample_rate);
    if (f.pole_radius >= 1.0 || f.pole_radius <= 0.0) continue;
    if (f.frequency < kMinFormantHz || f.frequency > sample_rate / 2.0 - kMinFormantHz) continue;
    if (f.bandwidth > kMaxFormantBandwidthHz) continue;
    candidates.push_back({f.frequency, i});
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& x, const Candidate& y) { return x.frequency < y.frequency; });
  const size_t slots = std::min<size_t>(4, candidates.size());

  // Each requested slot is clamped into the corridor between its (already
  // relocated) lower neighbor and the measured position of its upper
  // neighbor, so ordering F1 < F2 < F3 < F4 survives by construction. An
  // empty corridor is the unsatisfiable case and raises an error naming the
  // colliding pair. Slots with scale exactly 1 and no target never move.
  const double band_lo = kRelocateMarginHz;
  const double band_hi = sample_rate / 2.0 - kRelocateMarginHz;
  std::vector<double> new_freq(slots);
  for (size_t s = 0; s < slots; ++s) {
    const bool requested = std::isfinite(shift.target_hz[s]) || shift.scale[s] != 1.0;
    if (!requested) {
      new_freq[s] = candidates[s].frequency;
      continue;
    }
    if (!(shift.scale[s] > 0.0))
      throw std::invalid_argument("relocate_formants: scale factors must be positive");
    const double requested_hz = std::isfinite(shift.target_hz[s])
                                    ? shift.target_hz[s]
                                    : candidates[s].frequency * shift.scale[s];
    const double lo = s > 0 ? std::max(band_lo, new_freq[s - 1] + kRelocateMarginHz) : band_lo;
    const double hi = s + 1 < slots
                          ? std::min(band_hi, candidates[s + 1].frequency - kRelocateMarginHz)
                          : band_hi;
    if (lo > hi)
      throw DataError("relocate_formants: no room for F" + std::to_string(s + 1) +
                      " between F" + std::to_string(s) + " and F" + std::to_string(s + 2) +
                      " (corridor " + std::to_string(lo) + ".." + std::to_string(hi) + " Hz)");
    new_freq[s] = std::clamp(requested_hz, lo, hi);
  }

  for (size_t s = 0; s < slots; ++s) {
    if (new_freq[s] == candidates[s].frequency) continue;
    const size_t i = candidates[s].rep;
    const double radius = std::abs(reps[i]);
    const double angle = 2.0 * M_PI * new_freq[s] / sample_rate;
    reps[i] = std::polar(radius, angle);
  }

  // Rebuild with exact conjugate closure; untouched pairs are re-mirrored
  // from their representative as well.
  VectorXcd roots(degree);
  Index idx = 0;
  for (const complex<double>& z : reps) {
    roots(idx++) = z;
    roots(idx++) = std::conj(z);
  }
  for (double r : reals) roots(idx++) = complex<double>(r, 0.0);

  VectorXd out = real_polynomial_from_roots(roots);
  out(0) = 1.0;
  return out;
}

}  // namespace sofi
