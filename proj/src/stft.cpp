// Copyright 2026 The sofi authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sofi/stft.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <string>

namespace sofi {

namespace {

Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> engine;
  return engine;
}

}  // namespace

void StftConfig::validate() const {
  if (fft_size <= 0 || window_size <= 0 || hop_size <= 0)
    throw std::invalid_argument("StftConfig: sizes must be positive");
  if (!(hop_size <= window_size && window_size <= fft_size))
    throw std::invalid_argument("StftConfig: need hop_size <= window_size <= fft_size");
  // Exact COLA of the periodic Hann window requires the hop to divide the
  // window and at least two overlapping frames.
  if (window_size % hop_size != 0 || window_size / hop_size < 2)
    throw std::invalid_argument("StftConfig: hop must divide window with window/hop >= 2");
  if (!(epsilon > 0.0)) throw std::invalid_argument("StftConfig: epsilon must be positive");
}

Index StftConfig::num_frames(Index num_samples) const {
  if (num_samples <= 0) return 0;
  return (num_samples + hop_size - 1) / hop_size;
}

ArrayXd make_window(WindowKind kind, int size) {
  ArrayXd w(size);
  switch (kind) {
    case WindowKind::Hann:
      for (int t = 0; t < size; ++t) w(t) = 0.5 - 0.5 * std::cos(2.0 * M_PI * t / size);
      break;
    case WindowKind::Rect:
      w.setOnes();
      break;
  }
  return w;
}

Index reflect_index(Index pos, Index size) {
  if (size == 1) return 0;
  const Index period = 2 * (size - 1);
  Index p = pos % period;
  if (p < 0) p += period;
  return p < size ? p : period - p;
}

ArrayXd extract_frame(const ArrayXd& x, const StftConfig& config, Index frame) {
  const Index start = frame * config.hop_size - config.pad();
  ArrayXd out(config.window_size);
  for (Index t = 0; t < config.window_size; ++t) out(t) = x(reflect_index(start + t, x.size()));
  return out;
}

VectorXcd dft(const VectorXcd& in) {
  VectorXcd out(in.size());
  fft_engine().fwd(out, in);
  return out;
}

VectorXcd idft(const VectorXcd& in) {
  VectorXcd out(in.size());
  fft_engine().inv(out, in);
  return out;
}

VectorXcd dft_zero_padded(const VectorXd& in, Index n) {
  VectorXcd padded = VectorXcd::Zero(n);
  padded.head(in.size()).real() = in;
  return dft(padded);
}

VectorXcd polynomial_spectrum(const VectorXd& coeffs, Index fft_size) {
  if (fft_size < coeffs.size())
    throw std::invalid_argument("polynomial_spectrum: fft_size < number of coefficients");
  return dft_zero_padded(coeffs, fft_size);
}

ComplexSpectrogram stft(const AudioBuffer& audio, const StftConfig& config) {
  config.validate();
  audio.validate();
  if (audio.size() == 0) throw std::invalid_argument("stft: empty signal");

  const Index num_frames = config.num_frames(audio.size());
  const ArrayXd window = make_window(config.window_kind, config.window_size);

  ComplexSpectrogram spec;
  spec.config = config;
  spec.num_samples = audio.size();
  spec.sample_rate = audio.sample_rate;
  spec.data.resize(num_frames, config.fft_size);

  VectorXcd padded = VectorXcd::Zero(config.fft_size);
  for (Index m = 0; m < num_frames; ++m) {
    const ArrayXd frame = extract_frame(audio.samples, config, m) * window;
    padded.setZero();
    padded.head(config.window_size).real() = frame.matrix();
    spec.data.row(m) = dft(padded).transpose();
  }
  return spec;
}

AudioBuffer istft(const ComplexSpectrogram& spec) { return istft(spec, true); }

AudioBuffer istft(const ComplexSpectrogram& spec, bool check_symmetry) {
  const StftConfig& config = spec.config;
  config.validate();
  const Index num_frames = spec.frames();
  const Index n = config.fft_size;
  if (spec.bins() != n) throw std::invalid_argument("istft: bin count does not match fft_size");
  if (spec.num_samples <= 0) throw std::invalid_argument("istft: num_samples not set");
  if (num_frames != config.num_frames(spec.num_samples))
    throw std::invalid_argument("istft: frame count inconsistent with num_samples");

  if (check_symmetry) {
    for (Index m = 0; m < num_frames; ++m) {
      const double scale = 1.0 + spec.data.row(m).cwiseAbs().maxCoeff();
      for (Index k = 0; k < n; ++k) {
        const std::complex<double> mirror = std::conj(spec.data(m, (n - k) % n));
        if (std::abs(spec.data(m, k) - mirror) > 1e-8 * scale)
          throw NumericalError("istft: spectrogram violates conjugate symmetry at frame " +
                               std::to_string(m) + ", bin " + std::to_string(k));
      }
    }
  }

  const ArrayXd window = make_window(config.window_kind, config.window_size);
  const Index pad = config.pad();
  const Index total = (num_frames - 1) * config.hop_size + n;

  ArrayXd ola = ArrayXd::Zero(total);
  ArrayXd envelope = ArrayXd::Zero(total);
  for (Index m = 0; m < num_frames; ++m) {
    const VectorXcd frame = idft(spec.data.row(m).transpose());
    const Index start = m * config.hop_size;
    ola.segment(start, n) += frame.real().array();
    envelope.segment(start, config.window_size) += window;
  }

  AudioBuffer out;
  out.sample_rate = spec.sample_rate;
  out.samples.resize(spec.num_samples);
  for (Index t = 0; t < spec.num_samples; ++t) {
    const double env = envelope(pad + t);
    if (env < 1e-6) throw NumericalError("istft: degenerate window overlap at sample " + std::to_string(t));
    out.samples(t) = ola(pad + t) / env;
  }
  return out;
}

}  // namespace sofi
