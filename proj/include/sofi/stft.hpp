// Copyright 2026 The sofi authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Framing, windowing, FFT and constant-overlap-add STFT/ISTFT. All frame
// grids in the library share this module's center-padded alignment: frame m
// is centered on sample m * hop_size of the original signal.

#ifndef SOFI_STFT_HPP
#define SOFI_STFT_HPP

#include <complex>

#include "sofi/types.hpp"

namespace sofi {

enum class WindowKind { Hann, Rect };

struct StftConfig {
  int fft_size = 2048;
  int window_size = 1024;
  int hop_size = 256;
  WindowKind window_kind = WindowKind::Hann;
  double epsilon = 1e-9;

  void validate() const;

  /// Number of frames covering a length-T signal: ceil(T / hop).
  Index num_frames(Index num_samples) const;

  /// Center padding applied on each side before framing.
  Index pad() const { return window_size / 2; }
};

/// M x N complex frame spectra plus the geometry needed to invert them.
/// Rows are frames; all N bins are stored, so rows of real-signal spectra
/// satisfy data(m, n) == conj(data(m, (N - n) % N)).
struct ComplexSpectrogram {
  MatrixXcd data;
  StftConfig config;
  Index num_samples = 0;
  int sample_rate = 22050;

  Index frames() const { return data.rows(); }
  Index bins() const { return data.cols(); }
};

/// Analysis window of the given kind. Hann is periodic:
/// w[t] = 0.5 - 0.5 cos(2 pi t / size).
ArrayXd make_window(WindowKind kind, int size);

/// Reflection (mirror-without-repeat) index fold into [0, size).
Index reflect_index(Index pos, Index size);

/// One analysis frame (window_size samples, not yet windowed) of the
/// center-padded signal.
ArrayXd extract_frame(const ArrayXd& x, const StftConfig& config, Index frame);

/// Unnormalized DFT / normalized (1/N) inverse DFT of a complex vector.
VectorXcd dft(const VectorXcd& in);
VectorXcd idft(const VectorXcd& in);

/// DFT of a real vector zero-padded to length n.
VectorXcd dft_zero_padded(const VectorXd& in, Index n);

/// FFT of the zero-padded coefficient sequence: row n holds
/// sum_i coeffs[i] exp(-j 2 pi n i / fft_size).
VectorXcd polynomial_spectrum(const VectorXd& coeffs, Index fft_size);

/// Signals shorter than one window are covered by the same reflection
/// padding and produce a single frame.
ComplexSpectrogram stft(const AudioBuffer& audio, const StftConfig& config);

/// Overlap-add inverse. Frames are inverse-transformed over the full
/// fft_size support and accumulated, then the sum is normalized by the
/// overlap-added analysis-window envelope; this keeps spectral-domain
/// filtering equal to linear convolution away from the signal edges.
/// Throws NumericalError if rows violate conjugate symmetry beyond
/// tolerance (a corrupted spectrogram).
AudioBuffer istft(const ComplexSpectrogram& spec);
AudioBuffer istft(const ComplexSpectrogram& spec, bool check_symmetry);

}  // namespace sofi

#endif  // SOFI_STFT_HPP
