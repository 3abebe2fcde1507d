// Copyright 2026 The sofi authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sofi/allpole.hpp"

#include <cmath>
#include <string>

namespace sofi {

namespace {

double clamp_reflection(double k) {
  if (k > kReflectionLimit) return kReflectionLimit;
  if (k < -kReflectionLimit) return -kReflectionLimit;
  return k;
}

}  // namespace

void AllPoleFrameSet::validate() const {
  const Index m = frames();
  const Index p = order();
  if (theta.rows() != m || theta.cols() != p || a.rows() != m || a.cols() != p + 1 ||
      log_gain.size() != m)
    throw std::invalid_argument("AllPoleFrameSet: inconsistent shapes");
  if (!theta.allFinite() || !k.allFinite() || !a.allFinite() || !log_gain.allFinite())
    throw NumericalError("AllPoleFrameSet: non-finite parameters");
  if ((k.cwiseAbs().array() >= 1.0).any())
    throw NumericalError("AllPoleFrameSet: reflection coefficient with |k| >= 1");
  for (Index i = 0; i < m; ++i) {
    if (a(i, 0) != 1.0) throw NumericalError("AllPoleFrameSet: polynomial not monic");
  }
  const MatrixXd recomputed = levinson_forward(k);
  if ((recomputed - a).cwiseAbs().maxCoeff() > 1e-9)
    throw NumericalError("AllPoleFrameSet: a is not the forward-Levinson image of k");
}

void reparameterize(const MatrixXd& theta, const VectorXd& log_gain, MatrixXd& k_out,
                    VectorXd& gain_out) {
  if (!theta.allFinite() || !log_gain.allFinite())
    throw NumericalError("reparameterize: non-finite input");
  if (theta.rows() != log_gain.size())
    throw std::invalid_argument("reparameterize: frame count mismatch");
  k_out = theta.array().tanh().unaryExpr(&clamp_reflection).matrix();
  gain_out = log_gain.array().exp();
  if (!gain_out.allFinite()) throw NumericalError("reparameterize: gain overflow");
}

VectorXd levinson_forward(const VectorXd& k) {
  const Index p = k.size();
  if ((k.cwiseAbs().array() >= 1.0).any())
    throw NumericalError("levinson_forward: |k| >= 1 (unstable filter)");
  VectorXd a = VectorXd::Zero(p + 1);
  a(0) = 1.0;
  VectorXd prev(p + 1);
  for (Index i = 1; i <= p; ++i) {
    prev.head(i + 1) = a.head(i + 1);
    for (Index j = 1; j <= i; ++j) a(j) = prev(j) + k(i - 1) * prev(i - j);
  }
  return a;
}

MatrixXd levinson_forward(const MatrixXd& k) {
  MatrixXd a(k.rows(), k.cols() + 1);
  for (Index m = 0; m < k.rows(); ++m) a.row(m) = levinson_forward(VectorXd(k.row(m))).transpose();
  return a;
}

VectorXd levinson_backward(const VectorXd& a) {
  const Index p = a.size() - 1;
  if (a(0) != 1.0) throw std::invalid_argument("levinson_backward: polynomial must be monic");
  VectorXd k(p);
  VectorXd cur = a;
  VectorXd next(p + 1);
  for (Index i = p; i >= 1; --i) {
    const double ki = cur(i);
    if (std::abs(ki) >= 1.0)
      throw NumericalError("levinson_backward: unstable polynomial, |k_" + std::to_string(i) +
                           "| >= 1");
    k(i - 1) = ki;
    const double denom = 1.0 - ki * ki;
    for (Index j = 1; j < i; ++j) next(j) = (cur(j) - ki * cur(i - j)) / denom;
    next(0) = 1.0;
    cur.head(i) = next.head(i);
  }
  return k;
}

MatrixXd levinson_backward(const MatrixXd& a) {
  MatrixXd k(a.rows(), a.cols() - 1);
  for (Index m = 0; m < a.rows(); ++m) k.row(m) = levinson_backward(VectorXd(a.row(m))).transpose();
  return k;
}

LevinsonDurbinResult levinson_durbin(const VectorXd& autocorr) {
  const Index p = autocorr.size() - 1;
  if (p < 1) throw std::invalid_argument("levinson_durbin: need at least r(0) and r(1)");
  if (!(autocorr(0) > 0.0)) throw NumericalError("levinson_durbin: r(0) <= 0");

  LevinsonDurbinResult res;
  res.a = VectorXd::Zero(p + 1);
  res.a(0) = 1.0;
  res.parcor = VectorXd::Zero(p);
  double err = autocorr(0);

  VectorXd prev(p + 1);
  for (Index i = 1; i <= p; ++i) {
    double acc = autocorr(i);
    for (Index j = 1; j < i; ++j) acc += res.a(j) * autocorr(i - j);
    double ki = acc / err;
    if (std::abs(ki) > kReflectionLimit) {
      ki = ki > 0 ? kReflectionLimit : -kReflectionLimit;
      res.clamped = true;
    }
    res.parcor(i - 1) = ki;
    prev.head(i + 1) = res.a.head(i + 1);
    for (Index j = 1; j < i; ++j) res.a(j) = prev(j) - ki * prev(i - j);
    res.a(i) = -ki;
    err *= (1.0 - ki * ki);
  }
  res.pred_err = std::max(err, 0.0);
  return res;
}

VectorXd autocorrelation(const ArrayXd& frame, Index max_lag) {
  const Index n = frame.size();
  if (max_lag >= n) throw std::invalid_argument("autocorrelation: lag exceeds frame length");
  VectorXd r(max_lag + 1);
  for (Index lag = 0; lag <= max_lag; ++lag)
    r(lag) = (frame.head(n - lag) * frame.tail(n - lag)).sum();
  return r;
}

AllPoleFrameSet frames_from_unconstrained(const MatrixXd& theta, const VectorXd& log_gain) {
  AllPoleFrameSet fs;
  fs.theta = theta;
  fs.log_gain = log_gain;
  VectorXd gain;
  reparameterize(theta, log_gain, fs.k, gain);
  fs.a = levinson_forward(fs.k);
  return fs;
}

AllPoleFrameSet frames_from_reflection(const MatrixXd& k, const VectorXd& log_gain) {
  if (k.rows() != log_gain.size())
    throw std::invalid_argument("frames_from_reflection: frame count mismatch");
  if ((k.cwiseAbs().array() > kReflectionLimit).any())
    throw NumericalError("frames_from_reflection: |k| beyond clamp limit");
  AllPoleFrameSet fs;
  fs.k = k;
  fs.theta = k.array().atanh().matrix();
  fs.log_gain = log_gain;
  fs.a = levinson_forward(k);
  return fs;
}

AllPoleFrameSet frames_from_polynomials(const MatrixXd& a, const VectorXd& log_gain) {
  MatrixXd k = levinson_backward(a);
  k = k.unaryExpr(&clamp_reflection);
  return frames_from_reflection(k, log_gain);
}

FrameAnalysis analyze_frames(const AudioBuffer& audio, const StftConfig& config, Index order,
                             double preemphasis) {
  config.validate();
  audio.validate();
  if (order < 1) throw std::invalid_argument("analyze_frames: order must be >= 1");
  if (order >= config.window_size)
    throw std::invalid_argument("analyze_frames: order exceeds window length");

  ArrayXd x = audio.samples;
  if (preemphasis != 0.0) {
    for (Index t = x.size() - 1; t >= 1; --t) x(t) -= preemphasis * x(t - 1);
  }
  const AudioBuffer pre{x, audio.sample_rate};

  const Index num_frames = config.num_frames(audio.size());
  const ArrayXd window = make_window(config.window_kind, config.window_size);

  FrameAnalysis out;
  out.frames.theta.resize(num_frames, order);
  out.frames.k.resize(num_frames, order);
  out.frames.a.resize(num_frames, order + 1);
  out.frames.log_gain.resize(num_frames);
  out.silent.assign(num_frames, false);
  out.clamped.assign(num_frames, false);

  for (Index m = 0; m < num_frames; ++m) {
    const ArrayXd frame = extract_frame(pre.samples, config, m) * window;
    const VectorXd r = autocorrelation(frame, order);
    if (r(0) < kSilenceFloor) {
      out.silent[m] = true;
      out.frames.k.row(m).setZero();
      out.frames.theta.row(m).setZero();
      out.frames.a.row(m).setZero();
      out.frames.a(m, 0) = 1.0;
      out.frames.log_gain(m) = std::log(kSilentFrameGain);
      continue;
    }
    const LevinsonDurbinResult ld = levinson_durbin(r);
    out.clamped[m] = ld.clamped;
    // Lattice-convention reflection coefficients are the negated PARCORs.
    const VectorXd k_lattice = (-ld.parcor).unaryExpr(&clamp_reflection);
    out.frames.k.row(m) = k_lattice.transpose();
    out.frames.theta.row(m) = k_lattice.array().atanh().matrix().transpose();
    out.frames.a.row(m) = ld.a.transpose();
    out.frames.log_gain(m) = 0.5 * std::log(std::max(ld.pred_err, 1e-30));
  }
  return out;
}

ComplexSpectrogram envelope_spectrum(const AllPoleFrameSet& frames, const StftConfig& config) {
  config.validate();
  if (config.fft_size < frames.order() + 1)
    throw std::invalid_argument("envelope_spectrum: fft_size < order + 1");
  const Index m = frames.frames();
  const VectorXd gain = frames.gain();

  ComplexSpectrogram env;
  env.config = config;
  env.num_samples = m * config.hop_size;
  env.data.resize(m, config.fft_size);
  for (Index i = 0; i < m; ++i) {
    const VectorXcd denom = polynomial_spectrum(frames.a.row(i).transpose(), config.fft_size);
    env.data.row(i) =
        (gain(i) / (denom.array() + config.epsilon)).matrix().transpose();
  }
  return env;
}

namespace {

void check_frame_match(Index signal_frames, Index filter_frames) {
  if (signal_frames != filter_frames)
    throw std::invalid_argument("filter_stft: frame count mismatch (signal has " +
                                std::to_string(signal_frames) + " frames, filter has " +
                                std::to_string(filter_frames) + ")");
}

}  // namespace

AudioBuffer filter_stft(const AudioBuffer& excitation, const AllPoleFrameSet& frames,
                        const StftConfig& config) {
  check_frame_match(config.num_frames(excitation.size()), frames.frames());
  ComplexSpectrogram spec = stft(excitation, config);
  const ComplexSpectrogram env = envelope_spectrum(frames, config);
  spec.data = spec.data.cwiseProduct(env.data);
  return istft(spec, false);
}

AudioBuffer inverse_filter(const AudioBuffer& audio, const AllPoleFrameSet& frames,
                           const StftConfig& config) {
  check_frame_match(config.num_frames(audio.size()), frames.frames());
  ComplexSpectrogram spec = stft(audio, config);
  const ComplexSpectrogram env = envelope_spectrum(frames, config);
  spec.data = spec.data.cwiseQuotient((env.data.array() + config.epsilon).matrix());
  return istft(spec, false);
}

}  // namespace sofi
