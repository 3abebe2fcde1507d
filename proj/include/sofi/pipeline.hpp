// Copyright 2026 The sofi authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// End-to-end analysis / manipulation / resynthesis pipelines, the
// formant-manipulation evaluation harness, corpus utilities and report I/O.

#ifndef SOFI_PIPELINE_HPP
#define SOFI_PIPELINE_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sofi/allpole.hpp"
#include "sofi/features.hpp"
#include "sofi/formant.hpp"
#include "sofi/stft.hpp"
#include "sofi/types.hpp"

namespace sofi {

struct PipelineConfig {
  StftConfig stft;
  int sample_rate = 22050;
  Index formant_order = 10;
  Index envelope_order = 30;
  double preemphasis = 0.0;
  bool allow_any_rate = false;

  /// Canonical JSON used for hashing and --config overrides.
  std::string to_json() const;
  static PipelineConfig from_json_file(const std::string& path);
  /// FNV-1a hash of the canonical JSON, as fixed-width hex.
  std::string hash() const;
};

/// Per-formant scale factors (or absolute Hz targets), plus the F0 scale
/// which is reserved: the classic resynthesis path cannot honor it, so any
/// value other than 1 is rejected.
struct ManipulationSpec {
  FormantShift shift;
  double f0_scale = 1.0;

  void validate() const;
};

struct CopySynthesisResult {
  AudioBuffer output;
  AudioBuffer residual;
  double snr_db = 0.0;
};

/// Analyze order-10 envelopes, inverse-filter to the residual excitation,
/// refilter with the same envelopes.
CopySynthesisResult copy_synthesis(const AudioBuffer& input, const PipelineConfig& config);

/// Analyze, relocate formant poles per the requested shift, inverse-filter
/// with the original envelopes and refilter with the modified ones. A unit
/// shift runs the exact copy-synthesis path (bit-identical output).
AudioBuffer manipulate(const AudioBuffer& input, const ManipulationSpec& spec,
                       const PipelineConfig& config);

struct EvalCell {
  int formant = 0;   // 1-based slot
  double scale = 1.0;
  double median_hz = 0.0;
  double q25_hz = 0.0;
  double q75_hz = 0.0;
  Index n_frames = 0;
};

struct EvalReport {
  std::string config_hash;
  std::string corpus;
  std::vector<double> scales;
  std::vector<int> formants;
  std::vector<EvalCell> cells;
  int failures = 0;
};

/// For every corpus file x formant x scale: manipulate, re-extract, and pool
/// |re-estimated - target| over the file's voiced frames. Per-file failures
/// are logged to stderr and counted. Deterministic for fixed inputs
/// regardless of the job count.
EvalReport eval_manipulation(const std::string& corpus_dir, const std::vector<double>& scales,
                             const std::vector<int>& formants, const PipelineConfig& config,
                             int jobs = 1);

std::string eval_report_json(const EvalReport& report);
std::string eval_report_csv(const EvalReport& report);

/// Robust per-feature min/max (1st/99th percentile) over a corpus.
NormalizationSpec scan_normalization(const std::string& corpus_dir, const PipelineConfig& config);

/// Deterministic synthetic vowel generator used for the bundled corpus.
struct VowelSpec {
  double f0_hz = 120.0;     // mean F0; the contour glides linearly by +-f0_glide
  double f0_glide = 0.0;    // fractional glide depth (0.06 = -6%..+6% over the file)
  std::array<double, 4> formants_hz{700.0, 1220.0, 2600.0, 3400.0};
  std::array<double, 4> bandwidths_hz{80.0, 90.0, 120.0, 130.0};
  double duration_s = 1.0;
  double noise_db = -20.0;  // noise level relative to the impulse train; -300 disables
  double peak = 0.7;
  double margin_s = 0.05;  // leading/trailing silence
};

/// Impulse train plus envelope-shaped noise through a cascade of resonators,
/// rendered with a time-domain recursion (independent of the STFT path).
AudioBuffer synthesize_vowel(const VowelSpec& spec, int sample_rate, std::uint64_t seed);

struct CorpusInfo {
  std::vector<std::string> files;  // basenames of the generated WAVs
};

/// n randomized vowels near canonical templates (F0 in [90, 300] Hz),
/// 22050 Hz, 1-2 s, with per-file ground-truth sidecar JSONs and a corpus
/// manifest. Byte-identical for a fixed seed.
CorpusInfo make_test_corpus(const std::string& out_dir, int count, std::uint64_t seed,
                            const PipelineConfig& config);

/// Sorted .wav paths under a directory; throws DataError when empty.
std::vector<std::string> list_corpus(const std::string& dir);

/// Reads a WAV and checks the sample rate against the config (unless
/// allow_any_rate is set).
AudioBuffer load_input_wav(const std::string& path, const PipelineConfig& config);

}  // namespace sofi

#endif  // SOFI_PIPELINE_HPP
