// Copyright 2026 The sofi authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sofi/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "sofi/features.hpp"
#include "sofi/util.hpp"
#include "sofi/wav.hpp"

namespace sofi {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string PipelineConfig::to_json() const {
  ordered_json doc;
  doc["sample_rate"] = sample_rate;
  doc["fft_size"] = stft.fft_size;
  doc["window_size"] = stft.window_size;
  doc["hop_size"] = stft.hop_size;
  doc["epsilon"] = stft.epsilon;
  doc["formant_order"] = formant_order;
  doc["envelope_order"] = envelope_order;
  doc["preemphasis"] = preemphasis;
  return doc.dump();
}

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed config " + path + ": " + e.what());
  }
  PipelineConfig cfg;
  cfg.sample_rate = doc.value("sample_rate", cfg.sample_rate);
  cfg.stft.fft_size = doc.value("fft_size", cfg.stft.fft_size);
  cfg.stft.window_size = doc.value("window_size", cfg.stft.window_size);
  cfg.stft.hop_size = doc.value("hop_size", cfg.stft.hop_size);
  cfg.stft.epsilon = doc.value("epsilon", cfg.stft.epsilon);
  cfg.formant_order = doc.value("formant_order", cfg.formant_order);
  cfg.envelope_order = doc.value("envelope_order", cfg.envelope_order);
  cfg.preemphasis = doc.value("preemphasis", cfg.preemphasis);
  cfg.stft.validate();
  return cfg;
}

std::string PipelineConfig::hash() const {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(to_json());
  return out.str();
}

void ManipulationSpec::validate() const {
  for (int i = 0; i < 4; ++i) {
    if (std::isfinite(shift.target_hz[i])) {
      if (!(shift.target_hz[i] > 0.0))
        throw std::invalid_argument("ManipulationSpec: formant targets must be positive");
      continue;
    }
    if (!(shift.scale[i] >= 0.5 && shift.scale[i] <= 2.0))
      throw std::invalid_argument("ManipulationSpec: scale factors must lie in [0.5, 2.0]");
  }
  if (f0_scale != 1.0)
    throw std::invalid_argument(
        "ManipulationSpec: F0 scaling is not supported by the source-filter resynthesis path");
}

AudioBuffer load_input_wav(const std::string& path, const PipelineConfig& config) {
  AudioBuffer audio = read_wav(path);
  if (audio.size() == 0) throw DataError(path + ": empty audio");
  if (!config.allow_any_rate && audio.sample_rate != config.sample_rate)
    throw DataError(path + ": sample rate " + std::to_string(audio.sample_rate) +
                    " does not match the configured " + std::to_string(config.sample_rate) +
                    " Hz; resample the file or pass --allow-any-rate");
  return audio;
}

namespace {

/// Inverse-filter by the analyzed envelopes and refilter by (possibly
/// modified) envelopes without collapsing to the time domain in between.
/// Going through an intermediate waveform would overlap-add neighboring
/// frames' 1/H-filtered content and the refilter could no longer cancel it
/// frame-exactly; per-bin ratios keep the round trip at machine precision
/// and also cancel the shared analysis noise of H and H'.
AudioBuffer resynthesize(const AudioBuffer& input, const AllPoleFrameSet& original,
                         const AllPoleFrameSet& modified, const StftConfig& config) {
  ComplexSpectrogram spec = stft(input, config);
  const MatrixXcd h_orig = envelope_spectrum(original, config).data;
  const MatrixXcd h_mod = envelope_spectrum(modified, config).data;
  spec.data = spec.data.cwiseQuotient((h_orig.array() + config.epsilon).matrix())
                  .cwiseProduct(h_mod);
  return istft(spec, false);
}

}  // namespace

CopySynthesisResult copy_synthesis(const AudioBuffer& input, const PipelineConfig& config) {
  const FrameAnalysis analysis =
      analyze_frames(input, config.stft, config.formant_order, 0.0);
  CopySynthesisResult res;
  res.residual = inverse_filter(input, analysis.frames, config.stft);
  res.output = resynthesize(input, analysis.frames, analysis.frames, config.stft);
  res.snr_db = snr_db(input.samples, res.output.samples);
  return res;
}

AudioBuffer manipulate(const AudioBuffer& input, const ManipulationSpec& spec,
                       const PipelineConfig& config) {
  spec.validate();
  if (spec.shift.is_identity()) return copy_synthesis(input, config).output;

  const FrameAnalysis analysis =
      analyze_frames(input, config.stft, config.formant_order, 0.0);
  MatrixXd modified = analysis.frames.a;
  for (Index m = 0; m < analysis.frames.frames(); ++m) {
    if (analysis.silent[m]) continue;  // identity filter, nothing to relocate
    try {
      modified.row(m) =
          relocate_formants(VectorXd(analysis.frames.a.row(m).transpose()), spec.shift,
                            input.sample_rate)
              .transpose();
    } catch (const DataError& e) {
      throw DataError("frame " + std::to_string(m) + ": " + e.what());
    }
  }
  const AllPoleFrameSet frames_mod =
      frames_from_polynomials(modified, analysis.frames.log_gain);
  return resynthesize(input, analysis.frames, frames_mod, config.stft);
}

std::vector<std::string> list_corpus(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("corpus directory not found: " + dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .wav files in corpus: " + dir);
  return files;
}

namespace {

/// Everything eval needs per (file, formant, scale) cell.
struct FileEval {
  std::map<std::pair<int, int>, std::vector<double>> errors;  // (formant, scale idx) -> |err|
  int failures = 0;
  std::vector<std::string> failure_notes;
};

FileEval eval_one_file(const std::string& path, const std::vector<double>& scales,
                       const std::vector<int>& formants, const PipelineConfig& config) {
  FileEval out;
  const AudioBuffer input = load_input_wav(path, config);
  const FormantTrack original = extract_formant_track(input, config.stft, config.formant_order,
                                                      config.preemphasis);
  const F0Estimate f0 = estimate_f0(input, config.stft);
  // One analysis serves every (formant, scale) cell of this file.
  const FrameAnalysis analysis =
      analyze_frames(input, config.stft, config.formant_order, 0.0);

  for (int formant : formants) {
    for (size_t si = 0; si < scales.size(); ++si) {
      const double scale = scales[si];
      FormantShift shift;
      shift.scale[static_cast<size_t>(formant - 1)] = scale;
      try {
        AudioBuffer output;
        if (shift.is_identity()) {
          output = resynthesize(input, analysis.frames, analysis.frames, config.stft);
        } else {
          MatrixXd modified = analysis.frames.a;
          for (Index m = 0; m < analysis.frames.frames(); ++m) {
            if (analysis.silent[m]) continue;
            modified.row(m) = relocate_formants(
                                  VectorXd(analysis.frames.a.row(m).transpose()), shift,
                                  input.sample_rate)
                                  .transpose();
          }
          const AllPoleFrameSet frames_mod =
              frames_from_polynomials(modified, analysis.frames.log_gain);
          output = resynthesize(input, analysis.frames, frames_mod, config.stft);
        }
        const FormantTrack re =
            extract_formant_track(output, config.stft, config.formant_order, config.preemphasis);
        std::vector<double>& cell = out.errors[{formant, static_cast<int>(si)}];
        const Index m = std::min(original.frames(), re.frames());
        for (Index i = 0; i < m; ++i) {
          if (f0.voicing(i) < 0.5) continue;
          const double target = scale * original.frequency(i, formant - 1);
          cell.push_back(std::abs(re.frequency(i, formant - 1) - target));
        }
      } catch (const std::exception& e) {
        ++out.failures;
        out.failure_notes.push_back(path + " F" + std::to_string(formant) + " x" +
                                    std::to_string(scale) + ": " + e.what());
      }
    }
  }
  return out;
}

}  // namespace

EvalReport eval_manipulation(const std::string& corpus_dir, const std::vector<double>& scales,
                             const std::vector<int>& formants, const PipelineConfig& config,
                             int jobs) {
  for (int f : formants) {
    if (f < 1 || f > 4) throw std::invalid_argument("eval_manipulation: formants must be 1..4");
  }
  if (scales.empty()) throw std::invalid_argument("eval_manipulation: no scales given");
  const std::vector<std::string> files = list_corpus(corpus_dir);

  std::vector<FileEval> per_file(files.size());
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(files.size())));
  std::atomic<size_t> next{0};
  auto work = [&]() {
    for (size_t i = next.fetch_add(1); i < files.size(); i = next.fetch_add(1))
      per_file[i] = eval_one_file(files[i], scales, formants, config);
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  EvalReport report;
  report.config_hash = config.hash();
  report.corpus = corpus_dir;
  report.scales = scales;
  report.formants = formants;
  for (const FileEval& fe : per_file) {
    report.failures += fe.failures;
    for (const std::string& note : fe.failure_notes) std::cerr << "eval: skipped " << note << "\n";
  }
  for (int formant : formants) {
    for (size_t si = 0; si < scales.size(); ++si) {
      std::vector<double> pooled;
      for (const FileEval& fe : per_file) {
        const auto it = fe.errors.find({formant, static_cast<int>(si)});
        if (it != fe.errors.end()) pooled.insert(pooled.end(), it->second.begin(), it->second.end());
      }
      EvalCell cell;
      cell.formant = formant;
      cell.scale = scales[si];
      cell.n_frames = static_cast<Index>(pooled.size());
      if (!pooled.empty()) {
        cell.median_hz = quantile(pooled, 0.5);
        cell.q25_hz = quantile(pooled, 0.25);
        cell.q75_hz = quantile(pooled, 0.75);
      }
      report.cells.push_back(cell);
    }
  }
  return report;
}

std::string eval_report_json(const EvalReport& report) {
  ordered_json doc;
  doc["config_hash"] = report.config_hash;
  doc["corpus"] = report.corpus;
  doc["scales"] = report.scales;
  doc["formants"] = report.formants;
  ordered_json cells = ordered_json::array();
  for (const EvalCell& c : report.cells) {
    cells.push_back({{"formant", c.formant},
                     {"scale", c.scale},
                     {"median_hz", c.median_hz},
                     {"q25_hz", c.q25_hz},
                     {"q75_hz", c.q75_hz},
                     {"n_frames", c.n_frames}});
  }
  doc["cells"] = std::move(cells);
  doc["failures"] = report.failures;
  return doc.dump(2);
}

std::string eval_report_csv(const EvalReport& report) {
  std::ostringstream out;
  out.precision(10);
  out << "formant,scale,median_hz,q25_hz,q75_hz,n_frames\n";
  for (const EvalCell& c : report.cells) {
    out << c.formant << ',' << c.scale << ',' << c.median_hz << ',' << c.q25_hz << ','
        << c.q75_hz << ',' << c.n_frames << '\n';
  }
  return out.str();
}

NormalizationSpec scan_normalization(const std::string& corpus_dir,
                                     const PipelineConfig& config) {
  const std::vector<std::string> files = list_corpus(corpus_dir);
  std::vector<std::vector<double>> pooled(9);
  for (const std::string& path : files) {
    const AudioBuffer audio = load_input_wav(path, config);
    const MatrixXd feats = extract_features(audio, config.stft).to_matrix();
    for (Index c = 0; c < 9; ++c) {
      for (Index i = 0; i < feats.rows(); ++i)
        pooled[static_cast<size_t>(c)].push_back(feats(i, c));
    }
  }
  NormalizationSpec spec;
  spec.min_values.resize(9);
  spec.max_values.resize(9);
  for (Index c = 0; c < 9; ++c) {
    spec.min_values(c) = quantile(pooled[static_cast<size_t>(c)], 0.01);
    spec.max_values(c) = quantile(pooled[static_cast<size_t>(c)], 0.99);
  }
  spec.validate();  // degenerate corpus -> error, per the normalize contract
  return spec;
}

AudioBuffer synthesize_vowel(const VowelSpec& spec, int sample_rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double fs = sample_rate;
  const Index margin = static_cast<Index>(std::lround(spec.margin_s * fs));
  const Index voiced = static_cast<Index>(std::lround(spec.duration_s * fs));
  const Index total = voiced + 2 * margin;

  ArrayXd excitation = ArrayXd::Zero(total);
  double mark = static_cast<double>(margin);
  while (mark < static_cast<double>(margin + voiced)) {
    excitation(static_cast<Index>(std::lround(mark))) += 1.0;
    const double pos = (mark - margin) / static_cast<double>(voiced);
    const double f0_now = spec.f0_hz * (1.0 - spec.f0_glide + 2.0 * spec.f0_glide * pos);
    mark += fs / f0_now;
  }
  const double impulse_rms = std::sqrt(spec.f0_hz / fs);
  const double sigma = impulse_rms * std::pow(10.0, spec.noise_db / 20.0);
  if (sigma > 0.0) {
    for (Index t = margin; t < margin + voiced; ++t) excitation(t) += sigma * gaussian(rng);
  }

  // 10 ms raised-cosine onset/offset
  const Index ramp = static_cast<Index>(std::lround(0.01 * fs));
  for (Index t = 0; t < ramp; ++t) {
    const double w = 0.5 - 0.5 * std::cos(M_PI * (t + 1) / (ramp + 1));
    excitation(margin + t) *= w;
    excitation(margin + voiced - 1 - t) *= w;
  }

  // cascade of resonators as one direct-form polynomial
  VectorXd poly(1);
  poly(0) = 1.0;
  for (int f = 0; f < 4; ++f) {
    const double r = std::exp(-M_PI * spec.bandwidths_hz[static_cast<size_t>(f)] / fs);
    const double theta = 2.0 * M_PI * spec.formants_hz[static_cast<size_t>(f)] / fs;
    VectorXd quad(3);
    quad << 1.0, -2.0 * r * std::cos(theta), r * r;
    VectorXd next = VectorXd::Zero(poly.size() + 2);
    for (Index i = 0; i < poly.size(); ++i)
      for (Index j = 0; j < 3; ++j) next(i + j) += poly(i) * quad(j);
    poly = next;
  }

  ArrayXd y = ArrayXd::Zero(total);
  const Index order = poly.size() - 1;
  for (Index t = 0; t < total; ++t) {
    double acc = excitation(t);
    for (Index k = 1; k <= std::min(order, t); ++k) acc -= poly(k) * y(t - k);
    y(t) = acc;
  }

  const double peak = y.abs().maxCoeff();
  if (peak > 0.0) y *= spec.peak / peak;
  return AudioBuffer{y, sample_rate};
}

namespace {

const std::array<std::array<double, 4>, 5> kVowelTemplates = {{
    {730.0, 1090.0, 2440.0, 3400.0},  // open back
    {570.0, 1000.0, 2420.0, 3420.0},  // open-mid back rounded
    {530.0, 1840.0, 2480.0, 3500.0},  // open-mid front
    {300.0, 870.0, 2240.0, 3300.0},   // close back rounded
    {400.0, 1700.0, 2600.0, 3600.0},  // mid central
}};

ordered_json vowel_sidecar(const VowelSpec& spec) {
  return ordered_json{{"f0_hz", spec.f0_hz},
                      {"f0_glide", spec.f0_glide},
                      {"formants_hz", spec.formants_hz},
                      {"bandwidths_hz", spec.bandwidths_hz},
                      {"duration_s", spec.duration_s},
                      {"noise_db", spec.noise_db},
                      {"peak", spec.peak}};
}

}  // namespace

CorpusInfo make_test_corpus(const std::string& out_dir, int count, std::uint64_t seed,
                            const PipelineConfig& config) {
  fs::create_directories(out_dir);
  std::mt19937_64 rng(seed);
  CorpusInfo info;
  if (count == 0) std::cerr << "make_test_corpus: generating an empty corpus\n";

  ordered_json manifest_files = ordered_json::array();
  for (int i = 0; i < count; ++i) {
    VowelSpec spec;
    const auto& base = kVowelTemplates[uniform_index(rng, kVowelTemplates.size())];
    for (size_t f = 0; f < 4; ++f)
      spec.formants_hz[f] = base[f] * uniform(rng, 0.96, 1.04);
    spec.bandwidths_hz = {uniform(rng, 50.0, 80.0), uniform(rng, 60.0, 100.0),
                          uniform(rng, 80.0, 120.0), uniform(rng, 100.0, 150.0)};
    spec.f0_hz = uniform(rng, 90.0, 300.0);
    spec.f0_glide = 0.09;
    spec.duration_s = uniform(rng, 1.0, 2.0);
    spec.noise_db = -25.0;

    char name[32];
    std::snprintf(name, sizeof(name), "vowel_%03d", i);
    const AudioBuffer audio = synthesize_vowel(spec, config.sample_rate, rng());
    write_wav((fs::path(out_dir) / (std::string(name) + ".wav")).string(), audio);
    std::ofstream side((fs::path(out_dir) / (std::string(name) + ".json")).string());
    side << vowel_sidecar(spec).dump(2) << '\n';
    info.files.push_back(std::string(name) + ".wav");
    manifest_files.push_back(info.files.back());
  }

  ordered_json manifest;
  manifest["count"] = count;
  manifest["seed"] = seed;
  manifest["files"] = std::move(manifest_files);
  std::ofstream mano((fs::path(out_dir) / "corpus.json").string());
  mano << manifest.dump(2) << '\n';
  return info;
}

}  // namespace sofi
