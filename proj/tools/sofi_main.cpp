// Copyright 2026 The sofi authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Command-line surface: analysis, copy synthesis, formant manipulation, the
// manipulation-error evaluation harness, gradient certification, envelope
// fitting, normalization scanning and test-corpus generation.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "sofi/features.hpp"
#include "sofi/gradient.hpp"
#include "sofi/pipeline.hpp"
#include "sofi/util.hpp"
#include "sofi/wav.hpp"

namespace {

struct GlobalOptions {
  std::string config_path;
  std::uint64_t seed = 17;
  int jobs = 1;
};

sofi::PipelineConfig load_config(const GlobalOptions& global, bool allow_any_rate) {
  sofi::PipelineConfig cfg;
  if (!global.config_path.empty())
    cfg = sofi::PipelineConfig::from_json_file(global.config_path);
  cfg.allow_any_rate = allow_any_rate;
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw sofi::DataError("cannot open for writing: " + path);
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

/// Random stable evaluation point for gradient checks.
struct CheckPoint {
  sofi::MatrixXd theta;
  sofi::VectorXd log_gain;
  sofi::ArrayXd excitation;
  sofi::LossTarget lsd_target;
  sofi::LossTarget audio_tgt;
};

CheckPoint make_check_point(std::mt19937_64& rng, Eigen::Index frames, Eigen::Index order,
                            const sofi::StftConfig& stft) {
  CheckPoint pt;
  const sofi::StablePoint point = sofi::random_stable_point(rng, frames, order, stft);
  pt.theta = point.theta;
  pt.log_gain = point.log_gain;
  const Eigen::Index t_len = frames * stft.hop_size;
  pt.excitation.resize(t_len);
  for (Eigen::Index i = 0; i < t_len; ++i) pt.excitation(i) = sofi::gaussian(rng);

  const sofi::StablePoint target = sofi::random_stable_point(rng, frames, order, stft);
  const sofi::AllPoleFrameSet tgt_frames =
      sofi::frames_from_unconstrained(target.theta, target.log_gain);
  pt.lsd_target =
      sofi::envelope_target(sofi::envelope_spectrum(tgt_frames, stft).data.cwiseAbs());

  sofi::ArrayXd tgt_audio(t_len);
  for (Eigen::Index i = 0; i < t_len; ++i) tgt_audio(i) = 0.5 * sofi::gaussian(rng);
  pt.audio_tgt = sofi::audio_target(tgt_audio);
  return pt;
}

int run(int argc, char** argv) {
  CLI::App app{"sofi: source-filter speech analysis, manipulation and synthesis"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions global;
  app.add_option("--config", global.config_path, "JSON config overriding the defaults");
  app.add_option("--seed", global.seed, "random seed for seeded commands");
  app.add_option("--jobs", global.jobs, "parallel workers for corpus commands");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "extract the 9-feature track from a WAV");
  std::string in_path, out_csv, out_json, norm_path;
  bool allow_any_rate = false;
  analyze->add_option("input", in_path, "input WAV")->required();
  analyze->add_option("--csv", out_csv, "output CSV path");
  analyze->add_option("--json", out_json, "output JSON path");
  analyze->add_option("--norm", norm_path, "normalization spec; write normalized values");
  analyze->add_flag("--allow-any-rate", allow_any_rate, "accept any input sample rate");

  // copy-synth
  auto* copysynth = app.add_subcommand("copy-synth", "analysis/resynthesis identity path");
  std::string cs_in, cs_out;
  copysynth->add_option("input", cs_in, "input WAV")->required();
  copysynth->add_option("output", cs_out, "output WAV")->required();
  copysynth->add_flag("--allow-any-rate", allow_any_rate, "accept any input sample rate");

  // manipulate
  auto* manip = app.add_subcommand("manipulate", "formant-manipulated resynthesis");
  std::string mn_in, mn_out;
  sofi::ManipulationSpec mspec;
  manip->add_option("input", mn_in, "input WAV")->required();
  manip->add_option("output", mn_out, "output WAV")->required();
  manip->add_option("--s1", mspec.shift.scale[0], "F1 scale factor");
  manip->add_option("--s2", mspec.shift.scale[1], "F2 scale factor");
  manip->add_option("--s3", mspec.shift.scale[2], "F3 scale factor");
  manip->add_option("--s4", mspec.shift.scale[3], "F4 scale factor");
  manip->add_option("--f1", mspec.shift.target_hz[0], "absolute F1 target in Hz");
  manip->add_option("--f2", mspec.shift.target_hz[1], "absolute F2 target in Hz");
  manip->add_option("--f3", mspec.shift.target_hz[2], "absolute F3 target in Hz");
  manip->add_option("--f4", mspec.shift.target_hz[3], "absolute F4 target in Hz");
  manip->add_option("--f0-scale", mspec.f0_scale, "F0 scale (reserved, must stay 1)");
  manip->add_flag("--allow-any-rate", allow_any_rate, "accept any input sample rate");

  // eval
  auto* eval = app.add_subcommand("eval", "formant-manipulation error evaluation");
  std::string ev_corpus, ev_json = "eval_report.json", ev_csv;
  std::vector<double> ev_scales = {0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3};
  std::vector<int> ev_formants = {1, 2, 3, 4};
  eval->add_option("--corpus", ev_corpus, "corpus directory of mono WAVs")->required();
  eval->add_option("--scales", ev_scales, "scale factors to evaluate")->delimiter(',');
  eval->add_option("--formants", ev_formants, "formant slots (1..4)")->delimiter(',');
  eval->add_option("--out", ev_json, "output report JSON");
  eval->add_option("--csv", ev_csv, "output report CSV");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient certification");
  int gc_order = 30, gc_frames = 8, gc_points = 10, gc_coords = 108;
  double gc_tolerance = 1e-4, gc_step = 3e-6;
  std::string gc_out;
  gradcheck->add_option("--order", gc_order, "filter order");
  gradcheck->add_option("--frames", gc_frames, "number of frames");
  gradcheck->add_option("--points", gc_points, "random evaluation points");
  gradcheck->add_option("--coords", gc_coords, "coordinates sampled per point");
  gradcheck->add_option("--tolerance", gc_tolerance, "maximum allowed relative error");
  gradcheck->add_option("--step", gc_step, "finite-difference step scale");
  gradcheck->add_option("--out", gc_out, "output report JSON");

  // fit-envelope
  auto* fitenv = app.add_subcommand("fit-envelope", "gradient-descent envelope fitting demo");
  std::string fe_wav, fe_out;
  int fe_order = 10, fe_iters = 500;
  double fe_step = 1.0;
  fitenv->add_option("--wav", fe_wav, "fit the analyzed envelope of this WAV (default: synthetic)");
  fitenv->add_option("--order", fe_order, "model order");
  fitenv->add_option("--iters", fe_iters, "gradient-descent iterations");
  fitenv->add_option("--step", fe_step, "initial step size");
  fitenv->add_option("--out", fe_out, "output report JSON");
  fitenv->add_flag("--allow-any-rate", allow_any_rate, "accept any input sample rate");

  // scan-norm
  auto* scannorm = app.add_subcommand("scan-norm", "estimate feature normalization from a corpus");
  std::string sn_corpus, sn_out = "normalization.json";
  scannorm->add_option("--corpus", sn_corpus, "corpus directory")->required();
  scannorm->add_option("--out", sn_out, "output spec JSON");

  // make-corpus
  auto* makecorpus = app.add_subcommand("make-corpus", "generate the synthetic vowel corpus");
  std::string mc_out;
  int mc_n = 50;
  makecorpus->add_option("--out", mc_out, "output directory")->required();
  makecorpus->add_option("--n", mc_n, "number of files");

  CLI11_PARSE(app, argc, argv);
  const sofi::PipelineConfig cfg = load_config(global, allow_any_rate);

  if (*analyze) {
    const sofi::AudioBuffer audio = sofi::load_input_wav(in_path, cfg);
    sofi::FeatureTrack track = sofi::extract_features(audio, cfg.stft);
    if (out_csv.empty() && out_json.empty()) out_csv = in_path + ".features.csv";
    sofi::NormalizationSpec norm;
    const bool normalized = !norm_path.empty();
    if (normalized) {
      norm = sofi::read_normalization_json(norm_path);
      const sofi::MatrixXd scaled = sofi::normalize(track.to_matrix(), norm);
      track.log_f0 = scaled.col(0);
      track.voicing = scaled.col(1);
      track.formants = scaled.block(0, 2, scaled.rows(), 4);
      track.tilt = scaled.col(6);
      track.centroid = scaled.col(7);
      track.log_energy = scaled.col(8);
    }
    if (!out_csv.empty()) sofi::write_features_csv(out_csv, track);
    if (!out_json.empty())
      sofi::write_features_json(out_json, track, cfg.stft, normalized ? &norm : nullptr);
    std::cout << "analyzed " << track.frames() << " frames\n";
    return 0;
  }

  if (*copysynth) {
    const sofi::AudioBuffer input = sofi::load_input_wav(cs_in, cfg);
    const sofi::CopySynthesisResult res = sofi::copy_synthesis(input, cfg);
    sofi::write_wav(cs_out, res.output);
    std::cout << "copy-synth SNR: " << res.snr_db << " dB\n";
    return 0;
  }

  if (*manip) {
    const sofi::AudioBuffer input = sofi::load_input_wav(mn_in, cfg);
    const sofi::AudioBuffer output = sofi::manipulate(input, mspec, cfg);
    sofi::write_wav(mn_out, output);
    std::cout << "wrote " << mn_out << "\n";
    return 0;
  }

  if (*eval) {
    const sofi::EvalReport report =
        sofi::eval_manipulation(ev_corpus, ev_scales, ev_formants, cfg, global.jobs);
    write_text(ev_json, sofi::eval_report_json(report));
    if (!ev_csv.empty()) write_text(ev_csv, sofi::eval_report_csv(report));
    for (const sofi::EvalCell& c : report.cells) {
      std::cout << "F" << c.formant << " x" << c.scale << ": median " << c.median_hz
                << " Hz (n=" << c.n_frames << ")\n";
    }
    std::cout << "failures: " << report.failures << "\n";
    return 0;
  }

  if (*gradcheck) {
    std::mt19937_64 rng(global.seed);
    const std::vector<std::pair<std::string, sofi::LossKind>> losses = {
        {"lsd", sofi::LossKind::LogSpectralDistance},
        {"waveform_l2", sofi::LossKind::WaveformL2},
        {"log_stft_l1", sofi::LossKind::SpectralLogL1}};
    sofi::GradCheckOptions opts;
    opts.theta_coords = gc_coords * 4 / 9;
    opts.log_gain_coords = std::max(1, gc_coords / 13);
    opts.excitation_coords = gc_coords - opts.theta_coords - opts.log_gain_coords;
    opts.step = gc_step;
    double overall = 0.0;
    double stage_theta = 0.0, stage_log_gain = 0.0, stage_excitation = 0.0;
    nlohmann::ordered_json per_loss = nlohmann::ordered_json::object();
    for (const auto& [name, kind] : losses) {
      double loss_max = 0.0;
      for (int p = 0; p < gc_points; ++p) {
        const CheckPoint pt = make_check_point(rng, gc_frames, gc_order, cfg.stft);
        opts.seed = rng();
        const sofi::LossSpec spec{kind, sofi::Reduction::Mean};
        const sofi::LossTarget& target =
            kind == sofi::LossKind::LogSpectralDistance ? pt.lsd_target : pt.audio_tgt;
        const sofi::GradCheckReport rep = sofi::finite_diff_check(
            pt.theta, pt.log_gain, pt.excitation, target, spec, cfg.stft, opts);
        loss_max = std::max(loss_max, rep.max_rel_error);
        stage_theta = std::max(stage_theta, rep.max_rel_theta);
        stage_log_gain = std::max(stage_log_gain, rep.max_rel_log_gain);
        stage_excitation = std::max(stage_excitation, rep.max_rel_excitation);
      }
      per_loss[name] = loss_max;
      overall = std::max(overall, loss_max);
      std::cout << name << ": max rel error " << loss_max << "\n";
    }
    if (!gc_out.empty()) {
      nlohmann::ordered_json doc;
      doc["seed"] = global.seed;
      doc["order"] = gc_order;
      doc["frames"] = gc_frames;
      doc["points"] = gc_points;
      doc["coords"] = gc_coords;
      doc["tolerance"] = gc_tolerance;
      doc["max_rel_error"] = overall;
      doc["per_loss"] = per_loss;
      doc["per_stage"] = {{"theta", stage_theta},
                          {"log_gain", stage_log_gain},
                          {"excitation", stage_excitation}};
      doc["passed"] = overall < gc_tolerance;
      write_text(gc_out, doc.dump(2));
    }
    std::cout << "overall max rel error: " << overall
              << (overall < gc_tolerance ? " (pass)" : " (FAIL)") << "\n";
    return overall < gc_tolerance ? 0 : 3;
  }

  if (*fitenv) {
    sofi::MatrixXd target;
    if (fe_wav.empty()) {
      std::mt19937_64 rng(global.seed);
      sofi::MatrixXd theta(4, fe_order);
      for (Eigen::Index i = 0; i < theta.rows(); ++i)
        for (Eigen::Index j = 0; j < theta.cols(); ++j)
          theta(i, j) = sofi::uniform(rng, -1.0, 1.0);
      sofi::VectorXd log_gain(4);
      for (Eigen::Index i = 0; i < 4; ++i) log_gain(i) = sofi::uniform(rng, -0.3, 0.3);
      target = sofi::envelope_spectrum(sofi::frames_from_unconstrained(theta, log_gain), cfg.stft)
                   .data.cwiseAbs();
    } else {
      const sofi::AudioBuffer audio = sofi::load_input_wav(fe_wav, cfg);
      const sofi::FrameAnalysis analysis =
          sofi::analyze_frames(audio, cfg.stft, fe_order, 0.0);
      target = sofi::envelope_spectrum(analysis.frames, cfg.stft).data.cwiseAbs();
    }
    const sofi::FitResult res = sofi::fit_envelope(target, fe_order, fe_iters, fe_step, cfg.stft);
    std::cout << "fit-envelope: loss " << res.loss_curve.front() << " -> "
              << res.loss_curve.back() << " in " << res.iterations << " iterations\n";
    if (!fe_out.empty()) write_text(fe_out, sofi::fit_report_json(res));
    return 0;
  }

  if (*scannorm) {
    const sofi::NormalizationSpec spec = sofi::scan_normalization(sn_corpus, cfg);
    sofi::write_normalization_json(sn_out, spec);
    std::cout << "wrote " << sn_out << "\n";
    return 0;
  }

  if (*makecorpus) {
    const sofi::CorpusInfo info = sofi::make_test_corpus(mc_out, mc_n, global.seed, cfg);
    std::cout << "generated " << info.files.size() << " files in " << mc_out << "\n";
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const sofi::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const sofi::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
