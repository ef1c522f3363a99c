#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <unsupported/Eigen/FFT>

#include "fbe/audio_io.hpp"
#include "fbe/filterbank.hpp"
#include "fbe/gain_stream.hpp"
#include "fbe/metrics.hpp"

namespace fbe::cli {

void Config::validate() const {
  engine.validate();
  estimator.validate();
  if (estimator_name != "mmse-lsa")
    throw ConfigError("unknown estimator '" + estimator_name + "' (supported: mmse-lsa)");
  if (!(stream_g_max > 0.0)) throw ConfigError("--stream-g-max must be positive");
}

namespace {

std::string fmt_optional(const std::optional<double>& v) {
  if (!v) return "NA";
  std::ostringstream s;
  s << std::setprecision(10) << *v;
  return s.str();
}

int cmd_design(const Config& cfg, const std::string& out_csv, Index dft_size, std::ostream& out) {
  const FilterbankSpec& spec = cfg.engine.filterbank;
  const PrototypeFilter<double> proto = design_prototype<double>(spec);
  if (dft_size < proto.taps.size()) throw ConfigError("--dft-size must be >= L+1");

  VectorXd padded = VectorXd::Zero(dft_size);
  padded.head(proto.taps.size()) = proto.taps;
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  ComplexVectorXd response;
  fft.fwd(response, padded);

  std::ofstream file;
  if (!out_csv.empty()) {
    file.open(out_csv);
    if (!file) throw IoError("cannot open " + out_csv + " for writing");
  }
  std::ostream& csv = out_csv.empty() ? out : file;
  csv << "index,tap,freq_hz,mag_db\n" << std::setprecision(17);
  const Index rows = std::max<Index>(proto.taps.size(), response.size());
  for (Index i = 0; i < rows; ++i) {
    csv << i << ',';
    if (i < proto.taps.size()) csv << proto.taps(i);
    csv << ',';
    if (i < response.size()) {
      const double mag = std::abs(response(i));
      csv << double(i) * spec.sample_rate_hz / double(dft_size) << ','
          << (mag > 0.0 ? 20.0 * std::log10(mag) : -400.0);
    } else {
      csv << ',';
    }
    csv << '\n';
  }
  if (!csv) throw IoError("failed writing design CSV");
  return kOk;
}

int cmd_analyze(const Config& cfg, const std::string& in_wav, const std::string& out_path,
                std::ostream& out) {
  const FilterbankSpec& spec = cfg.engine.filterbank;
  const AudioBuffer audio = read_wav(in_wav, spec.sample_rate_hz);
  const auto proto = design_prototype<double>(spec);
  const auto frames = analyze_polyphase(audio.samples, proto, spec);

  GainStream stream;
  stream.type = RecordType::kSubbandGains;
  stream.bands = static_cast<std::uint32_t>(spec.bands);
  stream.hop = static_cast<std::uint32_t>(spec.hop);
  stream.bins = static_cast<std::uint32_t>(spec.bins());
  stream.values.reserve(static_cast<std::size_t>(frames.frames.size()));
  for (Index k = 0; k < frames.count(); ++k)
    for (Index i = 0; i < spec.bins(); ++i)
      stream.values.emplace_back(static_cast<float>(frames.frames(k, i).real()),
                                 static_cast<float>(frames.frames(k, i).imag()));
  write_gain_stream(out_path, stream);
  out << "frames=" << frames.count() << " bins=" << spec.bins() << '\n';
  return kOk;
}

int cmd_enhance(const Config& cfg, const std::string& in_wav, const std::string& out_wav,
                WavFormat format, std::ostream& out, std::ostream& err) {
  const FilterbankSpec& spec = cfg.engine.filterbank;
  std::unique_ptr<GainSource<double>> source;
  if (!cfg.gains_path.empty()) {
    LoadedGainStream loaded =
        load_gain_stream(cfg.gains_path, spec, cfg.engine.shorten_len, cfg.stream_g_max);
    for (const auto& w : loaded.warnings) err << "warning: " << w << '\n';
    source = std::make_unique<StreamGainSource>(std::move(loaded.stream));
  } else {
    source = std::make_unique<MmseLsaSource<double>>(spec.bins(), cfg.estimator);
  }

  const AudioBuffer audio = read_wav(in_wav, spec.sample_rate_hz);
  const StreamResult<double> result = process_stream(audio.samples, *source, cfg.engine);
  if (!result.enhanced.allFinite()) throw NumericError("enhance: non-finite output");
  const WriteReport report = write_wav(out_wav, {result.enhanced, spec.sample_rate_hz}, format);

  out << std::fixed << std::setprecision(3) << "group_delay_ms=" << result.latency.group_delay_ms()
      << " block_ms=" << result.latency.block_ms() << '\n';
  if (report.clipped_samples > 0)
    err << "warning: " << report.clipped_samples << " samples clipped\n";
  return kOk;
}

int cmd_mix(const Config& cfg, const std::string& clean_wav, const std::string& noise_wav,
            double snr_db, const std::string& out_mix, const std::string& out_noise,
            WavFormat format, std::ostream& out, std::ostream& err) {
  const double rate = cfg.engine.filterbank.sample_rate_hz;
  const AudioBuffer clean = read_wav(clean_wav, rate);
  const AudioBuffer noise = read_wav(noise_wav, rate);
  const MixResult mix = mix_at_snr(clean.samples, noise.samples, snr_db, cfg.seed);
  const WriteReport a = write_wav(out_mix, {mix.mixture, rate}, format);
  Index clipped = a.clipped_samples;
  if (!out_noise.empty()) clipped += write_wav(out_noise, {mix.scaled_noise, rate}, format).clipped_samples;
  out << "noise_offset=" << mix.noise_offset << " noise_gain=" << std::setprecision(10)
      << mix.noise_gain << '\n';
  if (clipped > 0) err << "warning: " << clipped << " samples clipped\n";
  return kOk;
}

int cmd_evaluate(const Config& cfg, const std::string& clean_wav, const std::string& noise_wav,
                 Index delay, const std::vector<std::string>& files, std::ostream& out) {
  const FilterbankSpec& spec = cfg.engine.filterbank;
  const AudioBuffer clean = read_wav(clean_wav, spec.sample_rate_hz);
  std::optional<AudioBuffer> noise;
  if (!noise_wav.empty()) noise = read_wav(noise_wav, spec.sample_rate_hz);

  out << "file,snr_db,seg_na_db,seg_snr_db,ri_mag_loss,frames_noise_only,frames_total\n";
  for (const auto& f : files) {
    const AudioBuffer processed = read_wav(f, spec.sample_rate_hz);
    const VectorXd& n = noise ? noise->samples : VectorXd(VectorXd::Zero(clean.samples.size()));
    MetricReport report = evaluate_metrics(clean.samples, n, processed.samples, spec, delay);
    std::optional<double> snr;
    if (noise) {
      const Index len = std::min(clean.samples.size(), noise->samples.size());
      const double pn = noise->samples.head(len).squaredNorm();
      const double ps = clean.samples.head(len).squaredNorm();
      if (pn > 0.0 && ps > 0.0) snr = 10.0 * std::log10(ps / pn);
    } else {
      report.seg_na_db.reset();
    }
    out << f << ',' << fmt_optional(snr) << ',' << fmt_optional(report.seg_na_db) << ','
        << fmt_optional(report.seg_snr_db) << ',' << std::setprecision(10) << report.ri_mag_loss
        << ',' << report.frames_noise_only << ',' << report.frames_total << '\n';
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-latency filter-bank equalizer for speech enhancement", "fbe"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key = value configuration file; flags override it");

  Config cfg;
  auto& fb = cfg.engine.filterbank;
  auto& est = cfg.estimator;
  std::string mode = "ols";
  const std::map<std::string, FilterMode> modes{{"ols", FilterMode::kOverlapSave},
                                                {"direct", FilterMode::kDirect}};
  app.add_option("-M,--frame-size", fb.bands, "number of subbands M")->capture_default_str();
  app.add_option("-L,--proto-len", fb.proto_order, "prototype order L")->capture_default_str();
  app.add_option("-r,--hop", fb.hop, "hop / downsampling rate r")->capture_default_str();
  app.add_option("--sample-rate", fb.sample_rate_hz, "sample rate in Hz")->capture_default_str();
  app.add_option("-P,--shorten-len", cfg.engine.shorten_len, "shortened filter length P")
      ->capture_default_str();
  app.add_option("--mode", mode, "filtering mode")->check(CLI::IsMember({"ols", "direct"}))
      ->capture_default_str();
  app.add_option("--estimator", cfg.estimator_name, "built-in gain estimator")
      ->capture_default_str();
  app.add_option("--gains", cfg.gains_path, "FBEG gain stream replacing the estimator");
  app.add_option("--seed", cfg.seed, "random seed")->capture_default_str();
  app.add_option("--alpha-dd", est.alpha_dd, "decision-directed smoothing")->capture_default_str();
  app.add_option("--xi-min-db", est.xi_min_db, "a priori SNR floor (dB)")->capture_default_str();
  app.add_option("--gain-floor-db", est.gain_floor_db, "gain floor (dB)")->capture_default_str();
  app.add_option("--alpha-noise", est.alpha_noise, "noise PSD smoothing")->capture_default_str();
  app.add_option("--gamma-threshold", est.gamma_threshold, "noise update gate (linear)")
      ->capture_default_str();
  app.add_option("--init-frames", est.init_frames, "noise initialisation frames")
      ->capture_default_str();
  app.add_flag("--gate-bias-compensation,!--no-gate-bias-compensation",
               est.gate_bias_compensation, "unbiased gated noise update")
      ->capture_default_str();
  app.add_option("--stream-g-max", cfg.stream_g_max, "largest accepted |gain| in streams")
      ->capture_default_str();

  std::string out_path, in_path, out_wav, clean_path, noise_path, mix_out, noise_out;
  std::string format_name = "pcm16";
  Index dft_size = 2048;
  double snr_db = 0.0;
  Index delay = 0;
  std::vector<std::string> eval_files;
  const auto formats = CLI::IsMember({"pcm16", "float32"});

  auto* design = app.add_subcommand("design", "write prototype taps and magnitude response CSV");
  design->add_option("-o,--out", out_path, "CSV path (stdout when omitted)");
  design->add_option("--dft-size", dft_size, "response DFT size")->capture_default_str();

  auto* analyze = app.add_subcommand("analyze", "dump subband frames in FBEG layout");
  analyze->add_option("input", in_path, "input WAV")->required();
  analyze->add_option("-o,--out", out_path, "output FBEG file")->required();

  auto* enhance = app.add_subcommand("enhance", "run the equalizer on a WAV file");
  enhance->add_option("input", in_path, "input WAV")->required();
  enhance->add_option("output", out_wav, "output WAV")->required();
  enhance->add_option("--format", format_name, "output sample format")->check(formats);

  auto* mix = app.add_subcommand("mix", "mix clean speech and noise at a given SNR");
  mix->add_option("--clean", clean_path, "clean WAV")->required();
  mix->add_option("--noise", noise_path, "noise WAV")->required();
  mix->add_option("--snr-db", snr_db, "target SNR in dB")->required();
  mix->add_option("--out-mix", mix_out, "mixture WAV")->required();
  mix->add_option("--out-noise", noise_out, "scaled noise WAV");
  mix->add_option("--format", format_name, "output sample format")->check(formats);

  auto* evaluate = app.add_subcommand("evaluate", "objective metrics as CSV rows");
  evaluate->add_option("--clean", clean_path, "clean reference WAV")->required();
  evaluate->add_option("--noise", noise_path, "scaled noise WAV (enables segNA)");
  evaluate->add_option("--delay", delay, "samples to advance processed files")
      ->capture_default_str();
  evaluate->add_option("files", eval_files, "processed WAV files")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    cfg.engine.mode = modes.at(mode);
    cfg.validate();
    const WavFormat format = format_name == "float32" ? WavFormat::kFloat32 : WavFormat::kPcm16;
    if (*design) return cmd_design(cfg, out_path, dft_size, out);
    if (*analyze) return cmd_analyze(cfg, in_path, out_path, out);
    if (*enhance) return cmd_enhance(cfg, in_path, out_wav, format, out, err);
    if (*mix) return cmd_mix(cfg, clean_path, noise_path, snr_db, mix_out, noise_out, format, out, err);
    if (*evaluate) return cmd_evaluate(cfg, clean_path, noise_path, delay, eval_files, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kNumeric;
  }
  return kUsage;
}

}  // namespace fbe::cli
