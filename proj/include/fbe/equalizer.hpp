#ifndef FBE_EQUALIZER_HPP_
#define FBE_EQUALIZER_HPP_

#include <cmath>
#include <complex>
#include <memory>
#include <string>
#include <variant>

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>

#include "fbe/filterbank.hpp"
#include "fbe/filters.hpp"
#include "fbe/gain_stream.hpp"
#include "fbe/gains.hpp"
#include "fbe/types.hpp"

namespace fbe {

inline constexpr double kSymmetryTolerance = 1e-9;

enum class FilterMode { kOverlapSave, kDirect };

struct EngineConfig {
  FilterbankSpec filterbank;
  Index shorten_len = 128;  // P
  FilterMode mode = FilterMode::kOverlapSave;

  Index dft_bins() const { return shorten_len + 1; }  // D
  Index block_size() const { return 2 * shorten_len; }

  void validate() const {
    filterbank.validate();
    const Index p = shorten_len;
    if (p < 2 || p % 2 != 0) throw ConfigError("P must be even and >= 2");
    if (p > filterbank.proto_length()) throw ConfigError("P must not exceed L+1");
    if (filterbank.tau() - p / 2 < 0 || filterbank.tau() + p / 2 - 1 > filterbank.proto_order)
      throw ConfigError("shortening window [tau-P/2, tau+P/2-1] leaves [0, L]");
    // 2P-point blocks yield P+1 alias-free samples; r of them are emitted.
    if (filterbank.hop > p + 1) throw ConfigError("hop r must not exceed P+1");
  }
};

struct LatencyReport {
  Index filter_group_delay_samples = 0;
  Index block_buffer_samples = 0;
  double sample_rate_hz = 0.0;

  double group_delay_ms() const { return 1e3 * double(filter_group_delay_samples) / sample_rate_hz; }
  double block_ms() const { return 1e3 * double(block_buffer_samples) / sample_rate_hz; }
};

inline LatencyReport latency_report(const EngineConfig& cfg) {
  return {cfg.shorten_len / 2, cfg.filterbank.hop, cfg.filterbank.sample_rate_hz};
}

// Maps subband responses to time-domain filters. Owns the FFT plans.
template <typename Scalar = double>
class FilterMapper {
 public:
  explicit FilterMapper(const PrototypeFilter<Scalar>& proto) : proto_(proto) {
    half_fft_.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);
  }

  // h(l) sum_i W_i phi_i(l) over the full Hermitian spectrum. The inner sum
  // is an M-point forward DFT evaluated at (l - tau) mod M.
  template <typename Derived>
  HighOrderFilter<Scalar> subband_to_time(const Eigen::MatrixBase<Derived>& gains_full) {
    const Index m = gains_full.size();
    const Index taps = proto_.taps.size();
    check_hermitian(gains_full);

    ComplexVector<Scalar> spectrum;
    ComplexVector<Scalar> in = gains_full;
    full_fft_.fwd(spectrum, in);

    const Scalar peak = spectrum.cwiseAbs().maxCoeff();
    const Scalar residue = spectrum.imag().cwiseAbs().maxCoeff();
    if (residue > Scalar(kSymmetryTolerance) * peak)
      throw SymmetryError("subband_to_time: imaginary residue " + std::to_string(double(residue)) +
                          " exceeds tolerance");

    HighOrderFilter<Scalar> hd;
    hd.taps.resize(taps);
    for (Index l = 0; l < taps; ++l) {
      Index idx = (l - proto_.tau) % m;
      if (idx < 0) idx += m;
      hd.taps(l) = proto_.taps(l) * spectrum(idx).real();
    }
    return hd;
  }

  // First P+1 bins of the 2P-point DFT of the zero-padded filter.
  FreqResponse<Scalar> to_freq(const ShortenedFilter<Scalar>& sf) {
    Vector<Scalar> padded = Vector<Scalar>::Zero(2 * sf.taps.size());
    padded.head(sf.taps.size()) = sf.taps;
    FreqResponse<Scalar> resp;
    half_fft_.fwd(resp.bins, padded);
    return resp;
  }

  // Time filter implied by a P+1 bin response: 2P taps.
  Vector<Scalar> to_time(const FreqResponse<Scalar>& resp) {
    Vector<Scalar> taps;
    half_fft_.inv(taps, resp.bins, 2 * resp.filter_length());
    return taps;
  }

  const PrototypeFilter<Scalar>& prototype() const { return proto_; }

 private:
  template <typename Derived>
  static void check_hermitian(const Eigen::MatrixBase<Derived>& w) {
    const Index m = w.size();
    if (m < 2 || m % 2 != 0) throw ConfigError("subband_to_time: M must be even");
    const Scalar tol = Scalar(kSymmetryTolerance) * w.cwiseAbs().maxCoeff();
    if (std::abs(w(0).imag()) > tol || std::abs(w(m / 2).imag()) > tol)
      throw SymmetryError("subband_to_time: DC and Nyquist gains must be real");
    for (Index i = 1; i < m / 2; ++i)
      if (std::abs(w(m - i) - std::conj(w(i))) > tol)
        throw SymmetryError("subband_to_time: gains are not Hermitian at bin " + std::to_string(i));
  }

  PrototypeFilter<Scalar> proto_;
  Eigen::FFT<Scalar> full_fft_;
  Eigen::FFT<Scalar> half_fft_;
};

template <typename Derived>
HighOrderFilter<typename Derived::Scalar::value_type> subband_to_time(
    const Eigen::MatrixBase<Derived>& gains_full,
    const PrototypeFilter<typename Derived::Scalar::value_type>& proto) {
  FilterMapper<typename Derived::Scalar::value_type> mapper(proto);
  return mapper.subband_to_time(gains_full);
}

// P-tap rectangular extraction centred on the group delay tau = L/2.
template <typename Scalar>
ShortenedFilter<Scalar> shorten_filter(const HighOrderFilter<Scalar>& hd, Index length) {
  if (hd.taps.size() % 2 == 0) throw ConfigError("shorten_filter: expected L+1 taps with L even");
  const Index tau = (hd.taps.size() - 1) / 2;
  const Index start = tau - length / 2;
  if (length < 2 || length % 2 != 0) throw ConfigError("shorten_filter: P must be even and >= 2");
  if (start < 0 || start + length > hd.taps.size())
    throw ConfigError("shorten_filter: window [tau-P/2, tau+P/2-1] out of range");
  return {hd.taps.segment(start, length), length / 2};
}

template <typename Scalar>
FreqResponse<Scalar> filter_to_freq(const ShortenedFilter<Scalar>& sf) {
  Vector<Scalar> padded = Vector<Scalar>::Zero(2 * sf.taps.size());
  padded.head(sf.taps.size()) = sf.taps;
  Eigen::FFT<Scalar> fft;
  fft.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);
  FreqResponse<Scalar> resp;
  fft.fwd(resp.bins, padded);
  return resp;
}

// Block filter state: the 2P most recent input samples, zero-initialised.
// One instance per stream.
template <typename Scalar = double>
class EngineState {
 public:
  EngineState(Index shorten_len, Index hop) : p_(shorten_len), hop_(hop) {
    if (p_ < 2 || p_ % 2 != 0) throw ConfigError("engine: P must be even and >= 2");
    if (hop_ < 1 || hop_ > p_ + 1) throw ConfigError("engine: hop r must lie in [1, P+1]");
    history_ = Vector<Scalar>::Zero(2 * p_);
    fft_.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);
  }

  Index frame() const { return frame_; }
  const Vector<Scalar>& history() const { return history_; }

  // Overlap-save: DFT of the 2P history times the Hermitian-expanded
  // response, inverse DFT, keep the last r samples.
  template <typename Derived>
  Vector<Scalar> ols_filter_frame(const FreqResponse<Scalar>& resp,
                                  const Eigen::MatrixBase<Derived>& block) {
    if (resp.bins.size() != p_ + 1)
      throw ConfigError("ols_filter_frame: response must have P+1 bins");
    const Scalar tol = Scalar(kSymmetryTolerance) * resp.bins.cwiseAbs().maxCoeff();
    if (std::abs(resp.bins(0).imag()) > tol || std::abs(resp.bins(p_).imag()) > tol)
      throw SymmetryError("ols_filter_frame: DC and Nyquist bins must be real");
    push(block);
    ComplexVector<Scalar> spectrum;
    fft_.fwd(spectrum, history_);
    spectrum = spectrum.cwiseProduct(resp.bins);
    spectrum(0) = spectrum(0).real();
    spectrum(p_) = spectrum(p_).real();
    Vector<Scalar> out;
    fft_.inv(out, spectrum, 2 * p_);
    return out.tail(hop_);
  }

  // Per-sample FIR with the block's taps held constant.
  template <typename Derived>
  Vector<Scalar> direct_filter_block(const ShortenedFilter<Scalar>& sf,
                                     const Eigen::MatrixBase<Derived>& block) {
    if (sf.taps.size() > p_ + 1)
      throw ConfigError("direct_filter_block: filter longer than P+1 taps");
    push(block);
    const Index n = history_.size();
    const Index taps = sf.taps.size();
    Vector<Scalar> out(hop_);
    for (Index j = 0; j < hop_; ++j) {
      const Index newest = n - hop_ + j;
      Scalar acc = Scalar(0);
      for (Index p = 0; p < taps; ++p) acc += history_(newest - p) * sf.taps(p);
      out(j) = acc;
    }
    return out;
  }

 private:
  template <typename Derived>
  void push(const Eigen::MatrixBase<Derived>& block) {
    if (block.size() != hop_)
      throw DataError("engine: block has " + std::to_string(block.size()) +
                      " samples, expected r = " + std::to_string(hop_));
    const Index n = history_.size();
    history_.head(n - hop_) = history_.tail(n - hop_).eval();
    history_.tail(hop_) = block.template cast<Scalar>();
    ++frame_;
  }

  Index p_;
  Index hop_;
  Index frame_ = 0;
  Vector<Scalar> history_;
  Eigen::FFT<Scalar> fft_;
};

// What a gain source hands the engine for one frame: subband gains (mapped
// through G1 and G2) or a ready DFT response (applied as is).
template <typename Scalar>
using FrameResponse = std::variant<GainFrame<Scalar>, FreqResponse<Scalar>>;

template <typename Scalar = double>
class GainSource {
 public:
  virtual ~GainSource() = default;
  // `frame` is the analysis frame k (1-based) of the input.
  virtual FrameResponse<Scalar> next(const ComplexVector<Scalar>& analysis, Index frame) = 0;
  // Frames this source can deliver; negative means unbounded.
  virtual Index available_frames() const { return -1; }
};

template <typename Scalar = double>
class MmseLsaSource final : public GainSource<Scalar> {
 public:
  MmseLsaSource(Index bins, const EstimatorParams& params) : estimator_(bins, params) {}

  FrameResponse<Scalar> next(const ComplexVector<Scalar>& analysis, Index frame) override {
    GainFrame<Scalar> g = estimator_.next(analysis);
    g.frame = frame;
    return g;
  }

  const MmseLsaEstimator<Scalar>& estimator() const { return estimator_; }

 private:
  MmseLsaEstimator<Scalar> estimator_;
};

// Same real gain in every bin of every frame.
template <typename Scalar = double>
class ConstantGainSource final : public GainSource<Scalar> {
 public:
  ConstantGainSource(Index bins, Scalar gain) : bins_(bins), gain_(gain) {}

  FrameResponse<Scalar> next(const ComplexVector<Scalar>&, Index frame) override {
    return GainFrame<Scalar>{ComplexVector<Scalar>::Constant(bins_, std::complex<Scalar>(gain_)),
                             frame};
  }

 private:
  Index bins_;
  Scalar gain_;
};

// Replays a decoded FBEG stream, one record per frame.
class StreamGainSource final : public GainSource<double> {
 public:
  explicit StreamGainSource(GainStream stream) : stream_(std::move(stream)) {}

  FrameResponse<double> next(const ComplexVector<double>&, Index frame) override {
    const auto idx = static_cast<std::size_t>(frame - 1);
    if (frame < 1 || idx >= stream_.frames())
      throw DataError("gain stream ended: no record for frame " + std::to_string(frame));
    if (stream_.type == RecordType::kSubbandGains) return stream_.gain_frame(idx);
    return stream_.freq_response(idx);
  }

  Index available_frames() const override { return static_cast<Index>(stream_.frames()); }
  const GainStream& stream() const { return stream_; }

 private:
  GainStream stream_;
};

// Streaming filter-bank equalizer: r samples in, r samples out per frame.
template <typename Scalar = double>
class Equalizer {
 public:
  explicit Equalizer(const EngineConfig& cfg)
      : cfg_(validated(cfg)),
        proto_(design_prototype<Scalar>(cfg_.filterbank)),
        analyzer_(proto_, cfg_.filterbank),
        mapper_(proto_),
        state_(cfg_.shorten_len, cfg_.filterbank.hop) {}

  const EngineConfig& config() const { return cfg_; }
  const PrototypeFilter<Scalar>& prototype() const { return proto_; }
  LatencyReport latency() const { return latency_report(cfg_); }
  Index frame() const { return state_.frame(); }

  template <typename Derived>
  Vector<Scalar> process_block(const Eigen::MatrixBase<Derived>& block, GainSource<Scalar>& source) {
    const ComplexVector<Scalar> analysis = analyzer_.push(block);
    const FrameResponse<Scalar> response = source.next(analysis, state_.frame() + 1);

    if (const auto* gains = std::get_if<GainFrame<Scalar>>(&response)) {
      if (gains->values.size() != cfg_.filterbank.bins())
        throw ConfigError("gain frame has the wrong number of bins");
      const HighOrderFilter<Scalar> hd = mapper_.subband_to_time(expand_hermitian(gains->values));
      const ShortenedFilter<Scalar> sf = shorten_filter(hd, cfg_.shorten_len);
      if (cfg_.mode == FilterMode::kDirect) return state_.direct_filter_block(sf, block);
      return state_.ols_filter_frame(mapper_.to_freq(sf), block);
    }

    const auto& resp = std::get<FreqResponse<Scalar>>(response);
    if (resp.bins.size() != cfg_.dft_bins())
      throw ConfigError("DFT response has the wrong number of bins");
    if (cfg_.mode == FilterMode::kDirect) {
      const Vector<Scalar> taps = mapper_.to_time(resp);
      return state_.direct_filter_block(ShortenedFilter<Scalar>{taps.head(cfg_.shorten_len),
                                                                cfg_.shorten_len / 2},
                                        block);
    }
    return state_.ols_filter_frame(resp, block);
  }

 private:
  static const EngineConfig& validated(const EngineConfig& cfg) {
    cfg.validate();
    return cfg;
  }

  EngineConfig cfg_;
  PrototypeFilter<Scalar> proto_;
  PolyphaseAnalyzer<Scalar> analyzer_;
  FilterMapper<Scalar> mapper_;
  EngineState<Scalar> state_;
};

template <typename Scalar>
struct StreamResult {
  Vector<Scalar> enhanced;  // K r samples
  LatencyReport latency;
  Index frames = 0;
};

// Runs the equalizer over a whole signal. Trailing samples that do not fill
// a hop are dropped.
template <typename Derived>
StreamResult<typename Derived::Scalar> process_stream(const Eigen::MatrixBase<Derived>& x,
                                                      GainSource<typename Derived::Scalar>& source,
                                                      const EngineConfig& cfg) {
  using Scalar = typename Derived::Scalar;
  Equalizer<Scalar> eq(cfg);
  const Index r = cfg.filterbank.hop;
  const Index frames = cfg.filterbank.frame_count(x.size());
  const Index available = source.available_frames();
  if (available >= 0 && available < frames)
    throw DataError("gain stream truncated: signal needs " + std::to_string(frames) +
                    " frames, stream ends before frame " + std::to_string(available + 1));

  StreamResult<Scalar> out;
  out.latency = eq.latency();
  out.frames = frames;
  out.enhanced.resize(frames * r);
  for (Index k = 0; k < frames; ++k)
    out.enhanced.segment(k * r, r) = eq.process_block(x.segment(k * r, r), source);
  return out;
}

}  // namespace fbe

#endif  // FBE_EQUALIZER_HPP_
