#ifndef FBE_FILTERBANK_HPP_
#define FBE_FILTERBANK_HPP_

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>

#include "fbe/types.hpp"

namespace fbe {

// Geometry of the evenly stacked GDFT analysis filterbank.
struct FilterbankSpec {
  Index bands = 512;        // M
  Index proto_order = 512;  // L; the prototype has L+1 taps
  Index hop = 64;           // r
  double sample_rate_hz = 16000.0;

  Index tau() const { return proto_order / 2; }
  Index proto_length() const { return proto_order + 1; }
  Index bins() const { return bands / 2 + 1; }

  // Frames available from a signal of `samples` samples.
  Index frame_count(Index samples) const { return hop > 0 ? samples / hop : 0; }

  void validate() const {
    if (bands < 2 || bands % 2 != 0)
      throw ConfigError("filterbank: M must be even and >= 2, got " + std::to_string(bands));
    if (proto_order < 2 || proto_order % 2 != 0)
      throw ConfigError("filterbank: L must be even, got " + std::to_string(proto_order));
    if (proto_order + 1 < bands)
      throw ConfigError("filterbank: prototype length L+1 must be >= M");
    if (hop < 1 || hop > bands || bands % hop != 0)
      throw ConfigError("filterbank: hop r must divide M");
    if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz))
      throw ConfigError("filterbank: sample rate must be positive");
  }
};

inline bool operator==(const FilterbankSpec& a, const FilterbankSpec& b) {
  return a.bands == b.bands && a.proto_order == b.proto_order && a.hop == b.hop &&
         a.sample_rate_hz == b.sample_rate_hz;
}

template <typename Scalar>
struct PrototypeFilter {
  Vector<Scalar> taps;  // h(l), l = 0..L
  Index tau = 0;
};

template <typename Scalar>
struct AnalysisFrameSeq {
  ComplexFrames<Scalar> frames;  // K x (M/2+1); row k-1 holds frame k
  FilterbankSpec spec;

  Index count() const { return frames.rows(); }
};

// Hann window of L+1 points with zero endpoints and unit peak at L/2.
template <typename Scalar = double>
Vector<Scalar> hann_window(Index order) {
  Vector<Scalar> win(order + 1);
  const Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  for (Index l = 0; l <= order / 2; ++l) {
    const Scalar w = Scalar(0.5) - Scalar(0.5) * std::cos(two_pi * Scalar(l) / Scalar(order));
    win(l) = w;
    win(order - l) = w;
  }
  return win;
}

// Windowed-sinc prototype h(l) = (1/M) sinc((2 pi / M)(l - tau)) win(l).
// Taps are computed for l <= tau and mirrored, so the symmetry is exact.
template <typename Scalar = double>
PrototypeFilter<Scalar> design_prototype(const FilterbankSpec& spec) {
  spec.validate();
  const Index order = spec.proto_order;
  const Index tau = spec.tau();
  const Scalar inv_m = Scalar(1) / Scalar(spec.bands);
  const Scalar omega = Scalar(2) * std::numbers::pi_v<Scalar> / Scalar(spec.bands);
  const Vector<Scalar> win = hann_window<Scalar>(order);

  PrototypeFilter<Scalar> proto;
  proto.tau = tau;
  proto.taps.resize(order + 1);
  for (Index l = 0; l <= tau; ++l) {
    const Index offset = tau - l;
    Scalar sinc = Scalar(1);
    if (offset != 0) {
      const Scalar arg = omega * Scalar(offset);
      sinc = std::sin(arg) / arg;
    }
    const Scalar tap = inv_m * sinc * win(l);
    proto.taps(l) = tap;
    proto.taps(order - l) = tap;
  }
  return proto;
}

// GDFT modulation sequence exp(-j (2 pi / M) i (l - tau)). The phase index is
// reduced modulo M in integer arithmetic before the trig call.
template <typename Scalar = double>
std::complex<Scalar> modulation(const FilterbankSpec& spec, Index bin, Index tap) {
  const Index m = spec.bands;
  Index phase = (bin * (tap - spec.tau())) % m;
  if (phase < 0) phase += m;
  const Scalar angle = -Scalar(2) * std::numbers::pi_v<Scalar> * Scalar(phase) / Scalar(m);
  return std::polar(Scalar(1), angle);
}

// Band-pass kernels h(l) phi_i(l) for the stored half spectrum, one row per bin.
template <typename Scalar>
ComplexFrames<Scalar> analysis_kernels(const PrototypeFilter<Scalar>& proto,
                                       const FilterbankSpec& spec) {
  ComplexFrames<Scalar> kernels(spec.bins(), spec.proto_length());
  for (Index i = 0; i < spec.bins(); ++i)
    for (Index l = 0; l < spec.proto_length(); ++l)
      kernels(i, l) = proto.taps(l) * modulation<Scalar>(spec, i, l);
  return kernels;
}

namespace detail {

template <typename Scalar>
void check_proto(const PrototypeFilter<Scalar>& proto, const FilterbankSpec& spec) {
  if (proto.taps.size() != spec.proto_length())
    throw ConfigError("prototype length does not match filterbank spec");
}

}  // namespace detail

// Direct evaluation of the subband analysis sum. Frame k (1-based) sees the
// signal through 0-based sample k*r - 1; samples before t = 0 are zero.
template <typename Derived>
AnalysisFrameSeq<typename Derived::Scalar> analyze_direct(
    const Eigen::MatrixBase<Derived>& x, const PrototypeFilter<typename Derived::Scalar>& proto,
    const FilterbankSpec& spec) {
  using Scalar = typename Derived::Scalar;
  spec.validate();
  detail::check_proto(proto, spec);
  const Index frames = spec.frame_count(x.size());
  const Index taps = spec.proto_length();

  // history(k, l) = x(k r - 1 - l)
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> history =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(frames, taps);
  for (Index k = 0; k < frames; ++k) {
    const Index newest = (k + 1) * spec.hop - 1;
    const Index avail = std::min(taps, newest + 1);
    for (Index l = 0; l < avail; ++l) history(k, l) = x(newest - l);
  }

  AnalysisFrameSeq<Scalar> out;
  out.spec = spec;
  out.frames = history.template cast<std::complex<Scalar>>() *
               analysis_kernels(proto, spec).transpose();
  return out;
}

// Streaming polyphase analysis: window the L+1 most recent samples, fold them
// modulo M, take one M-point DFT and rotate by the tau offset.
template <typename Scalar = double>
class PolyphaseAnalyzer {
 public:
  PolyphaseAnalyzer(const PrototypeFilter<Scalar>& proto, const FilterbankSpec& spec)
      : spec_(spec), proto_(proto) {
    spec_.validate();
    detail::check_proto(proto_, spec_);
    history_ = Vector<Scalar>::Zero(spec_.proto_length());
    folded_.resize(spec_.bands);
    fft_.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);

    rotation_.resize(spec_.bins());
    const Index m = spec_.bands;
    const Index tau_mod = spec_.tau() % m;
    for (Index i = 0; i < spec_.bins(); ++i) {
      if (tau_mod == 0) {
        rotation_(i) = Scalar(1);
      } else if (2 * tau_mod == m) {
        rotation_(i) = (i % 2 == 0) ? Scalar(1) : Scalar(-1);
      } else {
        const Index phase = (i * tau_mod) % m;
        rotation_(i) = std::polar(Scalar(1), Scalar(2) * std::numbers::pi_v<Scalar> *
                                                 Scalar(phase) / Scalar(m));
      }
    }
  }

  const FilterbankSpec& spec() const { return spec_; }

  void reset() { history_.setZero(); }

  // Consumes exactly r new samples and returns the M/2+1 bin frame.
  template <typename Derived>
  ComplexVector<Scalar> push(const Eigen::MatrixBase<Derived>& block) {
    const Index r = spec_.hop;
    const Index n = history_.size();
    if (block.size() != r) throw DataError("polyphase analyzer: block must hold r samples");
    history_.head(n - r) = history_.tail(n - r).eval();
    history_.tail(r) = block.template cast<Scalar>();

    // history_(n-1-l) = x(t - l)
    folded_.setZero();
    const Index m = spec_.bands;
    for (Index l = 0; l < n; ++l) folded_(l % m) += history_(n - 1 - l) * proto_.taps(l);

    ComplexVector<Scalar> spectrum;
    fft_.fwd(spectrum, folded_);
    return spectrum.cwiseProduct(rotation_);
  }

 private:
  FilterbankSpec spec_;
  PrototypeFilter<Scalar> proto_;
  Vector<Scalar> history_;
  Vector<Scalar> folded_;
  ComplexVector<Scalar> rotation_;
  Eigen::FFT<Scalar> fft_;
};

template <typename Derived>
AnalysisFrameSeq<typename Derived::Scalar> analyze_polyphase(
    const Eigen::MatrixBase<Derived>& x, const PrototypeFilter<typename Derived::Scalar>& proto,
    const FilterbankSpec& spec) {
  using Scalar = typename Derived::Scalar;
  PolyphaseAnalyzer<Scalar> analyzer(proto, spec);
  const Index frames = spec.frame_count(x.size());
  AnalysisFrameSeq<Scalar> out;
  out.spec = spec;
  out.frames.resize(frames, spec.bins());
  for (Index k = 0; k < frames; ++k)
    out.frames.row(k) = analyzer.push(x.segment(k * spec.hop, spec.hop)).transpose();
  return out;
}

// Rebuilds the M-bin spectrum of a real signal from its lower M/2+1 bins.
// Bins 0 and M/2 must be real up to 1e-9 of the largest magnitude.
template <typename Derived>
ComplexVector<typename Derived::Scalar::value_type> expand_hermitian(
    const Eigen::MatrixBase<Derived>& half) {
  using Scalar = typename Derived::Scalar::value_type;
  const Index bins = half.size();
  if (bins < 2) throw ConfigError("expand_hermitian: need at least 2 bins");
  const Index m = 2 * (bins - 1);
  const Scalar peak = half.cwiseAbs().maxCoeff();
  const Scalar tol = Scalar(1e-9) * peak;
  if (!(std::abs(half(0).imag()) <= tol) || !(std::abs(half(bins - 1).imag()) <= tol))
    throw SymmetryError("expand_hermitian: DC and Nyquist bins must be real");

  ComplexVector<Scalar> full(m);
  full.head(bins) = half;
  for (Index i = bins; i < m; ++i) full(i) = std::conj(half(m - i));
  return full;
}

}  // namespace fbe

#endif  // FBE_FILTERBANK_HPP_
