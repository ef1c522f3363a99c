#ifndef FBE_METRICS_HPP_
#define FBE_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fbe/filterbank.hpp"
#include "fbe/types.hpp"

namespace fbe {

// Noise-only frames of a clean reference, framed at length r.
struct FrameLabeling {
  std::vector<Index> noise_only;  // sorted frame indices
  Index total_frames = 0;
  Index frame_length = 0;

  Index noise_only_count() const { return static_cast<Index>(noise_only.size()); }
  bool is_noise_only(Index m) const {
    return std::binary_search(noise_only.begin(), noise_only.end(), m);
  }
};

inline constexpr double kNoiseOnlyThresholdDb = -40.0;
// Per-frame segNA ratio used when the processed frame is exactly silent.
inline constexpr double kSegNaClampRatio = 1e10;

// A frame is noise-only when its clean energy is zero or lies more than
// |threshold_db| below the loudest frame.
template <typename Derived>
FrameLabeling label_noise_only(const Eigen::MatrixBase<Derived>& clean, Index frame_length,
                               double threshold_db = kNoiseOnlyThresholdDb) {
  if (frame_length < 1 || frame_length > clean.size())
    throw DataError("label_noise_only: frame length must lie in [1, signal length]");
  FrameLabeling out;
  out.frame_length = frame_length;
  out.total_frames = clean.size() / frame_length;
  std::vector<double> energy(out.total_frames);
  double peak = 0.0;
  for (Index m = 0; m < out.total_frames; ++m) {
    energy[m] = double(clean.segment(m * frame_length, frame_length).squaredNorm());
    peak = std::max(peak, energy[m]);
  }
  const double peak_db = peak > 0.0 ? 10.0 * std::log10(peak) : 0.0;
  for (Index m = 0; m < out.total_frames; ++m) {
    if (energy[m] == 0.0 || 10.0 * std::log10(energy[m]) < peak_db + threshold_db)
      out.noise_only.push_back(m);
  }
  return out;
}

// Advances `processed` by `delay` samples and trims both signals to their
// common length.
template <typename DerivedA, typename DerivedB>
Index compensated_length(const Eigen::MatrixBase<DerivedA>& reference,
                         const Eigen::MatrixBase<DerivedB>& processed, Index delay) {
  if (delay < 0 || delay > processed.size())
    throw DataError("delay compensation of " + std::to_string(delay) +
                    " samples exceeds the processed signal");
  return std::min<Index>(reference.size(), processed.size() - delay);
}

struct SegNaResult {
  std::optional<double> value_db;  // empty when there are no noise-only frames
  Index frames_used = 0;
  Index clamped_frames = 0;
};

// 10 log10 of the mean over noise-only frames of sum n^2 / sum n_hat^2.
template <typename DerivedA, typename DerivedB>
SegNaResult seg_na(const Eigen::MatrixBase<DerivedA>& noise,
                   const Eigen::MatrixBase<DerivedB>& processed, const FrameLabeling& labeling,
                   Index delay) {
  const Index r = labeling.frame_length;
  const Index length = compensated_length(noise, processed, delay);
  const Index frames = r > 0 ? length / r : 0;
  SegNaResult out;
  double sum = 0.0;
  for (Index m : labeling.noise_only) {
    if (m >= frames) break;
    const double num = double(noise.segment(m * r, r).squaredNorm());
    const double den = double(processed.segment(delay + m * r, r).squaredNorm());
    if (den > 0.0) {
      sum += num / den;
    } else {
      sum += kSegNaClampRatio;
      ++out.clamped_frames;
    }
    ++out.frames_used;
  }
  if (out.frames_used > 0) out.value_db = 10.0 * std::log10(sum / double(out.frames_used));
  return out;
}

struct SegSnrResult {
  std::optional<double> value_db;  // empty when any used frame is error-free
  Index frames_used = 0;
};

// (10 / N) sum over frames of log10(sum s^2 / sum (s_hat - s)^2). Frames with
// zero clean energy are skipped.
template <typename DerivedA, typename DerivedB>
SegSnrResult seg_snr(const Eigen::MatrixBase<DerivedA>& clean,
                     const Eigen::MatrixBase<DerivedB>& processed, Index frame_length, Index delay) {
  const Index r = frame_length;
  if (r < 1) throw DataError("seg_snr: frame length must be positive");
  const Index length = compensated_length(clean, processed, delay);
  if (length < r)
    throw DataError("seg_snr: fewer than r samples overlap after delay compensation");
  const Index frames = length / r;
  SegSnrResult out;
  double sum = 0.0;
  bool error_free = false;
  for (Index m = 0; m < frames; ++m) {
    const auto s = clean.segment(m * r, r);
    const double signal = double(s.squaredNorm());
    if (signal == 0.0) continue;
    const double error = double((processed.segment(delay + m * r, r) - s).squaredNorm());
    if (error == 0.0) error_free = true;
    else sum += std::log10(signal / error);
    ++out.frames_used;
  }
  if (!error_free && out.frames_used > 0) out.value_db = 10.0 * sum / double(out.frames_used);
  return out;
}

// Squared-error RI+Mag distance between two frame matrices.
template <typename Scalar>
Scalar ri_mag_loss(const AnalysisFrameSeq<Scalar>& ref, const AnalysisFrameSeq<Scalar>& est) {
  if (ref.frames.rows() != est.frames.rows() || ref.frames.cols() != est.frames.cols())
    throw ConfigError("ri_mag_loss: frame geometry mismatch");
  const Scalar ri = (ref.frames.real() - est.frames.real()).squaredNorm() +
                    (ref.frames.imag() - est.frames.imag()).squaredNorm();
  const Scalar mag = (ref.frames.cwiseAbs() - est.frames.cwiseAbs()).squaredNorm();
  return ri + mag;
}

struct MetricReport {
  std::optional<double> seg_na_db;
  std::optional<double> seg_snr_db;
  double ri_mag_loss = 0.0;
  Index frames_noise_only = 0;
  Index frames_total = 0;
  Index seg_na_clamped_frames = 0;
  Index delay_compensation_samples = 0;
};

// Full metric suite for one processed signal. `noise` is the scaled noise
// that was mixed into `clean`; `delay` advances `processed` before framing.
template <typename DerivedA, typename DerivedB, typename DerivedC>
MetricReport evaluate_metrics(const Eigen::MatrixBase<DerivedA>& clean,
                              const Eigen::MatrixBase<DerivedB>& noise,
                              const Eigen::MatrixBase<DerivedC>& processed,
                              const FilterbankSpec& spec, Index delay,
                              double threshold_db = kNoiseOnlyThresholdDb) {
  using Scalar = typename DerivedA::Scalar;
  const Index r = spec.hop;
  const Index length = compensated_length(clean, processed, delay);
  if (noise.size() < length) throw DataError("evaluate: noise shorter than the compared span");
  const Vector<Scalar> s = clean.head(length);
  const Vector<Scalar> n = noise.head(length);
  const Vector<Scalar> y = processed.segment(delay, length).template cast<Scalar>();

  MetricReport report;
  report.delay_compensation_samples = delay;
  const FrameLabeling labeling = label_noise_only(s, r, threshold_db);
  report.frames_total = labeling.total_frames;
  report.frames_noise_only = labeling.noise_only_count();
  const SegNaResult na = seg_na(n, y, labeling, 0);
  report.seg_na_db = na.value_db;
  report.seg_na_clamped_frames = na.clamped_frames;
  report.seg_snr_db = seg_snr(s, y, r, 0).value_db;

  const PrototypeFilter<Scalar> proto = design_prototype<Scalar>(spec);
  report.ri_mag_loss =
      double(ri_mag_loss(analyze_polyphase(s, proto, spec), analyze_polyphase(y, proto, spec)));
  return report;
}

}  // namespace fbe

#endif  // FBE_METRICS_HPP_
