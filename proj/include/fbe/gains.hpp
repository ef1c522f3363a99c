#ifndef FBE_GAINS_HPP_
#define FBE_GAINS_HPP_

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Core>

#include "fbe/types.hpp"

namespace fbe {

// Exponential integral E1(x) = int_x^inf exp(-t)/t dt for x > 0.
// Power series below 1, modified Lentz continued fraction above.
template <typename Scalar = double>
Scalar exp_integral_e1(Scalar x) {
  if (!(x > Scalar(0))) throw DomainError("exp_integral_e1: argument must be positive");
  constexpr Scalar eps = std::numeric_limits<Scalar>::epsilon();
  constexpr int max_iter = 500;
  if (x <= Scalar(1)) {
    Scalar sum = Scalar(0);
    Scalar term = Scalar(1);  // (-x)^k / k!
    for (int k = 1; k < max_iter; ++k) {
      term *= -x / Scalar(k);
      const Scalar add = term / Scalar(k);
      sum += add;
      if (std::abs(add) < eps * std::abs(sum)) break;
    }
    return -std::numbers::egamma_v<Scalar> - std::log(x) - sum;
  }
  const Scalar tiny = std::numeric_limits<Scalar>::min() / eps;
  Scalar b = x + Scalar(1);
  Scalar c = Scalar(1) / tiny;
  Scalar d = Scalar(1) / b;
  Scalar h = d;
  for (int i = 1; i < max_iter; ++i) {
    const Scalar an = -Scalar(i) * Scalar(i);
    b += Scalar(2);
    d = Scalar(1) / (an * d + b);
    c = b + an / c;
    const Scalar del = c * d;
    h *= del;
    if (std::abs(del - Scalar(1)) < eps) break;
  }
  return h * std::exp(-x);
}

template <typename Scalar>
struct GainFrame {
  ComplexVector<Scalar> values;  // M/2+1 bins
  Index frame = 0;               // 1-based frame index k
};

// Tuning of the MMSE-LSA estimator and its noise tracker. The defaults are
// the reference configuration used throughout the tests.
struct EstimatorParams {
  double alpha_dd = 0.98;
  double xi_min_db = -15.0;
  double gain_floor_db = -25.0;
  double alpha_noise = 0.8;
  double gamma_threshold = 2.5;
  Index init_frames = 6;
  double lambda_floor = 1e-20;
  double g_max = 1.0;
  // Rescale gated updates by 1 / E[X | X < gamma_threshold], X the unit-mean
  // power of a Gaussian subband sample, so the gated average is unbiased.
  bool gate_bias_compensation = true;

  double xi_min() const { return std::pow(10.0, xi_min_db / 10.0); }
  double gain_floor() const { return std::pow(10.0, gain_floor_db / 20.0); }

  // Complex bins: X exponential. Real bins (DC, Nyquist): X chi-square, 1 dof.
  double gate_bias_factor(bool real_bin = false) const {
    if (!gate_bias_compensation) return 1.0;
    const double t = gamma_threshold;
    if (!real_bin) return 1.0 / (1.0 - t * std::exp(-t) / -std::expm1(-t));
    const double a = std::sqrt(t);
    const double pdf = std::exp(-0.5 * t) / std::sqrt(2.0 * std::numbers::pi);
    return 1.0 / (1.0 - 2.0 * a * pdf / std::erf(a / std::numbers::sqrt2));
  }

  void validate() const {
    if (!(alpha_dd > 0.0 && alpha_dd < 1.0)) throw ConfigError("alpha_dd must lie in (0, 1)");
    if (!(alpha_noise > 0.0 && alpha_noise < 1.0))
      throw ConfigError("alpha_noise must lie in (0, 1)");
    if (!(gain_floor_db < 0.0)) throw ConfigError("gain_floor_db must be negative");
    if (!std::isfinite(xi_min_db)) throw ConfigError("xi_min_db must be finite");
    if (!(gamma_threshold > 0.0)) throw ConfigError("gamma_threshold must be positive");
    if (init_frames < 1) throw ConfigError("init_frames must be >= 1");
    if (!(lambda_floor > 0.0)) throw ConfigError("lambda_floor must be positive");
    if (!(g_max >= gain_floor())) throw ConfigError("g_max must be >= the gain floor");
  }
};

template <typename Scalar>
struct NoiseTrackerState {
  Vector<Scalar> lambda;      // noise PSD per bin
  Vector<Scalar> xi_prev;     // a priori SNR of the previous frame
  Vector<Scalar> gain_prev;   // gain applied in the previous frame
  Vector<Scalar> gamma_prev;  // a posteriori SNR of the previous frame
  Index frame_count = 0;

  static NoiseTrackerState initial(Index bins, const EstimatorParams& params) {
    NoiseTrackerState s;
    s.lambda = Vector<Scalar>::Constant(bins, Scalar(params.lambda_floor));
    s.xi_prev = Vector<Scalar>::Constant(bins, Scalar(params.xi_min()));
    s.gain_prev = Vector<Scalar>::Ones(bins);
    s.gamma_prev = Vector<Scalar>::Ones(bins);
    return s;
  }
};

// Gated recursive noise PSD tracking. The first init_frames frames are
// averaged unconditionally; afterwards a bin is updated only while its
// a posteriori SNR stays below gamma_threshold.
template <typename Scalar, typename Derived>
NoiseTrackerState<Scalar> update_noise_psd(NoiseTrackerState<Scalar> state,
                                           const Eigen::MatrixBase<Derived>& frame,
                                           const EstimatorParams& params) {
  const Index bins = state.lambda.size();
  if (frame.size() != bins)
    throw ConfigError("update_noise_psd: frame has " + std::to_string(frame.size()) +
                      " bins, tracker expects " + std::to_string(bins));
  const Scalar floor = Scalar(params.lambda_floor);
  const Scalar a = Scalar(params.alpha_noise);
  const Scalar bias = Scalar(params.gate_bias_factor());
  const Scalar bias_edge = Scalar(params.gate_bias_factor(true));  // bins 0 and M/2
  if (state.frame_count < params.init_frames) {
    const Scalar n = Scalar(state.frame_count);
    for (Index i = 0; i < bins; ++i) {
      const Scalar power = std::norm(frame(i));
      const Scalar prev = state.frame_count == 0 ? Scalar(0) : state.lambda(i);
      state.lambda(i) = (prev * n + power) / (n + Scalar(1));
    }
  } else {
    for (Index i = 0; i < bins; ++i) {
      const Scalar power = std::norm(frame(i));
      const Scalar b = (i == 0 || i == bins - 1) ? bias_edge : bias;
      if (power / state.lambda(i) < Scalar(params.gamma_threshold))
        state.lambda(i) = a * state.lambda(i) + (Scalar(1) - a) * b * power;
    }
  }
  state.lambda = state.lambda.cwiseMax(floor);
  ++state.frame_count;
  return state;
}

// Single-bin LSA gain for given a priori (xi) and a posteriori (gamma) SNR,
// before any clamping.
template <typename Scalar = double>
Scalar lsa_gain(Scalar xi, Scalar gamma) {
  const Scalar ratio = xi / (Scalar(1) + xi);
  const Scalar nu = gamma * ratio;
  if (!(nu > Scalar(0))) return std::numeric_limits<Scalar>::infinity();
  return ratio * std::exp(Scalar(0.5) * exp_integral_e1(nu));
}

// MMSE-LSA gain with decision-directed a priori SNR. Updates the
// decision-directed memory in `state`; the noise PSD is left untouched.
// Gains are real and clamped to [gain_floor, g_max].
template <typename Scalar, typename Derived>
GainFrame<Scalar> mmse_lsa_gain(const Eigen::MatrixBase<Derived>& frame,
                                NoiseTrackerState<Scalar>& state, const EstimatorParams& params) {
  const Index bins = state.lambda.size();
  if (frame.size() != bins) throw ConfigError("mmse_lsa_gain: frame dimension mismatch");
  const Scalar xi_min = Scalar(params.xi_min());
  const Scalar floor = Scalar(params.gain_floor());
  const Scalar ceil = Scalar(params.g_max);
  const Scalar a = Scalar(params.alpha_dd);

  GainFrame<Scalar> out;
  out.frame = state.frame_count;
  out.values.resize(bins);
  for (Index i = 0; i < bins; ++i) {
    const Scalar gamma = std::norm(frame(i)) / state.lambda(i);
    const Scalar dd = a * state.gain_prev(i) * state.gain_prev(i) * state.gamma_prev(i) +
                      (Scalar(1) - a) * std::max(gamma - Scalar(1), Scalar(0));
    const Scalar xi = std::max(xi_min, dd);
    Scalar gain = lsa_gain(xi, gamma);
    if (!(gain <= ceil)) gain = ceil;  // also catches the nu -> 0 limit
    gain = std::max(gain, floor);
    out.values(i) = std::complex<Scalar>(gain, Scalar(0));
    state.xi_prev(i) = xi;
    state.gain_prev(i) = gain;
    state.gamma_prev(i) = gamma;
  }
  return out;
}

// Frame-by-frame MMSE-LSA estimator owning its tracker state.
template <typename Scalar = double>
class MmseLsaEstimator {
 public:
  MmseLsaEstimator(Index bins, const EstimatorParams& params)
      : params_(params), state_(NoiseTrackerState<Scalar>::initial(bins, params)) {
    params_.validate();
  }

  template <typename Derived>
  GainFrame<Scalar> next(const Eigen::MatrixBase<Derived>& frame) {
    state_ = update_noise_psd(std::move(state_), frame, params_);
    return mmse_lsa_gain(frame, state_, params_);
  }

  const NoiseTrackerState<Scalar>& state() const { return state_; }
  const EstimatorParams& params() const { return params_; }

 private:
  EstimatorParams params_;
  NoiseTrackerState<Scalar> state_;
};

}  // namespace fbe

#endif  // FBE_GAINS_HPP_
