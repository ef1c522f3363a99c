#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "fbe/filterbank.hpp"
#include "fbe/gains.hpp"
#include "support/oracles.hpp"
#include "support/signals.hpp"

using namespace fbe;

TEST_CASE("E1 against quadrature and known values") {
  // 40-digit reference value.
  const double e1_one = 0.219383934395520273677163775460121649031;
  CHECK(std::abs(double(oracle::e1_quadrature(1.0L)) - e1_one) < 1e-14);
  CHECK(std::abs(exp_integral_e1(1.0) - 0.219384) <= 1e-6);
  CHECK(std::abs(exp_integral_e1(1.0) - e1_one) <= 1e-15);

  // Asymptotic series e^-x/x sum (-1)^k k!/x^k, truncated at its smallest term.
  const auto asymptotic = [](double x) {
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < int(x); ++k) {
      term *= -double(k) / x;
      sum += term;
    }
    return std::exp(-x) / x * sum;
  };
  CHECK(std::abs(exp_integral_e1(50.0) - asymptotic(50.0)) <= 0.01 * asymptotic(50.0));
  // Leading term alone is ~2% high at x = 50.
  CHECK(exp_integral_e1(50.0) < std::exp(-50.0) / 50.0);

  for (double x : {1e-3, 0.01, 0.3, 0.999, 1.0, 1.001, 2.0, 7.5, 20.0, 50.0}) {
    const double ref = double(oracle::e1_quadrature(x));
    CHECK(std::abs(exp_integral_e1(x) - ref) <= 1e-12 * ref);
  }

  CHECK_THROWS_AS(exp_integral_e1(0.0), DomainError);
  CHECK_THROWS_AS(exp_integral_e1(-1.0), DomainError);
}

TEST_CASE("E1 is strictly decreasing") {
  double prev = exp_integral_e1(1e-4);
  for (double x = 1.1e-4; x < 60.0; x *= 1.1) {
    const double v = exp_integral_e1(x);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("LSA gain values") {
  // xi = 1, gamma = 2 -> nu = 1
  CHECK(std::abs(lsa_gain(1.0, 2.0) - 0.5580) <= 1e-3);
  CHECK(std::abs(lsa_gain(1.0, 2.0) - 0.5579671365749458) <= 1e-12);

  SUBCASE("through the estimator with the initial decision-directed memory") {
    EstimatorParams params;
    auto state = NoiseTrackerState<double>::initial(3, params);
    state.lambda.setConstant(1.0);
    state.frame_count = params.init_frames;
    // alpha * 1 * 1 + (1 - alpha) * (2 - 1) = 1
    const ComplexVectorXd frame = ComplexVectorXd::Constant(3, std::sqrt(2.0));
    const auto g = mmse_lsa_gain(frame, state, params);
    for (Index i = 0; i < 3; ++i) CHECK(std::abs(g.values(i).real() - 0.5580) <= 1e-3);
  }
}

TEST_CASE("LSA gain clamps") {
  EstimatorParams params;
  SUBCASE("vanishing noise drives the gain to the ceiling") {
    auto state = NoiseTrackerState<double>::initial(4, params);
    state.lambda.setConstant(1e-18);
    const ComplexVectorXd frame = ComplexVectorXd::Constant(4, 0.1);
    const auto g = mmse_lsa_gain(frame, state, params);
    for (Index i = 0; i < 4; ++i) {
      CHECK(std::abs(g.values(i).real() - 1.0) <= 1e-12);
      CHECK(g.values(i).imag() == 0.0);
    }
  }
  SUBCASE("an empty frame sits at the nu -> 0 limit of the formula") {
    auto state = NoiseTrackerState<double>::initial(4, params);
    state.lambda.setConstant(1.0);
    const auto g = mmse_lsa_gain(ComplexVectorXd::Zero(4), state, params);
    for (Index i = 0; i < 4; ++i) CHECK(g.values(i).real() == 1.0);
  }
  SUBCASE("floor clamp") {
    params.xi_min_db = -40.0;
    auto state = NoiseTrackerState<double>::initial(2, params);
    state.lambda.setConstant(1.0);
    state.gain_prev.setZero();
    // gamma = 1: xi = xi_min = 1e-4, raw gain ~ 0.0075 < 10^(-25/20)
    CHECK(lsa_gain(1e-4, 1.0) < params.gain_floor());
    const auto g = mmse_lsa_gain(ComplexVectorXd::Ones(2), state, params);
    CHECK(g.values(0).real() == doctest::Approx(0.0562341325).epsilon(1e-9));
    CHECK(g.values(0).imag() == 0.0);
  }
}

TEST_CASE("noise tracker") {
  EstimatorParams params;
  SUBCASE("initial frames are averaged") {
    auto state = NoiseTrackerState<double>::initial(1, params);
    const double powers[] = {1.0, 4.0, 16.0};
    for (double p : powers)
      state = update_noise_psd(state, ComplexVectorXd::Constant(1, std::sqrt(p)), params);
    CHECK(state.lambda(0) == doctest::Approx(7.0));
    CHECK(state.frame_count == 3);
  }
  SUBCASE("zero frames decay to the floor") {
    auto state = NoiseTrackerState<double>::initial(5, params);
    state = update_noise_psd(state, ComplexVectorXd::Constant(5, 1.0), params);
    for (int k = 0; k < 400; ++k) state = update_noise_psd(state, ComplexVectorXd::Zero(5), params);
    CHECK((state.lambda.array() == params.lambda_floor).all());
  }
  SUBCASE("gate closed above the threshold") {
    auto state = NoiseTrackerState<double>::initial(2, params);
    state.lambda.setConstant(1e-3);
    state.frame_count = params.init_frames;
    const VectorXd before = state.lambda;
    state = update_noise_psd(state, ComplexVectorXd::Constant(2, 1.0), params);
    CHECK(state.lambda == before);
  }
  SUBCASE("gate open below the threshold") {
    params.gate_bias_compensation = false;
    auto state = NoiseTrackerState<double>::initial(1, params);
    state.lambda.setConstant(1.0);
    state.frame_count = params.init_frames;
    state = update_noise_psd(state, ComplexVectorXd::Constant(1, 1.0), params);
    CHECK(state.lambda(0) == doctest::Approx(1.0));
    state = update_noise_psd(state, ComplexVectorXd::Constant(1, std::sqrt(2.0)), params);
    CHECK(state.lambda(0) == doctest::Approx(0.8 + 0.2 * 2.0));
  }
  SUBCASE("dimension mismatch") {
    auto state = NoiseTrackerState<double>::initial(3, params);
    CHECK_THROWS_AS(update_noise_psd(state, ComplexVectorXd::Zero(4), params), ConfigError);
    CHECK_THROWS_AS(mmse_lsa_gain(ComplexVectorXd::Zero(2), state, params), ConfigError);
  }
  SUBCASE("bias factor for the truncated exponential") {
    // E[X | X < 2.5] = 1 - 2.5 e^-2.5 / (1 - e^-2.5)
    const double expected = 1.0 / (1.0 - 2.5 * std::exp(-2.5) / (1.0 - std::exp(-2.5)));
    CHECK(params.gate_bias_factor() == doctest::Approx(expected).epsilon(1e-14));
    // Real bins: E[Z^2 | Z^2 < t] = 1 - 2 a phi(a) / erf(a / sqrt 2), a = sqrt t
    const double a = std::sqrt(2.5);
    const double phi = std::exp(-1.25) / std::sqrt(2.0 * M_PI);
    const double p = double(oracle::simpson(
        [](long double z) { return std::exp(-z * z / 2) / std::sqrt(2 * M_PIl); }, (long double)-a, (long double)a, 1e-16L, 40));
    CHECK(params.gate_bias_factor(true) == doctest::Approx(1.0 / (1.0 - 2.0 * a * phi / p)).epsilon(1e-10));
    params.gate_bias_compensation = false;
    CHECK(params.gate_bias_factor() == 1.0);
    CHECK(params.gate_bias_factor(true) == 1.0);
  }
}

TEST_CASE("noise tracker converges on stationary white noise") {
  const FilterbankSpec spec;
  const auto proto = design_prototype(spec);
  const EstimatorParams params;

  // Oracle: long-run per-bin power over 1000 frames.
  const Index skip = (spec.proto_length() + spec.hop - 1) / spec.hop;  // zero-state frames
  const VectorXd long_noise = testing::white_noise((skip + 1000) * spec.hop, 999, 0.1);
  const auto long_frames = analyze_polyphase(long_noise, proto, spec).frames;
  REQUIRE(long_frames.rows() == skip + 1000);
  VectorXd truth = VectorXd::Zero(spec.bins());
  for (Index k = skip; k < skip + 1000; ++k) truth += long_frames.row(k).cwiseAbs2().transpose();
  truth /= 1000.0;

  // Tracker bias: per-bin lambda after 100 frames, averaged over independent runs.
  constexpr int runs = 40;
  VectorXd mean_lambda = VectorXd::Zero(spec.bins());
  for (int run = 0; run < runs; ++run) {
    const VectorXd noise = testing::white_noise((skip + 100) * spec.hop, 5000 + run, 0.1);
    const auto frames = analyze_polyphase(noise, proto, spec).frames;
    auto state = NoiseTrackerState<double>::initial(spec.bins(), params);
    for (Index k = skip; k < skip + 100; ++k)
      state = update_noise_psd(state, frames.row(k).transpose(), params);
    mean_lambda += state.lambda / double(runs);
  }
  for (Index i = 0; i < spec.bins(); ++i) {
    const double db = 10.0 * std::log10(mean_lambda(i) / truth(i));
    CHECK_MESSAGE(std::abs(db) <= 3.0, "bin " << i << " off by " << db << " dB");
  }
}

TEST_CASE("estimator on pure noise") {
  const FilterbankSpec spec;
  const auto proto = design_prototype(spec);
  const EstimatorParams params;
  const VectorXd noise = testing::white_noise(1200 * spec.hop, 77, 0.05);
  const auto frames = analyze_polyphase(noise, proto, spec).frames;

  MmseLsaEstimator<double> est(spec.bins(), params);
  MmseLsaEstimator<double> twin(spec.bins(), params);
  std::vector<double> tail;
  const double floor = params.gain_floor();
  for (Index k = 0; k < frames.rows(); ++k) {
    const auto g = est.next(frames.row(k).transpose());
    const auto h = twin.next(frames.row(k).transpose());
    REQUIRE(g.values == h.values);  // deterministic
    CHECK(g.frame == k + 1);
    for (Index i = 0; i < spec.bins(); ++i) {
      const double mag = std::abs(g.values(i));
      REQUIRE(mag >= floor);
      REQUIRE(mag <= params.g_max);
      REQUIRE(g.values(i).imag() == 0.0);
      if (k >= frames.rows() - 100) tail.push_back(mag);
    }
  }
  std::nth_element(tail.begin(), tail.begin() + tail.size() / 2, tail.end());
  const double median_db = 20.0 * std::log10(tail[tail.size() / 2]);
  CHECK(median_db <= -15.0);
}

TEST_CASE("estimator params validation") {
  EstimatorParams p;
  CHECK_NOTHROW(p.validate());
  p.alpha_dd = 1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.alpha_noise = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.gain_floor_db = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("E1 on a log-spaced grid") {
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const double x = 1e-3 * std::pow(5e4, n / 999.0);
    const double ref = double(oracle::e1_quadrature(x));
    worst = std::max(worst, std::abs(exp_integral_e1(x) - ref) / ref);
  }
  CHECK(worst <= 1e-7);
  MESSAGE("worst relative error " << worst);
}
