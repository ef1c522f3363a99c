#include <cstring>
#include <filesystem>
#include <random>

#include <doctest.h>

#include "fbe/equalizer.hpp"
#include "fbe/gain_stream.hpp"
#include "support/signals.hpp"

using namespace fbe;
namespace fs = std::filesystem;

namespace {

GainStream random_stream(RecordType type, std::uint32_t bins, std::size_t frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.5f, 1.5f);
  GainStream s{type, 512, 64, bins, {}};
  for (std::size_t k = 0; k < frames * bins; ++k) s.values.emplace_back(u(rng), u(rng));
  return s;
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("fbe_test_" + name);
}

// Offset carried by the FormatError thrown for `bytes`, or -1.
std::ptrdiff_t error_offset(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_gain_stream(bytes);
  } catch (const FormatError& e) {
    return static_cast<std::ptrdiff_t>(e.offset());
  }
  return -1;
}

}  // namespace

TEST_CASE("FBEG header layout") {
  GainStream s{RecordType::kDftResponse, 512, 64, 129, {}};
  s.append(std::vector<std::complex<float>>(129, {0.25f, -2.0f}));
  const auto bytes = encode_gain_stream(s);
  REQUIRE(bytes.size() == kGainStreamHeaderSize + 129 * 8);
  CHECK(std::memcmp(bytes.data(), "FBEG", 4) == 0);
  const std::uint8_t header[] = {'F', 'B', 'E', 'G', 1, 0, 1, 0, 0, 2, 0, 0, 64, 0, 0, 0,
                                 129, 0, 0, 0, 1, 0, 0, 0};
  CHECK(std::equal(std::begin(header), std::end(header), bytes.begin()));
  // 0.25f = 0x3E800000, -2.0f = 0xC0000000, little-endian
  const std::uint8_t first[] = {0x00, 0x00, 0x80, 0x3E, 0x00, 0x00, 0x00, 0xC0};
  CHECK(std::equal(std::begin(first), std::end(first), bytes.begin() + 24));
}

TEST_CASE("FBEG round trip is bit-identical") {
  for (const auto& [type, bins] : {std::pair{RecordType::kSubbandGains, 257u},
                                   std::pair{RecordType::kDftResponse, 129u}}) {
    const GainStream s = random_stream(type, bins, 37, bins);
    const auto bytes = encode_gain_stream(s);
    const GainStream back = decode_gain_stream(bytes);
    CHECK(back.type == s.type);
    CHECK(back.bands == 512);
    CHECK(back.hop == 64);
    CHECK(back.frames() == 37);
    REQUIRE(back.values.size() == s.values.size());
    CHECK(std::memcmp(back.values.data(), s.values.data(), s.values.size() * sizeof(s.values[0])) == 0);
    CHECK(encode_gain_stream(back) == bytes);

    const auto path = temp_file("roundtrip.fbeg");
    write_gain_stream(path, s);
    const GainStream from_file = read_gain_stream(path);
    CHECK(encode_gain_stream(from_file) == bytes);
    fs::remove(path);
  }
}

TEST_CASE("FBEG corrupted headers") {
  const GainStream s = random_stream(RecordType::kSubbandGains, 257, 4, 1);
  const auto good = encode_gain_stream(s);

  auto with = [&](std::size_t at, std::uint8_t v) {
    auto b = good;
    b[at] = v;
    return b;
  };
  CHECK(error_offset(with(0, 'X')) == 0);
  CHECK(error_offset(with(4, 2)) == 4);
  CHECK(error_offset(with(6, 7)) == 6);
  CHECK(error_offset(with(7, 1)) == 7);
  CHECK(error_offset(with(8, 0x01)) == 8);   // M = 513, odd
  CHECK(error_offset(with(12, 0)) == 12);    // r = 0
  CHECK(error_offset(with(16, 0)) == 16);    // bins != M/2+1
  CHECK(error_offset(with(20, 5)) == 24 + 4 * 257 * 8);  // claims 5 records
  CHECK(error_offset(std::vector<std::uint8_t>(good.begin(), good.begin() + 10)) == 10);
  CHECK(error_offset(std::vector<std::uint8_t>(good.begin(), good.end() - 3)) ==
        std::ptrdiff_t(good.size() - 3));
  auto trailing = good;
  trailing.push_back(0);
  CHECK(error_offset(trailing) >= 0);
  CHECK(error_offset({}) == 0);
}

TEST_CASE("FBEG fuzz never crashes") {
  const auto good = encode_gain_stream(random_stream(RecordType::kDftResponse, 129, 3, 2));
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> byte(0, 255);
  int rejected = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    auto b = good;
    const int flips = 1 + trial % 4;
    for (int f = 0; f < flips; ++f) b[std::uniform_int_distribution<std::size_t>(0, 27)(rng)] = std::uint8_t(byte(rng));
    if (trial % 3 == 0) b.resize(std::uniform_int_distribution<std::size_t>(0, b.size())(rng));
    try {
      const GainStream d = decode_gain_stream(b);
      CHECK(d.values.size() == std::size_t(d.frames()) * d.bins);
    } catch (const FormatError&) {
      ++rejected;
    }
  }
  CHECK(rejected > 0);
  // Pure noise.
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::uint8_t> b(std::uniform_int_distribution<std::size_t>(0, 100)(rng));
    for (auto& v : b) v = std::uint8_t(byte(rng));
    CHECK_THROWS_AS(decode_gain_stream(b), FormatError);
  }
}

TEST_CASE("loading checks geometry, magnitudes and aliasing") {
  const FilterbankSpec spec;
  const auto path = temp_file("load.fbeg");

  SUBCASE("geometry mismatch") {
    GainStream s{RecordType::kSubbandGains, 256, 64, 129, {}};
    s.append(std::vector<std::complex<float>>(129, 1.0f));
    write_gain_stream(path, s);
    CHECK_THROWS_AS(load_gain_stream(path, spec, 128), ConfigError);
    GainStream b{RecordType::kDftResponse, 512, 64, 65, {}};
    b.append(std::vector<std::complex<float>>(65, 1.0f));
    write_gain_stream(path, b);
    CHECK_THROWS_AS(load_gain_stream(path, spec, 128), ConfigError);
    CHECK_NOTHROW(load_gain_stream(path, spec, 64));
  }
  SUBCASE("gain above g_max") {
    GainStream s{RecordType::kSubbandGains, 512, 64, 257, {}};
    std::vector<std::complex<float>> rec(257, 1.0f);
    rec[40] = {3.0f, 3.0f};  // |g| = 4.24
    s.append(rec);
    write_gain_stream(path, s);
    CHECK_THROWS_AS(load_gain_stream(path, spec, 128), NumericError);
    CHECK_NOTHROW(load_gain_stream(path, spec, 128, 5.0));
  }
  SUBCASE("non-finite values") {
    GainStream s{RecordType::kDftResponse, 512, 64, 129, {}};
    std::vector<std::complex<float>> rec(129, 1.0f);
    rec[3] = {std::numeric_limits<float>::quiet_NaN(), 0.0f};
    s.append(rec);
    write_gain_stream(path, s);
    CHECK_THROWS_AS(load_gain_stream(path, spec, 128), NumericError);
  }
  SUBCASE("time-aliasing warning") {
    const Index p = 128;
    // Filter confined to the first P taps: clean.
    ShortenedFilter<double> sf{testing::uniform_noise(p, 4), 64};
    FreqResponse<double> clean = filter_to_freq(sf);
    CHECK(alias_tail_fraction(clean, 64) <= 1e-12);
    // Energy at tap 193, past 2P - r = 192: aliased.
    VectorXd taps = VectorXd::Zero(2 * p);
    taps(0) = 1.0;
    taps(193) = 0.1;
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    FreqResponse<double> leaky;
    fft.fwd(leaky.bins, taps);
    CHECK(alias_tail_fraction(leaky, 64) == doctest::Approx(0.01 / 1.01).epsilon(1e-9));

    GainStream s{RecordType::kDftResponse, 512, 64, 129, {}};
    for (const auto* r : {&clean, &leaky, &clean}) {
      std::vector<std::complex<float>> rec(129);
      for (Index d = 0; d <= p; ++d) rec[d] = std::complex<float>(r->bins(d));
      s.append(rec);
    }
    write_gain_stream(path, s);
    const auto loaded = load_gain_stream(path, spec, p);
    REQUIRE(loaded.warnings.size() == 1);
    CHECK(loaded.warnings[0].find("frame 2") != std::string::npos);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_gain_stream(temp_file("does_not_exist.fbeg"), spec, 128), IoError);
  }
  fs::remove(path);
}

TEST_CASE("all-ones type-A stream is the identity delay") {
  EngineConfig cfg;
  const VectorXd x = testing::white_noise(16000, 8, 0.2);
  GainStream s{RecordType::kSubbandGains, 512, 64, 257, {}};
  for (Index k = 0; k < 250; ++k) s.append(std::vector<std::complex<float>>(257, 1.0f));
  CHECK(s.gain_frame(9).frame == 10);
  CHECK(s.gain_frame(9).values == ComplexVectorXd::Ones(257));
  StreamGainSource src(s);
  const auto y = process_stream(x, src, cfg).enhanced;
  const Index warm = 512 + 256;
  const VectorXd got = y.tail(y.size() - warm);
  const VectorXd want = x.segment(warm - 64, y.size() - warm);
  CHECK((got - want).norm() / want.norm() <= 1e-9);
}
