#ifndef FBE_GAIN_STREAM_HPP_
#define FBE_GAIN_STREAM_HPP_

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fbe/filterbank.hpp"
#include "fbe/filters.hpp"
#include "fbe/gains.hpp"
#include "fbe/types.hpp"

namespace fbe {

// FBEG gain-stream container, little-endian, no padding:
//
//   offset  size  field
//   0       4     magic "FBEG"
//   4       2     version (1)
//   6       1     record type (0 = subband gains, 1 = DFT responses)
//   7       1     reserved (0)
//   8       4     M
//   12      4     r
//   16      4     bins per record (M/2+1 or D)
//   20      4     number of records
//   24      ...   records of bins x (float32 re, float32 im)
enum class RecordType : std::uint8_t { kSubbandGains = 0, kDftResponse = 1 };

inline constexpr std::uint16_t kGainStreamVersion = 1;
inline constexpr std::size_t kGainStreamHeaderSize = 24;

struct GainStream {
  RecordType type = RecordType::kSubbandGains;
  std::uint32_t bands = 0;  // M
  std::uint32_t hop = 0;    // r
  std::uint32_t bins = 0;
  std::vector<std::complex<float>> values;  // frames x bins, row-major

  std::size_t frames() const { return bins == 0 ? 0 : values.size() / bins; }

  std::span<const std::complex<float>> record(std::size_t frame) const {
    return std::span<const std::complex<float>>(values).subspan(frame * bins, bins);
  }

  void append(std::span<const std::complex<float>> record);

  // Typed views; `frame` is the 0-based record index, stamped as k = frame + 1.
  GainFrame<double> gain_frame(std::size_t frame) const;
  FreqResponse<double> freq_response(std::size_t frame) const;
};

std::vector<std::uint8_t> encode_gain_stream(const GainStream& stream);
GainStream decode_gain_stream(std::span<const std::uint8_t> bytes);

void write_gain_stream(const std::filesystem::path& path, const GainStream& stream);
GainStream read_gain_stream(const std::filesystem::path& path);

// Throws ConfigError when the stream does not fit the active geometry.
void check_stream_geometry(const GainStream& stream, const FilterbankSpec& spec,
                           Index shorten_len);

// Fraction of the implied 2P-tap time filter's energy that lies beyond tap
// 2P - r, i.e. the part OLS would alias into the emitted samples.
double alias_tail_fraction(const FreqResponse<double>& response, Index hop);

inline constexpr double kAliasWarningThreshold = 1e-4;

struct LoadedGainStream {
  GainStream stream;
  std::vector<std::string> warnings;
};

// Reads, checks geometry, validates gain magnitudes against g_max and scans
// DFT-response records for time aliasing.
LoadedGainStream load_gain_stream(const std::filesystem::path& path, const FilterbankSpec& spec,
                                  Index shorten_len, double g_max = 4.0);

}  // namespace fbe

#endif  // FBE_GAIN_STREAM_HPP_
