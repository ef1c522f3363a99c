#include "fbe/gain_stream.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include <unsupported/Eigen/FFT>

namespace fbe {

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (offset + sizeof(T) > bytes.size())
    throw FormatError("FBEG: truncated data", bytes.size());
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, bytes.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  T value;
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

}  // namespace

void GainStream::append(std::span<const std::complex<float>> record) {
  if (record.size() != bins)
    throw ConfigError("gain stream: record has " + std::to_string(record.size()) +
                      " bins, stream expects " + std::to_string(bins));
  values.insert(values.end(), record.begin(), record.end());
}

GainFrame<double> GainStream::gain_frame(std::size_t frame) const {
  if (type != RecordType::kSubbandGains)
    throw ConfigError("gain stream: records are DFT responses, not subband gains");
  GainFrame<double> out;
  out.frame = static_cast<Index>(frame) + 1;
  out.values.resize(bins);
  auto rec = record(frame);
  for (std::size_t i = 0; i < bins; ++i) out.values(i) = std::complex<double>(rec[i]);
  return out;
}

FreqResponse<double> GainStream::freq_response(std::size_t frame) const {
  if (type != RecordType::kDftResponse)
    throw ConfigError("gain stream: records are subband gains, not DFT responses");
  FreqResponse<double> out;
  out.frame = static_cast<Index>(frame) + 1;
  out.bins.resize(bins);
  auto rec = record(frame);
  for (std::size_t i = 0; i < bins; ++i) out.bins(i) = std::complex<double>(rec[i]);
  return out;
}

std::vector<std::uint8_t> encode_gain_stream(const GainStream& stream) {
  if (stream.bins == 0 || stream.values.size() % stream.bins != 0)
    throw ConfigError("gain stream: payload is not a whole number of records");
  if (stream.frames() > std::numeric_limits<std::uint32_t>::max())
    throw ConfigError("gain stream: too many records");
  std::vector<std::uint8_t> out;
  out.reserve(kGainStreamHeaderSize + stream.values.size() * 8);
  for (const char c : {'F', 'B', 'E', 'G'}) out.push_back(static_cast<std::uint8_t>(c));
  put_le<std::uint16_t>(out, kGainStreamVersion);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(stream.type));
  put_le<std::uint8_t>(out, 0);
  put_le<std::uint32_t>(out, stream.bands);
  put_le<std::uint32_t>(out, stream.hop);
  put_le<std::uint32_t>(out, stream.bins);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(stream.frames()));
  for (const auto& v : stream.values) {
    put_le<float>(out, v.real());
    put_le<float>(out, v.imag());
  }
  return out;
}

GainStream decode_gain_stream(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kGainStreamHeaderSize)
    throw FormatError("FBEG: header truncated", bytes.size());
  if (std::memcmp(bytes.data(), "FBEG", 4) != 0) throw FormatError("FBEG: bad magic", 0);
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kGainStreamVersion)
    throw FormatError("FBEG: unsupported version " + std::to_string(version), 4);
  const auto type = get_le<std::uint8_t>(bytes, 6);
  if (type > 1) throw FormatError("FBEG: unknown record type " + std::to_string(type), 6);
  if (get_le<std::uint8_t>(bytes, 7) != 0) throw FormatError("FBEG: reserved byte not zero", 7);

  GainStream stream;
  stream.type = static_cast<RecordType>(type);
  stream.bands = get_le<std::uint32_t>(bytes, 8);
  stream.hop = get_le<std::uint32_t>(bytes, 12);
  stream.bins = get_le<std::uint32_t>(bytes, 16);
  const auto frames = get_le<std::uint32_t>(bytes, 20);

  if (stream.bands == 0 || stream.bands % 2 != 0)
    throw FormatError("FBEG: M must be even and nonzero", 8);
  if (stream.hop == 0) throw FormatError("FBEG: r must be nonzero", 12);
  if (stream.bins == 0) throw FormatError("FBEG: bin count must be nonzero", 16);
  if (stream.type == RecordType::kSubbandGains && stream.bins != stream.bands / 2 + 1)
    throw FormatError("FBEG: subband-gain records must hold M/2+1 bins", 16);

  const std::uint64_t payload = std::uint64_t{frames} * stream.bins * 8;
  const std::uint64_t available = bytes.size() - kGainStreamHeaderSize;
  if (payload > available) {
    const std::uint64_t whole = available / (std::uint64_t{stream.bins} * 8);
    throw FormatError("FBEG: payload truncated in record " + std::to_string(whole),
                      bytes.size());
  }
  if (payload < available)
    throw FormatError("FBEG: trailing bytes after last record",
                      kGainStreamHeaderSize + static_cast<std::size_t>(payload));

  const std::size_t count = std::size_t{frames} * stream.bins;
  stream.values.resize(count);
  std::size_t offset = kGainStreamHeaderSize;
  for (std::size_t i = 0; i < count; ++i, offset += 8)
    stream.values[i] = {get_le<float>(bytes, offset), get_le<float>(bytes, offset + 4)};
  return stream;
}

void write_gain_stream(const std::filesystem::path& path, const GainStream& stream) {
  const auto bytes = encode_gain_stream(stream);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

GainStream read_gain_stream(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open gain stream " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_gain_stream(bytes);
}

void check_stream_geometry(const GainStream& stream, const FilterbankSpec& spec,
                           Index shorten_len) {
  if (Index(stream.bands) != spec.bands || Index(stream.hop) != spec.hop)
    throw ConfigError("gain stream geometry M=" + std::to_string(stream.bands) +
                      " r=" + std::to_string(stream.hop) + " does not match configured M=" +
                      std::to_string(spec.bands) + " r=" + std::to_string(spec.hop));
  const Index expected =
      stream.type == RecordType::kSubbandGains ? spec.bins() : shorten_len + 1;
  if (Index(stream.bins) != expected)
    throw ConfigError("gain stream has " + std::to_string(stream.bins) +
                      " bins per record, configuration expects " + std::to_string(expected));
}

double alias_tail_fraction(const FreqResponse<double>& response, Index hop) {
  const Index p = response.filter_length();
  const Index n = 2 * p;
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  VectorXd taps;
  fft.inv(taps, response.bins, n);
  const double total = taps.squaredNorm();
  if (!(total > 0.0)) return 0.0;
  const Index first_aliased = n - hop + 1;
  if (first_aliased >= n) return 0.0;
  return taps.tail(n - first_aliased).squaredNorm() / total;
}

LoadedGainStream load_gain_stream(const std::filesystem::path& path, const FilterbankSpec& spec,
                                  Index shorten_len, double g_max) {
  LoadedGainStream loaded{read_gain_stream(path), {}};
  const GainStream& s = loaded.stream;
  check_stream_geometry(s, spec, shorten_len);

  for (std::size_t k = 0; k < s.frames(); ++k) {
    auto rec = s.record(k);
    for (std::size_t i = 0; i < rec.size(); ++i) {
      const auto v = rec[i];
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
        throw NumericError("gain stream: non-finite value in frame " + std::to_string(k + 1));
      if (s.type == RecordType::kSubbandGains && std::abs(std::complex<double>(v)) > g_max)
        throw NumericError("gain stream: |gain| exceeds g_max in frame " +
                           std::to_string(k + 1) + ", bin " + std::to_string(i));
    }
    if (s.type == RecordType::kDftResponse) {
      const double tail = alias_tail_fraction(s.freq_response(k), spec.hop);
      if (tail > kAliasWarningThreshold) {
        std::ostringstream msg;
        msg << "frame " << (k + 1) << ": " << tail
            << " of the response energy lies beyond tap 2P-r and will alias";
        loaded.warnings.push_back(msg.str());
      }
    }
  }
  return loaded;
}

}  // namespace fbe
