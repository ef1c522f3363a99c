#include "fbe/audio_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

namespace fbe {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::string& path) {
  if (offset + sizeof(T) > bytes.size()) throw DataError(path + ": truncated WAV header");
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, bytes.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  T v;
  std::memcpy(&v, raw, sizeof(T));
  return v;
}

template <typename T>
void write_le(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

}  // namespace

std::int16_t to_pcm16(double sample) {
  const double scaled = std::round(sample * 32768.0);  // half away from zero
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

AudioBuffer read_wav(const std::filesystem::path& path, double expected_rate_hz) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + name);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError(name + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t data_offset = 0, data_size = 0;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(reinterpret_cast<const char*>(bytes.data() + pos), 4);
    const auto size = read_le<std::uint32_t>(bytes, pos + 4, name);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (size < 16) throw DataError(name + ": fmt chunk too short");
      format = read_le<std::uint16_t>(bytes, body, name);
      channels = read_le<std::uint16_t>(bytes, body + 2, name);
      rate = read_le<std::uint32_t>(bytes, body + 4, name);
      bits = read_le<std::uint16_t>(bytes, body + 14, name);
      if (format == kFormatExtensible) {
        if (size < 40) throw DataError(name + ": extensible fmt chunk too short");
        format = read_le<std::uint16_t>(bytes, body + 24, name);  // sub-format GUID prefix
      }
      have_fmt = true;
    } else if (id == "data") {
      data_offset = body;
      data_size = std::min<std::size_t>(size, bytes.size() - body);
      have_data = true;
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw DataError(name + ": missing fmt chunk");
  if (!have_data) throw DataError(name + ": missing data chunk");
  if (channels != 1)
    throw DataError(name + ": expected mono audio, found " + std::to_string(channels) +
                    " channels");
  if (expected_rate_hz > 0.0 && double(rate) != expected_rate_hz)
    throw DataError(name + ": sample rate " + std::to_string(rate) + " Hz, expected " +
                    std::to_string(static_cast<long>(expected_rate_hz)) + " Hz (no resampling)");

  AudioBuffer buf;
  buf.sample_rate_hz = rate;
  if (format == kFormatPcm && bits == 16) {
    const std::size_t n = data_size / 2;
    buf.samples.resize(static_cast<Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      buf.samples(static_cast<Index>(i)) =
          read_le<std::int16_t>(bytes, data_offset + 2 * i, name) / 32768.0;
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t n = data_size / 4;
    buf.samples.resize(static_cast<Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const float v = read_le<float>(bytes, data_offset + 4 * i, name);
      if (!std::isfinite(v)) throw DataError(name + ": non-finite sample " + std::to_string(i));
      buf.samples(static_cast<Index>(i)) = v;
    }
  } else {
    throw DataError(name + ": unsupported encoding (format tag " + std::to_string(format) +
                    ", " + std::to_string(bits) + " bits); need 16-bit PCM or 32-bit float");
  }
  return buf;
}

WriteReport write_wav(const std::filesystem::path& path, const AudioBuffer& buffer,
                      WavFormat format) {
  WriteReport report;
  const auto n = static_cast<std::uint32_t>(buffer.samples.size());
  const std::uint16_t bits = format == WavFormat::kPcm16 ? 16 : 32;
  const std::uint16_t block = bits / 8;
  const auto rate = static_cast<std::uint32_t>(std::lround(buffer.sample_rate_hz));
  const std::uint32_t data_bytes = n * block;

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, format == WavFormat::kPcm16 ? kFormatPcm : kFormatFloat);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, rate);
  write_le<std::uint32_t>(out, rate * block);
  write_le<std::uint16_t>(out, block);
  write_le<std::uint16_t>(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  write_le<std::uint32_t>(out, data_bytes);

  for (Index i = 0; i < buffer.samples.size(); ++i) {
    const double v = buffer.samples(i);
    if (!std::isfinite(v)) throw NumericError("write_wav: non-finite sample " + std::to_string(i));
    if (v > 1.0 || v < -1.0) ++report.clipped_samples;
    if (format == WavFormat::kPcm16) write_le<std::int16_t>(out, to_pcm16(v));
    else write_le<float>(out, static_cast<float>(v));
  }

  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("write failed: " + path.string());
  return report;
}

MixResult mix_at_snr(const VectorXd& clean, const VectorXd& noise, double snr_db,
                     std::uint64_t seed) {
  if (noise.size() < clean.size())
    throw DataError("mix_at_snr: noise must be at least as long as the clean signal");
  if (clean.size() == 0) throw DataError("mix_at_snr: empty clean signal");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(0, noise.size() - clean.size());

  MixResult out;
  out.noise_offset = pick(rng);
  const VectorXd cropped = noise.segment(out.noise_offset, clean.size());
  const double p_clean = clean.squaredNorm() / double(clean.size());
  const double p_noise = cropped.squaredNorm() / double(clean.size());
  if (!(p_clean > 0.0)) throw DataError("mix_at_snr: clean signal has zero power");
  if (!(p_noise > 0.0)) throw DataError("mix_at_snr: noise segment has zero power");
  out.noise_gain = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  out.scaled_noise = out.noise_gain * cropped;
  out.mixture = clean + out.scaled_noise;
  return out;
}

}  // namespace fbe
