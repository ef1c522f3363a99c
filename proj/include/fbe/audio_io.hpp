#ifndef FBE_AUDIO_IO_HPP_
#define FBE_AUDIO_IO_HPP_

#include <cstdint>
#include <filesystem>

#include "fbe/types.hpp"

namespace fbe {

struct AudioBuffer {
  VectorXd samples;
  double sample_rate_hz = 16000.0;
};

enum class WavFormat { kPcm16, kFloat32 };

// Mono RIFF/WAVE, 16-bit PCM (scaled by 1/32768) or 32-bit IEEE float.
// A positive `expected_rate_hz` rejects files at any other rate; there is no
// resampling.
AudioBuffer read_wav(const std::filesystem::path& path, double expected_rate_hz = 16000.0);

struct WriteReport {
  Index clipped_samples = 0;  // samples outside [-1, 1]
};

// PCM16 rounds half away from zero and saturates to [-32768, 32767].
WriteReport write_wav(const std::filesystem::path& path, const AudioBuffer& buffer,
                      WavFormat format = WavFormat::kPcm16);

std::int16_t to_pcm16(double sample);

struct MixResult {
  VectorXd mixture;
  VectorXd scaled_noise;
  Index noise_offset = 0;
  double noise_gain = 0.0;
};

// Crops `noise` at a seeded offset and scales it so that the full-utterance
// power ratio clean / scaled noise equals snr_db.
MixResult mix_at_snr(const VectorXd& clean, const VectorXd& noise, double snr_db,
                     std::uint64_t seed);

}  // namespace fbe

#endif  // FBE_AUDIO_IO_HPP_
