#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "svae/audio.h"
#include "svae/config.h"

namespace svae::testing {

// Harmonic source with a gliding pitch, syllable-rate amplitude bumps and a
// little breath noise. Deterministic in (seconds, seed). A nonzero
// `trough_floor` keeps the envelope from dropping below that fraction,
// as in connected speech.
AudioSegment speech_like(double seconds, std::uint64_t seed, const std::string& id, int sample_rate = kModelSampleRate,
                         double trough_floor = 0.0);

AudioSegment sine(double freq, double seconds, int sample_rate, double amplitude = 0.5, const std::string& id = "sine");

// Smallest config that still exercises every layer type; fast on one core.
ExperimentConfig tiny_config();

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Writes each segment as <dir>/<id>.wav plus a manifest listing them.
std::filesystem::path write_corpus(const std::filesystem::path& dir, const std::vector<AudioSegment>& clips);

std::filesystem::path data_dir();

}  // namespace svae::testing
