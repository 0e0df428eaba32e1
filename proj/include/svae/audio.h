#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <future>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace svae {

inline constexpr int kModelSampleRate = 16000;

struct AudioSegment {
  std::vector<float> samples;
  int sample_rate = kModelSampleRate;
  std::string source_id;

  std::size_t size() const { return samples.size(); }
  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

enum class WavEncoding { kPcm16, kFloat32 };

// Reads a PCM16 or float32 WAV, averaging channels to mono. Values are
// peak-normalized (see peak_normalize) so they always land in [-1, 1].
AudioSegment load_audio(const std::filesystem::path& path);

// Parses WAV bytes already in memory; `source_id` is copied into the result.
AudioSegment decode_wav(std::span<const std::uint8_t> bytes, std::string source_id);

std::vector<std::uint8_t> encode_wav(const AudioSegment& seg,
                                     WavEncoding encoding = WavEncoding::kPcm16);
void write_wav(const std::filesystem::path& path, const AudioSegment& seg,
               WavEncoding encoding = WavEncoding::kPcm16);

// Scales to a 0.95 peak if any |sample| exceeds 1; otherwise leaves the
// segment untouched. Non-finite samples are a FormatError.
void peak_normalize(AudioSegment& seg);

// Kaiser-windowed sinc resampler (beta 14.77, 64 zero crossings). Output
// length is round(len * target / source). Equal rates return a copy.
AudioSegment resample(const AudioSegment& seg, int target_rate);

// One path per line; relative paths resolve against the manifest directory.
// Blank lines and lines starting with '#' are skipped.
std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest);

// Loads, downmixes and resamples to 16 kHz.
AudioSegment load_for_model(const std::filesystem::path& path);

struct BatchSpec {
  double segment_seconds = 3.0;
  int batch_size = 1;
  std::uint64_t shuffle_seed = 0;

  std::int64_t window_samples() const;
  void validate() const;
};

// Row-major (batch_size x window) samples plus per-row provenance.
struct Batch {
  std::int64_t index = 0;
  std::int64_t batch_size = 0;
  std::int64_t window = 0;
  std::vector<float> samples;
  std::vector<std::string> source_ids;
  std::vector<std::int64_t> offsets;

  std::span<const float> row(std::int64_t i) const {
    return {samples.data() + i * window, static_cast<std::size_t>(window)};
  }
  bool operator==(const Batch&) const = default;
};

// Endless stream of random-crop training windows. Each epoch visits every
// clip once in a seeded permutation; clips shorter than the window are
// zero-padded on the right. Batch k is a pure function of (clips, spec, k),
// so prefetch workers can build batches out of order while next() still
// hands them out in sequence.
class SegmentStream {
 public:
  SegmentStream(std::vector<AudioSegment> clips, BatchSpec spec, int workers = 0);
  ~SegmentStream();

  SegmentStream(const SegmentStream&) = delete;
  SegmentStream& operator=(const SegmentStream&) = delete;

  bool empty() const { return clips_.empty(); }
  const BatchSpec& spec() const { return spec_; }

  // Batch at absolute position k.
  Batch batch_at(std::int64_t k) const;

  // Next batch in order; nullopt only for an empty clip set.
  std::optional<Batch> next();

  // Repositions the cursor (used when resuming training at a given step).
  void seek(std::int64_t k);

 private:
  void refill();

  std::vector<AudioSegment> clips_;
  BatchSpec spec_;
  int workers_;
  std::int64_t cursor_ = 0;
  std::int64_t scheduled_ = 0;
  std::deque<std::future<Batch>> pending_;
};

}  // namespace svae
