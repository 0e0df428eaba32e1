#include "support.h"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <unistd.h>

#include "svae/hash.h"

namespace svae::testing {

AudioSegment speech_like(double seconds, std::uint64_t seed, const std::string& id, int sample_rate,
                         double trough_floor) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto len = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  const double base_f0 = 90.0 + 80.0 * u(rng);
  const double glide = 0.5 + 2.0 * u(rng);

  // syllable envelope of raised-cosine bumps
  std::vector<double> env(len, 0.0);
  for (double t0 = 0.02 * u(rng); t0 < seconds;) {
    const double dur = 0.12 + 0.18 * u(rng);
    const double amp = 0.5 + 0.5 * u(rng);
    const auto a = static_cast<std::size_t>(t0 * sample_rate);
    const auto b = std::min(len, static_cast<std::size_t>((t0 + dur) * sample_rate));
    for (std::size_t i = a; i < b; ++i) {
      const double x = std::sin(std::numbers::pi * (static_cast<double>(i - a) / sample_rate) / dur);
      env[i] += amp * x * x;
    }
    t0 += dur + 0.02 + 0.08 * u(rng);
  }
  for (auto& e : env) e = std::max(e, trough_floor);

  AudioSegment seg;
  seg.sample_rate = sample_rate;
  seg.source_id = id;
  seg.samples.resize(len);
  double phase = 0.0, peak = 1e-9;
  std::vector<double> raw(len);
  for (std::size_t i = 0; i < len; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double f0 = base_f0 * (1.0 + 0.15 * std::sin(2.0 * std::numbers::pi * glide * t));
    phase += 2.0 * std::numbers::pi * f0 / sample_rate;
    double v = 0.0;
    for (int k = 1; k <= 24 && k * f0 < 0.45 * sample_rate; ++k) {
      // crude formant emphasis around 500 Hz and 1500 Hz
      const double f = k * f0;
      const double gain = 1.0 / k + 0.6 * std::exp(-std::pow((f - 500.0) / 200.0, 2)) +
                          0.4 * std::exp(-std::pow((f - 1500.0) / 300.0, 2));
      v += gain * std::sin(k * phase);
    }
    raw[i] = env[i] * (v + 0.05 * n(rng)) + 1e-3 * n(rng);
    peak = std::max(peak, std::abs(raw[i]));
  }
  for (std::size_t i = 0; i < len; ++i) seg.samples[i] = static_cast<float>(0.6 * raw[i] / peak);
  return seg;
}

AudioSegment sine(double freq, double seconds, int sample_rate, double amplitude, const std::string& id) {
  AudioSegment s;
  s.sample_rate = sample_rate;
  s.source_id = id;
  const auto len = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  s.samples.resize(len);
  for (std::size_t i = 0; i < len; ++i)
    s.samples[i] = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / sample_rate));
  return s;
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.model.encoder_base_channels = 4;
  c.model.decoder_base_channels = 32;
  c.model.residual_dilations = {1, 3};
  c.model.amp_kernel_sizes = {3};
  c.model.amp_dilations = {1, 3};
  c.discriminator.mpd_periods = {2, 3};
  c.discriminator.stft_window_sizes = {256, 128};
  c.discriminator.mpd_channels = {2, 4, 4};
  c.discriminator.stft_channels = 2;
  c.mel.window_lengths = {64, 256};
  c.mel.mel_bins = {10, 40};
  c.ssl.ssl_dim = 16;
  c.ssl.num_layers = 4;
  c.ssl.layer = LayerSpec::parse("last");
  c.train.batch_size = 2;
  c.train.total_steps = 4;
  c.train.checkpoint_every = 0;
  c.data.segment_seconds = 0.2;
  return c;
}

TempDir::TempDir(const std::string& tag) {
  static std::uint64_t counter = 0;
  const auto salt = hash_combine(static_cast<std::uint64_t>(::getpid()), ++counter);
  path_ = std::filesystem::temp_directory_path() / ("svae_" + tag + "_" + std::to_string(salt % 1000000007ull));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::filesystem::path write_corpus(const std::filesystem::path& dir, const std::vector<AudioSegment>& clips) {
  std::filesystem::create_directories(dir);
  const auto manifest = dir / "manifest.txt";
  std::ofstream m(manifest);
  for (const auto& c : clips) {
    write_wav(dir / (c.source_id + ".wav"), c, WavEncoding::kFloat32);
    m << c.source_id << ".wav\n";
  }
  return manifest;
}

std::filesystem::path data_dir() { return SVAE_TEST_DATA_DIR; }

}  // namespace svae::testing
