#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

namespace svae {

struct ModelConfig {
  std::vector<int> encoder_strides{4, 4, 5, 5};
  int latent_dim = 64;
  std::vector<int> decoder_strides{5, 5, 4, 4};
  // Encoder width doubles after every stride stage, starting here.
  int encoder_base_channels = 64;
  // Decoder width halves after every upsampling stage, starting here.
  int decoder_base_channels = 1536;
  std::vector<int> residual_dilations{1, 3, 9};
  std::vector<int> amp_kernel_sizes{3, 7, 11};
  std::vector<int> amp_dilations{1, 3, 5};

  int hop_length() const;
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct DiscriminatorConfig {
  std::vector<int> mpd_periods{2, 3, 5, 7, 11};
  std::vector<int> stft_window_sizes{2048, 1024, 512};
  std::vector<std::pair<double, double>> band_splits{
      {0.0, 0.1}, {0.1, 0.25}, {0.25, 0.5}, {0.5, 0.75}, {0.75, 1.0}};
  std::vector<int> mpd_channels{32, 128, 512, 1024, 1024};
  int stft_channels = 32;

  int num_heads() const {
    return static_cast<int>(mpd_periods.size() + stft_window_sizes.size());
  }
  void validate() const;
  bool operator==(const DiscriminatorConfig&) const = default;
};

struct LossWeights {
  double lambda_recon = 15.0;
  double lambda_kl = 0.01;
  double lambda_adv = 1.0;
  double lambda_feat = 2.0;
  double lambda_align = 1.0;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

struct MelScaleConfig {
  std::vector<int> window_lengths{32, 64, 128, 256, 512, 1024, 2048};
  std::vector<int> mel_bins{5, 10, 20, 40, 80, 160, 320};

  void validate() const;
  bool operator==(const MelScaleConfig&) const = default;
};

// Which SSL hidden state to use: a 0-based transformer layer index, the last
// layer, or the arithmetic mean over all layers.
struct LayerSpec {
  enum class Kind { kIndex, kLast, kAverage };
  Kind kind = Kind::kIndex;
  int index = 23;

  static LayerSpec parse(const std::string& text);
  std::string to_string() const;
  bool operator==(const LayerSpec&) const = default;
};

enum class SSLProviderKind { kStub, kTorchScript };

struct SSLProviderConfig {
  SSLProviderKind provider = SSLProviderKind::kStub;
  std::optional<std::filesystem::path> model_path;
  LayerSpec layer;
  int ssl_dim = 1024;
  int num_layers = 24;
  double frame_rate = 50.0;
  std::uint64_t stub_seed = 0;
  std::optional<std::filesystem::path> cache_dir;

  void validate() const;
  bool operator==(const SSLProviderConfig&) const = default;
};

enum class AlignVariant { kCosine, kL1, kL2 };
enum class AlignTarget { kSample, kMean };

AlignVariant parse_align_variant(const std::string& text);
std::string to_string(AlignVariant v);

struct AlignConfig {
  AlignVariant variant = AlignVariant::kCosine;
  AlignTarget target = AlignTarget::kSample;
  int kernel_size = 1;

  void validate() const;
  bool operator==(const AlignConfig&) const = default;
};

struct TrainConfig {
  double lr = 1e-4;
  double lr_decay_gamma = 0.9996;
  double adam_beta1 = 0.8;
  double adam_beta2 = 0.9;
  double grad_clip = 1e3;
  int batch_size = 2;
  std::int64_t total_steps = 1000;
  std::int64_t checkpoint_every = 500;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/default";

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct DataConfig {
  double segment_seconds = 3.0;
  std::uint64_t shuffle_seed = 0;
  int workers = 0;
  std::optional<std::filesystem::path> manifest;

  bool operator==(const DataConfig&) const = default;
};

struct ExperimentConfig {
  ModelConfig model;
  DiscriminatorConfig discriminator;
  LossWeights loss;
  MelScaleConfig mel;
  SSLProviderConfig ssl;
  AlignConfig align;
  TrainConfig train;
  DataConfig data;

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;

  // Hash over the fields that shape the parameter store. Two configs with
  // the same architecture hash can exchange checkpoints.
  std::string architecture_hash() const;
};

nlohmann::ordered_json to_json(const ExperimentConfig& cfg);
// Missing keys keep their defaults; unknown keys raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

// A small model that trains at desk scale on one CPU core.
ExperimentConfig desk_config();

}  // namespace svae
