#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <span>

#include "svae/audio.h"
#include "svae/config.h"
#include "svae/layers.h"

namespace svae {

inline constexpr double kLogVarMin = -30.0;
inline constexpr double kLogVarMax = 20.0;

// Per-frame diagonal Gaussian q(z|x); tensors are (batch, latent_dim, frames).
struct LatentPosterior {
  torch::Tensor mean;
  torch::Tensor log_var;
  double frame_rate = 40.0;

  int64_t frames() const { return mean.size(-1); }
  int64_t channels() const { return mean.size(1); }
};

// Latent frames z, (batch, latent_dim, frames).
struct LatentSequence {
  torch::Tensor frames;
  double frame_rate = 40.0;

  int64_t length() const { return frames.size(-1); }
  int64_t channels() const { return frames.size(1); }
};

enum class Sampling { kStochastic, kDeterministic };

// z = mean + exp(0.5 log_var) * eps. A seed makes the draw reproducible;
// kDeterministic returns the mean tensor itself.
LatentSequence reparameterize(const LatentPosterior& post, std::optional<uint64_t> noise_seed = std::nullopt,
                              Sampling mode = Sampling::kStochastic);
LatentSequence reparameterize(const LatentPosterior& post, at::Generator& gen);

// Stacks equal-length 16 kHz segments into a (batch, samples) tensor.
// Mismatched rates or lengths are a ContractViolation.
torch::Tensor stack_segments(std::span<const AudioSegment> segments);

class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const ModelConfig& cfg);
  // (B, 1, L) -> (B, 2 * latent_dim, L / hop)
  torch::Tensor forward(const torch::Tensor& x);
  WNConv1d& output_projection() { return out_conv_; }

 private:
  torch::nn::Sequential body_;
  WNConv1d out_conv_{nullptr};
};
TORCH_MODULE(Encoder);

class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const ModelConfig& cfg);
  // (B, latent_dim, T) -> (B, 1, T * hop), tanh output.
  torch::Tensor forward(const torch::Tensor& z);
  WNConv1d& output_layer() { return conv_post_; }

 private:
  WNConv1d conv_pre_{nullptr};
  std::vector<WNConvTranspose1d> ups_;
  std::vector<std::vector<AMPBlock>> blocks_;
  AntiAliasedSnake act_post_{nullptr};
  WNConv1d conv_post_{nullptr};
};
TORCH_MODULE(Decoder);

class VaeImpl : public torch::nn::Module {
 public:
  explicit VaeImpl(ModelConfig cfg);

  // waveform (B, L) at 16 kHz, right-padded to a multiple of the hop.
  LatentPosterior encode(const torch::Tensor& waveform);
  LatentPosterior encode(std::span<const AudioSegment> segments);
  // (B, T * hop) waveform.
  torch::Tensor decode(const LatentSequence& z);

  const ModelConfig& config() const { return cfg_; }
  Encoder& encoder() { return encoder_; }
  Decoder& decoder() { return decoder_; }
  double frame_rate() const { return static_cast<double>(kModelSampleRate) / cfg_.hop_length(); }
  static int64_t frames_for(int64_t samples, int hop) { return (samples + hop - 1) / hop; }

 private:
  ModelConfig cfg_;
  Encoder encoder_{nullptr};
  Decoder decoder_{nullptr};
};
TORCH_MODULE(Vae);

// Exact trainable-parameter count of the VAE built from `cfg`.
int64_t count_parameters(const ModelConfig& cfg);

}  // namespace svae
