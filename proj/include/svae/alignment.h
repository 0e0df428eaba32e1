#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "svae/audio.h"
#include "svae/config.h"
#include "svae/vae.h"

namespace svae {

// Frozen SSL hidden states, (batch, frames, ssl_dim). Never requires grad.
struct SSLFeatureSequence {
  torch::Tensor frames;
  double frame_rate = 50.0;
  LayerSpec layer;

  int64_t length() const { return frames.size(1); }
  int64_t ssl_dim() const { return frames.size(2); }
};

// SSL features mapped onto the latent grid, (batch, latent_dim, frames).
struct ProjectedSemanticSequence {
  torch::Tensor frames;

  int64_t length() const { return frames.size(-1); }
};

// Source of frozen SSL hidden states. `layers` returns one
// (batch, frames, ssl_dim) tensor per requested 0-based layer index.
class SSLProvider {
 public:
  virtual ~SSLProvider() = default;

  virtual std::vector<torch::Tensor> layers(const torch::Tensor& waveform, std::span<const std::string> source_ids,
                                            const std::vector<int>& which) = 0;
  virtual int num_layers() const = 0;
  virtual int ssl_dim() const = 0;
  virtual double frame_rate() const = 0;
  // Stable identifier, recorded in cache keys.
  virtual std::string id() const = 0;
  // True when features depend on the source id rather than only on content.
  virtual bool keyed_by_source() const { return false; }
};

// Deterministic pseudo-features: every entry is a seeded hash of
// (source_id, layer, frame, channel) mapped to [-1, 1). floor(N * rate / 16000)
// frames per item.
class StubSSLProvider final : public SSLProvider {
 public:
  StubSSLProvider(std::uint64_t seed, int num_layers = 24, int ssl_dim = 1024, double frame_rate = 50.0);

  std::vector<torch::Tensor> layers(const torch::Tensor& waveform, std::span<const std::string> source_ids,
                                    const std::vector<int>& which) override;
  int num_layers() const override { return num_layers_; }
  int ssl_dim() const override { return ssl_dim_; }
  double frame_rate() const override { return frame_rate_; }
  std::string id() const override;
  bool keyed_by_source() const override { return true; }

 private:
  std::uint64_t seed_;
  int num_layers_, ssl_dim_;
  double frame_rate_;
};

// Wraps a TorchScript export of a pretrained SSL model. The module takes a
// (batch, samples) float waveform and returns either a stacked
// (layers, batch, frames, dim) tensor or a list/tuple of (batch, frames, dim).
class TorchScriptSSLProvider final : public SSLProvider {
 public:
  TorchScriptSSLProvider(const std::filesystem::path& model_path, int num_layers, int ssl_dim, double frame_rate);
  ~TorchScriptSSLProvider() override;

  std::vector<torch::Tensor> layers(const torch::Tensor& waveform, std::span<const std::string> source_ids,
                                    const std::vector<int>& which) override;
  int num_layers() const override { return num_layers_; }
  int ssl_dim() const override { return ssl_dim_; }
  double frame_rate() const override { return frame_rate_; }
  std::string id() const override { return id_; }

 private:
  struct Module;
  std::unique_ptr<Module> module_;
  int num_layers_, ssl_dim_;
  double frame_rate_;
  std::string id_;
};

// Per-utterance, per-layer feature cache in LatentFile format, keyed by a
// SHA-256 of the audio content (and the provider id).
class CachedSSLProvider final : public SSLProvider {
 public:
  CachedSSLProvider(std::shared_ptr<SSLProvider> inner, std::filesystem::path dir);

  std::vector<torch::Tensor> layers(const torch::Tensor& waveform, std::span<const std::string> source_ids,
                                    const std::vector<int>& which) override;
  int num_layers() const override { return inner_->num_layers(); }
  int ssl_dim() const override { return inner_->ssl_dim(); }
  double frame_rate() const override { return inner_->frame_rate(); }
  std::string id() const override { return inner_->id(); }
  bool keyed_by_source() const override { return inner_->keyed_by_source(); }

  std::int64_t hits() const { return hits_; }
  std::int64_t misses() const { return misses_; }

 private:
  std::shared_ptr<SSLProvider> inner_;
  std::filesystem::path dir_;
  std::int64_t hits_ = 0, misses_ = 0;
};

std::shared_ptr<SSLProvider> make_ssl_provider(const SSLProviderConfig& cfg);

// Layer indices needed for `spec`; out-of-range indices raise ConfigError.
std::vector<int> resolve_layers(const LayerSpec& spec, int num_layers);

// Runs the provider without autograd and reduces the requested layers
// (a single layer, or their mean for "avg").
SSLFeatureSequence extract_ssl_features(SSLProvider& provider, const torch::Tensor& waveform,
                                        std::span<const std::string> source_ids, const LayerSpec& layer);
SSLFeatureSequence extract_ssl_features(SSLProvider& provider, std::span<const AudioSegment> x,
                                        const LayerSpec& layer);

SSLFeatureSequence stub_features(std::span<const AudioSegment> x, std::uint64_t seed, LayerSpec layer = {});

// Linear interpolation in time with endpoints aligned: output frame i reads
// source position i * (L - 1) / (T - 1). L == T returns the input as is.
SSLFeatureSequence interp_to_latent_grid(const SSLFeatureSequence& f, int64_t target_frames);

// Conv1D from ssl_dim to latent_dim channels; trained only by the alignment loss.
class SemanticProjectionImpl : public torch::nn::Module {
 public:
  SemanticProjectionImpl(int64_t ssl_dim, int64_t latent_dim, int64_t kernel_size = 1);
  // (B, T, ssl_dim) -> (B, latent_dim, T)
  torch::Tensor forward(const torch::Tensor& features);
  torch::nn::Conv1d& conv() { return conv_; }
  int64_t ssl_dim() const { return ssl_dim_; }

 private:
  int64_t ssl_dim_;
  torch::nn::Conv1d conv_{nullptr};
};
TORCH_MODULE(SemanticProjection);

ProjectedSemanticSequence project_channels(const SSLFeatureSequence& f, SemanticProjection& projection);

// h = Conv1D(Interp(f(x))) onto a latent grid of `target_frames`.
ProjectedSemanticSequence align_to_latent(const SSLFeatureSequence& f, int64_t target_frames,
                                          SemanticProjection& projection);

inline constexpr double kCosineEps = 1e-8;

// cos: -mean_t cos(h[t], z[t]) in [-1, 1]; l1: mean |h - z|; l2: mean (h - z)^2.
torch::Tensor alignment_loss(const ProjectedSemanticSequence& h, const LatentSequence& z,
                             AlignVariant variant = AlignVariant::kCosine);

}  // namespace svae
