#include "svae/vae.h"

#include "svae/errors.h"

namespace svae {
namespace F = torch::nn::functional;

LatentSequence reparameterize(const LatentPosterior& post, std::optional<uint64_t> noise_seed, Sampling mode) {
  if (mode == Sampling::kDeterministic) return {post.mean, post.frame_rate};
  if (noise_seed) {
    auto gen = at::detail::createCPUGenerator(*noise_seed);
    return reparameterize(post, gen);
  }
  auto eps = torch::randn_like(post.mean);
  return {post.mean + torch::exp(0.5 * post.log_var) * eps, post.frame_rate};
}

LatentSequence reparameterize(const LatentPosterior& post, at::Generator& gen) {
  auto eps = torch::randn(post.mean.sizes(), gen, post.mean.options());
  return {post.mean + torch::exp(0.5 * post.log_var) * eps, post.frame_rate};
}

torch::Tensor stack_segments(std::span<const AudioSegment> segments) {
  if (segments.empty()) throw ContractViolation("stack_segments: empty batch");
  const auto len = static_cast<int64_t>(segments.front().samples.size());
  auto out = torch::empty({static_cast<int64_t>(segments.size()), len});
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (s.sample_rate != kModelSampleRate)
      throw ContractViolation("model input '" + s.source_id + "' must be 16 kHz, got " +
                              std::to_string(s.sample_rate));
    if (static_cast<int64_t>(s.samples.size()) != len)
      throw ContractViolation("stack_segments: segments differ in length");
    std::copy(s.samples.begin(), s.samples.end(), out[static_cast<int64_t>(i)].data_ptr<float>());
  }
  return out;
}

EncoderImpl::EncoderImpl(const ModelConfig& cfg) {
  int64_t width = cfg.encoder_base_channels;
  body_->push_back(WNConv1d(WNConv1dOptions{1, width, 7, 1, 3}));
  for (int stride : cfg.encoder_strides) {
    const int64_t in = width;
    width *= 2;
    for (int d : cfg.residual_dilations) body_->push_back(ResidualUnit(in, d));
    body_->push_back(Snake1d(in));
    body_->push_back(WNConv1d(WNConv1dOptions{in, width, 2 * stride, stride, (stride + 1) / 2}));
  }
  body_->push_back(Snake1d(width));
  register_module("body", body_);
  out_conv_ = register_module("out_conv", WNConv1d(WNConv1dOptions{width, 2 * int64_t{cfg.latent_dim}, 3, 1, 1}));
}

torch::Tensor EncoderImpl::forward(const torch::Tensor& x) { return out_conv_->forward(body_->forward(x)); }

DecoderImpl::DecoderImpl(const ModelConfig& cfg) {
  int64_t width = cfg.decoder_base_channels;
  conv_pre_ = register_module("conv_pre", WNConv1d(WNConv1dOptions{cfg.latent_dim, width, 7, 1, 3}));
  for (std::size_t i = 0; i < cfg.decoder_strides.size(); ++i) {
    const int64_t s = cfg.decoder_strides[i];
    const int64_t out = width / 2;
    ups_.push_back(register_module(
        "up" + std::to_string(i),
        WNConvTranspose1d(WNConvTranspose1dOptions{width, out, 2 * s, s, (s + 1) / 2, s % 2})));
    std::vector<AMPBlock> stage;
    for (std::size_t k = 0; k < cfg.amp_kernel_sizes.size(); ++k) {
      stage.push_back(register_module("amp" + std::to_string(i) + "_" + std::to_string(k),
                                      AMPBlock(out, cfg.amp_kernel_sizes[k], cfg.amp_dilations)));
    }
    blocks_.push_back(std::move(stage));
    width = out;
  }
  act_post_ = register_module("act_post", AntiAliasedSnake(width));
  conv_post_ = register_module("conv_post", WNConv1d(WNConv1dOptions{width, 1, 7, 1, 3}));
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& z) {
  auto x = conv_pre_->forward(z);
  for (std::size_t i = 0; i < ups_.size(); ++i) {
    x = ups_[i]->forward(x);
    torch::Tensor acc;
    for (auto& block : blocks_[i]) {
      auto y = block->forward(x);
      acc = acc.defined() ? acc + y : y;
    }
    x = acc / static_cast<double>(blocks_[i].size());
  }
  return torch::tanh(conv_post_->forward(act_post_->forward(x)));
}

VaeImpl::VaeImpl(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  encoder_ = register_module("encoder", Encoder(cfg_));
  decoder_ = register_module("decoder", Decoder(cfg_));
}

LatentPosterior VaeImpl::encode(const torch::Tensor& waveform) {
  if (waveform.dim() != 2) throw ContractViolation("encode: waveform must be (batch, samples)");
  const int hop = cfg_.hop_length();
  const int64_t len = waveform.size(1);
  const int64_t padded = frames_for(len, hop) * hop;
  auto x = padded > len ? F::pad(waveform, F::PadFuncOptions({0, padded - len})) : waveform;
  auto stats = encoder_->forward(x.unsqueeze(1));
  auto parts = stats.chunk(2, 1);
  return {parts[0], torch::clamp(parts[1], kLogVarMin, kLogVarMax), frame_rate()};
}

LatentPosterior VaeImpl::encode(std::span<const AudioSegment> segments) {
  auto param = encoder_->parameters().front();
  return encode(stack_segments(segments).to(param.dtype()));
}

torch::Tensor VaeImpl::decode(const LatentSequence& z) {
  if (z.frames.dim() != 3 || z.channels() != cfg_.latent_dim)
    throw ContractViolation("decode: latent must be (batch, " + std::to_string(cfg_.latent_dim) + ", frames)");
  return decoder_->forward(z.frames).squeeze(1);
}

int64_t count_parameters(const ModelConfig& cfg) {
  Vae vae(cfg);
  return count_parameters(*vae);
}

}  // namespace svae
