#include "svae/alignment.h"

#include "svae/errors.h"

namespace svae {

std::vector<int> resolve_layers(const LayerSpec& spec, int num_layers) {
  switch (spec.kind) {
    case LayerSpec::Kind::kLast:
      return {num_layers - 1};
    case LayerSpec::Kind::kAverage: {
      std::vector<int> all(static_cast<std::size_t>(num_layers));
      for (int i = 0; i < num_layers; ++i) all[static_cast<std::size_t>(i)] = i;
      return all;
    }
    case LayerSpec::Kind::kIndex:
      break;
  }
  if (spec.index < 0 || spec.index >= num_layers)
    throw ConfigError("ssl layer index " + std::to_string(spec.index) + " out of range (provider has " +
                      std::to_string(num_layers) + " layers)");
  return {spec.index};
}

SSLFeatureSequence extract_ssl_features(SSLProvider& provider, const torch::Tensor& waveform,
                                        std::span<const std::string> source_ids, const LayerSpec& layer) {
  if (waveform.dim() != 2) throw ContractViolation("extract_ssl_features: waveform must be (batch, samples)");
  if (static_cast<int64_t>(source_ids.size()) != waveform.size(0))
    throw ContractViolation("extract_ssl_features: one source id per batch row required");
  torch::NoGradGuard guard;
  auto which = resolve_layers(layer, provider.num_layers());
  auto outs = provider.layers(waveform.detach().to(torch::kFloat), source_ids, which);
  if (outs.size() != which.size()) throw ProviderError("ssl provider returned the wrong number of layers");
  torch::Tensor frames;
  if (outs.size() == 1) {
    frames = outs.front();
  } else {
    // Sequential accumulation keeps the mean reproducible layer by layer.
    auto acc = torch::zeros_like(outs.front(), torch::kDouble);
    for (const auto& o : outs) acc += o.to(torch::kDouble);
    frames = (acc / static_cast<double>(outs.size())).to(torch::kFloat);
  }
  return {frames.detach(), provider.frame_rate(), layer};
}

SSLFeatureSequence extract_ssl_features(SSLProvider& provider, std::span<const AudioSegment> x,
                                        const LayerSpec& layer) {
  std::vector<std::string> ids;
  for (const auto& s : x) ids.push_back(s.source_id);
  return extract_ssl_features(provider, stack_segments(x), ids, layer);
}

SSLFeatureSequence stub_features(std::span<const AudioSegment> x, std::uint64_t seed, LayerSpec layer) {
  StubSSLProvider stub(seed);
  return extract_ssl_features(stub, x, layer);
}

SSLFeatureSequence interp_to_latent_grid(const SSLFeatureSequence& f, int64_t target_frames) {
  if (target_frames < 1) throw ContractViolation("interp_to_latent_grid: target_frames must be >= 1");
  const int64_t len = f.length();
  if (len < 1) throw ContractViolation("interp_to_latent_grid: empty feature sequence");
  if (len == target_frames) return f;

  std::vector<int64_t> lo(static_cast<std::size_t>(target_frames)), hi(lo.size());
  std::vector<double> frac(lo.size());
  for (int64_t i = 0; i < target_frames; ++i) {
    const double pos =
        target_frames > 1 ? static_cast<double>(i) * static_cast<double>(len - 1) / static_cast<double>(target_frames - 1)
                          : 0.0;
    auto base = static_cast<int64_t>(std::floor(pos));
    base = std::clamp<int64_t>(base, 0, len - 1);
    const auto k = static_cast<std::size_t>(i);
    lo[k] = base;
    hi[k] = std::min(base + 1, len - 1);
    frac[k] = pos - static_cast<double>(base);
  }
  auto idx_opts = torch::TensorOptions().dtype(torch::kLong);
  auto lo_t = torch::tensor(lo, idx_opts);
  auto hi_t = torch::tensor(hi, idx_opts);
  auto w = torch::tensor(frac, torch::kDouble).to(f.frames.dtype()).view({1, target_frames, 1});
  auto a = f.frames.index_select(1, lo_t);
  auto b = f.frames.index_select(1, hi_t);
  return {a + (b - a) * w, f.frame_rate * static_cast<double>(target_frames) / static_cast<double>(len), f.layer};
}

SemanticProjectionImpl::SemanticProjectionImpl(int64_t ssl_dim, int64_t latent_dim, int64_t kernel_size)
    : ssl_dim_(ssl_dim) {
  conv_ = register_module(
      "conv", torch::nn::Conv1d(torch::nn::Conv1dOptions(ssl_dim, latent_dim, kernel_size).padding(kernel_size / 2)));
}

torch::Tensor SemanticProjectionImpl::forward(const torch::Tensor& features) {
  if (features.dim() != 3 || features.size(2) != ssl_dim_)
    throw ContractViolation("project_channels: expected (batch, frames, " + std::to_string(ssl_dim_) + ") features");
  return conv_->forward(features.transpose(1, 2));
}

ProjectedSemanticSequence project_channels(const SSLFeatureSequence& f, SemanticProjection& projection) {
  auto x = f.frames.to(projection->conv()->weight.dtype());
  return {projection->forward(x)};
}

ProjectedSemanticSequence align_to_latent(const SSLFeatureSequence& f, int64_t target_frames,
                                          SemanticProjection& projection) {
  return project_channels(interp_to_latent_grid(f, target_frames), projection);
}

torch::Tensor alignment_loss(const ProjectedSemanticSequence& h, const LatentSequence& z, AlignVariant variant) {
  if (h.frames.sizes() != z.frames.sizes())
    throw ContractViolation("alignment_loss: h and z must share a (batch, channels, frames) shape");
  switch (variant) {
    case AlignVariant::kL1:
      return (h.frames - z.frames).abs().mean();
    case AlignVariant::kL2:
      return (h.frames - z.frames).square().mean();
    case AlignVariant::kCosine:
      break;
  }
  // max(|h|, eps) * max(|z|, eps) as one square root, so cos(z, z) is exactly 1.
  const double eps_sq = kCosineEps * kCosineEps;
  auto dot = (h.frames * z.frames).sum(1);
  auto hn_sq = torch::clamp_min(h.frames.square().sum(1), eps_sq);
  auto zn_sq = torch::clamp_min(z.frames.square().sum(1), eps_sq);
  return -(dot / torch::sqrt(hn_sq * zn_sq)).mean();
}

}  // namespace svae
