#include "svae/objectives.h"

#include <algorithm>

namespace svae {
namespace {

double hz_to_mel(double hz) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return hz >= min_log_hz ? min_log_mel + std::log(hz / min_log_hz) / logstep : hz / f_sp;
}

double mel_to_hz(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return mel >= min_log_mel ? min_log_hz * std::exp(logstep * (mel - min_log_mel)) : f_sp * mel;
}

void require_same_heads(const DiscriminatorOutput& a, const DiscriminatorOutput& b, const char* what) {
  if (a.heads() != b.heads())
    throw ContractViolation(std::string(what) + ": head count mismatch (" + std::to_string(a.heads()) + " vs " +
                            std::to_string(b.heads()) + ")");
}

}  // namespace

std::vector<double> mel_filterbank(int sample_rate, int n_fft, int n_mels, double f_min, double f_max) {
  const int bins = n_fft / 2 + 1;
  std::vector<double> fft_freqs(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k) fft_freqs[static_cast<std::size_t>(k)] = k * (sample_rate / 2.0) / (bins - 1);

  const double m_lo = hz_to_mel(f_min), m_hi = hz_to_mel(f_max);
  std::vector<double> edges(static_cast<std::size_t>(n_mels + 2));
  for (int i = 0; i < n_mels + 2; ++i) edges[static_cast<std::size_t>(i)] = mel_to_hz(m_lo + (m_hi - m_lo) * i / (n_mels + 1));

  std::vector<double> fb(static_cast<std::size_t>(n_mels * bins), 0.0);
  for (int m = 0; m < n_mels; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m + 1)];
    const double right = edges[static_cast<std::size_t>(m + 2)];
    const double norm = 2.0 / (right - left);
    for (int k = 0; k < bins; ++k) {
      const double f = fft_freqs[static_cast<std::size_t>(k)];
      const double lower = (f - left) / (center - left);
      const double upper = (right - f) / (right - center);
      fb[static_cast<std::size_t>(m * bins + k)] = std::max(0.0, std::min(lower, upper)) * norm;
    }
  }
  return fb;
}

MelReconstructionLoss::MelReconstructionLoss(MelScaleConfig cfg, int sample_rate) : cfg_(std::move(cfg)) {
  cfg_.validate();
  for (std::size_t i = 0; i < cfg_.window_lengths.size(); ++i) {
    const int n_fft = cfg_.window_lengths[i];
    const int n_mels = cfg_.mel_bins[i];
    auto fb = mel_filterbank(sample_rate, n_fft, n_mels, 0.0, sample_rate / 2.0);
    banks_.push_back(torch::tensor(fb, torch::kDouble).view({n_mels, n_fft / 2 + 1}));
    windows_.push_back(torch::hann_window(n_fft, torch::kDouble));
  }
}

torch::Tensor MelReconstructionLoss::log_mel(const torch::Tensor& x, std::size_t i) const {
  const int64_t n_fft = cfg_.window_lengths[i];
  auto window = windows_[i].to(x.dtype());
  auto spec = torch::stft(x, n_fft, n_fft / 4, n_fft, window, /*center=*/true, "reflect", /*normalized=*/false,
                          /*onesided=*/true, /*return_complex=*/true);
  auto mel = torch::matmul(banks_[i].to(x.dtype()), spec.abs());
  return torch::log10(torch::clamp_min(mel, kLogMelFloor));
}

torch::Tensor MelReconstructionLoss::operator()(const torch::Tensor& x, const torch::Tensor& x_hat) const {
  if (x.sizes() != x_hat.sizes() || x.dim() != 2)
    throw ContractViolation("mel_recon_loss: inputs must share a (batch, samples) shape");
  torch::Tensor total;
  for (std::size_t i = 0; i < banks_.size(); ++i) {
    auto d = (log_mel(x, i) - log_mel(x_hat, i)).abs().mean();
    total = total.defined() ? total + d : d;
  }
  return total / static_cast<double>(banks_.size());
}

torch::Tensor mel_recon_loss(const torch::Tensor& x, const torch::Tensor& x_hat, const MelScaleConfig& cfg) {
  return MelReconstructionLoss(cfg)(x, x_hat);
}

torch::Tensor kl_loss(const LatentPosterior& post) {
  auto per_elem = 0.5 * (post.mean.square() + torch::exp(post.log_var) - 1.0 - post.log_var);
  return per_elem.sum(1).mean();
}

torch::Tensor adv_loss_discriminator(const DiscriminatorOutput& real, const DiscriminatorOutput& fake) {
  require_same_heads(real, fake, "adv_loss_discriminator");
  if (real.heads() == 0) throw ContractViolation("adv_loss_discriminator: no heads");
  torch::Tensor total;
  for (std::size_t h = 0; h < real.heads(); ++h) {
    auto term = torch::relu(1.0 - real.logits[h]).mean() + torch::relu(1.0 + fake.logits[h]).mean();
    total = total.defined() ? total + term : term;
  }
  return total / static_cast<double>(real.heads());
}

torch::Tensor adv_loss_generator(const DiscriminatorOutput& fake) {
  if (fake.heads() == 0) throw ContractViolation("adv_loss_generator: no heads");
  torch::Tensor total;
  for (const auto& logit : fake.logits) {
    auto term = -logit.mean();
    total = total.defined() ? total + term : term;
  }
  return total / static_cast<double>(fake.heads());
}

torch::Tensor feature_matching_loss(const DiscriminatorOutput& real, const DiscriminatorOutput& fake) {
  require_same_heads(real, fake, "feature_matching_loss");
  torch::Tensor total;
  int64_t count = 0;
  for (std::size_t h = 0; h < real.heads(); ++h) {
    const auto& rm = real.feature_maps[h];
    const auto& fm = fake.feature_maps[h];
    if (rm.size() != fm.size()) throw ContractViolation("feature_matching_loss: layer count mismatch");
    for (std::size_t l = 0; l < rm.size(); ++l) {
      if (rm[l].sizes() != fm[l].sizes()) throw ContractViolation("feature_matching_loss: feature-map shape mismatch");
      auto r = rm[l].detach();
      auto term = (r - fm[l]).abs().mean() / (r.abs().mean() + kFeatureMatchEps);
      total = total.defined() ? total + term : term;
      ++count;
    }
  }
  if (count == 0) throw ContractViolation("feature_matching_loss: no feature maps");
  return total / static_cast<double>(count);
}

void check_finite(double value, const std::string& term) {
  if (!std::isfinite(value)) throw TrainingAbort(term, "value " + std::to_string(value));
}

LossBreakdown total_generator_loss(const LossTerms<double>& c, const LossWeights& w) {
  check_finite(c.recon, "recon");
  check_finite(c.kl, "kl");
  check_finite(c.adv_gen, "adv_gen");
  check_finite(c.feat, "feat");
  check_finite(c.align, "align");
  LossBreakdown b;
  b.recon = c.recon;
  b.kl = c.kl;
  b.adv_gen = c.adv_gen;
  b.feat = c.feat;
  b.align = c.align;
  b.total_vae = weighted_vae_total(c, w);
  b.total = weighted_total(c, w);
  return b;
}

}  // namespace svae
