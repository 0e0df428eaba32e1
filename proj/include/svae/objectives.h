#pragma once

#include <torch/torch.h>

#include <cmath>
#include <string>
#include <vector>

#include "svae/config.h"
#include "svae/discriminators.h"
#include "svae/errors.h"
#include "svae/vae.h"

namespace svae {

inline constexpr double kLogMelFloor = 1e-5;
inline constexpr double kFeatureMatchEps = 1e-9;

// Slaney-style mel filterbank (librosa default), row-major n_mels x (n_fft/2 + 1).
std::vector<double> mel_filterbank(int sample_rate, int n_fft, int n_mels, double f_min, double f_max);

// Mean over scales of mean |log10 mel(x) - log10 mel(x_hat)|. Both inputs
// are (batch, samples) at 16 kHz. Filterbanks and windows are built once.
class MelReconstructionLoss {
 public:
  explicit MelReconstructionLoss(MelScaleConfig cfg, int sample_rate = kModelSampleRate);

  torch::Tensor operator()(const torch::Tensor& x, const torch::Tensor& x_hat) const;
  // log10 mel magnitudes at scale `i`, (batch, mels, frames).
  torch::Tensor log_mel(const torch::Tensor& x, std::size_t i) const;
  const MelScaleConfig& config() const { return cfg_; }

 private:
  MelScaleConfig cfg_;
  std::vector<torch::Tensor> banks_;
  std::vector<torch::Tensor> windows_;
};

torch::Tensor mel_recon_loss(const torch::Tensor& x, const torch::Tensor& x_hat, const MelScaleConfig& cfg);

// KL(q || N(0, I)): sum over channels, mean over batch and frames.
torch::Tensor kl_loss(const LatentPosterior& post);

// Hinge: mean over heads of E[relu(1 - D(x))] + E[relu(1 + D(x_hat))].
torch::Tensor adv_loss_discriminator(const DiscriminatorOutput& real, const DiscriminatorOutput& fake);
// Mean over heads of -E[D(x_hat)]; unbounded below.
torch::Tensor adv_loss_generator(const DiscriminatorOutput& fake);
// Mean over heads and layers of mean|r - f| / (mean|r| + 1e-9); the real
// path is detached.
torch::Tensor feature_matching_loss(const DiscriminatorOutput& real, const DiscriminatorOutput& fake);

template <typename T>
struct LossTerms {
  T recon{}, kl{}, adv_gen{}, feat{}, align{};
};

// The one place the weighted sums are spelled out; used for both the
// differentiable tensors and the logged doubles so the two never drift.
template <typename T>
T weighted_vae_total(const LossTerms<T>& c, const LossWeights& w) {
  return c.recon * w.lambda_recon + c.kl * w.lambda_kl + c.adv_gen * w.lambda_adv + c.feat * w.lambda_feat;
}

template <typename T>
T weighted_total(const LossTerms<T>& c, const LossWeights& w) {
  return weighted_vae_total(c, w) + c.align * w.lambda_align;
}

struct LossBreakdown {
  double recon = 0, kl = 0, adv_gen = 0, feat = 0, align = 0;
  double total_vae = 0, total = 0;

  bool operator==(const LossBreakdown&) const = default;
};

// Fills the totals; a non-finite component raises TrainingAbort naming it.
LossBreakdown total_generator_loss(const LossTerms<double>& c, const LossWeights& w);

void check_finite(double value, const std::string& term);

}  // namespace svae
