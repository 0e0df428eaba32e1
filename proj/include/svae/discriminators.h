#pragma once

#include <torch/torch.h>

#include <vector>

#include "svae/config.h"
#include "svae/layers.h"

namespace svae {

// One logit tensor per sub-discriminator head, plus every intermediate
// activation of that head (feature_maps[h] belongs to logits[h]).
struct DiscriminatorOutput {
  std::vector<torch::Tensor> logits;
  std::vector<std::vector<torch::Tensor>> feature_maps;

  std::size_t heads() const { return logits.size(); }
};

// Length after reflect-padding to a multiple of `period`.
int64_t mpd_padded_length(int64_t length, int64_t period);

// Frequency-bin ranges [lo, hi) for each band split over `bins` bins.
std::vector<std::pair<int64_t, int64_t>> band_bin_ranges(const std::vector<std::pair<double, double>>& splits,
                                                         int64_t bins);

// Periodic head: (B, L) -> (B, 1, L/p, p) -> stack of (5, 1) convs.
class PeriodDiscriminatorImpl : public torch::nn::Module {
 public:
  PeriodDiscriminatorImpl(int64_t period, const std::vector<int>& channels);
  torch::Tensor forward(const torch::Tensor& x, std::vector<torch::Tensor>& fmaps);
  void zero_output_layer() { post_->zero_output(); }
  int64_t period() const { return period_; }

 private:
  int64_t period_;
  std::vector<WNConv2d> convs_;
  WNConv2d post_{nullptr};
};
TORCH_MODULE(PeriodDiscriminator);

// Complex-STFT head at one window size; each frequency band gets its own
// 2-D conv stack, band outputs are concatenated along frequency before the
// final conv.
class BandStftDiscriminatorImpl : public torch::nn::Module {
 public:
  BandStftDiscriminatorImpl(int64_t window, const std::vector<std::pair<double, double>>& splits,
                            int64_t channels);
  torch::Tensor forward(const torch::Tensor& x, std::vector<torch::Tensor>& fmaps);
  void zero_output_layer() { post_->zero_output(); }

 private:
  int64_t window_;
  std::vector<std::pair<int64_t, int64_t>> bands_;
  std::vector<std::vector<WNConv2d>> stacks_;
  WNConv2d post_{nullptr};
  torch::Tensor hann_;
};
TORCH_MODULE(BandStftDiscriminator);

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorConfig cfg);

  // (B, L) waveform -> period heads first, then STFT heads, in config order.
  DiscriminatorOutput forward(const torch::Tensor& x);
  void zero_output_layers();
  const DiscriminatorConfig& config() const { return cfg_; }

 private:
  DiscriminatorConfig cfg_;
  std::vector<PeriodDiscriminator> periods_;
  std::vector<BandStftDiscriminator> stfts_;
};
TORCH_MODULE(Discriminator);

}  // namespace svae
