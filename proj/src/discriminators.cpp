#include "svae/discriminators.h"

#include "svae/errors.h"

namespace svae {
namespace F = torch::nn::functional;

namespace {

torch::Tensor leaky(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.1)); }

}  // namespace

int64_t mpd_padded_length(int64_t length, int64_t period) {
  return length + (period - length % period) % period;
}

std::vector<std::pair<int64_t, int64_t>> band_bin_ranges(const std::vector<std::pair<double, double>>& splits,
                                                         int64_t bins) {
  std::vector<std::pair<int64_t, int64_t>> out;
  out.reserve(splits.size());
  for (auto [lo, hi] : splits) {
    out.emplace_back(static_cast<int64_t>(lo * static_cast<double>(bins)),
                     static_cast<int64_t>(hi * static_cast<double>(bins)));
  }
  // The last band always reaches the Nyquist bin.
  if (!out.empty()) out.back().second = bins;
  return out;
}

PeriodDiscriminatorImpl::PeriodDiscriminatorImpl(int64_t period, const std::vector<int>& channels)
    : period_(period) {
  int64_t in = 1;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const bool last = i + 1 == channels.size();
    WNConv2dOptions o;
    o.in = in;
    o.out = channels[i];
    o.kernel = {5, 1};
    o.stride = {last ? 1 : 3, 1};
    o.padding = {2, 0};
    convs_.push_back(register_module("conv" + std::to_string(i), WNConv2d(o)));
    in = channels[i];
  }
  WNConv2dOptions post;
  post.in = in;
  post.out = 1;
  post.kernel = {3, 1};
  post.padding = {1, 0};
  post_ = register_module("post", WNConv2d(post));
}

torch::Tensor PeriodDiscriminatorImpl::forward(const torch::Tensor& x, std::vector<torch::Tensor>& fmaps) {
  const int64_t len = x.size(-1);
  const int64_t padded = mpd_padded_length(len, period_);
  auto y = x.unsqueeze(1);
  if (padded > len) y = F::pad(y, F::PadFuncOptions({0, padded - len}).mode(torch::kReflect));
  y = y.view({x.size(0), 1, padded / period_, period_});
  for (auto& conv : convs_) {
    y = leaky(conv->forward(y));
    fmaps.push_back(y);
  }
  return post_->forward(y);
}

BandStftDiscriminatorImpl::BandStftDiscriminatorImpl(int64_t window,
                                                     const std::vector<std::pair<double, double>>& splits,
                                                     int64_t channels)
    : window_(window) {
  bands_ = band_bin_ranges(splits, window / 2 + 1);
  auto make = [](int64_t in, int64_t out, std::array<int64_t, 2> k, std::array<int64_t, 2> s,
                 std::array<int64_t, 2> p) {
    WNConv2dOptions o;
    o.in = in;
    o.out = out;
    o.kernel = k;
    o.stride = s;
    o.padding = p;
    return WNConv2d(o);
  };
  for (std::size_t b = 0; b < bands_.size(); ++b) {
    std::vector<WNConv2d> stack;
    stack.push_back(make(2, channels, {3, 9}, {1, 1}, {1, 4}));
    for (int i = 0; i < 3; ++i) stack.push_back(make(channels, channels, {3, 9}, {1, 2}, {1, 4}));
    stack.push_back(make(channels, channels, {3, 3}, {1, 1}, {1, 1}));
    for (std::size_t i = 0; i < stack.size(); ++i)
      register_module("band" + std::to_string(b) + "_conv" + std::to_string(i), stack[i]);
    stacks_.push_back(std::move(stack));
  }
  post_ = register_module("post", make(channels, 1, {3, 3}, {1, 1}, {1, 1}));
  hann_ = register_buffer("window", torch::hann_window(window));
}

torch::Tensor BandStftDiscriminatorImpl::forward(const torch::Tensor& x, std::vector<torch::Tensor>& fmaps) {
  auto spec = torch::stft(x, window_, window_ / 4, window_, hann_, /*center=*/true, "reflect",
                          /*normalized=*/false, /*onesided=*/true, /*return_complex=*/true);
  // (B, F, T) complex -> (B, 2, T, F)
  auto ri = torch::view_as_real(spec).permute({0, 3, 2, 1});
  std::vector<torch::Tensor> outs;
  for (std::size_t b = 0; b < bands_.size(); ++b) {
    auto y = ri.slice(-1, bands_[b].first, bands_[b].second);
    for (auto& conv : stacks_[b]) {
      y = leaky(conv->forward(y));
      fmaps.push_back(y);
    }
    outs.push_back(y);
  }
  return post_->forward(torch::cat(outs, -1));
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  for (int p : cfg_.mpd_periods)
    periods_.push_back(register_module("mpd" + std::to_string(p), PeriodDiscriminator(p, cfg_.mpd_channels)));
  for (int w : cfg_.stft_window_sizes)
    stfts_.push_back(
        register_module("stft" + std::to_string(w), BandStftDiscriminator(w, cfg_.band_splits, cfg_.stft_channels)));
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 2) throw ContractViolation("discriminate: input must be (batch, samples)");
  DiscriminatorOutput out;
  out.logits.reserve(static_cast<std::size_t>(cfg_.num_heads()));
  for (auto& head : periods_) {
    out.feature_maps.emplace_back();
    out.logits.push_back(head->forward(x, out.feature_maps.back()));
  }
  for (auto& head : stfts_) {
    out.feature_maps.emplace_back();
    out.logits.push_back(head->forward(x, out.feature_maps.back()));
  }
  return out;
}

void DiscriminatorImpl::zero_output_layers() {
  for (auto& h : periods_) h->zero_output_layer();
  for (auto& h : stfts_) h->zero_output_layer();
}

}  // namespace svae
