#include "svae/layers.h"

#include <cmath>
#include <numbers>

namespace svae {
namespace F = torch::nn::functional;

namespace {

// PyTorch's default conv initialization, then split into (v, g).
std::pair<torch::Tensor, torch::Tensor> init_weight_norm(torch::Tensor w, int64_t dim) {
  torch::NoGradGuard guard;
  auto v = w.detach().clone();
  auto g = torch::norm_except_dim(v, 2, dim).detach().clone();
  return {v, g};
}

}  // namespace

WNConv1dImpl::WNConv1dImpl(WNConv1dOptions opts) : opts_(opts) {
  torch::nn::Conv1d proto(torch::nn::Conv1dOptions(opts.in, opts.out, opts.kernel));
  auto [v, g] = init_weight_norm(proto->weight, 0);
  v_ = register_parameter("weight_v", v);
  g_ = register_parameter("weight_g", g);
  bias_ = register_parameter("bias", proto->bias.detach().clone());
}

torch::Tensor WNConv1dImpl::weight() const { return torch::_weight_norm(v_, g_, 0); }

torch::Tensor WNConv1dImpl::forward(const torch::Tensor& x) {
  return F::conv1d(x, weight(),
                   F::Conv1dFuncOptions().bias(bias_).stride(opts_.stride).padding(opts_.padding).dilation(
                       opts_.dilation));
}

void WNConv1dImpl::zero_output() {
  torch::NoGradGuard guard;
  g_.zero_();
  bias_.zero_();
}

WNConvTranspose1dImpl::WNConvTranspose1dImpl(WNConvTranspose1dOptions opts) : opts_(opts) {
  torch::nn::ConvTranspose1d proto(torch::nn::ConvTranspose1dOptions(opts.in, opts.out, opts.kernel));
  auto [v, g] = init_weight_norm(proto->weight, 0);
  v_ = register_parameter("weight_v", v);
  g_ = register_parameter("weight_g", g);
  bias_ = register_parameter("bias", proto->bias.detach().clone());
}

torch::Tensor WNConvTranspose1dImpl::forward(const torch::Tensor& x) {
  return F::conv_transpose1d(x, torch::_weight_norm(v_, g_, 0),
                             F::ConvTranspose1dFuncOptions()
                                 .bias(bias_)
                                 .stride(opts_.stride)
                                 .padding(opts_.padding)
                                 .output_padding(opts_.output_padding));
}

WNConv2dImpl::WNConv2dImpl(WNConv2dOptions opts) : opts_(opts) {
  torch::nn::Conv2d proto(torch::nn::Conv2dOptions(opts.in, opts.out, {opts.kernel[0], opts.kernel[1]}));
  auto [v, g] = init_weight_norm(proto->weight, 0);
  v_ = register_parameter("weight_v", v);
  g_ = register_parameter("weight_g", g);
  bias_ = register_parameter("bias", proto->bias.detach().clone());
}

torch::Tensor WNConv2dImpl::forward(const torch::Tensor& x) {
  return F::conv2d(x, torch::_weight_norm(v_, g_, 0),
                   F::Conv2dFuncOptions()
                       .bias(bias_)
                       .stride({opts_.stride[0], opts_.stride[1]})
                       .padding({opts_.padding[0], opts_.padding[1]}));
}

void WNConv2dImpl::zero_output() {
  torch::NoGradGuard guard;
  g_.zero_();
  bias_.zero_();
}

Snake1dImpl::Snake1dImpl(int64_t channels) {
  alpha_ = register_parameter("alpha", torch::ones({1, channels, 1}));
}

torch::Tensor Snake1dImpl::forward(const torch::Tensor& x) {
  auto inv = (alpha_ + 1e-9).reciprocal();
  if (!torch::GradMode::is_enabled()) {
    // same arithmetic, in place
    auto s = x * alpha_;
    s.sin_();
    s.mul_(s);
    return torch::addcmul(x, s, inv);
  }
  auto s = torch::sin(x * alpha_);
  return torch::addcmul(x, s * s, inv);
}

std::vector<double> kaiser_sinc_filter(double cutoff, double half_width, int kernel_size) {
  const bool even = kernel_size % 2 == 0;
  const int half = kernel_size / 2;
  const double delta_f = 4.0 * half_width;
  const double atten = 2.285 * (half - 1) * std::numbers::pi * delta_f + 7.95;
  double beta = 0.0;
  if (atten > 50.0) {
    beta = 0.1102 * (atten - 8.7);
  } else if (atten >= 21.0) {
    beta = 0.5842 * std::pow(atten - 21.0, 0.4) + 0.07886 * (atten - 21.0);
  }

  std::vector<double> taps(static_cast<std::size_t>(kernel_size));
  const double i0 = std::cyl_bessel_i(0.0, beta);
  double sum = 0.0;
  for (int n = 0; n < kernel_size; ++n) {
    const double r = kernel_size > 1 ? 2.0 * n / (kernel_size - 1) - 1.0 : 0.0;
    const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0;
    const double t = even ? (n - half) + 0.5 : static_cast<double>(n - half);
    const double arg = 2.0 * cutoff * t;
    const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
    taps[static_cast<std::size_t>(n)] = 2.0 * cutoff * w * sinc;
    sum += taps[static_cast<std::size_t>(n)];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

AntiAliasedSnakeImpl::AntiAliasedSnakeImpl(int64_t channels) {
  act_ = register_module("act", Snake1d(channels));
  auto taps = kaiser_sinc_filter(0.5 / kRatio, 0.6 / kRatio, kTaps);
  auto filt = torch::tensor(taps, torch::kDouble).to(torch::kFloat).view({1, 1, kTaps});
  filter_ = register_buffer("filter", filt);
}

torch::Tensor AntiAliasedSnakeImpl::upsample(const torch::Tensor& x) const {
  const int64_t channels = x.size(1);
  const int64_t pad = kTaps / kRatio - 1;
  const int64_t crop_left = pad * kRatio + (kTaps - kRatio) / 2;
  const int64_t crop_right = pad * kRatio + (kTaps - kRatio + 1) / 2;
  auto y = F::pad(x, F::PadFuncOptions({pad, pad}).mode(torch::kReplicate));
  y = kRatio * F::conv_transpose1d(
                   y, filter_.expand({channels, 1, kTaps}),
                   F::ConvTranspose1dFuncOptions().stride(kRatio).groups(channels));
  return y.slice(-1, crop_left, y.size(-1) - crop_right);
}

torch::Tensor AntiAliasedSnakeImpl::downsample(const torch::Tensor& x) const {
  const int64_t channels = x.size(1);
  const int64_t pad_left = kTaps / 2 - (kTaps % 2 == 0 ? 1 : 0);
  const int64_t pad_right = kTaps / 2;
  auto y = F::pad(x, F::PadFuncOptions({pad_left, pad_right}).mode(torch::kReplicate));
  return F::conv1d(y, filter_.expand({channels, 1, kTaps}),
                   F::Conv1dFuncOptions().stride(kRatio).groups(channels));
}

torch::Tensor AntiAliasedSnakeImpl::forward(const torch::Tensor& x) {
  return downsample(act_->forward(upsample(x)));
}

ResidualUnitImpl::ResidualUnitImpl(int64_t channels, int64_t dilation) {
  const int64_t pad = (7 - 1) * dilation / 2;
  block_ = register_module(
      "block", torch::nn::Sequential(Snake1d(channels),
                                     WNConv1d(WNConv1dOptions{channels, channels, 7, 1, pad, dilation}),
                                     Snake1d(channels), WNConv1d(WNConv1dOptions{channels, channels, 1})));
}

torch::Tensor ResidualUnitImpl::forward(const torch::Tensor& x) {
  auto y = block_->forward(x);
  const int64_t crop = (x.size(-1) - y.size(-1)) / 2;
  auto skip = crop > 0 ? x.slice(-1, crop, x.size(-1) - crop) : x;
  return skip + y;
}

AMPBlockImpl::AMPBlockImpl(int64_t channels, int64_t kernel_size, const std::vector<int>& dilations) {
  for (std::size_t i = 0; i < dilations.size(); ++i) {
    const int64_t d = dilations[i];
    const auto idx = std::to_string(i);
    dilated_.push_back(register_module(
        "conv_dilated" + idx,
        WNConv1d(WNConv1dOptions{channels, channels, kernel_size, 1, (kernel_size * d - d) / 2, d})));
    plain_.push_back(register_module(
        "conv_plain" + idx, WNConv1d(WNConv1dOptions{channels, channels, kernel_size, 1, (kernel_size - 1) / 2})));
    act_in_.push_back(register_module("act_in" + idx, AntiAliasedSnake(channels)));
    act_mid_.push_back(register_module("act_mid" + idx, AntiAliasedSnake(channels)));
  }
}

torch::Tensor AMPBlockImpl::forward(torch::Tensor x) {
  for (std::size_t i = 0; i < dilated_.size(); ++i) {
    auto t = act_in_[i]->forward(x);
    t = dilated_[i]->forward(t);
    t = act_mid_[i]->forward(t);
    t = plain_[i]->forward(t);
    x = x + t;
  }
  return x;
}

int64_t count_parameters(torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

}  // namespace svae
