#pragma once

#include <torch/torch.h>

#include <vector>

namespace svae {

// Weight-normalized convolutions: weight = g * v / ||v||, norm taken over
// every dim except 0. Parameters are registered as weight_v, weight_g, bias.
struct WNConv1dOptions {
  int64_t in = 1, out = 1, kernel = 1, stride = 1, padding = 0, dilation = 1;
};

class WNConv1dImpl : public torch::nn::Module {
 public:
  explicit WNConv1dImpl(WNConv1dOptions opts);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor weight() const;
  // Zeroes g and bias so the layer outputs exactly zero.
  void zero_output();

  const WNConv1dOptions& options() const { return opts_; }

 private:
  WNConv1dOptions opts_;
  torch::Tensor v_, g_, bias_;
};
TORCH_MODULE(WNConv1d);

struct WNConvTranspose1dOptions {
  int64_t in = 1, out = 1, kernel = 1, stride = 1, padding = 0, output_padding = 0;
};

class WNConvTranspose1dImpl : public torch::nn::Module {
 public:
  explicit WNConvTranspose1dImpl(WNConvTranspose1dOptions opts);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  WNConvTranspose1dOptions opts_;
  torch::Tensor v_, g_, bias_;
};
TORCH_MODULE(WNConvTranspose1d);

struct WNConv2dOptions {
  int64_t in = 1, out = 1;
  std::array<int64_t, 2> kernel{1, 1}, stride{1, 1}, padding{0, 0};
};

class WNConv2dImpl : public torch::nn::Module {
 public:
  explicit WNConv2dImpl(WNConv2dOptions opts);
  torch::Tensor forward(const torch::Tensor& x);
  void zero_output();

 private:
  WNConv2dOptions opts_;
  torch::Tensor v_, g_, bias_;
};
TORCH_MODULE(WNConv2d);

// x + sin^2(alpha x) / alpha with a learned per-channel alpha.
class Snake1dImpl : public torch::nn::Module {
 public:
  explicit Snake1dImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::Tensor alpha_;
};
TORCH_MODULE(Snake1d);

// Kaiser-windowed sinc low-pass taps, normalized to unit DC gain.
// `cutoff` and `half_width` are fractions of the sample rate.
std::vector<double> kaiser_sinc_filter(double cutoff, double half_width, int kernel_size);

// Snake evaluated at twice the sample rate: 2x upsample, low-pass, Snake,
// low-pass, 2x downsample. Output length equals input length.
class AntiAliasedSnakeImpl : public torch::nn::Module {
 public:
  static constexpr int kRatio = 2;
  static constexpr int kTaps = 12;

  explicit AntiAliasedSnakeImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor upsample(const torch::Tensor& x) const;
  torch::Tensor downsample(const torch::Tensor& x) const;

 private:
  Snake1d act_{nullptr};
  torch::Tensor filter_;
};
TORCH_MODULE(AntiAliasedSnake);

// Snake -> dilated conv(k=7) -> Snake -> conv(k=1), plus the identity path.
class ResidualUnitImpl : public torch::nn::Module {
 public:
  ResidualUnitImpl(int64_t channels, int64_t dilation);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential block_;
};
TORCH_MODULE(ResidualUnit);

// Anti-aliased multi-periodicity block: for each dilation d,
// x += conv(act(conv_d(act(x)))).
class AMPBlockImpl : public torch::nn::Module {
 public:
  AMPBlockImpl(int64_t channels, int64_t kernel_size, const std::vector<int>& dilations);
  torch::Tensor forward(torch::Tensor x);

 private:
  std::vector<WNConv1d> dilated_, plain_;
  std::vector<AntiAliasedSnake> act_in_, act_mid_;
};
TORCH_MODULE(AMPBlock);

int64_t count_parameters(torch::nn::Module& module);

}  // namespace svae
