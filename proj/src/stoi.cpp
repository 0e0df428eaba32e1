#include "svae/stoi.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <torch/torch.h>

#include "svae/errors.h"

namespace svae {
namespace {

constexpr int kRate = 10000;
constexpr int kFrame = 256;
constexpr int kFft = 512;
constexpr int kBands = 15;
constexpr double kMinFreq = 150.0;
constexpr int kSegment = 30;
constexpr double kBeta = -15.0;
constexpr double kDynRange = 40.0;
constexpr double kEps = std::numeric_limits<double>::epsilon();

double sinc(double x) {
  if (x == 0.0) return 1.0;
  return std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
}

// Matlab hanning(n): the periodic-free Hann without its zero endpoints.
std::vector<double> hanning(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (i + 1) / (n + 1));
  return w;
}

struct BandMatrix {
  // Per band, the [lo, hi) FFT-bin range summed into it.
  std::vector<std::pair<int, int>> ranges;
};

BandMatrix third_octave_bands() {
  const int bins = kFft / 2 + 1;
  std::vector<double> f(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k) f[static_cast<std::size_t>(k)] = static_cast<double>(kRate) * k / kFft;
  auto nearest = [&](double target) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < bins; ++k) {
      const double d = (f[static_cast<std::size_t>(k)] - target) * (f[static_cast<std::size_t>(k)] - target);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    return best;
  };
  BandMatrix m;
  for (int b = 0; b < kBands; ++b) {
    const double lo = kMinFreq * std::pow(2.0, (2.0 * b - 1.0) / 6.0);
    const double hi = kMinFreq * std::pow(2.0, (2.0 * b + 1.0) / 6.0);
    m.ranges.emplace_back(nearest(lo), nearest(hi));
  }
  return m;
}

// Drops frames whose reference energy is more than kDynRange below the
// loudest, then overlap-adds what remains.
std::pair<std::vector<double>, std::vector<double>> remove_silent_frames(const std::vector<double>& x,
                                                                         const std::vector<double>& y) {
  const int hop = kFrame / 2;
  const auto w = hanning(kFrame);
  const auto n = static_cast<int>(x.size());
  std::vector<int> starts;
  for (int i = 0; i < n - kFrame; i += hop) starts.push_back(i);

  std::vector<double> energy(starts.size());
  for (std::size_t f = 0; f < starts.size(); ++f) {
    double e = 0.0;
    for (int k = 0; k < kFrame; ++k) {
      const double v = w[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(starts[f] + k)];
      e += v * v;
    }
    energy[f] = 20.0 * std::log10(std::sqrt(e) + kEps);
  }
  const double peak = energy.empty() ? 0.0 : *std::max_element(energy.begin(), energy.end());

  std::vector<int> kept;
  for (std::size_t f = 0; f < starts.size(); ++f)
    if (peak - kDynRange - energy[f] < 0.0) kept.push_back(starts[f]);

  const std::size_t out_len = kept.empty() ? 0 : (kept.size() - 1) * hop + kFrame;
  std::vector<double> xs(out_len, 0.0), ys(out_len, 0.0);
  for (std::size_t f = 0; f < kept.size(); ++f) {
    for (int k = 0; k < kFrame; ++k) {
      const auto dst = f * hop + static_cast<std::size_t>(k);
      const auto src = static_cast<std::size_t>(kept[f] + k);
      xs[dst] += w[static_cast<std::size_t>(k)] * x[src];
      ys[dst] += w[static_cast<std::size_t>(k)] * y[src];
    }
  }
  return {std::move(xs), std::move(ys)};
}

// Third-octave band envelopes, [band][frame].
std::vector<std::vector<double>> band_envelopes(const std::vector<double>& x, const BandMatrix& bands) {
  const int hop = kFrame / 2;
  const auto w = hanning(kFrame);
  std::vector<std::vector<double>> env(kBands);
  const int n_frames = (static_cast<int>(x.size()) - kFrame + hop - 1) / hop;
  if (n_frames <= 0) return env;
  auto frames = torch::empty({n_frames, kFrame}, torch::kDouble);
  auto fa = frames.accessor<double, 2>();
  for (int f = 0; f < n_frames; ++f)
    for (int k = 0; k < kFrame; ++k)
      fa[f][k] = w[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(f * hop + k)];
  auto power = torch::fft::rfft(frames, kFft, 1).abs().square().contiguous();
  auto pa = power.accessor<double, 2>();
  for (int f = 0; f < n_frames; ++f) {
    for (int b = 0; b < kBands; ++b) {
      double p = 0.0;
      const auto [lo, hi] = bands.ranges[static_cast<std::size_t>(b)];
      for (int k = lo; k < hi; ++k) p += pa[f][k];
      env[static_cast<std::size_t>(b)].push_back(std::sqrt(p));
    }
  }
  return env;
}

}  // namespace

namespace stoi_detail {

std::vector<double> resample_octave(std::span<const double> x, int p, int q) {
  const int g = std::gcd(p, q);
  p /= g;
  q /= g;
  if (p == 1 && q == 1) return {x.begin(), x.end()};

  // Kaiser-windowed sinc, 60 dB rejection, roll-off a tenth of the cutoff.
  const double cutoff = 1.0 / (2.0 * std::max(p, q));
  const double roll_off = cutoff / 10.0;
  const double rejection_db = 60.0;
  const auto half = static_cast<int>(std::ceil((rejection_db - 8.0) / (28.714 * roll_off)));
  const double beta = 0.1102 * (rejection_db - 8.7);
  const int taps = 2 * half + 1;
  std::vector<double> h(static_cast<std::size_t>(taps));
  const double i0 = std::cyl_bessel_i(0.0, beta);
  double sum = 0.0;
  for (int n = 0; n < taps; ++n) {
    const double t = n - half;
    const double r = 2.0 * n / (taps - 1) - 1.0;
    const double kaiser = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0;
    h[static_cast<std::size_t>(n)] = kaiser * 2.0 * p * cutoff * sinc(2.0 * cutoff * t);
    sum += h[static_cast<std::size_t>(n)];
  }
  for (double& v : h) v = v / sum * p;

  // upfirdn with the filter delayed so that outputs land on its center.
  const int pre_pad = q - half % q;
  const int pre_remove = (half + pre_pad) / q;
  const auto n_in = static_cast<std::int64_t>(x.size());
  const std::int64_t n_out = (n_in * p + q - 1) / q;
  const std::int64_t padded_taps = taps + pre_pad;

  std::vector<double> out(static_cast<std::size_t>(n_out), 0.0);
  for (std::int64_t j = 0; j < n_out; ++j) {
    const std::int64_t pos = (j + pre_remove) * q;
    // hpad[pos - i * p] with hpad[k] = h[k - pre_pad].
    std::int64_t i_min = std::max<std::int64_t>(0, (pos - padded_taps + 1 + p - 1) / p);
    if (pos - padded_taps + 1 < 0) i_min = 0;
    const std::int64_t i_max = std::min<std::int64_t>(n_in - 1, (pos - pre_pad) / p);
    double acc = 0.0;
    for (std::int64_t i = i_min; i <= i_max; ++i) {
      const std::int64_t k = pos - i * p - pre_pad;
      if (k < 0 || k >= taps) continue;
      acc += x[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(k)];
    }
    out[static_cast<std::size_t>(j)] = acc;
  }
  return out;
}

}  // namespace stoi_detail

double stoi(std::span<const float> ref, std::span<const float> deg, int sample_rate) {
  if (ref.size() != deg.size()) throw ContractViolation("stoi: signals must have equal length");
  if (sample_rate <= 0) throw ContractViolation("stoi: sample rate must be positive");

  std::vector<double> x(ref.begin(), ref.end()), y(deg.begin(), deg.end());
  if (sample_rate != kRate) {
    x = stoi_detail::resample_octave(x, kRate, sample_rate);
    y = stoi_detail::resample_octave(y, kRate, sample_rate);
  }
  std::tie(x, y) = remove_silent_frames(x, y);

  static const BandMatrix bands = third_octave_bands();
  const auto xe = band_envelopes(x, bands);
  const auto ye = band_envelopes(y, bands);
  const auto frames = static_cast<int>(xe.front().size());
  if (frames < kSegment)
    throw ContractViolation("stoi: fewer than " + std::to_string(kSegment) +
                            " frames after silence removal; signal too short");

  const double clip = std::pow(10.0, -kBeta / 20.0);
  double total = 0.0;
  std::vector<double> xs(kSegment), ys(kSegment);
  for (int m = kSegment; m <= frames; ++m) {
    for (int b = 0; b < kBands; ++b) {
      const auto& xb = xe[static_cast<std::size_t>(b)];
      const auto& yb = ye[static_cast<std::size_t>(b)];
      double xn = 0.0, yn = 0.0;
      for (int t = 0; t < kSegment; ++t) {
        xs[static_cast<std::size_t>(t)] = xb[static_cast<std::size_t>(m - kSegment + t)];
        ys[static_cast<std::size_t>(t)] = yb[static_cast<std::size_t>(m - kSegment + t)];
        xn += xs[static_cast<std::size_t>(t)] * xs[static_cast<std::size_t>(t)];
        yn += ys[static_cast<std::size_t>(t)] * ys[static_cast<std::size_t>(t)];
      }
      const double scale = std::sqrt(xn) / (std::sqrt(yn) + kEps);
      double xm = 0.0, ym = 0.0;
      for (int t = 0; t < kSegment; ++t) {
        auto& yv = ys[static_cast<std::size_t>(t)];
        yv = std::min(yv * scale, xs[static_cast<std::size_t>(t)] * (1.0 + clip));
        xm += xs[static_cast<std::size_t>(t)];
        ym += yv;
      }
      xm /= kSegment;
      ym /= kSegment;
      double xx = 0.0, yy = 0.0, xy = 0.0;
      for (int t = 0; t < kSegment; ++t) {
        const double a = xs[static_cast<std::size_t>(t)] - xm;
        const double c = ys[static_cast<std::size_t>(t)] - ym;
        xx += a * a;
        yy += c * c;
        xy += a * c;
      }
      total += xy / ((std::sqrt(xx) + kEps) * (std::sqrt(yy) + kEps));
    }
  }
  const double segments = frames - kSegment + 1;
  return total / (segments * kBands);
}

double stoi(const AudioSegment& ref, const AudioSegment& deg) {
  if (ref.sample_rate != deg.sample_rate) throw ContractViolation("stoi: sample rates differ");
  return stoi(ref.samples, deg.samples, ref.sample_rate);
}

}  // namespace svae
