#include <cmath>
#include <numbers>

#include "svae/audio.h"
#include "svae/errors.h"

namespace svae {
namespace {

constexpr double kKaiserBeta = 14.77;
constexpr int kZeroCrossings = 64;

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

AudioSegment resample(const AudioSegment& seg, int target_rate) {
  if (seg.sample_rate <= 0 || target_rate <= 0)
    throw ContractViolation("resample: sample rates must be positive");
  if (seg.sample_rate == target_rate) return seg;

  const auto src = static_cast<std::int64_t>(seg.sample_rate);
  const auto dst = static_cast<std::int64_t>(target_rate);
  const auto n_in = static_cast<std::int64_t>(seg.samples.size());
  const auto n_out = static_cast<std::int64_t>(
      std::llround(static_cast<double>(n_in) * static_cast<double>(dst) / static_cast<double>(src)));

  // Cutoff relative to the input Nyquist; downsampling narrows the kernel's
  // passband and widens its support in input samples.
  const double cutoff = std::min(1.0, static_cast<double>(dst) / static_cast<double>(src));
  const double half_width = kZeroCrossings / cutoff;
  const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);

  AudioSegment out;
  out.sample_rate = target_rate;
  out.source_id = seg.source_id;
  out.samples.resize(static_cast<std::size_t>(n_out));

  for (std::int64_t n = 0; n < n_out; ++n) {
    // Source position n * src / dst, kept as an integer part plus fraction.
    const std::int64_t num = n * src;
    const std::int64_t base = num / dst;
    const double frac = static_cast<double>(num % dst) / static_cast<double>(dst);
    const double pos = static_cast<double>(base) + frac;

    auto lo = static_cast<std::int64_t>(std::ceil(pos - half_width));
    auto hi = static_cast<std::int64_t>(std::floor(pos + half_width));
    lo = std::max<std::int64_t>(lo, 0);
    hi = std::min<std::int64_t>(hi, n_in - 1);

    double acc = 0.0;
    for (std::int64_t k = lo; k <= hi; ++k) {
      const double d = pos - static_cast<double>(k);
      const double r = d / half_width;
      const double w = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
      acc += seg.samples[static_cast<std::size_t>(k)] * cutoff * sinc(cutoff * d) * w;
    }
    out.samples[static_cast<std::size_t>(n)] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace svae
