#pragma once

#include <span>
#include <vector>

#include "svae/audio.h"

namespace svae {

// Short-time objective intelligibility of `deg` against the clean `ref`.
// Signals are brought to 10 kHz, silent reference frames (40 dB below the
// loudest) are dropped, and clipped 384 ms third-octave envelopes are
// correlated. Reference-directional: stoi(a, b) != stoi(b, a) in general.
// Throws ContractViolation on length/rate mismatch and when fewer than one
// 30-frame analysis segment survives silence removal.
double stoi(const AudioSegment& ref, const AudioSegment& deg);
double stoi(std::span<const float> ref, std::span<const float> deg, int sample_rate);

namespace stoi_detail {

// Polyphase rational resampler compatible with Octave's resample(), as used
// by the reference STOI code.
std::vector<double> resample_octave(std::span<const double> x, int p, int q);

}  // namespace stoi_detail

}  // namespace svae
