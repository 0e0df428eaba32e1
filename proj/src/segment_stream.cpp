#include <algorithm>
#include <cmath>
#include <numeric>

#include "svae/audio.h"
#include "svae/errors.h"
#include "svae/hash.h"

namespace svae {
namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::int64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t state = hash_combine(seed, static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) {
    state = splitmix64(state);
    std::swap(order[i - 1], order[state % i]);
  }
  return order;
}

}  // namespace

std::int64_t BatchSpec::window_samples() const {
  return static_cast<std::int64_t>(std::llround(segment_seconds * kModelSampleRate));
}

void BatchSpec::validate() const {
  const double exact = segment_seconds * kModelSampleRate;
  if (!(segment_seconds > 0.0) || std::abs(exact - std::round(exact)) > 1e-6)
    throw ContractViolation("BatchSpec: segment_seconds * 16000 must be a positive integer");
  if (batch_size < 1) throw ContractViolation("BatchSpec: batch_size must be >= 1");
}

SegmentStream::SegmentStream(std::vector<AudioSegment> clips, BatchSpec spec, int workers)
    : clips_(std::move(clips)), spec_(spec), workers_(std::max(0, workers)) {
  spec_.validate();
  for (const auto& c : clips_) {
    if (c.sample_rate != kModelSampleRate)
      throw ContractViolation("SegmentStream: clip '" + c.source_id + "' is not 16 kHz");
  }
}

SegmentStream::~SegmentStream() {
  for (auto& f : pending_) {
    if (f.valid()) f.wait();
  }
}

Batch SegmentStream::batch_at(std::int64_t k) const {
  const std::int64_t window = spec_.window_samples();
  const auto n_clips = static_cast<std::int64_t>(clips_.size());
  Batch b;
  b.index = k;
  b.batch_size = spec_.batch_size;
  b.window = window;
  b.samples.assign(static_cast<std::size_t>(spec_.batch_size * window), 0.0f);
  b.source_ids.resize(static_cast<std::size_t>(spec_.batch_size));
  b.offsets.resize(static_cast<std::size_t>(spec_.batch_size));
  if (n_clips == 0) return b;

  std::int64_t cached_epoch = -1;
  std::vector<std::size_t> order;
  for (std::int64_t i = 0; i < spec_.batch_size; ++i) {
    const std::int64_t item = k * spec_.batch_size + i;
    const std::int64_t epoch = item / n_clips;
    if (epoch != cached_epoch) {
      order = epoch_order(clips_.size(), spec_.shuffle_seed, epoch);
      cached_epoch = epoch;
    }
    const AudioSegment& clip = clips_[order[static_cast<std::size_t>(item % n_clips)]];
    const auto len = static_cast<std::int64_t>(clip.samples.size());
    std::int64_t offset = 0;
    if (len > window) {
      const std::uint64_t h =
          hash_combine(hash_combine(spec_.shuffle_seed ^ 0xC0FFEEull, static_cast<std::uint64_t>(item)),
                       fnv1a64(clip.source_id));
      offset = static_cast<std::int64_t>(h % static_cast<std::uint64_t>(len - window + 1));
    }
    const std::int64_t take = std::min(window, len - offset);
    std::copy_n(clip.samples.begin() + offset, take, b.samples.begin() + i * window);
    b.source_ids[static_cast<std::size_t>(i)] = clip.source_id;
    b.offsets[static_cast<std::size_t>(i)] = offset;
  }
  return b;
}

void SegmentStream::refill() {
  while (static_cast<int>(pending_.size()) < workers_) {
    const std::int64_t k = scheduled_++;
    pending_.push_back(std::async(std::launch::async, [this, k] { return batch_at(k); }));
  }
}

std::optional<Batch> SegmentStream::next() {
  if (clips_.empty()) return std::nullopt;
  if (workers_ == 0) return batch_at(cursor_++);
  refill();
  Batch b = pending_.front().get();
  pending_.pop_front();
  ++cursor_;
  refill();
  return b;
}

void SegmentStream::seek(std::int64_t k) {
  for (auto& f : pending_) f.wait();
  pending_.clear();
  cursor_ = k;
  scheduled_ = k;
}

}  // namespace svae
