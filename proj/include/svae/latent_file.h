#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace svae {

// Binary carrier for latent (or cached SSL) frames:
//   "SVAE" | u32 version=1 | f32 frame_rate | u32 T | u32 C | T*C f32
// all little-endian, data row-major (frame-major).
struct LatentFile {
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kHeaderBytes = 20;

  float frame_rate = 40.0f;
  std::uint32_t frames = 0;
  std::uint32_t channels = 64;
  std::vector<float> data;

  std::span<const float> frame(std::uint32_t t) const {
    return {data.data() + std::size_t{t} * channels, channels};
  }
  bool operator==(const LatentFile&) const = default;
};

std::vector<std::uint8_t> encode_latent_file(const LatentFile& f);
LatentFile decode_latent_file(std::span<const std::uint8_t> bytes);

// Writes via a temp file and rename, so readers never see a partial file.
void write_latent_file(const std::filesystem::path& path, const LatentFile& f);
LatentFile read_latent_file(const std::filesystem::path& path);

}  // namespace svae
