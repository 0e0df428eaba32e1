#include "svae/latent_file.h"

#include <bit>
#include <fstream>
#include <iterator>

#include "svae/errors.h"

namespace svae {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_latent_file(const LatentFile& f) {
  if (f.data.size() != std::size_t{f.frames} * f.channels)
    throw ContractViolation("LatentFile: data size does not match frames x channels");
  std::vector<std::uint8_t> out;
  out.reserve(LatentFile::kHeaderBytes + 4 * f.data.size());
  out.insert(out.end(), {'S', 'V', 'A', 'E'});
  put_u32(out, LatentFile::kVersion);
  put_u32(out, std::bit_cast<std::uint32_t>(f.frame_rate));
  put_u32(out, f.frames);
  put_u32(out, f.channels);
  for (float v : f.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

LatentFile decode_latent_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < LatentFile::kHeaderBytes) throw FormatError("latent file: truncated header");
  if (!(bytes[0] == 'S' && bytes[1] == 'V' && bytes[2] == 'A' && bytes[3] == 'E'))
    throw FormatError("latent file: bad magic");
  const std::uint8_t* p = bytes.data();
  if (get_u32(p + 4) != LatentFile::kVersion)
    throw FormatError("latent file: unsupported version " + std::to_string(get_u32(p + 4)));
  LatentFile f;
  f.frame_rate = std::bit_cast<float>(get_u32(p + 8));
  f.frames = get_u32(p + 12);
  f.channels = get_u32(p + 16);
  const std::size_t n = std::size_t{f.frames} * f.channels;
  if (bytes.size() != LatentFile::kHeaderBytes + 4 * n)
    throw FormatError("latent file: payload size does not match header");
  f.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.data[i] = std::bit_cast<float>(get_u32(p + LatentFile::kHeaderBytes + 4 * i));
  return f;
}

void write_latent_file(const std::filesystem::path& path, const LatentFile& f) {
  auto bytes = encode_latent_file(f);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write latent file: " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LatentFile read_latent_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open latent file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_latent_file(bytes);
}

}  // namespace svae
