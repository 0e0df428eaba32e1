#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "svae/audio.h"
#include "svae/errors.h"

namespace svae {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool has(std::size_t n) const { return pos_ + n <= bytes_.size(); }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }

  std::uint16_t u16() { return static_cast<std::uint16_t>(take(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
  std::string tag() {
    need(4);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (!has(n)) throw FormatError("wav: truncated data");
  }
  std::uint64_t take(std::size_t n) {
    need(n);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += n;
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

float read_f32le(const std::uint8_t* p) {
  std::uint32_t bits = std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) |
                       (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
  return std::bit_cast<float>(bits);
}

}  // namespace

AudioSegment decode_wav(std::span<const std::uint8_t> bytes, std::string source_id) {
  ByteReader r(bytes);
  if (!r.has(12)) throw FormatError("wav: truncated header");
  if (r.tag() != "RIFF") throw FormatError("wav: missing RIFF tag");
  r.u32();
  if (r.tag() != "WAVE") throw FormatError("wav: missing WAVE tag");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::span<const std::uint8_t> data;
  bool have_data = false;

  while (r.has(8) && !have_data) {
    std::string id = r.tag();
    std::uint32_t size = r.u32();
    std::size_t body = r.pos();
    if (id == "fmt ") {
      if (size < 16 || !r.has(16)) throw FormatError("wav: truncated fmt chunk");
      format = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.u32();
      r.u16();
      bits = r.u16();
      if (format == kFormatExtensible) {
        if (size < 40 || !r.has(24)) throw FormatError("wav: truncated extensible fmt chunk");
        r.u16();
        r.u16();
        r.u32();
        format = r.u16();  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError("wav: data chunk before fmt chunk");
      std::size_t avail = bytes.size() - body;
      if (size > avail) throw FormatError("wav: truncated data chunk");
      data = bytes.subspan(body, size);
      have_data = true;
    }
    if (!r.has(size + (size & 1u))) {
      if (!have_data) throw FormatError("wav: truncated chunk '" + id + "'");
      break;
    }
    r.seek(body + size + (size & 1u));
  }
  if (!have_fmt) throw FormatError("wav: no fmt chunk");
  if (!have_data) throw FormatError("wav: no data chunk");
  if (channels == 0 || rate == 0) throw FormatError("wav: zero channels or sample rate");

  int bytes_per_sample = 0;
  if (format == kFormatPcm && bits == 16) {
    bytes_per_sample = 2;
  } else if (format == kFormatFloat && bits == 32) {
    bytes_per_sample = 4;
  } else {
    throw FormatError("wav: unsupported encoding (format " + std::to_string(format) + ", " +
                      std::to_string(bits) + " bits)");
  }

  const std::size_t frame_bytes = static_cast<std::size_t>(bytes_per_sample) * channels;
  const std::size_t frames = data.size() / frame_bytes;
  AudioSegment seg;
  seg.sample_rate = static_cast<int>(rate);
  seg.source_id = std::move(source_id);
  seg.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::uint8_t* p = data.data() + f * frame_bytes;
    double acc = 0.0;
    for (std::uint16_t c = 0; c < channels; ++c, p += bytes_per_sample) {
      if (bytes_per_sample == 2) {
        auto v = static_cast<std::int16_t>(std::uint16_t{p[0]} | (std::uint16_t{p[1]} << 8));
        acc += v / 32768.0;
      } else {
        acc += read_f32le(p);
      }
    }
    seg.samples[f] = static_cast<float>(acc / channels);
  }
  peak_normalize(seg);
  return seg;
}

AudioSegment load_audio(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open audio file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return decode_wav(bytes, path.stem().string());
}

std::vector<std::uint8_t> encode_wav(const AudioSegment& seg, WavEncoding encoding) {
  const bool pcm = encoding == WavEncoding::kPcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const std::uint32_t block = bits / 8;
  const auto data_bytes = static_cast<std::uint32_t>(seg.samples.size() * block);

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, pcm ? kFormatPcm : kFormatFloat);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(seg.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(seg.sample_rate) * block);
  put_u16(out, static_cast<std::uint16_t>(block));
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (float s : seg.samples) {
    if (pcm) {
      double v = std::clamp(static_cast<double>(s), -1.0, 1.0) * 32767.0;
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(v))));
    } else {
      put_u32(out, std::bit_cast<std::uint32_t>(s));
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const AudioSegment& seg, WavEncoding encoding) {
  auto bytes = encode_wav(seg, encoding);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write audio file: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace svae
