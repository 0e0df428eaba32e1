#include <algorithm>
#include <cmath>
#include <fstream>

#include "svae/audio.h"
#include "svae/errors.h"

namespace svae {

void peak_normalize(AudioSegment& seg) {
  float peak = 0.0f;
  for (float s : seg.samples) {
    if (!std::isfinite(s)) throw FormatError("audio '" + seg.source_id + "' contains non-finite samples");
    peak = std::max(peak, std::abs(s));
  }
  if (peak > 1.0f) {
    const float gain = 0.95f / peak;
    for (float& s : seg.samples) s *= gain;
  }
}

std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest: " + manifest.string());
  const auto base = manifest.parent_path();
  std::vector<std::filesystem::path> paths;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::filesystem::path p = line.substr(first);
    paths.push_back(p.is_absolute() ? p : base / p);
  }
  return paths;
}

AudioSegment load_for_model(const std::filesystem::path& path) {
  auto seg = load_audio(path);
  if (seg.sample_rate != kModelSampleRate) {
    seg = resample(seg, kModelSampleRate);
    peak_normalize(seg);
  }
  return seg;
}

}  // namespace svae
