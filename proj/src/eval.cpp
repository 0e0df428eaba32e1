#include "svae/eval.h"

#include <array>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "svae/errors.h"
#include "svae/hash.h"
#include "svae/stoi.h"
#include "svae/trainer.h"

namespace svae {
namespace {

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) s.replace(pos, from.size(), to);
  return s;
}

std::string shell_quote(const std::string& s) { return "'" + replace_all(s, "'", "'\\''") + "'"; }

// Removes its files on scope exit.
struct TempFiles {
  std::vector<std::filesystem::path> paths;
  ~TempFiles() {
    std::error_code ec;
    for (const auto& p : paths) std::filesystem::remove(p, ec);
  }
};

std::optional<double> mean_of(const std::vector<FileMetrics>& files, std::optional<double> FileMetrics::*field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& f : files)
    if (f.*field) {
      sum += *(f.*field);
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

Vae load_vae(const std::filesystem::path& ckpt, const std::optional<ExperimentConfig>& expected) {
  return load_inference_model(ckpt, expected).vae;
}

template <typename Fn>
BatchResult for_each_entry(const std::filesystem::path& manifest, const WarningSink& warn, Fn&& fn) {
  BatchResult result;
  for (const auto& path : read_manifest(manifest)) {
    try {
      result.written.push_back(fn(path));
    } catch (const std::exception& e) {
      result.failures.push_back({path, e.what()});
      if (warn) warn(path.string() + ": " + e.what());
    }
  }
  return result;
}

}  // namespace

void warn_to_stderr(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

ExternalCommandProvider::ExternalCommandProvider(std::string name, std::string command, std::string model_id,
                                                 WarningSink warn)
    : name_(std::move(name)), command_(std::move(command)), model_id_(std::move(model_id)), warn_(std::move(warn)) {}

std::optional<double> ExternalCommandProvider::score(const AudioSegment& ref, const AudioSegment& deg) {
  auto fail = [&](const std::string& why) -> std::optional<double> {
    if (warn_) warn_(name_ + " provider failed for " + deg.source_id + ": " + why + "; metric omitted");
    return std::nullopt;
  };
  TempFiles tmp;
  const auto base = std::filesystem::temp_directory_path() /
                    ("svae_" + name_ + "_" + std::to_string(splitmix64(reinterpret_cast<std::uintptr_t>(&tmp) ^
                                                                        static_cast<std::uint64_t>(std::rand()))));
  tmp.paths = {base.string() + "_ref.wav", base.string() + "_deg.wav"};
  try {
    write_wav(tmp.paths[0], ref, WavEncoding::kFloat32);
    write_wav(tmp.paths[1], deg, WavEncoding::kFloat32);
  } catch (const std::exception& e) {
    return fail(e.what());
  }
  const auto cmd = replace_all(replace_all(command_, "{ref}", shell_quote(tmp.paths[0].string())), "{deg}",
                               shell_quote(tmp.paths[1].string()));

  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return fail("cannot start command");
  std::string out;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  if (status != 0) return fail("command exited with status " + std::to_string(status));

  std::istringstream in(out);
  std::string token, last;
  while (in >> token) last = token;
  try {
    std::size_t used = 0;
    const double v = std::stod(last, &used);
    if (used != last.size() || !std::isfinite(v)) return fail("unparsable output '" + last + "'");
    return v;
  } catch (const std::exception&) {
    return fail("unparsable output '" + last + "'");
  }
}

nlohmann::ordered_json to_json(const ReconReport& r) {
  nlohmann::ordered_json j;
  auto files = nlohmann::ordered_json::array();
  for (const auto& f : r.files) {
    nlohmann::ordered_json e;
    e["id"] = f.id;
    e["stoi"] = f.stoi;
    if (f.pesq) e["pesq"] = *f.pesq;
    if (f.utmos) e["utmos"] = *f.utmos;
    files.push_back(std::move(e));
  }
  j["files"] = std::move(files);
  nlohmann::ordered_json mean;
  mean["stoi"] = r.mean_stoi;
  if (r.mean_pesq) mean["pesq"] = *r.mean_pesq;
  if (r.mean_utmos) mean["utmos"] = *r.mean_utmos;
  j["mean"] = std::move(mean);
  j["providers"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.providers) j["providers"][k] = v;
  j["warnings"] = r.warnings;
  return j;
}

ReconReport report_from_json(const nlohmann::json& j) {
  try {
    ReconReport r;
    for (const auto& e : j.at("files")) {
      FileMetrics f;
      f.id = e.at("id").get<std::string>();
      f.stoi = e.at("stoi").get<double>();
      if (e.contains("pesq")) f.pesq = e["pesq"].get<double>();
      if (e.contains("utmos")) f.utmos = e["utmos"].get<double>();
      r.files.push_back(std::move(f));
    }
    const auto& mean = j.at("mean");
    r.mean_stoi = mean.at("stoi").get<double>();
    if (mean.contains("pesq")) r.mean_pesq = mean["pesq"].get<double>();
    if (mean.contains("utmos")) r.mean_utmos = mean["utmos"].get<double>();
    r.providers = j.at("providers").get<std::map<std::string, std::string>>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed recon report: ") + e.what());
  }
}

void finalize_means(ReconReport& r) {
  double sum = 0.0;
  for (const auto& f : r.files) sum += f.stoi;
  r.mean_stoi = r.files.empty() ? 0.0 : sum / static_cast<double>(r.files.size());
  r.mean_pesq = mean_of(r.files, &FileMetrics::pesq);
  r.mean_utmos = mean_of(r.files, &FileMetrics::utmos);
}

AudioSegment reconstruct(Vae& vae, const AudioSegment& x) {
  if (x.sample_rate != kModelSampleRate) throw ContractViolation("reconstruct: input must be 16 kHz");
  if (x.samples.empty()) throw ContractViolation("reconstruct: empty input");
  torch::NoGradGuard guard;
  vae->eval();
  const auto dtype = vae->encoder()->parameters().front().scalar_type();
  auto wave = torch::from_blob(const_cast<float*>(x.samples.data()), {1, static_cast<int64_t>(x.size())}, torch::kFloat)
                  .to(dtype);
  auto post = vae->encode(wave);
  auto y = vae->decode(LatentSequence{post.mean, post.frame_rate}).slice(1, 0, wave.size(1));
  auto yf = y.to(torch::kFloat).contiguous();
  AudioSegment out;
  out.sample_rate = kModelSampleRate;
  out.source_id = x.source_id;
  out.samples.assign(yf.data_ptr<float>(), yf.data_ptr<float>() + yf.numel());
  return out;
}

AudioSegment reconstruct_file(const std::filesystem::path& in, const std::filesystem::path& ckpt,
                              const std::optional<std::filesystem::path>& out,
                              const std::optional<ExperimentConfig>& expected) {
  auto vae = load_vae(ckpt, expected);
  auto y = reconstruct(vae, load_for_model(in));
  if (out) {
    if (out->has_parent_path()) std::filesystem::create_directories(out->parent_path());
    write_wav(*out, y);
  }
  return y;
}

BatchResult reconstruct_manifest(const std::filesystem::path& manifest, const std::filesystem::path& ckpt,
                                 const std::filesystem::path& out_dir, const std::optional<ExperimentConfig>& expected,
                                 const WarningSink& warn) {
  auto vae = load_vae(ckpt, expected);
  std::filesystem::create_directories(out_dir);
  return for_each_entry(manifest, warn, [&](const std::filesystem::path& path) {
    auto y = reconstruct(vae, load_for_model(path));
    auto dst = out_dir / (path.stem().string() + "_recon.wav");
    write_wav(dst, y);
    return dst;
  });
}

ExportMode parse_export_mode(const std::string& s) {
  if (s == "mean") return ExportMode::kMean;
  if (s == "sample") return ExportMode::kSample;
  throw ConfigError("export mode must be 'mean' or 'sample', got '" + s + "'");
}

LatentFile export_latent(Vae& vae, const AudioSegment& x, ExportMode mode, std::uint64_t seed) {
  torch::NoGradGuard guard;
  vae->eval();
  std::vector<AudioSegment> one{x};
  auto post = vae->encode(one);
  auto z = mode == ExportMode::kMean ? LatentSequence{post.mean, post.frame_rate} : reparameterize(post, seed);
  // (1, C, T) -> (T, C)
  auto tc = z.frames[0].transpose(0, 1).to(torch::kFloat).contiguous();
  LatentFile f;
  f.frame_rate = static_cast<float>(z.frame_rate);
  f.frames = static_cast<std::uint32_t>(tc.size(0));
  f.channels = static_cast<std::uint32_t>(tc.size(1));
  f.data.assign(tc.data_ptr<float>(), tc.data_ptr<float>() + tc.numel());
  return f;
}

BatchResult export_latents(const std::filesystem::path& manifest, const std::filesystem::path& ckpt, ExportMode mode,
                           const std::filesystem::path& out_dir, std::uint64_t seed,
                           const std::optional<ExperimentConfig>& expected, const WarningSink& warn) {
  auto vae = load_vae(ckpt, expected);
  std::filesystem::create_directories(out_dir);
  return for_each_entry(manifest, warn, [&](const std::filesystem::path& path) {
    const auto stem = path.stem().string();
    auto f = export_latent(vae, load_for_model(path), mode, hash_combine(seed, fnv1a64(stem)));
    auto dst = out_dir / (stem + ".svae");
    write_latent_file(dst, f);
    return dst;
  });
}

ReconReport eval_reconstruction(std::span<const AudioSegment> refs, const Reconstructor& model,
                                const MetricProviders& providers, const WarningSink& warn) {
  ReconReport r;
  if (providers.pesq) r.providers["pesq"] = providers.pesq->model_id();
  if (providers.utmos) r.providers["utmos"] = providers.utmos->model_id();
  auto note = [&](const std::string& msg) {
    r.warnings.push_back(msg);
    if (warn) warn(msg);
  };
  for (const auto& ref : refs) {
    AudioSegment deg = model(ref);
    if (deg.size() != ref.size()) throw ContractViolation("eval_reconstruction: reconstruction length differs for " + ref.source_id);
    FileMetrics m;
    m.id = ref.source_id;
    try {
      m.stoi = stoi(ref, deg);
    } catch (const ContractViolation& e) {
      note(ref.source_id + ": skipped, " + e.what());
      continue;
    }
    if (providers.pesq) {
      m.pesq = providers.pesq->score(ref, deg);
      if (!m.pesq) r.warnings.push_back(ref.source_id + ": pesq unavailable");
    }
    if (providers.utmos) {
      m.utmos = providers.utmos->score(ref, deg);
      if (!m.utmos) r.warnings.push_back(ref.source_id + ": utmos unavailable");
    }
    r.files.push_back(std::move(m));
  }
  finalize_means(r);
  return r;
}

ReconReport eval_reconstruction(const std::filesystem::path& manifest, const std::filesystem::path& ckpt,
                                const MetricProviders& providers, const std::optional<ExperimentConfig>& expected,
                                const WarningSink& warn) {
  auto vae = load_vae(ckpt, expected);
  std::vector<AudioSegment> refs;
  for (const auto& p : read_manifest(manifest)) refs.push_back(load_for_model(p));
  return eval_reconstruction(refs, [&](const AudioSegment& x) { return reconstruct(vae, x); }, providers, warn);
}

}  // namespace svae
