#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "svae/audio.h"
#include "svae/config.h"
#include "svae/latent_file.h"
#include "svae/vae.h"

namespace svae {

using WarningSink = std::function<void(const std::string&)>;

// Writes "warning: <msg>" to stderr.
void warn_to_stderr(const std::string& msg);

// Optional quality metric computed outside this library.
class MetricProvider {
 public:
  virtual ~MetricProvider() = default;
  virtual std::string name() const = 0;
  // Identifier of the underlying model/implementation, recorded in reports.
  virtual std::string model_id() const = 0;
  // Score of `deg` against `ref`; nullopt when the provider failed.
  virtual std::optional<double> score(const AudioSegment& ref, const AudioSegment& deg) = 0;
};

// Runs a shell command with {ref} and {deg} replaced by paths of temporary
// 16 kHz float WAVs; the last whitespace-separated token on stdout is the
// score. Non-zero exit or unparsable output yields nullopt and a warning.
class ExternalCommandProvider final : public MetricProvider {
 public:
  ExternalCommandProvider(std::string name, std::string command, std::string model_id,
                          WarningSink warn = warn_to_stderr);

  std::string name() const override { return name_; }
  std::string model_id() const override { return model_id_; }
  std::optional<double> score(const AudioSegment& ref, const AudioSegment& deg) override;

 private:
  std::string name_, command_, model_id_;
  WarningSink warn_;
};

struct MetricProviders {
  std::shared_ptr<MetricProvider> pesq;
  std::shared_ptr<MetricProvider> utmos;
};

struct FileMetrics {
  std::string id;
  double stoi = 0.0;
  std::optional<double> pesq;
  std::optional<double> utmos;

  bool operator==(const FileMetrics&) const = default;
};

struct ReconReport {
  std::vector<FileMetrics> files;
  double mean_stoi = 0.0;
  std::optional<double> mean_pesq;
  std::optional<double> mean_utmos;
  // metric name -> provider model id, for configured providers only.
  std::map<std::string, std::string> providers;
  std::vector<std::string> warnings;

  bool operator==(const ReconReport&) const = default;
};

// Stable key order: files, mean, providers, warnings.
nlohmann::ordered_json to_json(const ReconReport& r);
ReconReport report_from_json(const nlohmann::json& j);

// Fills the means from `files`; optional means are set only when at least
// one file carries that metric.
void finalize_means(ReconReport& r);

// decode(encode(x).mean), trimmed to the input length.
AudioSegment reconstruct(Vae& vae, const AudioSegment& x);

// Loads a checkpoint's VAE, reconstructs `in` and, if `out` is given, writes
// it as a 16 kHz WAV. With `expected`, an architecture mismatch raises
// IncompatibleCheckpoint.
AudioSegment reconstruct_file(const std::filesystem::path& in, const std::filesystem::path& ckpt,
                              const std::optional<std::filesystem::path>& out = std::nullopt,
                              const std::optional<ExperimentConfig>& expected = std::nullopt);

struct FileFailure {
  std::filesystem::path path;
  std::string error;
};

struct BatchResult {
  std::vector<std::filesystem::path> written;
  std::vector<FileFailure> failures;
};

// One <out_dir>/<stem>_recon.wav per manifest entry.
BatchResult reconstruct_manifest(const std::filesystem::path& manifest, const std::filesystem::path& ckpt,
                                 const std::filesystem::path& out_dir,
                                 const std::optional<ExperimentConfig>& expected = std::nullopt,
                                 const WarningSink& warn = warn_to_stderr);

enum class ExportMode { kMean, kSample };
ExportMode parse_export_mode(const std::string& s);

// Latent frames of one utterance as a (T, C) LatentFile.
LatentFile export_latent(Vae& vae, const AudioSegment& x, ExportMode mode, std::uint64_t seed = 0);

// One <out_dir>/<stem>.svae per manifest entry. Per-file failures are
// reported and skipped. Sample mode draws with hash(seed, stem).
BatchResult export_latents(const std::filesystem::path& manifest, const std::filesystem::path& ckpt, ExportMode mode,
                           const std::filesystem::path& out_dir, std::uint64_t seed = 0,
                           const std::optional<ExperimentConfig>& expected = std::nullopt,
                           const WarningSink& warn = warn_to_stderr);

using Reconstructor = std::function<AudioSegment(const AudioSegment&)>;

// Scores reconstructions of `refs`. Files STOI cannot score (too short) are
// skipped with a warning; provider failures leave that metric absent.
ReconReport eval_reconstruction(std::span<const AudioSegment> refs, const Reconstructor& model,
                                const MetricProviders& providers = {}, const WarningSink& warn = warn_to_stderr);

ReconReport eval_reconstruction(const std::filesystem::path& manifest, const std::filesystem::path& ckpt,
                                const MetricProviders& providers = {},
                                const std::optional<ExperimentConfig>& expected = std::nullopt,
                                const WarningSink& warn = warn_to_stderr);

}  // namespace svae
