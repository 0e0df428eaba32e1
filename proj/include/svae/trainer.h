#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>

#include "svae/alignment.h"
#include "svae/audio.h"
#include "svae/config.h"
#include "svae/discriminators.h"
#include "svae/objectives.h"
#include "svae/vae.h"

namespace svae {

// lr * gamma^step
double lr_at(std::int64_t step, const TrainConfig& cfg);

// One optimization step's log record. `gen` holds the generator-side terms;
// `adv_disc` is the discriminator hinge loss of the same step.
struct StepRecord {
  std::int64_t step = 0;
  LossBreakdown gen;
  double adv_disc = 0.0;
  double lr = 0.0;

  bool operator==(const StepRecord&) const = default;
};

// {step, recon, kl, adv_gen, adv_disc, feat, align, total, lr} on one line.
std::string to_json_line(const StepRecord& r);

// Generator (VAE + semantic projection) and discriminator with their Adam
// states, alternating one discriminator update and one generator update
// per step.
class Trainer {
 public:
  Trainer(ExperimentConfig cfg, std::shared_ptr<SSLProvider> ssl);

  Trainer(Trainer&&) noexcept;
  Trainer& operator=(Trainer&&) noexcept;
  ~Trainer();

  StepRecord train_step(const torch::Tensor& audio, std::span<const std::string> source_ids);
  StepRecord train_step(const Batch& batch);

  std::int64_t step() const { return step_; }
  const ExperimentConfig& config() const { return cfg_; }
  SSLProvider& ssl_provider() { return *ssl_; }

  Vae& vae() { return vae_; }
  Discriminator& discriminator() { return disc_; }
  SemanticProjection& projection() { return proj_; }

  // Writes <dir>/ckpt_<step>.pt plus a <dir>/ckpt_<step>.json manifest, each
  // via temp file + rename. Returns the .pt path.
  std::filesystem::path save_checkpoint(const std::filesystem::path& dir) const;

  // Builds a trainer from a checkpoint. With `expected`, that config is used
  // and must match the checkpoint's architecture hash (else
  // IncompatibleCheckpoint); otherwise the manifest's config is used.
  static Trainer load_checkpoint(const std::filesystem::path& path, std::shared_ptr<SSLProvider> ssl,
                                 const std::optional<ExperimentConfig>& expected = std::nullopt);

  // Replaces this trainer's state with the checkpoint's; on any error the
  // current state is left as it was.
  void restore(const std::filesystem::path& path);

 private:
  struct Optimizers;

  ExperimentConfig cfg_;
  std::shared_ptr<SSLProvider> ssl_;
  Vae vae_{nullptr};
  SemanticProjection proj_{nullptr};
  Discriminator disc_{nullptr};
  std::unique_ptr<Optimizers> opt_;
  MelReconstructionLoss mel_;
  at::Generator noise_;
  std::int64_t step_ = 0;
};

// Reads the sidecar manifest of a checkpoint (.pt or .json path).
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path);

// Loads only the VAE weights and config from a checkpoint, for inference.
struct InferenceModel {
  ExperimentConfig config;
  Vae vae{nullptr};
};
InferenceModel load_inference_model(const std::filesystem::path& path,
                                    const std::optional<ExperimentConfig>& expected = std::nullopt);

struct TrainLoopOptions {
  std::optional<std::filesystem::path> resume;
  std::ostream* log = nullptr;
  std::function<void(const StepRecord&)> on_step;
};

// Loads data.manifest at 16 kHz into a stream of train.batch_size batches.
std::unique_ptr<SegmentStream> open_training_stream(const ExperimentConfig& cfg);

// Runs steps from the trainer's current step up to train.total_steps,
// checkpointing every train.checkpoint_every steps and at the end.
// Batch k of the stream feeds step k, so resumed runs see the same data.
// Returns the path of the last checkpoint written.
std::filesystem::path run_training(Trainer& trainer, SegmentStream& stream, const TrainLoopOptions& opts);

}  // namespace svae
