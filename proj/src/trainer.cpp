#include "svae/trainer.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "svae/errors.h"
#include "svae/hash.h"
#include "trainer_internal.h"

namespace svae {


namespace {

void set_lr(torch::optim::Optimizer& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

std::vector<torch::Tensor> concat(std::vector<torch::Tensor> a, const std::vector<torch::Tensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void clip_or_abort(const std::vector<torch::Tensor>& params, double max_norm, const char* who) {
  const double norm = torch::nn::utils::clip_grad_norm_(params, max_norm);
  check_finite(norm, std::string("gradient(") + who + ")");
}

double checked(const torch::Tensor& t, const char* term) {
  const double v = t.item<double>();
  check_finite(v, term);
  return v;
}

}  // namespace

double lr_at(std::int64_t step, const TrainConfig& cfg) {
  return cfg.lr * std::pow(cfg.lr_decay_gamma, static_cast<double>(step));
}

std::string to_json_line(const StepRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["recon"] = r.gen.recon;
  j["kl"] = r.gen.kl;
  j["adv_gen"] = r.gen.adv_gen;
  j["adv_disc"] = r.adv_disc;
  j["feat"] = r.gen.feat;
  j["align"] = r.gen.align;
  j["total"] = r.gen.total;
  j["lr"] = r.lr;
  return j.dump();
}

Trainer::Trainer(ExperimentConfig cfg, std::shared_ptr<SSLProvider> ssl)
    : cfg_(std::move(cfg)), ssl_(std::move(ssl)), mel_(cfg_.mel) {
  cfg_.validate();
  if (!ssl_) throw ContractViolation("Trainer: ssl provider is required");
  if (ssl_->ssl_dim() != cfg_.ssl.ssl_dim)
    throw ConfigError("ssl provider dim " + std::to_string(ssl_->ssl_dim()) + " != config ssl_dim " +
                      std::to_string(cfg_.ssl.ssl_dim));
  resolve_layers(cfg_.ssl.layer, ssl_->num_layers());

  torch::manual_seed(cfg_.train.seed);
  vae_ = Vae(cfg_.model);
  proj_ = SemanticProjection(cfg_.ssl.ssl_dim, cfg_.model.latent_dim, cfg_.align.kernel_size);
  disc_ = Discriminator(cfg_.discriminator);
  opt_ = std::make_unique<Optimizers>(concat(vae_->parameters(), proj_->parameters()), disc_->parameters(),
                                      cfg_.train);
  noise_ = at::detail::createCPUGenerator(hash_combine(cfg_.train.seed, 0x5EEDull));
}

Trainer::Trainer(Trainer&&) noexcept = default;
Trainer& Trainer::operator=(Trainer&&) noexcept = default;
Trainer::~Trainer() = default;

StepRecord Trainer::train_step(const Batch& batch) {
  auto audio = torch::from_blob(const_cast<float*>(batch.samples.data()), {batch.batch_size, batch.window},
                                torch::kFloat)
                   .clone();
  return train_step(audio, batch.source_ids);
}

StepRecord Trainer::train_step(const torch::Tensor& audio, std::span<const std::string> source_ids) {
  if (audio.dim() != 2) throw ContractViolation("train_step: audio must be (batch, samples)");
  const auto dtype = vae_->encoder()->parameters().front().scalar_type();
  auto x = audio.to(dtype);
  const int64_t len = x.size(1);
  const double lr = lr_at(step_, cfg_.train);
  const LossWeights& w = cfg_.loss;

  auto features = extract_ssl_features(*ssl_, audio, source_ids, cfg_.ssl.layer);

  vae_->train();
  auto post = vae_->encode(x);
  auto z = reparameterize(post, noise_);
  auto x_hat = vae_->decode(z).slice(1, 0, len);

  // Discriminator update on real vs detached reconstruction.
  opt_->disc.zero_grad();
  auto d_real = disc_->forward(x);
  auto d_fake = disc_->forward(x_hat.detach());
  auto loss_d = adv_loss_discriminator(d_real, d_fake);
  StepRecord rec;
  rec.step = step_;
  rec.lr = lr;
  rec.adv_disc = checked(loss_d, "adv_disc");
  loss_d.backward();
  clip_or_abort(disc_->parameters(), cfg_.train.grad_clip, "discriminator");
  set_lr(opt_->disc, lr);
  opt_->disc.step();

  // Generator update against the freshly updated discriminator.
  opt_->gen.zero_grad();
  DiscriminatorOutput real_out;
  {
    torch::NoGradGuard guard;
    real_out = disc_->forward(x);
  }
  auto fake_out = disc_->forward(x_hat);

  LossTerms<torch::Tensor> terms;
  terms.recon = mel_(x, x_hat);
  terms.kl = kl_loss(post);
  terms.adv_gen = adv_loss_generator(fake_out);
  terms.feat = feature_matching_loss(real_out, fake_out);
  auto h = align_to_latent(features, z.length(), proj_);
  const LatentSequence& target = cfg_.align.target == AlignTarget::kSample ? z : LatentSequence{post.mean, z.frame_rate};
  terms.align = alignment_loss(h, target, cfg_.align.variant);

  LossTerms<double> values{checked(terms.recon, "recon"), checked(terms.kl, "kl"), checked(terms.adv_gen, "adv_gen"),
                           checked(terms.feat, "feat"), checked(terms.align, "align")};
  rec.gen = total_generator_loss(values, w);

  auto total = weighted_total(terms, w);
  total.backward();
  clip_or_abort(opt_->gen.param_groups().front().params(), cfg_.train.grad_clip, "generator");
  set_lr(opt_->gen, lr);
  opt_->gen.step();
  // The generator loss also reached the discriminator's grads; drop them.
  opt_->disc.zero_grad();

  ++step_;
  return rec;
}

std::unique_ptr<SegmentStream> open_training_stream(const ExperimentConfig& cfg) {
  if (!cfg.data.manifest) throw ConfigError("data.manifest is not set");
  std::vector<AudioSegment> clips;
  for (const auto& p : read_manifest(*cfg.data.manifest)) clips.push_back(load_for_model(p));
  BatchSpec spec;
  spec.segment_seconds = cfg.data.segment_seconds;
  spec.batch_size = cfg.train.batch_size;
  spec.shuffle_seed = cfg.data.shuffle_seed;
  return std::make_unique<SegmentStream>(std::move(clips), spec, cfg.data.workers);
}

std::filesystem::path run_training(Trainer& trainer, SegmentStream& stream, const TrainLoopOptions& opts) {
  const auto& cfg = trainer.config();
  if (opts.resume) trainer.restore(*opts.resume);
  std::filesystem::create_directories(cfg.train.out_dir);
  std::filesystem::path last;
  if (stream.empty()) throw ContractViolation("run_training: no training audio");
  stream.seek(trainer.step());
  while (trainer.step() < cfg.train.total_steps) {
    auto batch = stream.next();
    auto rec = trainer.train_step(*batch);
    if (opts.log) *opts.log << to_json_line(rec) << '\n' << std::flush;
    if (opts.on_step) opts.on_step(rec);
    const bool periodic = cfg.train.checkpoint_every > 0 && trainer.step() % cfg.train.checkpoint_every == 0;
    if (periodic || trainer.step() == cfg.train.total_steps) last = trainer.save_checkpoint(cfg.train.out_dir);
  }
  if (last.empty()) last = trainer.save_checkpoint(cfg.train.out_dir);
  return last;
}

}  // namespace svae
