#include <fstream>
#include <iomanip>
#include <sstream>

#include "svae/errors.h"
#include "svae/hash.h"
#include "svae/trainer.h"
#include "trainer_internal.h"

namespace svae {
namespace {

constexpr const char* kManifestFormat = "svae-checkpoint";
constexpr int kManifestVersion = 1;

std::filesystem::path manifest_path(const std::filesystem::path& p) {
  auto m = p;
  m.replace_extension(".json");
  return m;
}

std::filesystem::path weights_path(const std::filesystem::path& p) {
  auto w = p;
  w.replace_extension(".pt");
  return w;
}

void atomic_write_text(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// Verifies the manifest and the weight file's content hash.
nlohmann::json verified_manifest(const std::filesystem::path& path) {
  auto manifest = read_checkpoint_manifest(path);
  const auto weights = weights_path(path);
  if (!std::filesystem::exists(weights)) throw IoError("checkpoint weights missing: " + weights.string());
  if (sha256_file(weights) != manifest.value("content_sha256", ""))
    throw FormatError("checkpoint content hash mismatch (corrupt file?): " + weights.string());
  return manifest;
}

ExperimentConfig select_config(const nlohmann::json& manifest, const std::optional<ExperimentConfig>& expected) {
  if (!expected) return config_from_json(manifest.at("config"));
  if (expected->architecture_hash() != manifest.value("architecture_hash", ""))
    throw IncompatibleCheckpoint("checkpoint architecture does not match the given config");
  return *expected;
}

}  // namespace

nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path) {
  const auto m = manifest_path(path);
  std::ifstream in(m);
  if (!in) throw IoError("cannot open checkpoint manifest: " + m.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("checkpoint manifest " + m.string() + ": " + e.what());
  }
  if (j.value("format", "") != kManifestFormat || j.value("version", 0) != kManifestVersion)
    throw FormatError("not a checkpoint manifest: " + m.string());
  return j;
}

std::filesystem::path Trainer::save_checkpoint(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ostringstream name;
  name << "ckpt_" << std::setw(8) << std::setfill('0') << step_;
  const auto weights = dir / (name.str() + ".pt");

  torch::serialize::OutputArchive root;
  torch::serialize::OutputArchive vae_ar, proj_ar, disc_ar, gopt_ar, dopt_ar;
  vae_->save(vae_ar);
  proj_->save(proj_ar);
  disc_->save(disc_ar);
  opt_->gen.save(gopt_ar);
  opt_->disc.save(dopt_ar);
  root.write("vae", vae_ar);
  root.write("projection", proj_ar);
  root.write("discriminator", disc_ar);
  root.write("gen_optimizer", gopt_ar);
  root.write("disc_optimizer", dopt_ar);
  root.write("step", torch::tensor(step_, torch::kLong));
  root.write("noise_state", noise_.get_state());

  auto tmp = weights;
  tmp += ".tmp";
  root.save_to(tmp.string());
  std::filesystem::rename(tmp, weights);

  nlohmann::ordered_json manifest;
  manifest["format"] = kManifestFormat;
  manifest["version"] = kManifestVersion;
  manifest["step"] = step_;
  manifest["architecture_hash"] = cfg_.architecture_hash();
  manifest["content_sha256"] = sha256_file(weights);
  manifest["ssl_provider"] = ssl_->id();
  manifest["config"] = to_json(cfg_);
  atomic_write_text(manifest_path(weights), manifest.dump(2) + "\n");
  return weights;
}

Trainer Trainer::load_checkpoint(const std::filesystem::path& path, std::shared_ptr<SSLProvider> ssl,
                                 const std::optional<ExperimentConfig>& expected) {
  const auto manifest = verified_manifest(path);
  Trainer t(select_config(manifest, expected), std::move(ssl));
  try {
    torch::serialize::InputArchive root;
    root.load_from(weights_path(path).string());
    torch::serialize::InputArchive vae_ar, proj_ar, disc_ar, gopt_ar, dopt_ar;
    root.read("vae", vae_ar);
    root.read("projection", proj_ar);
    root.read("discriminator", disc_ar);
    root.read("gen_optimizer", gopt_ar);
    root.read("disc_optimizer", dopt_ar);
    t.vae_->load(vae_ar);
    t.proj_->load(proj_ar);
    t.disc_->load(disc_ar);
    t.opt_->gen.load(gopt_ar);
    t.opt_->disc.load(dopt_ar);
    torch::Tensor step, noise;
    root.read("step", step);
    root.read("noise_state", noise);
    t.step_ = step.item<int64_t>();
    t.noise_.set_state(noise);
  } catch (const c10::Error& e) {
    throw FormatError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  return t;
}

void Trainer::restore(const std::filesystem::path& path) {
  Trainer loaded = load_checkpoint(path, ssl_, cfg_);
  *this = std::move(loaded);
}

InferenceModel load_inference_model(const std::filesystem::path& path, const std::optional<ExperimentConfig>& expected) {
  const auto manifest = verified_manifest(path);
  InferenceModel m{select_config(manifest, expected), nullptr};
  m.vae = Vae(m.config.model);
  try {
    torch::serialize::InputArchive root, vae_ar;
    root.load_from(weights_path(path).string());
    root.read("vae", vae_ar);
    m.vae->load(vae_ar);
  } catch (const c10::Error& e) {
    throw FormatError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  m.vae->eval();
  return m;
}

}  // namespace svae
