#include "svae/config.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "svae/audio.h"
#include "svae/errors.h"
#include "svae/hash.h"

namespace svae {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Reads fields from one JSON object and rejects any key it was never asked for.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + name_ + "." + key + "': " + e.what());
    }
  }

  void get_path(const char* key, std::optional<std::filesystem::path>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    if (!it->is_string()) throw ConfigError("config key '" + name_ + "." + key + "' must be a string");
    out = std::filesystem::path(it->get<std::string>());
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) throw ConfigError("unknown config key '" + name_ + "." + k + "'");
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

template <typename T>
json opt_path(const std::optional<T>& p) {
  return p ? json(p->string()) : json(nullptr);
}

const char* provider_name(SSLProviderKind k) {
  return k == SSLProviderKind::kStub ? "stub" : "torchscript";
}

const char* target_name(AlignTarget t) { return t == AlignTarget::kSample ? "sample" : "mean"; }

}  // namespace

int ModelConfig::hop_length() const {
  return std::accumulate(encoder_strides.begin(), encoder_strides.end(), 1, std::multiplies<>());
}

void ModelConfig::validate() const {
  if (encoder_strides.empty()) throw ConfigError("model.encoder_strides must not be empty");
  for (int s : encoder_strides)
    if (s < 1) throw ConfigError("model.encoder_strides entries must be >= 1");
  std::vector<int> rev(encoder_strides.rbegin(), encoder_strides.rend());
  if (decoder_strides != rev) throw ConfigError("model.decoder_strides must be encoder_strides reversed");
  if (latent_dim < 1) throw ConfigError("model.latent_dim must be >= 1");
  if (encoder_base_channels < 1 || decoder_base_channels < 1)
    throw ConfigError("model channel widths must be >= 1");
  if ((decoder_base_channels >> decoder_strides.size()) < 1)
    throw ConfigError("model.decoder_base_channels too small to halve at every stage");
  if (residual_dilations.empty() || amp_dilations.empty() || amp_kernel_sizes.empty())
    throw ConfigError("model dilation/kernel lists must not be empty");
  for (int k : amp_kernel_sizes)
    if (k < 1 || k % 2 == 0) throw ConfigError("model.amp_kernel_sizes must be odd");
}

void DiscriminatorConfig::validate() const {
  std::set<int> seen;
  for (int p : mpd_periods) {
    if (p < 1) throw ConfigError("discriminator.mpd_periods must be >= 1");
    if (!seen.insert(p).second) throw ConfigError("discriminator.mpd_periods must be distinct");
  }
  for (int w : stft_window_sizes)
    if (w < 8 || w % 4 != 0) throw ConfigError("discriminator.stft_window_sizes must be multiples of 4 (>= 8)");
  if (band_splits.empty()) throw ConfigError("discriminator.band_splits must not be empty");
  double edge = 0.0;
  for (auto [lo, hi] : band_splits) {
    if (std::abs(lo - edge) > 1e-12 || !(hi > lo))
      throw ConfigError("discriminator.band_splits must partition [0, 1] in order");
    edge = hi;
  }
  if (std::abs(edge - 1.0) > 1e-12) throw ConfigError("discriminator.band_splits must end at 1");
  if (mpd_channels.size() < 2) throw ConfigError("discriminator.mpd_channels needs at least 2 entries");
  for (int c : mpd_channels)
    if (c < 1) throw ConfigError("discriminator.mpd_channels must be >= 1");
  if (stft_channels < 1) throw ConfigError("discriminator.stft_channels must be >= 1");
}

void LossWeights::validate() const {
  for (double w : {lambda_recon, lambda_kl, lambda_adv, lambda_feat, lambda_align})
    if (!(w >= 0.0)) throw ConfigError("loss weights must be >= 0");
}

void MelScaleConfig::validate() const {
  if (window_lengths.empty() || window_lengths.size() != mel_bins.size())
    throw ConfigError("mel.window_lengths and mel.mel_bins must be non-empty and equal length");
  for (std::size_t i = 0; i < window_lengths.size(); ++i) {
    if (window_lengths[i] < 4 || window_lengths[i] % 4 != 0)
      throw ConfigError("mel.window_lengths must be multiples of 4");
    if (mel_bins[i] < 1) throw ConfigError("mel.mel_bins must be >= 1");
    if (i > 0 && (window_lengths[i] <= window_lengths[i - 1] || mel_bins[i] <= mel_bins[i - 1]))
      throw ConfigError("mel windows and bins must increase together");
  }
}

LayerSpec LayerSpec::parse(const std::string& text) {
  if (text == "last") return {Kind::kLast, -1};
  if (text == "avg") return {Kind::kAverage, -1};
  std::size_t used = 0;
  int k = 0;
  try {
    k = std::stoi(text, &used);
  } catch (const std::exception&) {
    throw ConfigError("ssl layer must be an index, 'last' or 'avg': '" + text + "'");
  }
  if (used != text.size() || k < 0) throw ConfigError("ssl layer index must be a non-negative integer: '" + text + "'");
  return {Kind::kIndex, k};
}

std::string LayerSpec::to_string() const {
  switch (kind) {
    case Kind::kLast: return "last";
    case Kind::kAverage: return "avg";
    case Kind::kIndex: break;
  }
  return std::to_string(index);
}

void SSLProviderConfig::validate() const {
  if (provider == SSLProviderKind::kTorchScript && !model_path)
    throw ConfigError("ssl.model_path is required for the torchscript provider");
  if (ssl_dim < 1 || num_layers < 1 || !(frame_rate > 0.0)) throw ConfigError("ssl dims/rate must be positive");
  if (layer.kind == LayerSpec::Kind::kIndex && layer.index >= num_layers)
    throw ConfigError("ssl layer index " + std::to_string(layer.index) + " out of range for " +
                      std::to_string(num_layers) + " layers");
}

AlignVariant parse_align_variant(const std::string& text) {
  if (text == "cos") return AlignVariant::kCosine;
  if (text == "l1") return AlignVariant::kL1;
  if (text == "l2") return AlignVariant::kL2;
  throw ConfigError("align variant must be cos, l1 or l2: '" + text + "'");
}

std::string to_string(AlignVariant v) {
  switch (v) {
    case AlignVariant::kL1: return "l1";
    case AlignVariant::kL2: return "l2";
    case AlignVariant::kCosine: break;
  }
  return "cos";
}

void AlignConfig::validate() const {
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("align.kernel_size must be odd and >= 1");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (!(lr_decay_gamma > 0.0 && lr_decay_gamma <= 1.0)) throw ConfigError("train.lr_decay_gamma must be in (0, 1]");
  if (total_steps < 1) throw ConfigError("train.total_steps must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  if (!(grad_clip > 0.0)) throw ConfigError("train.grad_clip must be > 0");
}

void ExperimentConfig::validate() const {
  model.validate();
  discriminator.validate();
  loss.validate();
  mel.validate();
  ssl.validate();
  align.validate();
  train.validate();
  BatchSpec{data.segment_seconds, train.batch_size, data.shuffle_seed}.validate();
}

std::string ExperimentConfig::architecture_hash() const {
  ordered_json j = to_json(*this);
  ordered_json arch;
  arch["model"] = j["model"];
  arch["discriminator"] = j["discriminator"];
  arch["ssl_dim"] = ssl.ssl_dim;
  arch["align_kernel_size"] = align.kernel_size;
  return sha256_hex(arch.dump());
}

ordered_json to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["model"] = {
      {"encoder_strides", c.model.encoder_strides},
      {"latent_dim", c.model.latent_dim},
      {"decoder_strides", c.model.decoder_strides},
      {"encoder_base_channels", c.model.encoder_base_channels},
      {"decoder_base_channels", c.model.decoder_base_channels},
      {"residual_dilations", c.model.residual_dilations},
      {"amp_kernel_sizes", c.model.amp_kernel_sizes},
      {"amp_dilations", c.model.amp_dilations},
  };
  ordered_json bands = ordered_json::array();
  for (auto [lo, hi] : c.discriminator.band_splits) bands.push_back({lo, hi});
  j["discriminator"] = {
      {"mpd_periods", c.discriminator.mpd_periods},
      {"stft_window_sizes", c.discriminator.stft_window_sizes},
      {"band_splits", bands},
      {"mpd_channels", c.discriminator.mpd_channels},
      {"stft_channels", c.discriminator.stft_channels},
  };
  j["loss"] = {
      {"lambda_recon", c.loss.lambda_recon}, {"lambda_kl", c.loss.lambda_kl},
      {"lambda_adv", c.loss.lambda_adv},     {"lambda_feat", c.loss.lambda_feat},
      {"lambda_align", c.loss.lambda_align},
  };
  j["mel"] = {{"window_lengths", c.mel.window_lengths}, {"mel_bins", c.mel.mel_bins}};
  j["ssl"] = {
      {"provider", provider_name(c.ssl.provider)},
      {"model_path", opt_path(c.ssl.model_path)},
      {"layer", c.ssl.layer.to_string()},
      {"ssl_dim", c.ssl.ssl_dim},
      {"num_layers", c.ssl.num_layers},
      {"frame_rate", c.ssl.frame_rate},
      {"stub_seed", c.ssl.stub_seed},
      {"cache_dir", opt_path(c.ssl.cache_dir)},
  };
  j["align"] = {
      {"variant", to_string(c.align.variant)},
      {"target", target_name(c.align.target)},
      {"kernel_size", c.align.kernel_size},
  };
  j["train"] = {
      {"lr", c.train.lr},
      {"lr_decay_gamma", c.train.lr_decay_gamma},
      {"adam_beta1", c.train.adam_beta1},
      {"adam_beta2", c.train.adam_beta2},
      {"grad_clip", c.train.grad_clip},
      {"batch_size", c.train.batch_size},
      {"total_steps", c.train.total_steps},
      {"checkpoint_every", c.train.checkpoint_every},
      {"seed", c.train.seed},
      {"out_dir", c.train.out_dir.string()},
  };
  j["data"] = {
      {"segment_seconds", c.data.segment_seconds},
      {"shuffle_seed", c.data.shuffle_seed},
      {"workers", c.data.workers},
      {"manifest", opt_path(c.data.manifest)},
  };
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Section root(j, "<root>");

  if (const json* m = root.child("model")) {
    Section s(*m, "model");
    s.get("encoder_strides", c.model.encoder_strides);
    s.get("latent_dim", c.model.latent_dim);
    // Derived from the encoder unless given explicitly.
    c.model.decoder_strides.assign(c.model.encoder_strides.rbegin(), c.model.encoder_strides.rend());
    s.get("decoder_strides", c.model.decoder_strides);
    s.get("encoder_base_channels", c.model.encoder_base_channels);
    s.get("decoder_base_channels", c.model.decoder_base_channels);
    s.get("residual_dilations", c.model.residual_dilations);
    s.get("amp_kernel_sizes", c.model.amp_kernel_sizes);
    s.get("amp_dilations", c.model.amp_dilations);
    s.finish();
  }
  if (const json* d = root.child("discriminator")) {
    Section s(*d, "discriminator");
    s.get("mpd_periods", c.discriminator.mpd_periods);
    s.get("stft_window_sizes", c.discriminator.stft_window_sizes);
    s.get("band_splits", c.discriminator.band_splits);
    s.get("mpd_channels", c.discriminator.mpd_channels);
    s.get("stft_channels", c.discriminator.stft_channels);
    s.finish();
  }
  if (const json* l = root.child("loss")) {
    Section s(*l, "loss");
    s.get("lambda_recon", c.loss.lambda_recon);
    s.get("lambda_kl", c.loss.lambda_kl);
    s.get("lambda_adv", c.loss.lambda_adv);
    s.get("lambda_feat", c.loss.lambda_feat);
    s.get("lambda_align", c.loss.lambda_align);
    s.finish();
  }
  if (const json* m = root.child("mel")) {
    Section s(*m, "mel");
    s.get("window_lengths", c.mel.window_lengths);
    s.get("mel_bins", c.mel.mel_bins);
    s.finish();
  }
  if (const json* p = root.child("ssl")) {
    Section s(*p, "ssl");
    std::string provider = provider_name(c.ssl.provider);
    s.get("provider", provider);
    if (provider == "stub") {
      c.ssl.provider = SSLProviderKind::kStub;
    } else if (provider == "torchscript") {
      c.ssl.provider = SSLProviderKind::kTorchScript;
    } else {
      throw ConfigError("ssl.provider must be 'stub' or 'torchscript'");
    }
    s.get_path("model_path", c.ssl.model_path);
    if (const json* layer = s.child("layer")) {
      c.ssl.layer = LayerSpec::parse(layer->is_number_integer() ? std::to_string(layer->get<int>())
                                                                : layer->get<std::string>());
    }
    s.get("ssl_dim", c.ssl.ssl_dim);
    s.get("num_layers", c.ssl.num_layers);
    s.get("frame_rate", c.ssl.frame_rate);
    s.get("stub_seed", c.ssl.stub_seed);
    s.get_path("cache_dir", c.ssl.cache_dir);
    s.finish();
  }
  if (const json* a = root.child("align")) {
    Section s(*a, "align");
    std::string variant = to_string(c.align.variant), target = target_name(c.align.target);
    s.get("variant", variant);
    s.get("target", target);
    s.get("kernel_size", c.align.kernel_size);
    s.finish();
    c.align.variant = parse_align_variant(variant);
    if (target == "sample") {
      c.align.target = AlignTarget::kSample;
    } else if (target == "mean") {
      c.align.target = AlignTarget::kMean;
    } else {
      throw ConfigError("align.target must be 'sample' or 'mean'");
    }
  }
  if (const json* t = root.child("train")) {
    Section s(*t, "train");
    s.get("lr", c.train.lr);
    s.get("lr_decay_gamma", c.train.lr_decay_gamma);
    s.get("adam_beta1", c.train.adam_beta1);
    s.get("adam_beta2", c.train.adam_beta2);
    s.get("grad_clip", c.train.grad_clip);
    s.get("batch_size", c.train.batch_size);
    s.get("total_steps", c.train.total_steps);
    s.get("checkpoint_every", c.train.checkpoint_every);
    s.get("seed", c.train.seed);
    std::string out = c.train.out_dir.string();
    s.get("out_dir", out);
    c.train.out_dir = out;
    s.finish();
  }
  if (const json* d = root.child("data")) {
    Section s(*d, "data");
    s.get("segment_seconds", c.data.segment_seconds);
    s.get("shuffle_seed", c.data.shuffle_seed);
    s.get("workers", c.data.workers);
    s.get_path("manifest", c.data.manifest);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  auto cfg = config_from_json(j);
  // Relative paths inside the config resolve against its directory.
  const auto base = path.parent_path();
  auto rebase = [&](std::optional<std::filesystem::path>& p) {
    if (p && p->is_relative()) p = base / *p;
  };
  rebase(cfg.data.manifest);
  rebase(cfg.ssl.model_path);
  rebase(cfg.ssl.cache_dir);
  return cfg;
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write config: " + path.string());
  out << to_json(cfg).dump(2) << '\n';
}

ExperimentConfig desk_config() {
  ExperimentConfig c;
  c.model.encoder_base_channels = 8;
  c.model.decoder_base_channels = 128;
  c.model.residual_dilations = {1, 3, 9};
  c.model.amp_kernel_sizes = {3};
  c.model.amp_dilations = {1, 3, 5};
  c.discriminator.mpd_channels = {4, 8, 16, 32, 32};
  c.discriminator.stft_channels = 8;
  c.ssl.ssl_dim = 1024;
  c.train.batch_size = 2;
  c.data.segment_seconds = 1.0;
  return c;
}

}  // namespace svae
