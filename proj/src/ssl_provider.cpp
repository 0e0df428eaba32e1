#include <torch/script.h>

#include <cstring>

#include "svae/alignment.h"
#include "svae/errors.h"
#include "svae/hash.h"
#include "svae/latent_file.h"

namespace svae {

StubSSLProvider::StubSSLProvider(std::uint64_t seed, int num_layers, int ssl_dim, double frame_rate)
    : seed_(seed), num_layers_(num_layers), ssl_dim_(ssl_dim), frame_rate_(frame_rate) {}

std::string StubSSLProvider::id() const {
  return "stub:seed=" + std::to_string(seed_) + ",layers=" + std::to_string(num_layers_) +
         ",dim=" + std::to_string(ssl_dim_) + ",rate=" + std::to_string(frame_rate_);
}

std::vector<torch::Tensor> StubSSLProvider::layers(const torch::Tensor& waveform,
                                                   std::span<const std::string> source_ids,
                                                   const std::vector<int>& which) {
  const int64_t batch = waveform.size(0);
  const auto frames =
      static_cast<int64_t>(std::floor(static_cast<double>(waveform.size(1)) * frame_rate_ / kModelSampleRate));
  std::vector<torch::Tensor> out;
  for (int layer : which) {
    auto t = torch::empty({batch, frames, ssl_dim_});
    float* p = t.data_ptr<float>();
    for (int64_t b = 0; b < batch; ++b) {
      const std::uint64_t key = hash_combine(hash_combine(seed_, fnv1a64(source_ids[static_cast<std::size_t>(b)])),
                                             static_cast<std::uint64_t>(layer));
      for (int64_t f = 0; f < frames; ++f) {
        const std::uint64_t fkey = hash_combine(key, static_cast<std::uint64_t>(f));
        for (int64_t c = 0; c < ssl_dim_; ++c)
          *p++ = static_cast<float>(hash_to_unit(hash_combine(fkey, static_cast<std::uint64_t>(c))));
      }
    }
    out.push_back(t);
  }
  return out;
}

struct TorchScriptSSLProvider::Module {
  torch::jit::script::Module module;
};

TorchScriptSSLProvider::TorchScriptSSLProvider(const std::filesystem::path& model_path, int num_layers, int ssl_dim,
                                               double frame_rate)
    : module_(std::make_unique<Module>()), num_layers_(num_layers), ssl_dim_(ssl_dim), frame_rate_(frame_rate) {
  if (!std::filesystem::exists(model_path))
    throw ProviderError("ssl model file not found: " + model_path.string());
  try {
    module_->module = torch::jit::load(model_path.string());
  } catch (const c10::Error& e) {
    throw ProviderError("cannot load ssl model " + model_path.string() + ": " + e.what_without_backtrace());
  }
  module_->module.eval();
  for (auto p : module_->module.parameters()) p.set_requires_grad(false);
  id_ = "torchscript:" + sha256_file(model_path);
}

TorchScriptSSLProvider::~TorchScriptSSLProvider() = default;

std::vector<torch::Tensor> TorchScriptSSLProvider::layers(const torch::Tensor& waveform,
                                                          std::span<const std::string> /*source_ids*/,
                                                          const std::vector<int>& which) {
  torch::NoGradGuard guard;
  torch::IValue result;
  try {
    result = module_->module.forward({waveform.to(torch::kFloat)});
  } catch (const c10::Error& e) {
    throw ProviderError(std::string("ssl model forward failed: ") + e.what_without_backtrace());
  }
  std::vector<torch::Tensor> all;
  if (result.isTensor()) {
    auto t = result.toTensor();
    if (t.dim() != 4) throw ProviderError("ssl model must return (layers, batch, frames, dim)");
    for (int64_t i = 0; i < t.size(0); ++i) all.push_back(t[i]);
  } else if (result.isTuple()) {
    for (const auto& v : result.toTupleRef().elements()) all.push_back(v.toTensor());
  } else if (result.isList()) {
    for (const auto& v : result.toListRef()) all.push_back(v.toTensor());
  } else {
    throw ProviderError("ssl model returned an unsupported value");
  }
  if (static_cast<int>(all.size()) != num_layers_)
    throw ProviderError("ssl model returned " + std::to_string(all.size()) + " layers, config expects " +
                        std::to_string(num_layers_));
  std::vector<torch::Tensor> out;
  for (int k : which) {
    auto t = all[static_cast<std::size_t>(k)].detach().to(torch::kFloat).contiguous();
    if (t.dim() != 3 || t.size(2) != ssl_dim_)
      throw ProviderError("ssl layer " + std::to_string(k) + " does not have " + std::to_string(ssl_dim_) +
                          " channels");
    out.push_back(t);
  }
  return out;
}

CachedSSLProvider::CachedSSLProvider(std::shared_ptr<SSLProvider> inner, std::filesystem::path dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::vector<torch::Tensor> CachedSSLProvider::layers(const torch::Tensor& waveform,
                                                     std::span<const std::string> source_ids,
                                                     const std::vector<int>& which) {
  const int64_t batch = waveform.size(0);
  auto wave = waveform.to(torch::kFloat).contiguous();

  std::vector<std::string> keys(static_cast<std::size_t>(batch));
  for (int64_t b = 0; b < batch; ++b) {
    auto row = wave[b];
    std::string blob = inner_->id();
    if (inner_->keyed_by_source()) blob += "|" + source_ids[static_cast<std::size_t>(b)];
    blob += "|";
    const std::size_t offset = blob.size();
    blob.resize(offset + static_cast<std::size_t>(row.numel()) * sizeof(float));
    std::memcpy(blob.data() + offset, row.data_ptr<float>(), static_cast<std::size_t>(row.numel()) * sizeof(float));
    keys[static_cast<std::size_t>(b)] = sha256_hex(blob);
  }
  auto path_for = [&](int64_t b, int layer) {
    return dir_ / (keys[static_cast<std::size_t>(b)] + "_L" + std::to_string(layer) + ".svae");
  };

  bool all_cached = true;
  for (int64_t b = 0; b < batch && all_cached; ++b)
    for (int k : which)
      if (!std::filesystem::exists(path_for(b, k))) {
        all_cached = false;
        break;
      }

  std::vector<torch::Tensor> out;
  if (all_cached) {
    ++hits_;
    for (int k : which) {
      std::vector<torch::Tensor> rows;
      for (int64_t b = 0; b < batch; ++b) {
        auto f = read_latent_file(path_for(b, k));
        rows.push_back(torch::from_blob(f.data.data(), {f.frames, f.channels}, torch::kFloat).clone());
      }
      out.push_back(torch::stack(rows));
    }
    return out;
  }

  ++misses_;
  out = inner_->layers(waveform, source_ids, which);
  for (std::size_t i = 0; i < which.size(); ++i) {
    auto t = out[i].to(torch::kFloat).contiguous();
    for (int64_t b = 0; b < batch; ++b) {
      LatentFile f;
      f.frame_rate = static_cast<float>(inner_->frame_rate());
      f.frames = static_cast<std::uint32_t>(t.size(1));
      f.channels = static_cast<std::uint32_t>(t.size(2));
      auto row = t[b].contiguous();
      f.data.assign(row.data_ptr<float>(), row.data_ptr<float>() + row.numel());
      write_latent_file(path_for(b, which[i]), f);
    }
  }
  return out;
}

std::shared_ptr<SSLProvider> make_ssl_provider(const SSLProviderConfig& cfg) {
  cfg.validate();
  std::shared_ptr<SSLProvider> p;
  if (cfg.provider == SSLProviderKind::kStub) {
    p = std::make_shared<StubSSLProvider>(cfg.stub_seed, cfg.num_layers, cfg.ssl_dim, cfg.frame_rate);
  } else {
    p = std::make_shared<TorchScriptSSLProvider>(*cfg.model_path, cfg.num_layers, cfg.ssl_dim, cfg.frame_rate);
  }
  if (cfg.cache_dir) p = std::make_shared<CachedSSLProvider>(p, *cfg.cache_dir);
  return p;
}

}  // namespace svae
