// svae: train, reconstruct, export-latents, eval-recon.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "svae/alignment.h"
#include "svae/config.h"
#include "svae/errors.h"
#include "svae/eval.h"
#include "svae/trainer.h"

namespace fs = std::filesystem;
using namespace svae;

namespace {

struct Common {
  std::string config;
  std::string ckpt;
  std::string manifest;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool need_ckpt) {
  cmd->add_option("--config", c.config, "experiment config (JSON); checked against the checkpoint when given");
  auto* ck = cmd->add_option("--ckpt", c.ckpt, "checkpoint (.pt)");
  if (need_ckpt) ck->required();
  cmd->add_option("--manifest", c.manifest, "text file listing audio paths, one per line");
  cmd->add_option("--out", c.out, "output path");
}

std::optional<ExperimentConfig> expected_config(const Common& c) {
  if (c.config.empty()) return std::nullopt;
  return load_config(c.config);
}

int run_train(const Common& c, const std::string& resume, const std::string& data_manifest,
              const std::string& variant, const std::string& layer, std::int64_t steps) {
  auto cfg = load_config(c.config);
  if (!data_manifest.empty()) cfg.data.manifest = fs::absolute(data_manifest);
  if (!variant.empty()) cfg.align.variant = parse_align_variant(variant);
  if (!layer.empty()) cfg.ssl.layer = LayerSpec::parse(layer);
  if (steps > 0) cfg.train.total_steps = steps;
  if (!c.out.empty()) cfg.train.out_dir = c.out;
  cfg.validate();

  auto stream = open_training_stream(cfg);
  Trainer trainer(cfg, make_ssl_provider(cfg.ssl));
  fs::create_directories(cfg.train.out_dir);
  save_config(cfg.train.out_dir / "config.json", cfg);

  std::ofstream log(cfg.train.out_dir / "train.jsonl", resume.empty() ? std::ios::trunc : std::ios::app);
  TrainLoopOptions opts;
  if (!resume.empty()) opts.resume = fs::path(resume);
  opts.log = &log;
  opts.on_step = [](const StepRecord& r) { std::cout << to_json_line(r) << '\n'; };
  const auto last = run_training(trainer, *stream, opts);
  std::cerr << "checkpoint: " << last.string() << '\n';
  return 0;
}

int run_reconstruct(const Common& c, const std::string& in) {
  if (c.out.empty()) throw ConfigError("--out is required");
  const auto expected = expected_config(c);
  if (!in.empty()) {
    reconstruct_file(in, c.ckpt, fs::path(c.out), expected);
    return 0;
  }
  if (c.manifest.empty()) throw ConfigError("reconstruct needs --in or --manifest");
  const auto r = reconstruct_manifest(c.manifest, c.ckpt, c.out, expected);
  for (const auto& p : r.written) std::cout << p.string() << '\n';
  return r.failures.empty() ? 0 : 2;
}

int run_export(const Common& c, const std::string& mode, std::uint64_t seed) {
  if (c.manifest.empty() || c.out.empty()) throw ConfigError("export-latents needs --manifest and --out");
  const auto r = export_latents(c.manifest, c.ckpt, parse_export_mode(mode), c.out, seed, expected_config(c));
  for (const auto& p : r.written) std::cout << p.string() << '\n';
  return r.failures.empty() ? 0 : 2;
}

int run_eval(const Common& c, const std::string& pesq_cmd, const std::string& pesq_id, const std::string& utmos_cmd,
             const std::string& utmos_id) {
  if (c.manifest.empty()) throw ConfigError("eval-recon needs --manifest");
  MetricProviders providers;
  if (!pesq_cmd.empty()) providers.pesq = std::make_shared<ExternalCommandProvider>("pesq", pesq_cmd, pesq_id);
  if (!utmos_cmd.empty()) providers.utmos = std::make_shared<ExternalCommandProvider>("utmos", utmos_cmd, utmos_id);
  const auto report = eval_reconstruction(c.manifest, c.ckpt, providers, expected_config(c));
  const auto text = to_json(report).dump(2);
  if (c.out.empty()) {
    std::cout << text << '\n';
  } else {
    std::ofstream(c.out) << text << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech VAE with semantic alignment: training and evaluation"};
  app.require_subcommand(1);

  Common train_c, recon_c, export_c, eval_c;

  auto* train = app.add_subcommand("train", "train a VAE from a config");
  train->add_option("--config", train_c.config, "experiment config (JSON)")->required();
  train->add_option("--out", train_c.out, "run directory; overrides train.out_dir");
  std::string resume, data_manifest, variant, layer;
  std::int64_t steps = 0;
  train->add_option("--resume", resume, "checkpoint to resume from");
  train->add_option("--data-manifest", data_manifest, "overrides data.manifest");
  train->add_option("--align-variant", variant, "cos | l1 | l2")->check(CLI::IsMember({"cos", "l1", "l2"}));
  train->add_option("--ssl-layer", layer, "layer index, 'last' or 'avg'");
  train->add_option("--steps", steps, "overrides train.total_steps");

  auto* recon = app.add_subcommand("reconstruct", "decode(encode-mean(x)) to 16 kHz WAV");
  add_common(recon, recon_c, true);
  std::string in;
  recon->add_option("--in", in, "single input file; --out is then the output WAV");

  auto* exp = app.add_subcommand("export-latents", "write one .svae latent file per utterance");
  add_common(exp, export_c, true);
  std::string mode = "mean";
  std::uint64_t seed = 0;
  exp->add_option("--mode", mode, "mean | sample")->check(CLI::IsMember({"mean", "sample"}));
  exp->add_option("--seed", seed, "seed for sample mode");

  auto* ev = app.add_subcommand("eval-recon", "STOI (and optional PESQ/UTMOS) of reconstructions");
  add_common(ev, eval_c, true);
  std::string pesq_cmd, pesq_id = "external", utmos_cmd, utmos_id = "external";
  ev->add_option("--pesq-cmd", pesq_cmd, "command printing a PESQ score; {ref} and {deg} are substituted");
  ev->add_option("--pesq-model-id", pesq_id, "identifier recorded for the PESQ provider");
  ev->add_option("--utmos-cmd", utmos_cmd, "command printing a UTMOS score; {deg} is substituted");
  ev->add_option("--utmos-model-id", utmos_id, "identifier recorded for the UTMOS provider");

  auto* init = app.add_subcommand("init-config", "write a complete config file with every field");
  std::string preset = "full", init_out;
  init->add_option("--preset", preset, "full | desk")->check(CLI::IsMember({"full", "desk"}));
  init->add_option("--out", init_out, "output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*init) {
      save_config(init_out, preset == "desk" ? desk_config() : ExperimentConfig{});
      return 0;
    }
    if (*train) return run_train(train_c, resume, data_manifest, variant, layer, steps);
    if (*recon) return run_reconstruct(recon_c, in);
    if (*exp) return run_export(export_c, mode, seed);
    if (*ev) return run_eval(eval_c, pesq_cmd, pesq_id, utmos_cmd, utmos_id);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
