#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "support.h"
#include "svae/alignment.h"
#include "svae/errors.h"

using namespace svae;
using svae::testing::speech_like;

namespace {

std::vector<AudioSegment> batch_of(double seconds, int n, std::uint64_t seed = 0) {
  std::vector<AudioSegment> out;
  for (int i = 0; i < n; ++i) out.push_back(speech_like(seconds, seed + static_cast<std::uint64_t>(i), "utt" + std::to_string(i)));
  return out;
}

ProjectedSemanticSequence H(torch::Tensor t) { return {std::move(t)}; }
LatentSequence Z(torch::Tensor t) { return {std::move(t), 40.0}; }

}  // namespace

TEST(Stub, FrameCountAndShape) {
  auto f = stub_features(batch_of(3.0, 2), 1);
  EXPECT_EQ(f.frames.size(0), 2);
  EXPECT_TRUE(f.length() == 149 || f.length() == 150);
  EXPECT_EQ(f.ssl_dim(), 1024);
  EXPECT_EQ(stub_features(batch_of(1.0, 1), 1).length(), 50);
  EXPECT_FALSE(f.frames.requires_grad());
}

TEST(Stub, DeterministicAndSeedSensitive) {
  auto x = batch_of(1.0, 2);
  auto a = stub_features(x, 5), b = stub_features(x, 5), c = stub_features(x, 6);
  EXPECT_TRUE(torch::equal(a.frames, b.frames));
  const double differ = (a.frames != c.frames).to(torch::kDouble).mean().item<double>();
  EXPECT_GE(differ, 0.99);
  const double lo = a.frames.min().item<double>(), hi = a.frames.max().item<double>();
  EXPECT_GE(lo, -1.0);
  EXPECT_LT(hi, 1.0);
}

TEST(Extract, AverageEqualsMeanOfIndividualLayers) {
  StubSSLProvider stub(3, 6, 32, 50.0);
  auto x = batch_of(0.5, 2);
  auto avg = extract_ssl_features(stub, x, LayerSpec::parse("avg"));
  auto acc = torch::zeros_like(avg.frames);
  for (int k = 0; k < 6; ++k) acc += extract_ssl_features(stub, x, LayerSpec::parse(std::to_string(k))).frames;
  EXPECT_LT((avg.frames - acc / 6.0).abs().max().item<double>(), 1e-6);
  auto last = extract_ssl_features(stub, x, LayerSpec::parse("last"));
  EXPECT_TRUE(torch::equal(last.frames, extract_ssl_features(stub, x, LayerSpec::parse("5")).frames));
}

TEST(Extract, LayerOutOfRangeIsConfigError) {
  StubSSLProvider stub(3, 6, 32, 50.0);
  EXPECT_THROW(extract_ssl_features(stub, batch_of(0.5, 1), LayerSpec::parse("6")), ConfigError);
  EXPECT_THROW(LayerSpec::parse("-1"), ConfigError);
  EXPECT_THROW(LayerSpec::parse("first"), ConfigError);
}

TEST(Extract, MissingModelFileIsProviderError) {
  EXPECT_THROW(TorchScriptSSLProvider("/no/such/model.pt", 24, 1024, 50.0), ProviderError);
  SSLProviderConfig cfg;
  cfg.provider = SSLProviderKind::kTorchScript;
  EXPECT_THROW(make_ssl_provider(cfg), ConfigError);
  cfg.model_path = "/no/such/model.pt";
  EXPECT_THROW(make_ssl_provider(cfg), ProviderError);
}

// Reference values printed by the exporting PyTorch process.
TEST(TorchScriptProvider, MatchesExportedModel) {
  TorchScriptSSLProvider p(svae::testing::data_dir() / "tiny_ssl.pt", 4, 16, 50.0);
  auto n = torch::arange(16000, torch::kFloat);
  auto wave = (0.5 * torch::sin(2 * std::numbers::pi * 440 * n / 16000)).unsqueeze(0);
  std::vector<std::string> ids{"sine"};
  auto f = extract_ssl_features(p, wave, ids, LayerSpec::parse("3"));
  ASSERT_EQ(f.frames.sizes(), (std::vector<int64_t>{1, 49, 16}));
  EXPECT_NEAR(f.frames[0][10][0].item<double>(), -0.7753573060035706, 1e-5);
  EXPECT_NEAR(f.frames[0][10][1].item<double>(), 0.18073001503944397, 1e-5);
  EXPECT_NEAR(f.frames[0][10][2].item<double>(), -0.36037111282348633, 1e-5);
  auto avg = extract_ssl_features(p, wave, ids, LayerSpec::parse("avg"));
  EXPECT_EQ(avg.frames.sizes(), f.frames.sizes());
  EXPECT_EQ(p.id().rfind("torchscript:", 0), 0u);
  EXPECT_THROW(TorchScriptSSLProvider(svae::testing::data_dir() / "tiny_ssl.pt", 24, 16, 50.0).layers(wave, ids, {0}),
               ProviderError);
}

TEST(CachedProvider, SecondCallHitsAndReturnsSameFeatures) {
  svae::testing::TempDir dir("ssl_cache");
  auto inner = std::make_shared<StubSSLProvider>(8, 4, 16, 50.0);
  CachedSSLProvider cache(inner, dir.path());
  auto x = batch_of(0.5, 2);
  auto a = extract_ssl_features(cache, x, LayerSpec::parse("avg"));
  EXPECT_EQ(cache.misses(), 1);
  auto b = extract_ssl_features(cache, x, LayerSpec::parse("avg"));
  EXPECT_EQ(cache.hits(), 1);
  EXPECT_TRUE(torch::equal(a.frames, b.frames));
  EXPECT_TRUE(torch::equal(a.frames, extract_ssl_features(*inner, x, LayerSpec::parse("avg")).frames));
  x[0].samples[10] += 0.01f;
  extract_ssl_features(cache, x, LayerSpec::parse("avg"));
  EXPECT_EQ(cache.misses(), 2);
}

TEST(Interp, EqualLengthIsBitIdentical) {
  SSLFeatureSequence f{torch::randn({2, 37, 8}), 50.0, {}};
  auto g = interp_to_latent_grid(f, 37);
  EXPECT_TRUE(torch::equal(f.frames, g.frames));
}

TEST(Interp, ThreeSecondsOf50HzTo40Hz) {
  SSLFeatureSequence f{torch::randn({1, 150, 8}), 50.0, {}};
  auto g = interp_to_latent_grid(f, 120);
  EXPECT_EQ(g.frames.sizes(), (std::vector<int64_t>{1, 120, 8}));
  EXPECT_TRUE(torch::equal(g.frames.select(1, 0), f.frames.select(1, 0)));
  EXPECT_TRUE(torch::allclose(g.frames.select(1, 119), f.frames.select(1, 149)));
}

TEST(Interp, MidpointOfTwoFrames) {
  auto frames = torch::stack({torch::zeros({4}), torch::ones({4})}).unsqueeze(0);
  auto g = interp_to_latent_grid({frames, 50.0, {}}, 3);
  EXPECT_TRUE(torch::equal(g.frames[0][1], torch::full({4}, 0.5)));
}

TEST(Interp, LinearOracleOnRandomShapes) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int64_t len = 1 + rng() % 40, target = 1 + rng() % 40;
    auto src = torch::randn({1, len, 3}, torch::kDouble);
    auto g = interp_to_latent_grid({src, 50.0, {}}, target);
    ASSERT_EQ(g.frames.size(1), target);
    for (int64_t i = 0; i < target; ++i) {
      const double pos = target > 1 ? double(i) * double(len - 1) / double(target - 1) : 0.0;
      const auto lo = static_cast<int64_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, len - 1);
      auto expected = src[0][lo] * (1.0 - (pos - lo)) + src[0][hi] * (pos - lo);
      EXPECT_TRUE(torch::allclose(g.frames[0][i], expected, 1e-12, 1e-12));
    }
  }
}

TEST(Projection, IdentitySliceZeroAndMatmulOracle) {
  SemanticProjection proj(128, 64, 1);
  auto feats = torch::randn({2, 10, 128});
  {
    torch::NoGradGuard g;
    proj->conv()->weight.zero_();
    for (int i = 0; i < 64; ++i) proj->conv()->weight[i][i][0] = 1.0;
    proj->conv()->bias.zero_();
  }
  auto h = project_channels({feats, 50.0, {}}, proj);
  EXPECT_EQ(h.frames.sizes(), (std::vector<int64_t>{2, 64, 10}));
  EXPECT_TRUE(torch::equal(h.frames, feats.slice(2, 0, 64).transpose(1, 2)));

  {
    torch::NoGradGuard g;
    proj->conv()->weight.zero_();
  }
  EXPECT_EQ(project_channels({feats, 50.0, {}}, proj).frames.abs().max().item<double>(), 0.0);

  torch::manual_seed(4);
  SemanticProjection rand_proj(128, 64, 1);
  auto w = rand_proj->conv()->weight.detach().squeeze(-1);  // (64, 128)
  auto b = rand_proj->conv()->bias.detach();
  auto out = project_channels({feats, 50.0, {}}, rand_proj).frames;
  for (int64_t bi = 0; bi < 2; ++bi)
    for (int64_t t = 0; t < 10; ++t) {
      auto expected = torch::mv(w, feats[bi][t]) + b;
      EXPECT_LT((out[bi].select(1, t) - expected).abs().max().item<double>(), 1e-6);
    }
}

TEST(Projection, ChannelMismatchAndWiderKernels) {
  SemanticProjection proj(32, 64, 1);
  EXPECT_THROW(project_channels({torch::randn({1, 5, 31}), 50.0, {}}, proj), ContractViolation);
  SemanticProjection wide(32, 64, 3);
  EXPECT_EQ(project_channels({torch::randn({1, 5, 32}), 50.0, {}}, wide).frames.size(2), 5);
}

TEST(AlignLoss, IdenticalOppositeAndOrthogonal) {
  torch::manual_seed(10);
  auto z = torch::randn({2, 64, 9}, torch::kDouble);
  EXPECT_EQ(alignment_loss(H(z.clone()), Z(z)).item<double>(), -1.0);
  EXPECT_NEAR(alignment_loss(H(-z), Z(z)).item<double>(), 1.0, 1e-15);
  // Gram-Schmidt against each frame of z
  auto r = torch::randn_like(z);
  auto proj = (r * z).sum(1, true) / z.square().sum(1, true);
  auto ortho = r - proj * z;
  EXPECT_LT((ortho * z).sum(1).abs().max().item<double>(), 1e-12);
  EXPECT_NEAR(alignment_loss(H(ortho), Z(z)).item<double>(), 0.0, 1e-12);
}

TEST(AlignLoss, BoundAndPositiveScaleInvariance) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  for (int i = 0; i < 100; ++i) {
    torch::manual_seed(i);
    auto h = torch::randn({1, 64, 5}, torch::kDouble), z = torch::randn({1, 64, 5}, torch::kDouble);
    const double v = alignment_loss(H(h), Z(z)).item<double>();
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
    EXPECT_NEAR(alignment_loss(H(h * scale(rng)), Z(z)).item<double>(), v, 1e-6);
  }
}

TEST(AlignLoss, ZeroFramesStayFinite) {
  auto v = alignment_loss(H(torch::zeros({1, 64, 3})), Z(torch::randn({1, 64, 3})));
  EXPECT_EQ(v.item<double>(), 0.0);
}

TEST(AlignLoss, FiniteDifferenceGradientInDouble) {
  torch::manual_seed(12);
  auto h = torch::randn({1, 64, 5}, torch::kDouble);
  auto z = torch::randn({1, 64, 5}, torch::kDouble).requires_grad_();
  alignment_loss(H(h), Z(z)).backward();
  auto grad = z.grad().clone();
  torch::NoGradGuard g;
  auto flat = z.detach().view(-1);
  const double step = 1e-6;
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double orig = flat[i].item<double>();
    flat[i].fill_(orig + step);
    const double plus = alignment_loss(H(h), Z(z.detach())).item<double>();
    flat[i].fill_(orig - step);
    const double minus = alignment_loss(H(h), Z(z.detach())).item<double>();
    flat[i].fill_(orig);
    const double numeric = (plus - minus) / (2 * step);
    const double analytic = grad.view(-1)[i].item<double>();
    ASSERT_LE(std::abs(numeric - analytic), 1e-4 * std::max(std::abs(analytic), 1e-6)) << i;
  }
}

TEST(AlignLoss, L1AndL2Variants) {
  auto h = torch::tensor({1.0, -2.0, 3.0, 0.0}, torch::kDouble).view({1, 2, 2});
  auto z = torch::tensor({0.0, 0.0, 1.0, 1.0}, torch::kDouble).view({1, 2, 2});
  EXPECT_DOUBLE_EQ(alignment_loss(H(h), Z(z), AlignVariant::kL1).item<double>(), (1 + 2 + 2 + 1) / 4.0);
  EXPECT_DOUBLE_EQ(alignment_loss(H(h), Z(z), AlignVariant::kL2).item<double>(), (1 + 4 + 4 + 1) / 4.0);
  EXPECT_THROW(alignment_loss(H(h), Z(torch::zeros({1, 2, 3}, torch::kDouble))), ContractViolation);
  EXPECT_EQ(parse_align_variant("l2"), AlignVariant::kL2);
  EXPECT_THROW(parse_align_variant("kl"), ConfigError);
}

TEST(AlignLoss, DescentOnZAloneReachesNearPerfectAlignment) {
  torch::manual_seed(13);
  auto h = torch::randn({2, 64, 20});
  auto z = torch::randn({2, 64, 20}).requires_grad_();
  torch::optim::Adam opt({z}, torch::optim::AdamOptions(0.05));
  double v = 0.0;
  for (int step = 0; step < 500; ++step) {
    opt.zero_grad();
    auto loss = alignment_loss(H(h), Z(z));
    v = loss.item<double>();
    if (v < -0.99) break;
    loss.backward();
    opt.step();
  }
  EXPECT_LT(v, -0.99);
}
