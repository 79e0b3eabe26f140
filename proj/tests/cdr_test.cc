#include "ctc/cdr.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "support/test_support.h"

namespace ctc {
namespace {

TEST(CdrLoss, Examples) {
  const Shape s{2, 3, 4};
  RealTensor a(s, 0.5), b(s, 1.5);
  EXPECT_EQ(cdr_loss(a, a), 0.0);
  EXPECT_NEAR(cdr_loss(a, b), std::sqrt(24.0), 1e-12);
}

TEST(CdrLoss, MatchesElementwiseOracle) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 5.0);
  const Shape s{3, 7, 5};
  RealTensor a(s), b(s);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = n(rng);
    b[i] = n(rng);
  }
  double sum = 0.0;
  for (int c = 0; c < s.channels; ++c)
    for (int h = 0; h < s.height; ++h)
      for (int w = 0; w < s.width; ++w) sum += std::pow(a.at(c, h, w) - b.at(c, h, w), 2);
  EXPECT_NEAR(cdr_loss(a, b), std::sqrt(sum), 1e-10);
}

TEST(CdrLoss, ShapeMismatch) {
  EXPECT_THROW(cdr_loss(RealTensor({1, 2, 2}), RealTensor({1, 2, 3})), Error);
}

TEST(CdrRouter, Bands) {
  EXPECT_EQ(CdrRouter::slot_for(7.0, 7), -1);
  EXPECT_EQ(CdrRouter::slot_for(6.5, 7), -1);
  EXPECT_EQ(CdrRouter::slot_for(6.0, 7), 0);
  EXPECT_EQ(CdrRouter::slot_for(5.01, 7), 0);
  EXPECT_EQ(CdrRouter::slot_for(5.0, 7), 1);
  EXPECT_EQ(CdrRouter::slot_for(4.5, 7), 1);
  EXPECT_EQ(CdrRouter::slot_for(4.0, 7), 2);
  EXPECT_EQ(CdrRouter::slot_for(0.0, 7), 2);
}

class CdrContextTest : public ::testing::Test {
 protected:
  void SetUp() override {
    src_ = testing::ar1_source(9, {2, 8, 8});
    plan_ = make_plan(src_.latent, src_.field, 5, CodecConfig{}, nullptr);
  }
  RealTensor recon_at(double level) const {
    prefix_ = plan_.latent.prefix_at(plan_.latent.position_at_level(level));
    return conditional_means(plan_.latent.shape, prefix_, *plan_.priors);
  }
  Source src_;
  Plan plan_;
  mutable std::vector<PrefixInterval> prefix_;
};

TEST_F(CdrContextTest, ZeroModelIsIdentity) {
  const RealTensor recon = recon_at(2.4);
  const CdrModel zero = CdrModel::zeros(2, 4);
  EXPECT_EQ(refine_latent({*plan_.field, recon, prefix_}, &zero), recon);
}

TEST_F(CdrContextTest, TopBandIsBitwiseIdentity) {
  CdrRouter r;
  std::mt19937_64 rng(3);
  for (auto& s : r.slots) {
    s = CdrModel::zeros(1, 3);
    testing::perturb(s->net(), rng, 1.0);
  }
  for (double level : {4.2, 4.75, 5.0}) {
    const RealTensor recon = recon_at(level);
    EXPECT_EQ(refine_latent({*plan_.field, recon, prefix_}, level, 5, r), recon);
  }
  const RealTensor recon = recon_at(2.5);
  EXPECT_NE(refine_latent({*plan_.field, recon, prefix_}, 2.5, 5, r), recon);
}

TEST_F(CdrContextTest, StepIsPrefixWidth) {
  const RealTensor recon = recon_at(1.0);
  const LatentContext ctx{*plan_.field, recon, prefix_};
  for (std::size_t i = 0; i < recon.size(); ++i)
    EXPECT_EQ(CdrModel::step(ctx, i), static_cast<double>(prefix_[i].width()));
}

TEST(CdrGradient, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto r = testing::check_cdr_gradient(seed);
    EXPECT_GT(r.parameters, 0u);
    EXPECT_EQ(r.failures, 0u) << "seed " << seed << " worst " << r.worst;
  }
}

TEST(CdrBand, Endpoints) {
  std::mt19937_64 rng(1);
  EXPECT_EQ(cdr_band(0, 7, rng), (std::pair{5, 6}));
  EXPECT_EQ(cdr_band(1, 7, rng), (std::pair{4, 5}));
  std::vector<int> seen(4, 0);
  for (int i = 0; i < 4000; ++i) {
    const auto [lo, hi] = cdr_band(2, 7, rng);
    ASSERT_EQ(hi, lo + 1);
    ASSERT_GE(lo, 0);
    ASSERT_LE(lo, 3);
    ++seen[lo];
  }
  for (int c : seen) EXPECT_GT(c, 800);
  EXPECT_THROW(cdr_band(0, 2, rng), Error);
}

TEST(CdrBand, AlphaIsUniform) {
  std::mt19937_64 rng(77);
  constexpr int kBins = 10, kDraws = 10000;
  std::vector<int> hist(kBins, 0);
  for (int i = 0; i < kDraws; ++i) {
    const double a = sample_alpha(rng);
    ASSERT_GT(a, 0.0);
    ASSERT_LT(a, 1.0);
    ++hist[static_cast<int>(a * kBins)];
  }
  double chi2 = 0.0;
  const double expect = static_cast<double>(kDraws) / kBins;
  for (int h : hist) chi2 += (h - expect) * (h - expect) / expect;
  // 99th percentile of chi-square with 9 degrees of freedom.
  EXPECT_LT(chi2, 21.666);
}

CdrAsset asset_from(const Source& src, int depth, const RealTensor* target_override = nullptr) {
  CodecConfig c;
  c.param_mode = src.field.mode();
  Plan p = make_plan(src.latent, src.field, depth, c, nullptr);
  RealTensor target(src.latent.shape());
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = src.latent[i] - p.field->mean(i);
  if (target_override) target = *target_override;
  return {p.field, target, std::move(p.latent), p.priors};
}

TEST(TrainCdr, ZeroErrorIsNoOp) {
  std::vector<CdrAsset> assets;
  const Shape s{2, 8, 8};
  for (int i = 0; i < 4; ++i)
    assets.push_back(asset_from(
        latent_source(RealTensor(s, 0.0), GaussianField::per_channel(s, {0, 0}, {0.01, 0.01})), 3));
  CdrTrainOptions o;
  o.steps = 20;
  o.eval_every = 5;
  const auto r = train_cdr(assets, 0, o);
  EXPECT_EQ(r.held_out_unrefined, 0.0);
  EXPECT_EQ(r.held_out_loss, 0.0);
}

TEST(TrainCdr, LearnsLinearContextResidual) {
  // Decoder output is 0 everywhere; the target is a fixed multiple of the
  // mean difference to the right neighbor, a linear function of a feature.
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  const Shape s{2, 8, 8};
  std::vector<CdrAsset> assets;
  for (int a = 0; a < 8; ++a) {
    std::vector<double> means(s.size()), scales(s.size(), 0.01);
    for (double& m : means) m = n(rng);
    const GaussianField field = GaussianField::per_element(s, means, scales);
    RealTensor y(s), target(s, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = field.rounded_to_float().mean(i);
    for (int c = 0; c < s.channels; ++c)
      for (int h = 0; h < s.height; ++h)
        for (int w = 0; w + 1 < s.width; ++w)
          target.at(c, h, w) = 0.5 * (static_cast<float>(means[s.index(c, h, w + 1)]) -
                                      static_cast<float>(means[s.index(c, h, w)]));
    assets.push_back(asset_from(latent_source(y, field), 3, &target));
  }
  CdrTrainOptions o;
  o.steps = 300;
  o.learning_rate = 2e-2;
  o.hidden = 4;
  o.radius = 1;
  const auto r = train_cdr(assets, 0, o);
  EXPECT_GT(r.held_out_unrefined, 0.0);
  EXPECT_LT(r.held_out_loss, 0.5 * r.held_out_unrefined);
}

}  // namespace
}  // namespace ctc
