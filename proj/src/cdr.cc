#include "ctc/cdr.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "ctc/parallel.h"

namespace ctc {
namespace {

double clip(double v, double limit) { return std::clamp(v, -limit, limit); }

struct PositionState {
  std::vector<PrefixInterval> prefix;
  RealTensor recon;
};

PositionState state_at(const CdrAsset& asset, double level) {
  PositionState s;
  s.prefix = asset.latent.prefix_at(asset.latent.position_at_level(level));
  s.recon = conditional_means(asset.latent.shape, s.prefix, *asset.priors);
  return s;
}

}  // namespace

CdrModel::CdrModel(int radius, Perceptron net) : radius_(radius), net_(std::move(net)) {
  require(radius >= 0 && radius <= 8, ErrorKind::kInvalidArgument, "context radius out of range");
  require(net_.shape().inputs == feature_count(radius) && net_.shape().outputs == 1,
          ErrorKind::kModelMismatch, "distortion model dimensions do not match its feature set");
}

int CdrModel::feature_count(int radius) {
  const int side = 2 * radius + 1;
  return side * side * kPositionFeatures + kCenterFeatures;
}

CdrModel CdrModel::zeros(int radius, int hidden) {
  return CdrModel(radius, Perceptron({feature_count(radius), hidden, 1}));
}

CdrModel CdrModel::identity(int radius, int hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return CdrModel(radius, Perceptron::random({feature_count(radius), hidden, 1}, rng));
}

double CdrModel::step(const LatentContext& ctx, std::size_t element) {
  return static_cast<double>(ctx.prefix[element].width());
}

void CdrModel::features(const LatentContext& ctx, std::size_t element,
                        std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  const Shape& shape = ctx.field.shape();
  const int plane = static_cast<int>(shape.plane_size());
  const int c = static_cast<int>(element / plane);
  const int h = static_cast<int>(element % plane) / shape.width;
  const int w = static_cast<int>(element % plane) % shape.width;
  const PrefixInterval& p = ctx.prefix[element];
  const double width = static_cast<double>(p.width());
  const double center = ctx.recon[element];
  const double center_mean = ctx.field.mean(element);

  std::size_t f = 0;
  for (int dh = -radius_; dh <= radius_; ++dh) {
    for (int dw = -radius_; dw <= radius_; ++dw, f += kPositionFeatures) {
      const int hh = h + dh, ww = w + dw;
      if (hh < 0 || ww < 0 || hh >= shape.height || ww >= shape.width) continue;
      const std::size_t j = shape.index(c, hh, ww);
      out[f] = 1.0;
      out[f + 1] = clip((ctx.recon[j] - center) / width, 8.0);
      out[f + 2] = clip((ctx.field.mean(j) - center_mean) / width, 8.0);
      out[f + 3] = clip(std::log2(static_cast<double>(ctx.prefix[j].width()) / width) / 4.0, 4.0);
      out[f + 4] = clip(std::log2(ctx.field.scale(j) / width) / 8.0, 2.0);
    }
  }
  const double mid = 0.5 * (static_cast<double>(p.lo) + static_cast<double>(p.hi));
  out[f] = clip((center - mid) / width, 1.0);
  out[f + 1] = std::log2(width) / 8.0;
}

double CdrModel::predict(const LatentContext& ctx, std::size_t element) const {
  std::vector<double> x(static_cast<std::size_t>(net_.shape().inputs));
  features(ctx, element, x);
  double y = 0.0;
  net_.forward(x, std::span<double>(&y, 1));
  return step(ctx, element) * y;
}

int CdrRouter::slot_for(double level, int depth) {
  if (level > depth - 1) return -1;
  if (level > depth - 2) return 0;
  if (level > depth - 3) return 1;
  return 2;
}

const CdrModel* CdrRouter::model_for(double level, int depth) const {
  const int slot = slot_for(level, depth);
  if (slot < 0 || !slots[slot]) return nullptr;
  return &*slots[slot];
}

bool CdrRouter::empty() const {
  return std::none_of(slots.begin(), slots.end(), [](const auto& s) { return s.has_value(); });
}

RealTensor refine_latent(const LatentContext& ctx, const CdrModel* model) {
  RealTensor out = ctx.recon;
  if (!model) return out;
  parallel_for(out.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = ctx.recon[i] + model->predict(ctx, i);
  });
  return out;
}

RealTensor refine_latent(const LatentContext& ctx, double level, int depth,
                         const CdrRouter& router) {
  return refine_latent(ctx, router.model_for(level, depth));
}

double cdr_loss(const RealTensor& y, const RealTensor& ytilde) {
  require(y.shape() == ytilde.shape(), ErrorKind::kInvalidArgument,
          "distortion loss needs equal shapes");
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - ytilde[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

std::pair<int, int> cdr_band(int slot, int depth, std::mt19937_64& rng) {
  require(slot >= 0 && slot <= 2, ErrorKind::kInvalidArgument, "distortion slot out of range");
  require(depth >= 3, ErrorKind::kInvalidArgument, "refinement bands need depth of at least 3");
  if (slot == 0) return {depth - 2, depth - 1};
  if (slot == 1) return {depth - 3, depth - 2};
  const int bands = depth - 3;
  const int j = bands <= 1 ? 0 : static_cast<int>(rng() % static_cast<std::uint64_t>(bands));
  return {j, j + 1};
}

double sample_alpha(std::mt19937_64& rng) {
  // 53 random bits mapped into the open interval (0, 1).
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1p-53;
}

double cdr_batch_loss(const Perceptron& net, const CdrBatch& batch, std::vector<double>* grad) {
  const Eigen::Index n = batch.features.cols();
  if (n == 0) return 0.0;
  Perceptron::Cache cache;
  net.forward_batch(batch.features, cache);
  std::vector<double> r(static_cast<std::size_t>(n));
  std::vector<double> norm(static_cast<std::size_t>(batch.groups), 0.0);
  for (Eigen::Index k = 0; k < n; ++k) {
    r[k] = batch.residual[k] - batch.step[k] * cache.output(0, k);
    norm[batch.group[k]] += r[k] * r[k];
  }
  double loss = 0.0;
  for (double& v : norm) {
    v = std::sqrt(v);
    loss += v;
  }
  if (grad) {
    Eigen::MatrixXd g(1, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double nk = norm[batch.group[k]];
      g(0, k) = nk > 0.0 ? -batch.step[k] * r[k] / nk : 0.0;
    }
    grad->resize(net.parameter_count(), 0.0);
    net.backward_batch(cache, g, *grad);
  }
  return loss;
}

std::vector<DecodePosition> cdr_eval_positions(const ProgressiveLatent& latent, int slot) {
  std::vector<std::pair<int, int>> bands;
  const int depth = latent.depth;
  if (slot == 0) bands.push_back({depth - 2, depth - 1});
  if (slot == 1) bands.push_back({depth - 3, depth - 2});
  if (slot == 2)
    for (int j = 0; j + 1 <= depth - 3; ++j) bands.push_back({j, j + 1});
  std::vector<DecodePosition> out;
  for (auto [lo, hi] : bands) {
    if (lo < 0) continue;
    for (int k = 1; k <= 4; ++k) out.push_back(latent.position_at_level(lo + 0.25 * k));
  }
  return out;
}

double cdr_mean_loss(std::span<const CdrAsset> assets, int slot, const CdrModel* model) {
  double total = 0.0;
  std::size_t count = 0;
  for (const CdrAsset& a : assets) {
    for (const DecodePosition& pos : cdr_eval_positions(a.latent, slot)) {
      const auto prefix = a.latent.prefix_at(pos);
      const RealTensor recon = conditional_means(a.latent.shape, prefix, *a.priors);
      const LatentContext ctx{*a.field, recon, prefix};
      total += cdr_loss(a.target, refine_latent(ctx, model));
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

CdrTrainResult train_cdr(std::span<const CdrAsset> assets, int slot,
                         const CdrTrainOptions& options) {
  require(!assets.empty(), ErrorKind::kInvalidArgument, "no assets to train on");
  const int depth = assets.front().latent.depth;
  for (const CdrAsset& a : assets)
    require(a.latent.depth == depth, ErrorKind::kInvalidArgument,
            "distortion training assets must share one depth");
  const std::size_t n = assets.size();
  const std::size_t held_n =
      n < 2 ? 0
            : std::max<std::size_t>(1, static_cast<std::size_t>(
                                           std::lround(n * options.held_out_fraction)));
  const auto train_set = assets.first(n - held_n);
  const auto held_set = held_n ? assets.last(held_n) : assets;

  CdrTrainResult result;
  result.model = CdrModel::identity(options.radius, options.hidden, options.seed);
  result.model.net().round_to_float();
  result.held_out_unrefined = cdr_mean_loss(held_set, slot, nullptr);
  result.held_out_loss = result.held_out_unrefined;
  result.curve.push_back({0, std::numeric_limits<double>::quiet_NaN(), result.held_out_loss});

  CdrModel current = result.model;
  Adam adam(current.net().parameter_count(), options.learning_rate);
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ull);
  const int nf = current.net().shape().inputs;
  std::vector<double> grad;
  double running = 0.0;
  int running_count = 0;
  for (int step = 1; step <= options.steps; ++step) {
    const CdrAsset& asset = train_set[rng() % train_set.size()];
    const auto [lo, hi] = cdr_band(slot, depth, rng);
    const double levels[3] = {static_cast<double>(lo), static_cast<double>(hi),
                              lo + sample_alpha(rng)};
    CdrBatch batch;
    batch.groups = 3;
    const std::size_t size = asset.target.size();
    const std::size_t take = std::min(size, options.elements_per_position);
    batch.features.resize(nf, static_cast<Eigen::Index>(3 * take));
    std::vector<std::uint32_t> elements(size);
    std::iota(elements.begin(), elements.end(), 0u);
    for (int g = 0; g < 3; ++g) {
      const PositionState s = state_at(asset, levels[g]);
      const LatentContext ctx{*asset.field, s.recon, s.prefix};
      if (take < size) std::shuffle(elements.begin(), elements.end(), rng);
      for (std::size_t k = 0; k < take; ++k) {
        const std::uint32_t i = elements[k];
        const auto col = static_cast<Eigen::Index>(g * take + k);
        current.features(ctx, i, std::span<double>(batch.features.col(col).data(), nf));
        batch.residual.push_back(asset.target[i] - s.recon[i]);
        batch.step.push_back(CdrModel::step(ctx, i));
        batch.group.push_back(static_cast<std::uint32_t>(g));
      }
    }
    grad.assign(current.net().parameter_count(), 0.0);
    const double loss = cdr_batch_loss(current.net(), batch, &grad);
    require(std::isfinite(loss), ErrorKind::kDivergence,
            "distortion model training diverged at step " + std::to_string(step));
    adam.step(current.net().parameters(), grad);
    adam.set_learning_rate(options.learning_rate *
                           (0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * step / options.steps))));
    running += loss;
    ++running_count;

    if (step % options.eval_every == 0 || step == options.steps) {
      CdrModel rounded = current;
      rounded.net().round_to_float();
      const double held = cdr_mean_loss(held_set, slot, &rounded);
      require(std::isfinite(held), ErrorKind::kDivergence,
              "distortion model produced a non-finite held-out loss");
      result.curve.push_back({step, running / running_count, held});
      running = 0.0;
      running_count = 0;
      if (held < result.held_out_loss) {
        result.held_out_loss = held;
        result.model = rounded;
      }
    }
  }
  return result;
}

}  // namespace ctc
