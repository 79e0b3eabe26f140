#include "ctc/crr.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "ctc/parallel.h"

namespace ctc {
namespace {

constexpr double kLn2 = 0.69314718055994530942;
constexpr double kLogProbScale = 10.0;
constexpr double kMinLogProb = -30.0;

double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

double clip(double v, double limit) { return std::clamp(v, -limit, limit); }

}  // namespace

void TemperatureBounds::validate() const {
  require(std::isfinite(low) && std::isfinite(high) && low > 0.0 && low < high,
          ErrorKind::kInvalidArgument, "temperature bounds need 0 < low < high");
}

double TemperatureBounds::beta(double s) const { return low + (high - low) * sigmoid(s); }

Triple softmax(const Triple& x, double beta) {
  const double top = beta * std::max({x[0], x[1], x[2]});
  Triple e;
  double sum = 0.0;
  for (int i = 0; i < 3; ++i) {
    e[i] = std::exp(beta * x[i] - top);
    sum += e[i];
  }
  for (double& v : e) v /= sum;
  return e;
}

Triple modulate(const Triple& p, const Modulation& m, const TemperatureBounds& b) {
  const Triple x{p[0] + m.delta[0], p[1] + m.delta[1], p[2] + m.delta[2]};
  return softmax(x, b.beta(m.scale));
}

double cross_entropy(int truth, const Triple& p) {
  return -std::log2(std::max(p[truth], kProbabilityFloor));
}

double cross_entropy(const Triple& q, const Triple& p) {
  double h = 0.0;
  for (int i = 0; i < 3; ++i)
    if (q[i] > 0.0) h -= q[i] * std::log2(std::max(p[i], kProbabilityFloor));
  return h;
}

bool entropy_monotonicity_check(const Triple& x, std::span<const double> betas,
                                double tolerance) {
  const bool distinct = x[0] != x[1] && x[1] != x[2] && x[0] != x[2];
  double previous = std::numeric_limits<double>::infinity();
  for (double beta : betas) {
    require(beta > 0.0, ErrorKind::kInvalidArgument, "temperatures must be positive");
    const double h = entropy_bits(softmax(x, beta));
    if (h > previous + tolerance) return false;
    if (distinct && previous != std::numeric_limits<double>::infinity() && !(h < previous))
      return false;
    previous = h;
  }
  return true;
}

CrrModel::CrrModel(int radius, Perceptron net) : radius_(radius), net_(std::move(net)) {
  require(radius >= 0 && radius <= 8, ErrorKind::kInvalidArgument, "context radius out of range");
  require(net_.shape().inputs == feature_count(radius) && net_.shape().outputs == 4,
          ErrorKind::kModelMismatch, "rate model dimensions do not match its feature set");
}

int CrrModel::feature_count(int radius) {
  const int side = 2 * radius + 1;
  return side * side * kPositionFeatures + kCenterFeatures;
}

CrrModel CrrModel::zeros(int radius, int hidden) {
  return CrrModel(radius, Perceptron({feature_count(radius), hidden, 4}));
}

CrrModel CrrModel::identity(int radius, int hidden, const TemperatureBounds& bounds,
                            std::uint64_t seed) {
  bounds.validate();
  std::mt19937_64 rng(seed);
  CrrModel m(radius, Perceptron::random({feature_count(radius), hidden, 4}, rng));
  const int side = 2 * radius + 1;
  const int center = (radius * side + radius) * kPositionFeatures;
  const int log_base = side * side * kPositionFeatures;
  for (int t = 0; t < 3; ++t) {
    m.net_.skip(t, log_base + t) = kLogProbScale;
    m.net_.skip(t, center + 7 + t) = -1.0;
  }
  const double unit = (1.0 - bounds.low) / (bounds.high - bounds.low);
  m.net_.output_bias(3) = std::log(unit / (1.0 - unit));
  return m;
}

void CrrModel::features(const PlaneContext& ctx, std::size_t element,
                        std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  const Shape& shape = ctx.field.shape();
  const int plane = static_cast<int>(shape.plane_size());
  const int c = static_cast<int>(element / plane);
  const int h = static_cast<int>(element % plane) / shape.width;
  const int w = static_cast<int>(element % plane) % shape.width;
  const PrefixInterval& p = ctx.prefix[element];
  const double third = static_cast<double>(p.width()) / 3.0;
  const double origin = 0.5 * (static_cast<double>(p.lo) + static_cast<double>(p.hi));
  const double center_mean = ctx.field.mean(element);

  std::size_t f = 0;
  for (int dh = -radius_; dh <= radius_; ++dh) {
    for (int dw = -radius_; dw <= radius_; ++dw, f += kPositionFeatures) {
      const int hh = h + dh, ww = w + dw;
      if (hh < 0 || ww < 0 || hh >= shape.height || ww >= shape.width) continue;
      const std::size_t j = shape.index(c, hh, ww);
      out[f] = 1.0;
      out[f + 1] = clip((ctx.recon[j] - origin) / third, 8.0);
      out[f + 2] = clip((ctx.field.mean(j) - center_mean) / third, 8.0);
      out[f + 3] = clip(std::log2(ctx.field.scale(j) / third) / 8.0, 2.0);
      for (int t = 0; t < 3; ++t) {
        out[f + 4 + t] = clip((ctx.analysis.expected[j][t] - origin) / third, 8.0);
        out[f + 7 + t] = ctx.analysis.probs[j][t];
      }
    }
  }
  for (int t = 0; t < 3; ++t) {
    const double pt = ctx.analysis.probs[element][t];
    const double lp = pt > 0.0 ? std::max(std::log(pt), kMinLogProb) : kMinLogProb;
    out[f + t] = lp / kLogProbScale;
  }
}

Modulation CrrModel::predict(const PlaneContext& ctx, std::size_t element) const {
  std::vector<double> x(static_cast<std::size_t>(net_.shape().inputs));
  features(ctx, element, x);
  double y[4];
  net_.forward(x, std::span<double>(y, 4));
  return {{y[0], y[1], y[2]}, y[3]};
}

int CrrRouter::slot_for(int level, int depth) {
  if (level >= depth) return 0;
  if (level == depth - 1) return 1;
  return 2;
}

const CrrModel* CrrRouter::model_for(int level, int depth) const {
  const auto& slot = slots[slot_for(level, depth)];
  return slot ? &*slot : nullptr;
}

bool CrrRouter::empty() const {
  return std::none_of(slots.begin(), slots.end(), [](const auto& s) { return s.has_value(); });
}

std::vector<Triple> refine_plane(const PlaneContext& ctx, const CrrModel* model,
                                 const TemperatureBounds& bounds) {
  std::vector<Triple> out = ctx.analysis.probs;
  if (!model) return out;
  bounds.validate();
  parallel_for(out.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      if (!ctx.analysis.active[i] || is_one_hot(out[i])) continue;
      out[i] = modulate(ctx.analysis.probs[i], model->predict(ctx, i), bounds);
    }
  });
  return out;
}

std::vector<Triple> refine_plane(const PlaneContext& ctx, const CrrRouter& router,
                                 const TemperatureBounds& bounds) {
  return refine_plane(ctx, router.model_for(ctx.analysis.level, ctx.depth), bounds);
}

double crr_loss(const Perceptron& net, const Eigen::MatrixXd& features,
                std::span<const Triple> probs, std::span<const std::uint8_t> truth,
                const TemperatureBounds& bounds, std::vector<double>* grad) {
  const Eigen::Index n = features.cols();
  require(static_cast<std::size_t>(n) == probs.size() && probs.size() == truth.size(),
          ErrorKind::kInvalidArgument, "rate loss inputs disagree in length");
  if (n == 0) return 0.0;
  Perceptron::Cache cache;
  net.forward_batch(features, cache);
  Eigen::MatrixXd g(4, n);
  double loss = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double s = cache.output(3, k);
    const double sig = sigmoid(s);
    const double beta = bounds.low + (bounds.high - bounds.low) * sig;
    Triple x;
    for (int t = 0; t < 3; ++t) x[t] = probs[k][t] + cache.output(t, k);
    const Triple q = softmax(x, beta);
    const int y = truth[k];
    loss += cross_entropy(y, q);
    if (q[y] < kProbabilityFloor) {
      g.col(k).setZero();
      continue;
    }
    double dbeta = 0.0;
    for (int t = 0; t < 3; ++t) {
      const double dz = (q[t] - (t == y ? 1.0 : 0.0)) / kLn2 / static_cast<double>(n);
      g(t, k) = beta * dz;
      dbeta += x[t] * dz;
    }
    g(3, k) = dbeta * (bounds.high - bounds.low) * sig * (1.0 - sig);
  }
  if (grad) {
    grad->resize(net.parameter_count(), 0.0);
    net.backward_batch(cache, g, *grad);
  }
  return loss / static_cast<double>(n);
}

namespace {

struct SampleRef {
  std::uint32_t plane;
  std::uint32_t element;
};

Eigen::MatrixXd gather(const CrrModel& model, std::span<const PlaneSample> planes,
                       std::span<const SampleRef> refs, std::vector<Triple>& probs,
                       std::vector<std::uint8_t>& truth) {
  const int nf = model.net().shape().inputs;
  Eigen::MatrixXd x(nf, static_cast<Eigen::Index>(refs.size()));
  probs.resize(refs.size());
  truth.resize(refs.size());
  parallel_for(refs.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const PlaneSample& s = planes[refs[k].plane];
      model.features(s.context(), refs[k].element,
                     std::span<double>(x.col(static_cast<Eigen::Index>(k)).data(), nf));
      probs[k] = s.analysis.probs[refs[k].element];
      truth[k] = s.trits[refs[k].element];
    }
  });
  return x;
}

}  // namespace

CrrTrainResult train_crr(std::span<const PlaneSample> planes, const TemperatureBounds& bounds,
                         const TrainOptions& options) {
  bounds.validate();
  require(options.epochs >= 0 && options.batch > 0, ErrorKind::kInvalidArgument,
          "bad training options");

  // Held-out split by asset: planes sharing a prior belong to one asset.
  std::map<const GaussianField*, int> asset_of;
  std::vector<int> plane_asset(planes.size());
  for (std::size_t p = 0; p < planes.size(); ++p) {
    auto [it, inserted] = asset_of.try_emplace(planes[p].field.get(),
                                               static_cast<int>(asset_of.size()));
    plane_asset[p] = it->second;
  }
  const int assets = static_cast<int>(asset_of.size());
  const int held_assets =
      assets < 2 ? 0 : std::max(1, static_cast<int>(std::lround(assets * options.held_out_fraction)));
  // Asset ids follow first appearance, so the last ones are held out.
  std::vector<SampleRef> train, held;
  for (std::size_t p = 0; p < planes.size(); ++p) {
    const PlaneSample& s = planes[p];
    for (std::size_t i = 0; i < s.trits.size(); ++i) {
      if (!s.analysis.active[i] || is_one_hot(s.analysis.probs[i])) continue;
      const SampleRef r{static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(i)};
      (plane_asset[p] >= assets - held_assets ? held : train).push_back(r);
    }
  }
  require(!train.empty(), ErrorKind::kInvalidArgument, "no active trits to train on");
  if (held.empty()) held = train;

  std::mt19937_64 rng(options.seed);
  if (held.size() > options.max_samples / 2) {
    std::shuffle(held.begin(), held.end(), rng);
    held.resize(options.max_samples / 2);
  }

  CrrTrainResult result;
  result.model = CrrModel::identity(options.radius, options.hidden, bounds, options.seed);
  result.model.net().round_to_float();
  result.train_samples = train.size();
  result.held_out_samples = held.size();

  std::vector<Triple> held_probs;
  std::vector<std::uint8_t> held_truth;
  const Eigen::MatrixXd held_x = gather(result.model, planes, held, held_probs, held_truth);
  double entropy = 0.0;
  for (const Triple& p : held_probs) entropy += entropy_bits(p);
  result.held_out_entropy = entropy / static_cast<double>(held_probs.size());

  CrrModel current = result.model;
  result.held_out_loss = crr_loss(current.net(), held_x, held_probs, held_truth, bounds);
  result.curve.push_back({0, std::numeric_limits<double>::quiet_NaN(), result.held_out_loss});

  Adam adam(current.net().parameter_count(), options.learning_rate);
  std::vector<double> grad;
  std::vector<Triple> probs;
  std::vector<std::uint8_t> truth;
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    const std::size_t used = std::min(train.size(), options.max_samples);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < used; begin += options.batch) {
      const std::size_t end = std::min(used, begin + options.batch);
      const auto x = gather(current, planes, std::span(train).subspan(begin, end - begin),
                            probs, truth);
      grad.assign(current.net().parameter_count(), 0.0);
      const double loss = crr_loss(current.net(), x, probs, truth, bounds, &grad);
      require(std::isfinite(loss), ErrorKind::kDivergence,
              "rate model training diverged at epoch " + std::to_string(epoch));
      adam.step(current.net().parameters(), grad);
      epoch_loss += loss;
      ++batches;
    }
    adam.set_learning_rate(options.learning_rate * std::pow(0.8, epoch));
    CrrModel rounded = current;
    rounded.net().round_to_float();
    const double held_loss = crr_loss(rounded.net(), held_x, held_probs, held_truth, bounds);
    require(std::isfinite(held_loss) && current.net().finite(), ErrorKind::kDivergence,
            "rate model produced non-finite loss at epoch " + std::to_string(epoch));
    result.curve.push_back({epoch, epoch_loss / static_cast<double>(batches), held_loss});
    if (held_loss < result.held_out_loss) {
      result.held_out_loss = held_loss;
      result.model = rounded;
    }
  }
  return result;
}

}  // namespace ctc
