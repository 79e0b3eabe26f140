#include "ctc/latent_model.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

namespace ctc {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

// Bins farther than this many standard deviations underflow to zero mass.
constexpr double kSupportSigmas = 40.0;

// Intervals narrower than this are summed bin by bin; wider ones use the
// cumulative tails, whose cancellation error is then bounded.
constexpr std::int64_t kDirectSumWidth = 243;

// P[a <= Z < b] for standard normal Z and 0 <= a < b, avoiding cancellation
// in both the central region and the upper tail.
double normal_band(double a, double b) {
  if (a >= 1.0) return 0.5 * (std::erfc(a * kInvSqrt2) - std::erfc(b * kInvSqrt2));
  return 0.5 * (std::erf(b * kInvSqrt2) - std::erf(a * kInvSqrt2));
}

void check_sigma(double sigma) {
  require(std::isfinite(sigma) && sigma > 0.0, ErrorKind::kInvalidArgument,
          "prior scale must be finite and positive, got " + std::to_string(sigma));
}

void check_depth(int depth) {
  require(depth >= 1 && depth <= 19, ErrorKind::kInvalidArgument,
          "trit depth out of range: " + std::to_string(depth));
}

}  // namespace

std::int64_t pow3(int n) {
  std::int64_t r = 1;
  for (int i = 0; i < n; ++i) r *= 3;
  return r;
}

GaussianField::GaussianField(Shape shape, ParamMode mode, std::vector<double> means,
                             std::vector<double> scales)
    : shape_(shape), mode_(mode), means_(std::move(means)), scales_(std::move(scales)) {
  require(shape_.valid(), ErrorKind::kInvalidArgument, "gaussian field needs positive dims");
  const std::size_t expected = mode_ == ParamMode::kPerChannel
                                   ? static_cast<std::size_t>(shape_.channels)
                                   : shape_.size();
  require(means_.size() == expected && scales_.size() == expected,
          ErrorKind::kInvalidArgument, "gaussian field parameter count mismatch");
  for (double s : scales_) check_sigma(s);
  for (double m : means_)
    require(std::isfinite(m), ErrorKind::kInvalidArgument, "non-finite prior mean");
}

GaussianField GaussianField::per_channel(Shape shape, std::vector<double> means,
                                         std::vector<double> scales) {
  return GaussianField(shape, ParamMode::kPerChannel, std::move(means), std::move(scales));
}

GaussianField GaussianField::per_element(Shape shape, std::vector<double> means,
                                         std::vector<double> scales) {
  return GaussianField(shape, ParamMode::kPerElement, std::move(means), std::move(scales));
}

GaussianField GaussianField::rounded_to_float() const {
  GaussianField out = *this;
  for (double& m : out.means_) m = static_cast<float>(m);
  for (double& s : out.scales_) {
    s = static_cast<float>(s);
    check_sigma(s);
  }
  return out;
}

int choose_depth(const RealTensor& centered, int max_depth) {
  check_depth(max_depth);
  double peak = 0.0;
  for (double v : centered.values()) {
    require(std::isfinite(v), ErrorKind::kInvalidArgument, "non-finite latent value");
    peak = std::max(peak, std::abs(v));
  }
  const double needed = 2.0 * std::ceil(peak) + 1.0;
  int depth = 1;
  while (depth < max_depth && static_cast<double>(pow3(depth)) < needed) ++depth;
  return depth;
}

QuantizedLatent quantize_center_at_depth(const RealTensor& y, const GaussianField& g,
                                         int depth) {
  check_depth(depth);
  require(y.shape() == g.shape(), ErrorKind::kInvalidArgument,
          "latent and prior dimensions differ");
  const BinGrid grid{depth};
  const std::int64_t half = grid.half();
  QuantizedLatent out{IntTensor(y.shape()), depth, 0};
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = std::round(y[i] - g.mean(i));
    const double c = std::clamp(r, static_cast<double>(-half), static_cast<double>(half));
    if (c != r) ++out.clamped;
    out.values[i] = static_cast<std::int32_t>(c);
  }
  return out;
}

QuantizedLatent quantize_center(const RealTensor& y, const GaussianField& g,
                                int max_depth) {
  require(y.shape() == g.shape(), ErrorKind::kInvalidArgument,
          "latent and prior dimensions differ");
  RealTensor centered(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) centered[i] = y[i] - g.mean(i);
  return quantize_center_at_depth(y, g, choose_depth(centered, max_depth));
}

DiscretePrior::DiscretePrior(double sigma, int depth) : sigma_(sigma), depth_(depth) {
  check_sigma(sigma);
  check_depth(depth);
  const std::int64_t half = BinGrid{depth}.half();
  const double reach = std::ceil(kSupportSigmas * sigma) + 2.0;
  const std::int64_t k_max =
      reach >= static_cast<double>(half) ? half : static_cast<std::int64_t>(reach);

  // One-sided masses for k = 0..k_max; the prior is symmetric.
  std::vector<double> side(static_cast<std::size_t>(k_max) + 1);
  side[0] = std::erf(0.5 / sigma * kInvSqrt2);
  for (std::int64_t k = 1; k <= k_max; ++k)
    side[k] = normal_band((k - 0.5) / sigma, (k + 0.5) / sigma);
  std::int64_t last = k_max;
  while (last > 0 && side[last] <= 0.0) --last;
  side.resize(static_cast<std::size_t>(last) + 1);

  double total = side[0];
  for (std::int64_t k = 1; k <= last; ++k) total += 2.0 * side[k];
  require(total > 0.0 && std::isfinite(total), ErrorKind::kInvalidArgument,
          "prior mass underflow for scale " + std::to_string(sigma));

  support_lo_ = -last;
  support_hi_ = last;
  table_.assign(static_cast<std::size_t>(2 * last + 1), 0.0);
  for (std::int64_t k = 0; k <= last; ++k) {
    const double p = side[k] / total;
    table_[last + k] = p;
    table_[last - k] = p;
  }
  tail_mass_.assign(static_cast<std::size_t>(last) + 2, 0.0);
  tail_first_.assign(tail_mass_.size(), 0.0);
  tail_second_.assign(tail_mass_.size(), 0.0);
  for (std::int64_t k = last; k >= 0; --k) {
    const double p = table_[last + k];
    const auto kd = static_cast<double>(k);
    tail_mass_[k] = tail_mass_[k + 1] + p;
    tail_first_[k] = tail_first_[k + 1] + kd * p;
    tail_second_[k] = tail_second_[k + 1] + kd * kd * p;
  }
}

double DiscretePrior::pmf(std::int64_t k) const {
  require(BinGrid{depth_}.contains(k), ErrorKind::kInvalidArgument,
          "bin index outside grid: " + std::to_string(k));
  if (k < support_lo_ || k > support_hi_) return 0.0;
  return table_[k - support_lo_];
}

IntervalStats DiscretePrior::stats(std::int64_t lo, std::int64_t hi) const {
  require(lo <= hi, ErrorKind::kInvalidArgument, "interval bounds out of order");
  IntervalStats s;
  if (lo == hi) {
    s.mass = (lo < support_lo_ || lo > support_hi_) ? 0.0 : table_[lo - support_lo_];
    s.mean = static_cast<double>(lo);
    s.second_moment = s.mean * s.mean;
    s.degenerate = s.mass == 0.0;
    return s;
  }
  const std::int64_t a = std::max(lo, support_lo_);
  const std::int64_t b = std::min(hi, support_hi_);
  if (b - a >= kDirectSumWidth) return tail_stats(lo, hi, a, b);

  // The positive and negative halves are accumulated separately in order of
  // increasing |k| so symmetric intervals yield a mean of exactly zero.
  double mass = 0.0, pos1 = 0.0, neg1 = 0.0, second = 0.0;
  if (a <= 0 && b >= 0) mass = table_[-support_lo_];
  for (std::int64_t k = std::max<std::int64_t>(a, 1); k <= b; ++k) {
    const double p = table_[k - support_lo_];
    mass += p;
    pos1 += k * p;
    second += static_cast<double>(k) * k * p;
  }
  for (std::int64_t k = std::min<std::int64_t>(b, -1); k >= a; --k) {
    const double p = table_[k - support_lo_];
    mass += p;
    neg1 += -k * p;
    second += static_cast<double>(k) * k * p;
  }
  if (!(mass > 0.0)) {
    const double mid = 0.5 * (static_cast<double>(lo) + static_cast<double>(hi));
    return IntervalStats{0.0, mid, mid * mid, true};
  }
  s.mass = mass;
  s.mean = (pos1 - neg1) / mass;
  s.second_moment = second / mass;
  return s;
}

IntervalStats DiscretePrior::tail_stats(std::int64_t lo, std::int64_t hi, std::int64_t a,
                                        std::int64_t b) const {
  // Sums over [u, v] of the positive half, from tails accumulated inward.
  const auto half_sums = [&](std::int64_t u, std::int64_t v, double& m0, double& m1,
                             double& m2) {
    if (u > v) return;
    m0 += tail_mass_[u] - tail_mass_[v + 1];
    m1 += tail_first_[u] - tail_first_[v + 1];
    m2 += tail_second_[u] - tail_second_[v + 1];
  };
  double mass = 0.0, pos1 = 0.0, neg1 = 0.0, second = 0.0;
  if (a <= 0 && b >= 0) {
    mass = table_[-support_lo_];
    half_sums(1, b, mass, pos1, second);
    half_sums(1, -a, mass, neg1, second);
  } else if (a > 0) {
    half_sums(a, b, mass, pos1, second);
  } else {
    half_sums(-b, -a, mass, neg1, second);
  }
  if (!(mass > 0.0)) {
    const double mid = 0.5 * (static_cast<double>(lo) + static_cast<double>(hi));
    return IntervalStats{0.0, mid, mid * mid, true};
  }
  return IntervalStats{mass, (pos1 - neg1) / mass, second / mass, false};
}

double bin_pmf(std::int64_t k, double sigma, int depth) {
  return DiscretePrior(sigma, depth).pmf(k);
}

IntervalStats interval_stats(std::int64_t lo, std::int64_t hi, double sigma, int depth) {
  const BinGrid grid{depth};
  require(grid.contains(lo) && grid.contains(hi), ErrorKind::kInvalidArgument,
          "interval outside grid");
  return DiscretePrior(sigma, depth).stats(lo, hi);
}

PriorSet::PriorSet(const GaussianField& field, int depth) : depth_(depth) {
  const std::size_t n = field.shape().size();
  lookup_.resize(n);
  if (field.mode() == ParamMode::kPerChannel) {
    const std::size_t plane = field.shape().plane_size();
    for (int c = 0; c < field.shape().channels; ++c) {
      tables_.push_back(std::make_unique<DiscretePrior>(field.scales()[c], depth));
      for (std::size_t i = 0; i < plane; ++i) lookup_[c * plane + i] = tables_.back().get();
    }
    return;
  }
  std::unordered_map<std::uint64_t, const DiscretePrior*> by_scale;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = field.scale(i);
    auto [it, inserted] = by_scale.try_emplace(std::bit_cast<std::uint64_t>(s), nullptr);
    if (inserted) {
      tables_.push_back(std::make_unique<DiscretePrior>(s, depth));
      it->second = tables_.back().get();
    }
    lookup_[i] = it->second;
  }
}

}  // namespace ctc
