#include "ctc/tritplane.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "ctc/parallel.h"

namespace ctc {

PrefixInterval full_interval(int depth) {
  const auto half = static_cast<std::int32_t>(BinGrid{depth}.half());
  return {-half, half};
}

std::vector<TritPlane> slice(const IntTensor& yhat, int depth) {
  const BinGrid grid{depth};
  const std::int64_t half = grid.half();
  std::vector<TritPlane> planes(depth);
  for (int l = 0; l < depth; ++l) {
    planes[l].level = l + 1;
    planes[l].trits.resize(yhat.size());
    planes[l].active.assign(yhat.size(), 1);
  }
  for (std::size_t i = 0; i < yhat.size(); ++i) {
    require(grid.contains(yhat[i]), ErrorKind::kInvalidArgument,
            "value " + std::to_string(yhat[i]) + " outside grid of depth " +
                std::to_string(depth));
    std::int64_t shifted = yhat[i] + half;
    for (int l = depth - 1; l >= 0; --l) {
      planes[l].trits[i] = static_cast<std::uint8_t>(shifted % 3);
      shifted /= 3;
    }
  }
  return planes;
}

IntTensor reconstruct_exact(std::span<const TritPlane> planes, Shape shape, int depth) {
  require(static_cast<int>(planes.size()) == depth, ErrorKind::kInvalidArgument,
          "plane count does not match depth");
  const std::int64_t half = BinGrid{depth}.half();
  IntTensor out(shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::int64_t v = 0;
    for (const TritPlane& p : planes) v = 3 * v + p.trits[i];
    out[i] = static_cast<std::int32_t>(v - half);
  }
  return out;
}

Triple trit_probabilities(PrefixInterval prefix, const DiscretePrior& prior,
                          bool* degenerate) {
  require(prefix.width() >= 3 && prefix.width() % 3 == 0, ErrorKind::kInvalidArgument,
          "trit probabilities need a prefix of width divisible by 3");
  Triple mass{};
  for (int t = 0; t < 3; ++t) {
    const PrefixInterval c = prefix.child(t);
    mass[t] = prior.stats(c.lo, c.hi).mass;
  }
  const double total = mass[0] + mass[1] + mass[2];
  if (degenerate) *degenerate = !(total > 0.0);
  if (!(total > 0.0)) return {1.0 / 3, 1.0 / 3, 1.0 / 3};
  return {mass[0] / total, mass[1] / total, mass[2] / total};
}

Triple expected_values(PrefixInterval prefix, const DiscretePrior& prior) {
  require(prefix.width() >= 3 && prefix.width() % 3 == 0, ErrorKind::kInvalidArgument,
          "expected values need a prefix of width divisible by 3");
  Triple e{};
  for (int t = 0; t < 3; ++t) {
    const PrefixInterval c = prefix.child(t);
    e[t] = prior.stats(c.lo, c.hi).mean;
  }
  return e;
}

bool is_one_hot(const Triple& p) {
  int ones = 0, zeros = 0;
  for (double v : p) {
    ones += v == 1.0;
    zeros += v == 0.0;
  }
  return ones == 1 && zeros == 2;
}

int argmax(const Triple& p) {
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

double entropy_bits(const Triple& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log2(v);
  return h;
}

PlaneAnalysis analyze_plane(std::span<const PrefixInterval> prefix, const PriorSet& priors,
                            int level) {
  const std::size_t n = prefix.size();
  require(priors.size() == n, ErrorKind::kInvalidArgument, "prior count mismatch");
  PlaneAnalysis a;
  a.level = level;
  a.probs.resize(n);
  a.expected.resize(n);
  a.third_variance.resize(n);
  a.parent_mean.resize(n);
  a.parent_variance.resize(n);
  a.active.resize(n);

  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const PrefixInterval p = prefix[i];
      require(p.width() >= 3, ErrorKind::kInvalidArgument,
              "element has no trits left to analyze");
      const DiscretePrior& prior = priors.at(i);
      IntervalStats s[3];
      double total = 0.0;
      for (int t = 0; t < 3; ++t) {
        const PrefixInterval c = p.child(t);
        s[t] = prior.stats(c.lo, c.hi);
        total += s[t].mass;
        a.expected[i][t] = s[t].mean;
        a.third_variance[i][t] = std::max(0.0, s[t].variance());
      }
      if (total > 0.0) {
        double m1 = 0.0, m2 = 0.0;
        for (int t = 0; t < 3; ++t) {
          const double w = s[t].mass / total;
          a.probs[i][t] = w;
          m1 += w * s[t].mean;
          m2 += w * s[t].second_moment;
        }
        a.parent_mean[i] = m1;
        a.parent_variance[i] = std::max(0.0, m2 - m1 * m1);
      } else {
        const IntervalStats ps = prior.stats(p.lo, p.hi);
        a.probs[i] = {1.0 / 3, 1.0 / 3, 1.0 / 3};
        a.parent_mean[i] = ps.mean;
        a.parent_variance[i] = std::max(0.0, ps.variance());
      }
      a.active[i] = is_one_hot(a.probs[i]) ? 0 : 1;
    }
  });
  a.active_count = static_cast<std::size_t>(std::count(a.active.begin(), a.active.end(), 1));
  return a;
}

double rd_priority(const PlaneAnalysis& plane, std::size_t element, const Triple& probs) {
  double remaining = 0.0;
  for (int t = 0; t < 3; ++t) remaining += probs[t] * plane.third_variance[element][t];
  const double gain = plane.parent_variance[element] - remaining;
  const double rate = entropy_bits(probs);
  if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
  return gain / rate;
}

std::vector<std::uint32_t> rd_order(const PlaneAnalysis& plane, std::span<const Triple> probs,
                                    OrderMode mode) {
  const std::size_t n = plane.active.size();
  require(probs.size() == n, ErrorKind::kInvalidArgument, "probability plane size mismatch");
  std::vector<std::uint32_t> order;
  order.reserve(plane.active_count);
  for (std::size_t i = 0; i < n; ++i)
    if (plane.active[i]) order.push_back(static_cast<std::uint32_t>(i));
  if (mode == OrderMode::kRaster) return order;

  std::vector<double> key(n, 0.0);
  parallel_for(order.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      const double k = rd_priority(plane, order[j], probs[order[j]]);
      key[order[j]] = std::isnan(k) ? -std::numeric_limits<double>::infinity() : k;
    }
  });
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (key[a] != key[b]) return key[a] > key[b];
    return a < b;
  });
  return order;
}

DecodePosition ProgressiveLatent::canonical(DecodePosition pos) const {
  while (pos.planes < depth && pos.trits == 0 && active_count(pos.planes + 1) == 0)
    ++pos.planes;
  return pos;
}

double ProgressiveLatent::fractional_level(DecodePosition pos) const {
  pos = canonical(pos);
  if (pos.planes >= depth) return depth;
  return pos.planes +
         static_cast<double>(pos.trits) / static_cast<double>(active_count(pos.planes + 1));
}

DecodePosition ProgressiveLatent::position_at_level(double level) const {
  if (!(level > 0.0)) return canonical({0, 0});
  if (level >= depth) return {depth, 0};
  const int whole = static_cast<int>(std::floor(level));
  const double frac = level - whole;
  const auto trits =
      static_cast<std::size_t>(std::floor(frac * static_cast<double>(active_count(whole + 1))));
  return canonical({whole, trits});
}

std::vector<PrefixInterval> ProgressiveLatent::prefix_at(DecodePosition pos) const {
  pos = canonical(pos);
  const std::size_t n = shape.size();
  std::vector<PrefixInterval> prefix(n, full_interval(depth));
  const int whole = std::min(pos.planes, depth);
  for (std::size_t i = 0; i < n; ++i)
    for (int l = 0; l < whole; ++l) prefix[i] = prefix[i].child(planes[l].trits[i]);
  if (whole < depth) {
    const TritPlane& next = planes[whole];
    require(pos.trits <= order[whole].size(), ErrorKind::kInvalidArgument,
            "decode position beyond the plane's active trits");
    for (std::size_t i = 0; i < n; ++i)
      if (!next.active[i]) prefix[i] = prefix[i].child(next.trits[i]);
    for (std::size_t j = 0; j < pos.trits; ++j) {
      const std::uint32_t i = order[whole][j];
      prefix[i] = prefix[i].child(next.trits[i]);
    }
  }
  return prefix;
}

ProgressiveLatent schedule_raw(const IntTensor& yhat, int depth, const PriorSet& priors,
                               OrderMode mode) {
  ProgressiveLatent out;
  out.shape = yhat.shape();
  out.depth = depth;
  out.planes = slice(yhat, depth);
  std::vector<PrefixInterval> prefix(yhat.size(), full_interval(depth));
  for (int l = 1; l <= depth; ++l) {
    const PlaneAnalysis a = analyze_plane(prefix, priors, l);
    TritPlane& plane = out.planes[l - 1];
    plane.active = a.active;
    out.order.push_back(rd_order(a, a.probs, mode));
    for (std::size_t i = 0; i < prefix.size(); ++i) prefix[i] = prefix[i].child(plane.trits[i]);
  }
  return out;
}

RealTensor conditional_means(Shape shape, std::span<const PrefixInterval> prefix,
                             const PriorSet& priors) {
  RealTensor out(shape);
  parallel_for(prefix.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      out[i] = priors.at(i).stats(prefix[i].lo, prefix[i].hi).mean;
  });
  return out;
}

RealTensor reconstruct_partial(const ProgressiveLatent& latent, DecodePosition pos,
                               const PriorSet& priors) {
  const auto prefix = latent.prefix_at(pos);
  return conditional_means(latent.shape, prefix, priors);
}

}  // namespace ctc
