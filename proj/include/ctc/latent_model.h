#pragma once

#include <cstdint>
#include <memory>
#include <unordered_map>
#include <vector>

#include "ctc/tensor.h"

namespace ctc {

inline constexpr int kDefaultMaxDepth = 11;

// 3^n for 0 <= n <= 39.
std::int64_t pow3(int n);

enum class ParamMode : std::uint8_t {
  kPerChannel = 0,
  kPerElement = 1,
};

// Mean and standard deviation of the Gaussian prior on each latent element.
class GaussianField {
 public:
  GaussianField() = default;

  static GaussianField per_channel(Shape shape, std::vector<double> means,
                                   std::vector<double> scales);
  static GaussianField per_element(Shape shape, std::vector<double> means,
                                   std::vector<double> scales);

  const Shape& shape() const { return shape_; }
  ParamMode mode() const { return mode_; }

  double mean(std::size_t element) const { return means_[param_index(element)]; }
  double scale(std::size_t element) const { return scales_[param_index(element)]; }

  // Raw parameter arrays: C entries in per-channel mode, C*H*W otherwise.
  const std::vector<double>& means() const { return means_; }
  const std::vector<double>& scales() const { return scales_; }

  // Copy with every parameter rounded through float, as stored in a stream.
  GaussianField rounded_to_float() const;

 private:
  GaussianField(Shape shape, ParamMode mode, std::vector<double> means,
                std::vector<double> scales);

  std::size_t param_index(std::size_t element) const {
    return mode_ == ParamMode::kPerChannel ? element / shape_.plane_size() : element;
  }

  Shape shape_;
  ParamMode mode_ = ParamMode::kPerChannel;
  std::vector<double> means_;
  std::vector<double> scales_;
};

// Symmetric grid of 3^depth unit bins centered on the integers.
struct BinGrid {
  int depth = 1;

  std::int64_t half() const { return (pow3(depth) - 1) / 2; }
  std::int64_t bins() const { return pow3(depth); }
  bool contains(std::int64_t k) const { return k >= -half() && k <= half(); }
};

struct QuantizedLatent {
  IntTensor values;
  int depth = 1;
  std::size_t clamped = 0;
};

// round(y - mean), ties away from zero, clamped into the grid of the depth
// chosen from the data. The clamp count is reported, never raised.
QuantizedLatent quantize_center(const RealTensor& y, const GaussianField& g,
                                int max_depth = kDefaultMaxDepth);

// Same, with a caller-fixed depth.
QuantizedLatent quantize_center_at_depth(const RealTensor& y, const GaussianField& g,
                                         int depth);

// Smallest L with 3^L >= 2*ceil(max|y|)+1, at least 1, at most max_depth.
int choose_depth(const RealTensor& centered, int max_depth = kDefaultMaxDepth);

struct IntervalStats {
  double mass = 0.0;
  double mean = 0.0;
  double second_moment = 0.0;
  bool degenerate = false;

  double variance() const { return second_moment - mean * mean; }
};

// Zero-mean Gaussian discretized onto the unit bins of BinGrid(depth) and
// renormalized over the grid. Bins whose mass underflows are trimmed, so the
// table only spans the numerically non-zero support.
class DiscretePrior {
 public:
  DiscretePrior(double sigma, int depth);

  double sigma() const { return sigma_; }
  int depth() const { return depth_; }
  std::int64_t support_lo() const { return support_lo_; }
  std::int64_t support_hi() const { return support_hi_; }

  double pmf(std::int64_t k) const;

  // Mass, conditional mean and conditional second moment of [lo, hi].
  // A zero-mass interval reports its midpoint with degenerate set.
  IntervalStats stats(std::int64_t lo, std::int64_t hi) const;

 private:
  IntervalStats tail_stats(std::int64_t lo, std::int64_t hi, std::int64_t a,
                           std::int64_t b) const;

  double sigma_;
  int depth_;
  std::int64_t support_lo_ = 0;
  std::int64_t support_hi_ = 0;
  std::vector<double> table_;
  // Sums over k' >= k of p, k'p and k'^2 p on the positive half, k = 0..hi+1.
  std::vector<double> tail_mass_;
  std::vector<double> tail_first_;
  std::vector<double> tail_second_;
};

double bin_pmf(std::int64_t k, double sigma, int depth);
IntervalStats interval_stats(std::int64_t lo, std::int64_t hi, double sigma, int depth);

// Per-element priors for one tensor; elements with equal scale share a table.
class PriorSet {
 public:
  PriorSet(const GaussianField& field, int depth);

  const DiscretePrior& at(std::size_t element) const { return *lookup_[element]; }
  int depth() const { return depth_; }
  std::size_t size() const { return lookup_.size(); }

 private:
  int depth_;
  std::vector<std::unique_ptr<DiscretePrior>> tables_;
  std::vector<const DiscretePrior*> lookup_;
};

}  // namespace ctc
