#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include "ctc/latent_model.h"
#include "ctc/tensor.h"

namespace ctc {

// Bins still consistent with the trits decoded so far for one element.
struct PrefixInterval {
  std::int32_t lo = 0;
  std::int32_t hi = 0;

  std::int64_t width() const { return static_cast<std::int64_t>(hi) - lo + 1; }
  bool singleton() const { return lo == hi; }

  // The lower, middle or upper third selected by a trit.
  PrefixInterval child(int trit) const {
    const std::int32_t w = static_cast<std::int32_t>(width() / 3);
    return {lo + trit * w, lo + (trit + 1) * w - 1};
  }

  friend bool operator==(const PrefixInterval&, const PrefixInterval&) = default;
};

PrefixInterval full_interval(int depth);

// Level 1 is the most significant plane. `active` marks trits that carry
// information; slice() marks every trit active.
struct TritPlane {
  int level = 1;
  std::vector<std::uint8_t> trits;
  std::vector<std::uint8_t> active;
};

// Base-3 digits of (value + (3^L-1)/2), most significant plane first.
std::vector<TritPlane> slice(const IntTensor& yhat, int depth);
IntTensor reconstruct_exact(std::span<const TritPlane> planes, Shape shape, int depth);

// Conditional probabilities of the three thirds of `prefix`. A zero-mass
// prefix yields the uniform triple and sets *degenerate.
Triple trit_probabilities(PrefixInterval prefix, const DiscretePrior& prior,
                          bool* degenerate = nullptr);
// Conditional mean of each third: the reconstruction if the trit were 0/1/2.
Triple expected_values(PrefixInterval prefix, const DiscretePrior& prior);

bool is_one_hot(const Triple& p);
int argmax(const Triple& p);
double entropy_bits(const Triple& p);

// Everything the codec derives for plane `level` from the prefixes left by
// planes 1..level-1. Encoder and decoder call this on identical state.
struct PlaneAnalysis {
  int level = 1;
  std::vector<Triple> probs;            // P_l
  std::vector<Triple> expected;         // E_l
  std::vector<Triple> third_variance;
  std::vector<double> parent_mean;      // reconstruction from planes < level
  std::vector<double> parent_variance;
  std::vector<std::uint8_t> active;     // raw triple is not exactly one-hot
  std::size_t active_count = 0;
};

PlaneAnalysis analyze_plane(std::span<const PrefixInterval> prefix, const PriorSet& priors,
                            int level);

enum class OrderMode : std::uint8_t {
  kRdPriority = 0,
  kRaster = 1,
};

// Expected distortion reduction per expected bit when `probs` are the
// coding probabilities of the element's trit. +inf for a zero-rate trit.
double rd_priority(const PlaneAnalysis& plane, std::size_t element, const Triple& probs);

// Active elements of the plane in transmission order: descending priority,
// ties by raster index; or plain raster order.
std::vector<std::uint32_t> rd_order(const PlaneAnalysis& plane, std::span<const Triple> probs,
                                    OrderMode mode);

// Whole planes decoded plus the count of trits decoded from the next plane.
struct DecodePosition {
  int planes = 0;
  std::size_t trits = 0;

  friend auto operator<=>(const DecodePosition&, const DecodePosition&) = default;
};

// A quantized tensor together with its transmission schedule: per plane, the
// active mask and the serialization order of active trits.
struct ProgressiveLatent {
  Shape shape;
  int depth = 1;
  std::vector<TritPlane> planes;
  std::vector<std::vector<std::uint32_t>> order;

  std::size_t active_count(int level) const { return order[level - 1].size(); }

  // Skips forward over planes without active trits.
  DecodePosition canonical(DecodePosition pos) const;
  // planes + trits / active_count(planes + 1).
  double fractional_level(DecodePosition pos) const;
  // Position holding floor(fraction * active) trits of plane floor(level)+1.
  DecodePosition position_at_level(double level) const;

  // Prefix of every element at `pos`. Inactive trits of the plane under way
  // are known and applied.
  std::vector<PrefixInterval> prefix_at(DecodePosition pos) const;
};

// Slices `yhat` and derives every plane's active mask and order from the raw
// probabilities, exactly as a decoder without context models would.
ProgressiveLatent schedule_raw(const IntTensor& yhat, int depth, const PriorSet& priors,
                               OrderMode mode);

// Conditional mean of every element given its prefix interval.
RealTensor conditional_means(Shape shape, std::span<const PrefixInterval> prefix,
                             const PriorSet& priors);

RealTensor reconstruct_partial(const ProgressiveLatent& latent, DecodePosition pos,
                               const PriorSet& priors);

}  // namespace ctc
