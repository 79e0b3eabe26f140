#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ctc/crr.h"
#include "ctc/latent_model.h"
#include "ctc/mlp.h"
#include "ctc/tritplane.h"

namespace ctc {

// Decoder state at some position: the centered reconstruction and the
// prefix interval of every element.
struct LatentContext {
  const GaussianField& field;
  const RealTensor& recon;
  std::span<const PrefixInterval> prefix;
};

class CdrModel {
 public:
  static constexpr int kPositionFeatures = 5;
  static constexpr int kCenterFeatures = 2;

  CdrModel() = default;
  CdrModel(int radius, Perceptron net);

  static CdrModel zeros(int radius, int hidden);
  // Random hidden layer, zero output: starts as the identity refinement.
  static CdrModel identity(int radius, int hidden, std::uint64_t seed);

  static int feature_count(int radius);

  int radius() const { return radius_; }
  const Perceptron& net() const { return net_; }
  Perceptron& net() { return net_; }

  void features(const LatentContext& ctx, std::size_t element, std::span<double> out) const;
  // Residual scale of an element: the width of its prefix interval.
  static double step(const LatentContext& ctx, std::size_t element);
  double predict(const LatentContext& ctx, std::size_t element) const;

  friend bool operator==(const CdrModel&, const CdrModel&) = default;

 private:
  int radius_ = 2;
  Perceptron net_;
};

// Bands of the fractional level f: (L-1, L] identity, slot 0 for
// (L-2, L-1], slot 1 for (L-3, L-2], slot 2 for f <= L-3.
struct CdrRouter {
  std::array<std::optional<CdrModel>, 3> slots;

  // -1 for the identity band.
  static int slot_for(double level, int depth);
  const CdrModel* model_for(double level, int depth) const;
  bool empty() const;
};

// Refined centered latent recon + delta. `level` selects the band.
RealTensor refine_latent(const LatentContext& ctx, double level, int depth,
                         const CdrRouter& router);
RealTensor refine_latent(const LatentContext& ctx, const CdrModel* model);

// Frobenius norm of y - ytilde.
double cdr_loss(const RealTensor& y, const RealTensor& ytilde);

// One training asset: true centered latent plus its transmission schedule.
struct CdrAsset {
  std::shared_ptr<const GaussianField> field;
  RealTensor target;  // Y - M
  ProgressiveLatent latent;
  std::shared_ptr<const PriorSet> priors;
};

// Integer endpoints (lo, hi] of the band trained for a slot. Slot 2 draws
// one of the bands (j, j+1], j = 0..L-4, uniformly.
std::pair<int, int> cdr_band(int slot, int depth, std::mt19937_64& rng);
// Uniform fraction in (0, 1) for the random in-band position.
double sample_alpha(std::mt19937_64& rng);

// Sum over the positions of ||target - refined||_F on the given elements,
// with gradient accumulation when grad is set.
struct CdrBatch {
  Eigen::MatrixXd features;
  std::vector<double> residual;  // target - recon per column
  std::vector<double> step;
  std::vector<std::uint32_t> group;  // position index of each column
  int groups = 0;
};

double cdr_batch_loss(const Perceptron& net, const CdrBatch& batch,
                      std::vector<double>* grad = nullptr);

struct CdrTrainOptions {
  int radius = 2;
  int hidden = 32;
  int steps = 300;
  double learning_rate = 2e-3;
  double held_out_fraction = 0.2;
  std::size_t elements_per_position = 2048;
  int eval_every = 25;
  std::uint64_t seed = 1;
};

struct CdrTrainResult {
  CdrModel model;
  std::vector<TrainPoint> curve;
  double held_out_loss = 0.0;        // refined, best model
  double held_out_unrefined = 0.0;   // identity
};

// Positions the held-out score averages over for a slot.
std::vector<DecodePosition> cdr_eval_positions(const ProgressiveLatent& latent, int slot);

CdrTrainResult train_cdr(std::span<const CdrAsset> assets, int slot,
                         const CdrTrainOptions& options);

// Held-out score helper: mean over assets and positions of ||Y - Y~||_F.
double cdr_mean_loss(std::span<const CdrAsset> assets, int slot, const CdrModel* model);

}  // namespace ctc
