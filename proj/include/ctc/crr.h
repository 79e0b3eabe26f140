#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctc/latent_model.h"
#include "ctc/mlp.h"
#include "ctc/tritplane.h"

namespace ctc {

struct TemperatureBounds {
  double low = 0.2;
  double high = 5.0;

  void validate() const;
  double beta(double s) const;
};

struct Modulation {
  Triple delta{};
  double scale = 0.0;
};

Triple softmax(const Triple& x, double beta);

// softmax(beta * (p + delta)) with beta squashed into the bounds.
Triple modulate(const Triple& p, const Modulation& m, const TemperatureBounds& b);

inline constexpr double kProbabilityFloor = 0x1p-32;

// -log2 of the probability assigned to the true outcome, floored at 2^-32.
double cross_entropy(int truth, const Triple& p);
double cross_entropy(const Triple& q, const Triple& p);

// True iff the entropy of softmax(beta * x) does not increase along `betas`,
// and strictly decreases when the entries of x are distinct.
bool entropy_monotonicity_check(const Triple& x, std::span<const double> betas,
                                double tolerance = 1e-12);

// Decoder-visible state at the start of a plane: the reconstruction from the
// planes above, the prior and the raw analysis of the plane.
struct PlaneContext {
  const GaussianField& field;
  const RealTensor& recon;
  std::span<const PrefixInterval> prefix;
  const PlaneAnalysis& analysis;
  int depth = 1;
};

// Self-contained copy of a PlaneContext plus the true trits, for training.
struct PlaneSample {
  std::shared_ptr<const GaussianField> field;
  RealTensor recon;
  std::vector<PrefixInterval> prefix;
  PlaneAnalysis analysis;
  std::vector<std::uint8_t> trits;
  int depth = 1;

  PlaneContext context() const { return {*field, recon, prefix, analysis, depth}; }
};

class CrrModel {
 public:
  static constexpr int kPositionFeatures = 10;
  static constexpr int kCenterFeatures = 3;

  CrrModel() = default;
  CrrModel(int radius, Perceptron net);

  // All weights zero: delta 0 and mid-range temperature.
  static CrrModel zeros(int radius, int hidden);
  // Random hidden layer with the output wired to reproduce the raw
  // probabilities exactly (delta = ln p - p, beta = 1).
  static CrrModel identity(int radius, int hidden, const TemperatureBounds& bounds,
                           std::uint64_t seed);

  static int feature_count(int radius);

  int radius() const { return radius_; }
  const Perceptron& net() const { return net_; }
  Perceptron& net() { return net_; }

  void features(const PlaneContext& ctx, std::size_t element, std::span<double> out) const;
  Modulation predict(const PlaneContext& ctx, std::size_t element) const;

  friend bool operator==(const CrrModel&, const CrrModel&) = default;

 private:
  int radius_ = 2;
  Perceptron net_;
};

// Slot 0 serves level L, slot 1 level L-1, slot 2 every level up to L-2.
struct CrrRouter {
  std::array<std::optional<CrrModel>, 3> slots;

  static int slot_for(int level, int depth);
  const CrrModel* model_for(int level, int depth) const;
  bool empty() const;
};

// Refined probability triple of every element. Inactive elements and exact
// one-hot raw triples pass through untouched.
std::vector<Triple> refine_plane(const PlaneContext& ctx, const CrrModel* model,
                                 const TemperatureBounds& bounds);
std::vector<Triple> refine_plane(const PlaneContext& ctx, const CrrRouter& router,
                                 const TemperatureBounds& bounds);

// Mean cross-entropy in bits of the model over samples whose features are
// the columns of `features`; adds the gradient to *grad when given.
double crr_loss(const Perceptron& net, const Eigen::MatrixXd& features,
                std::span<const Triple> probs, std::span<const std::uint8_t> truth,
                const TemperatureBounds& bounds, std::vector<double>* grad = nullptr);

struct TrainOptions {
  int radius = 2;
  int hidden = 32;
  int epochs = 12;
  int batch = 256;
  double learning_rate = 2e-3;
  double held_out_fraction = 0.2;
  std::size_t max_samples = 60000;
  std::uint64_t seed = 1;
};

struct TrainPoint {
  int epoch = 0;
  double train_loss = 0.0;
  double held_out_loss = 0.0;
};

struct CrrTrainResult {
  CrrModel model;
  std::vector<TrainPoint> curve;
  double held_out_loss = 0.0;     // best model
  double held_out_entropy = 0.0;  // mean H(P) of the raw triples
  std::size_t train_samples = 0;
  std::size_t held_out_samples = 0;
};

// Trains one router slot on the active trits of `planes`. Weights are
// rounded to float so stored and in-memory models agree bit for bit.
CrrTrainResult train_crr(std::span<const PlaneSample> planes, const TemperatureBounds& bounds,
                         const TrainOptions& options);

}  // namespace ctc
