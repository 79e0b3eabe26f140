#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ctc/tensor.h"

namespace ctc {

// Affine block synthesis x = S z + b, shared by every color channel.
struct SynthesisWeights {
  Eigen::MatrixXd matrix;  // B^2 pixels x B^2 coefficients
  Eigen::VectorXd bias;

  int coefficients() const { return static_cast<int>(matrix.cols()); }
  void round_to_float();
  bool operator==(const SynthesisWeights& o) const {
    return matrix == o.matrix && bias == o.bias;
  }
};

// Orthonormal B x B block DCT. An image of C colors and H x W pixels maps
// to a latent of C * B^2 channels and H/B x W/B positions; channel
// c * B^2 + u * B + v holds coefficient (u, v) of color c.
class LinearTransform {
 public:
  explicit LinearTransform(int block = 8);

  int block() const { return block_; }
  int coefficients() const { return block_ * block_; }
  const Eigen::MatrixXd& analysis() const { return analysis_; }

  Shape latent_shape(Shape image) const;
  Shape image_shape(Shape latent) const;

  RealTensor analyze(const RealTensor& image) const;
  RealTensor synthesize(const RealTensor& latent, const SynthesisWeights& weights) const;
  RealTensor synthesize(const RealTensor& latent) const;

  SynthesisWeights default_synthesis() const;

 private:
  int block_;
  Eigen::MatrixXd analysis_;
};

enum class RefitObjective {
  kNorm,     // sum_l w_l ||g(Y_l) - X||_F
  kSquared,  // sum_l w_l ||g(Y_l) - X||_F^2
};

struct RefitLevel {
  double weight = 1.0;
  RealTensor latent;  // uncentered refined latent fed to the synthesis
};

struct RefitSample {
  RealTensor image;
  std::vector<RefitLevel> levels;
};

struct RefitReport {
  int iterations = 0;
  bool rank_deficient = false;
  double objective_before = 0.0;
  double objective_after = 0.0;
};

// Weighted least-squares refit of the synthesis with ridge regularization.
// The norm objective is minimized by iteratively reweighted least squares
// starting from `start`.
SynthesisWeights retrain_decoder(const LinearTransform& transform,
                                 std::span<const RefitSample> samples,
                                 RefitObjective objective, const SynthesisWeights& start,
                                 RefitReport* report = nullptr, double ridge = 1e-6);

double refit_objective(const LinearTransform& transform, std::span<const RefitSample> samples,
                       RefitObjective objective, const SynthesisWeights& weights);

// Default level weights: 100 for L and L-1, 1 for L-2..L-4.
std::vector<std::pair<int, double>> default_refit_levels(int depth);

}  // namespace ctc
