#include "ctc/transform.h"

#include <cmath>
#include <numbers>

#include "ctc/error.h"

namespace ctc {
namespace {

Eigen::MatrixXd dct_matrix(int n) {
  Eigen::MatrixXd d(n, n);
  for (int k = 0; k < n; ++k) {
    const double a = std::sqrt((k == 0 ? 1.0 : 2.0) / n);
    for (int x = 0; x < n; ++x) d(k, x) = a * std::cos(std::numbers::pi * (2 * x + 1) * k / (2.0 * n));
  }
  return d;
}

// Column j of the result is the coefficient vector of block j.
Eigen::MatrixXd gather_blocks(const RealTensor& latent, int coefficients, int color) {
  const Shape s = latent.shape();
  Eigen::MatrixXd z(coefficients, static_cast<Eigen::Index>(s.plane_size()));
  for (int k = 0; k < coefficients; ++k)
    for (std::size_t j = 0; j < s.plane_size(); ++j)
      z(k, static_cast<Eigen::Index>(j)) = latent[(color * coefficients + k) * s.plane_size() + j];
  return z;
}

Eigen::MatrixXd gather_pixels(const RealTensor& image, int block, int color) {
  const Shape s = image.shape();
  const int bh = s.height / block, bw = s.width / block;
  Eigen::MatrixXd x(block * block, bh * bw);
  for (int r = 0; r < bh; ++r)
    for (int c = 0; c < bw; ++c)
      for (int y = 0; y < block; ++y)
        for (int xx = 0; xx < block; ++xx)
          x(y * block + xx, r * bw + c) = image.at(color, r * block + y, c * block + xx);
  return x;
}

double level_residual_norm(const LinearTransform& t, const RefitLevel& level,
                           const RealTensor& image, const SynthesisWeights& w) {
  const RealTensor x = t.synthesize(level.latent, w);
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += (x[i] - image[i]) * (x[i] - image[i]);
  return std::sqrt(sum);
}

}  // namespace

void SynthesisWeights::round_to_float() {
  matrix = matrix.cast<float>().cast<double>();
  bias = bias.cast<float>().cast<double>();
}

LinearTransform::LinearTransform(int block) : block_(block) {
  require(block >= 1 && block <= 128 && (block & (block - 1)) == 0, ErrorKind::kInvalidArgument,
          "block size must be a power of two up to 128");
  const Eigen::MatrixXd d = dct_matrix(block);
  analysis_.resize(coefficients(), coefficients());
  for (int u = 0; u < block; ++u)
    for (int v = 0; v < block; ++v)
      for (int y = 0; y < block; ++y)
        for (int x = 0; x < block; ++x) analysis_(u * block + v, y * block + x) = d(u, y) * d(v, x);
}

Shape LinearTransform::latent_shape(Shape image) const {
  require(image.valid() && image.height % block_ == 0 && image.width % block_ == 0,
          ErrorKind::kInvalidArgument, "image dimensions must be multiples of the block size");
  return {image.channels * coefficients(), image.height / block_, image.width / block_};
}

Shape LinearTransform::image_shape(Shape latent) const {
  require(latent.valid() && latent.channels % coefficients() == 0, ErrorKind::kInvalidArgument,
          "latent channels are not a multiple of the block coefficient count");
  return {latent.channels / coefficients(), latent.height * block_, latent.width * block_};
}

RealTensor LinearTransform::analyze(const RealTensor& image) const {
  const Shape ls = latent_shape(image.shape());
  RealTensor out(ls);
  for (int color = 0; color < image.shape().channels; ++color) {
    const Eigen::MatrixXd z = analysis_ * gather_pixels(image, block_, color);
    for (int k = 0; k < coefficients(); ++k)
      for (std::size_t j = 0; j < ls.plane_size(); ++j)
        out[(color * coefficients() + k) * ls.plane_size() + j] = z(k, static_cast<Eigen::Index>(j));
  }
  return out;
}

RealTensor LinearTransform::synthesize(const RealTensor& latent,
                                       const SynthesisWeights& weights) const {
  require(weights.coefficients() == coefficients() && weights.matrix.rows() == coefficients() &&
              weights.bias.size() == coefficients(),
          ErrorKind::kModelMismatch, "synthesis weights do not match the block size");
  const Shape is = image_shape(latent.shape());
  const int bw = latent.shape().width;
  RealTensor out(is);
  for (int color = 0; color < is.channels; ++color) {
    const Eigen::MatrixXd x =
        (weights.matrix * gather_blocks(latent, coefficients(), color)).colwise() + weights.bias;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const int r = static_cast<int>(j) / bw, c = static_cast<int>(j) % bw;
      for (int y = 0; y < block_; ++y)
        for (int xx = 0; xx < block_; ++xx)
          out.at(color, r * block_ + y, c * block_ + xx) = x(y * block_ + xx, j);
    }
  }
  return out;
}

RealTensor LinearTransform::synthesize(const RealTensor& latent) const {
  return synthesize(latent, default_synthesis());
}

SynthesisWeights LinearTransform::default_synthesis() const {
  return {analysis_.transpose(), Eigen::VectorXd::Zero(coefficients())};
}

double refit_objective(const LinearTransform& transform, std::span<const RefitSample> samples,
                       RefitObjective objective, const SynthesisWeights& weights) {
  double total = 0.0;
  for (const RefitSample& s : samples)
    for (const RefitLevel& l : s.levels) {
      const double n = level_residual_norm(transform, l, s.image, weights);
      total += l.weight * (objective == RefitObjective::kNorm ? n : n * n);
    }
  return total;
}

SynthesisWeights retrain_decoder(const LinearTransform& transform,
                                 std::span<const RefitSample> samples,
                                 RefitObjective objective, const SynthesisWeights& start,
                                 RefitReport* report, double ridge) {
  require(!samples.empty(), ErrorKind::kInvalidArgument, "refit needs at least one sample");
  const int k = transform.coefficients();

  // Per (sample, level): normal-equation blocks, so reweighting is cheap.
  struct Term {
    double weight;
    Eigen::MatrixXd gram;   // (k+1) x (k+1)
    Eigen::MatrixXd cross;  // (k+1) x k
    std::size_t sample;
    std::size_t level;
  };
  std::vector<Term> terms;
  for (std::size_t si = 0; si < samples.size(); ++si) {
    const RefitSample& s = samples[si];
    for (std::size_t li = 0; li < s.levels.size(); ++li) {
      const RefitLevel& l = s.levels[li];
      require(transform.image_shape(l.latent.shape()) == s.image.shape(),
              ErrorKind::kInvalidArgument, "refit latent does not match its image");
      Term t{l.weight, Eigen::MatrixXd::Zero(k + 1, k + 1), Eigen::MatrixXd::Zero(k + 1, k), si, li};
      for (int color = 0; color < s.image.shape().channels; ++color) {
        Eigen::MatrixXd z(k + 1, static_cast<Eigen::Index>(l.latent.shape().plane_size()));
        z.topRows(k) = gather_blocks(l.latent, k, color);
        z.row(k).setOnes();
        const Eigen::MatrixXd x = gather_pixels(s.image, transform.block(), color);
        t.gram.noalias() += z * z.transpose();
        t.cross.noalias() += z * x.transpose();
      }
      terms.push_back(std::move(t));
    }
  }

  RefitReport local;
  local.objective_before = refit_objective(transform, samples, objective, start);
  const auto solve = [&](const std::vector<double>& scale) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(k + 1, k + 1);
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(k + 1, k);
    for (std::size_t i = 0; i < terms.size(); ++i) {
      g += scale[i] * terms[i].gram;
      r += scale[i] * terms[i].cross;
    }
    const Eigen::VectorXd eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(
                                    g, Eigen::EigenvaluesOnly).eigenvalues();
    if (!(eig.minCoeff() > 1e-14 * eig.maxCoeff())) local.rank_deficient = true;
    g.diagonal().array() += ridge;
    const Eigen::MatrixXd theta = Eigen::LDLT<Eigen::MatrixXd>(g).solve(r);
    SynthesisWeights w;
    w.matrix = theta.topRows(k).transpose();
    w.bias = theta.row(k).transpose();
    return w;
  };

  std::vector<double> scale(terms.size());
  for (std::size_t i = 0; i < terms.size(); ++i) scale[i] = terms[i].weight;
  SynthesisWeights current = start;
  if (objective == RefitObjective::kSquared) {
    current = solve(scale);
    local.iterations = 1;
  } else {
    // Each pass minimizes sum_i w_i ||e_i||^2 / ||e_i^prev||, whose fixed
    // point is the minimizer of sum_i w_i ||e_i||.
    double previous = local.objective_before;
    for (int it = 0; it < 50; ++it) {
      for (std::size_t i = 0; i < terms.size(); ++i) {
        const RefitSample& s = samples[terms[i].sample];
        const double n = level_residual_norm(transform, s.levels[terms[i].level], s.image, current);
        scale[i] = terms[i].weight / std::max(n, 1e-9);
      }
      SynthesisWeights next = solve(scale);
      const double value = refit_objective(transform, samples, objective, next);
      local.iterations = it + 1;
      if (!(value < previous)) break;
      current = std::move(next);
      const bool converged = previous - value <= 1e-12 * previous;
      previous = value;
      if (converged) break;
    }
  }
  local.objective_after = refit_objective(transform, samples, objective, current);
  if (report) *report = local;
  return current;
}

std::vector<std::pair<int, double>> default_refit_levels(int depth) {
  std::vector<std::pair<int, double>> out;
  for (int l = depth; l >= std::max(1, depth - 4); --l)
    out.push_back({l, l >= depth - 1 ? 100.0 : 1.0});
  return out;
}

}  // namespace ctc
