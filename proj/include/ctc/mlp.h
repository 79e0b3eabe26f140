#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace ctc {

struct MlpShape {
  int inputs = 0;
  int hidden = 0;
  int outputs = 0;

  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

// y = W2 tanh(W1 x + b1) + W3 x + b2. The linear skip path lets a model
// start out as an exact function of its inputs and learn a correction.
class Perceptron {
 public:
  Perceptron() = default;
  explicit Perceptron(MlpShape shape);

  // Small random hidden weights; output weights and skip path zero.
  static Perceptron random(MlpShape shape, std::mt19937_64& rng);

  const MlpShape& shape() const { return shape_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  double& skip(int output, int input);
  double& output_bias(int output);

  // Deterministic scalar evaluation used at inference time.
  void forward(std::span<const double> x, std::span<double> y) const;

  struct Cache {
    Eigen::MatrixXd input;   // inputs x N
    Eigen::MatrixXd hidden;  // hidden x N, post-activation
    Eigen::MatrixXd output;  // outputs x N
  };
  void forward_batch(const Eigen::MatrixXd& x, Cache& cache) const;
  // Accumulates d(loss)/d(params) into grad given d(loss)/d(output).
  void backward_batch(const Cache& cache, const Eigen::MatrixXd& grad_output,
                      std::span<double> grad) const;

  void round_to_float();
  bool finite() const;

  friend bool operator==(const Perceptron&, const Perceptron&) = default;

 private:
  std::size_t w1_offset() const { return 0; }
  std::size_t b1_offset() const { return w1_offset() + std::size_t(shape_.hidden) * shape_.inputs; }
  std::size_t w2_offset() const { return b1_offset() + shape_.hidden; }
  std::size_t b2_offset() const { return w2_offset() + std::size_t(shape_.outputs) * shape_.hidden; }
  std::size_t w3_offset() const { return b2_offset() + shape_.outputs; }

  MlpShape shape_;
  std::vector<double> params_;
};

class Adam {
 public:
  Adam(std::size_t n, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8);
  void step(std::span<double> params, std::span<const double> grad);
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace ctc
