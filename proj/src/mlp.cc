#include "ctc/mlp.h"

#include <cmath>

#include "ctc/error.h"

namespace ctc {

using MatMap = Eigen::Map<Eigen::MatrixXd>;
using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

Perceptron::Perceptron(MlpShape shape) : shape_(shape) {
  require(shape.inputs > 0 && shape.hidden > 0 && shape.outputs > 0,
          ErrorKind::kInvalidArgument, "perceptron dimensions must be positive");
  const std::size_t n = std::size_t(shape.hidden) * shape.inputs + shape.hidden +
                        std::size_t(shape.outputs) * shape.hidden + shape.outputs +
                        std::size_t(shape.outputs) * shape.inputs;
  params_.assign(n, 0.0);
}

Perceptron Perceptron::random(MlpShape shape, std::mt19937_64& rng) {
  Perceptron p(shape);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(shape.inputs)));
  for (std::size_t i = p.w1_offset(); i < p.b1_offset(); ++i) p.params_[i] = normal(rng);
  return p;
}

double& Perceptron::skip(int output, int input) {
  return params_[w3_offset() + std::size_t(input) * shape_.outputs + output];
}

double& Perceptron::output_bias(int output) { return params_[b2_offset() + output]; }

void Perceptron::forward(std::span<const double> x, std::span<double> y) const {
  const int in = shape_.inputs, hid = shape_.hidden, out = shape_.outputs;
  const double* w1 = params_.data() + w1_offset();
  const double* b1 = params_.data() + b1_offset();
  const double* w2 = params_.data() + w2_offset();
  const double* b2 = params_.data() + b2_offset();
  const double* w3 = params_.data() + w3_offset();
  for (int o = 0; o < out; ++o) y[o] = b2[o];
  for (int i = 0; i < in; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (int o = 0; o < out; ++o) y[o] += w3[std::size_t(i) * out + o] * xi;
  }
  std::vector<double> h(b1, b1 + hid);
  for (int i = 0; i < in; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* col = w1 + std::size_t(i) * hid;
    for (int j = 0; j < hid; ++j) h[j] += col[j] * xi;
  }
  for (int j = 0; j < hid; ++j) {
    const double a = std::tanh(h[j]);
    const double* col = w2 + std::size_t(j) * out;
    for (int o = 0; o < out; ++o) y[o] += col[o] * a;
  }
}

void Perceptron::forward_batch(const Eigen::MatrixXd& x, Cache& cache) const {
  const int in = shape_.inputs, hid = shape_.hidden, out = shape_.outputs;
  require(x.rows() == in, ErrorKind::kInvalidArgument, "perceptron input width mismatch");
  ConstMatMap w1(params_.data() + w1_offset(), hid, in);
  ConstVecMap b1(params_.data() + b1_offset(), hid);
  ConstMatMap w2(params_.data() + w2_offset(), out, hid);
  ConstVecMap b2(params_.data() + b2_offset(), out);
  ConstMatMap w3(params_.data() + w3_offset(), out, in);
  cache.input = x;
  cache.hidden = ((w1 * x).colwise() + b1).array().tanh().matrix();
  cache.output = (w2 * cache.hidden + w3 * x).colwise() + b2;
}

void Perceptron::backward_batch(const Cache& cache, const Eigen::MatrixXd& grad_output,
                                std::span<double> grad) const {
  const int in = shape_.inputs, hid = shape_.hidden, out = shape_.outputs;
  require(grad.size() == params_.size(), ErrorKind::kInvalidArgument,
          "gradient buffer size mismatch");
  ConstMatMap w2(params_.data() + w2_offset(), out, hid);
  MatMap gw1(grad.data() + w1_offset(), hid, in);
  Eigen::Map<Eigen::VectorXd> gb1(grad.data() + b1_offset(), hid);
  MatMap gw2(grad.data() + w2_offset(), out, hid);
  Eigen::Map<Eigen::VectorXd> gb2(grad.data() + b2_offset(), out);
  MatMap gw3(grad.data() + w3_offset(), out, in);

  gw2.noalias() += grad_output * cache.hidden.transpose();
  gb2 += grad_output.rowwise().sum();
  gw3.noalias() += grad_output * cache.input.transpose();
  const Eigen::MatrixXd dh =
      ((w2.transpose() * grad_output).array() * (1.0 - cache.hidden.array().square())).matrix();
  gw1.noalias() += dh * cache.input.transpose();
  gb1 += dh.rowwise().sum();
}

void Perceptron::round_to_float() {
  for (double& p : params_) p = static_cast<float>(p);
}

bool Perceptron::finite() const {
  for (double p : params_)
    if (!std::isfinite(p)) return false;
  return true;
}

Adam::Adam(std::size_t n, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

}  // namespace ctc
