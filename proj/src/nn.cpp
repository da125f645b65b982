// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/error.hpp>
#include <pe3d/nn.hpp>

#include <cmath>

namespace pe3d {

Linear Linear::init(int in, int out, Rng& rng) {
  if (in <= 0 || out <= 0) throw Error(ErrorCode::kInvalidArgument, "layer sizes must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight.resize(out, in);
  l.bias.resize(out);
  // Row-major fill so the draw order does not depend on Eigen's storage order.
  for (int r = 0; r < out; ++r) {
    for (int c = 0; c < in; ++c) l.weight(r, c) = rng.uniform(-bound, bound);
  }
  for (int r = 0; r < out; ++r) l.bias(r) = rng.uniform(-bound, bound);
  return l;
}

Linear Linear::zeros(int in, int out) {
  return Linear{MatrixXd::Zero(out, in), VectorXd::Zero(out)};
}

MatrixXd Linear::forward(const MatrixXd& x) const {
  if (x.rows() != weight.cols()) throw Error(ErrorCode::kShapeMismatch, "linear input width mismatch");
  MatrixXd y = weight * x;
  y.colwise() += bias;
  return y;
}

void Linear::backward_params(const MatrixXd& x, const MatrixXd& dy, Linear& grad) const {
  grad.weight.noalias() += dy * x.transpose();
  grad.bias += dy.rowwise().sum();
}

MatrixXd Linear::backward(const MatrixXd& x, const MatrixXd& dy, Linear& grad) const {
  backward_params(x, dy, grad);
  return weight.transpose() * dy;
}

void Linear::axpy(double alpha, const Linear& other) {
  weight += alpha * other.weight;
  bias += alpha * other.bias;
}

void Linear::set_zero() {
  weight.setZero();
  bias.setZero();
}

Mlp Mlp::init(int in, int hidden, int out, std::uint64_t seed) {
  Rng rng(seed);
  Mlp m;
  m.fc1 = Linear::init(in, hidden, rng);
  m.fc2 = Linear::init(hidden, out, rng);
  m.seed = seed;
  return m;
}

MatrixXd Mlp::forward(const MatrixXd& x, Cache* cache) const {
  MatrixXd pre = fc1.forward(x);
  MatrixXd h = pre.cwiseMax(0.0);
  MatrixXd y = fc2.forward(h);
  if (cache) {
    cache->pre = std::move(pre);
    cache->hidden = std::move(h);
  }
  return y;
}

VectorXd Mlp::forward(const VectorXd& x) const {
  if (x.size() != fc1.weight.cols()) throw Error(ErrorCode::kShapeMismatch, "mlp input width mismatch");
  VectorXd h = fc1.weight * x + fc1.bias;
  h = h.cwiseMax(0.0);
  return fc2.weight * h + fc2.bias;
}

MatrixXd Mlp::backward(const MatrixXd& x, const Cache& cache, const MatrixXd& dy, Mlp& grad,
                       bool need_input_grad) const {
  MatrixXd dh = fc2.backward(cache.hidden, dy, grad.fc2);
  dh = (cache.pre.array() > 0.0).select(dh, 0.0);
  if (!need_input_grad) {
    fc1.backward_params(x, dh, grad.fc1);
    return {};
  }
  return fc1.backward(x, dh, grad.fc1);
}

void Mlp::axpy(double alpha, const Mlp& other) {
  fc1.axpy(alpha, other.fc1);
  fc2.axpy(alpha, other.fc2);
}

void Mlp::set_zero() {
  fc1.set_zero();
  fc2.set_zero();
}

Mlp Mlp::zeros_like() const {
  Mlp m;
  m.fc1 = fc1.zeros_like();
  m.fc2 = fc2.zeros_like();
  m.seed = seed;
  return m;
}

}  // namespace pe3d
