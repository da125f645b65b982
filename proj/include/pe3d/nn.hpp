// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <pe3d/rng.hpp>

#include <Eigen/Core>

#include <cstdint>

namespace pe3d {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// y = W x + b. Batches are column-major: one sample per column.
struct Linear {
  MatrixXd weight;  // out x in
  VectorXd bias;    // out

  /// Uniform in [-1/sqrt(in), 1/sqrt(in)] for weights and biases.
  static Linear init(int in, int out, Rng& rng);
  static Linear zeros(int in, int out);

  int in() const { return static_cast<int>(weight.cols()); }
  int out() const { return static_cast<int>(weight.rows()); }

  MatrixXd forward(const MatrixXd& x) const;

  /// Accumulates parameter gradients into `grad` and returns dL/dx.
  MatrixXd backward(const MatrixXd& x, const MatrixXd& dy, Linear& grad) const;
  /// Parameter gradients only, for inputs that are constants.
  void backward_params(const MatrixXd& x, const MatrixXd& dy, Linear& grad) const;

  void axpy(double alpha, const Linear& other);
  void set_zero();
  Linear zeros_like() const { return zeros(in(), out()); }
  bool all_finite() const { return weight.allFinite() && bias.allFinite(); }
};

/// Two linear layers with a ReLU in between.
struct Mlp {
  Linear fc1;
  Linear fc2;
  std::uint64_t seed = 0;

  static Mlp init(int in, int hidden, int out, std::uint64_t seed);

  int in() const { return fc1.in(); }
  int hidden() const { return fc1.out(); }
  int out() const { return fc2.out(); }

  struct Cache {
    MatrixXd pre;     // hidden pre-activation
    MatrixXd hidden;  // after ReLU
  };

  MatrixXd forward(const MatrixXd& x, Cache* cache = nullptr) const;
  VectorXd forward(const VectorXd& x) const;

  /// Backward through both layers. Returns dL/dx unless `need_input_grad` is
  /// false, in which case an empty matrix is returned.
  MatrixXd backward(const MatrixXd& x, const Cache& cache, const MatrixXd& dy, Mlp& grad,
                    bool need_input_grad = true) const;

  void axpy(double alpha, const Mlp& other);
  void set_zero();
  Mlp zeros_like() const;
  bool all_finite() const { return fc1.all_finite() && fc2.all_finite(); }
};

}  // namespace pe3d
