#pragma once

#include <Eigen/Dense>
#include <vector>

#include "json.hpp"
#include "skillrl/rng.hpp"

namespace skillrl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Dense feed-forward network: tanh hidden layers, linear output.
/// Owns its gradient buffers and Adam moments; callers accumulate gradients
/// with backward() and apply them with adam_step().
class Mlp {
 public:
  /// hidden may be empty, in which case the network is a single affine map.
  /// Hidden layers use an orthogonal-style init; the output layer is scaled
  /// by out_scale.
  Mlp(int in_dim, const std::vector<int>& hidden, int out_dim, Rng& rng,
      double out_scale = 0.01);

  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }

  Vec forward(const Vec& x) const;
  /// X: rows are samples. Returns N x out_dim.
  Mat forward_batch(const Mat& X) const;

  /// Accumulates parameter gradients for sum_n dY(n,:) . y(n,:).
  /// Recomputes the forward pass internally; X and dY must have equal rows.
  void backward(const Mat& X, const Mat& dY);

  void zero_grad();
  void adam_step(double lr);
  /// Discards gradient buffers and Adam moments (step count included), as if
  /// the network had never been stepped. Parameters are untouched.
  void reset_optimizer();

  std::size_t param_count() const;
  bool params_finite() const;

  int layer_count() const { return static_cast<int>(w_.size()); }
  /// Accumulated gradient buffers, exposed for optimizer diagnostics and
  /// gradient checking.
  const Mat& grad_w(int l) const { return gw_[static_cast<std::size_t>(l)]; }
  const Vec& grad_b(int l) const { return gb_[static_cast<std::size_t>(l)]; }

  /// Zeroes the output layer (weights and bias). Used by mixing functions
  /// so that softmax weights start exactly uniform.
  void zero_output_layer();

  /// Widens the output layer by `extra` rows with zero weights and the given
  /// bias. With a strongly negative bias a softmax head keeps the original
  /// outputs' distribution almost unchanged while making the new rows
  /// trainable.
  void append_outputs(int extra, double bias_init);

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

  bool params_equal(const Mlp& other) const;

 private:
  Mlp() = default;

  int in_dim_ = 0;
  int out_dim_ = 0;
  std::vector<Mat> w_;   // w_[l]: out x in
  std::vector<Vec> b_;
  std::vector<Mat> gw_;
  std::vector<Vec> gb_;
  std::vector<Mat> mw_, vw_;
  std::vector<Vec> mb_, vb_;
  long adam_t_ = 0;
};

/// Adam on a single parameter vector (used for log-std vectors).
class AdamVec {
 public:
  void step(Vec& param, const Vec& grad, double lr);
  void reset();

 private:
  Vec m_, v_;
  long t_ = 0;
};

}  // namespace skillrl
