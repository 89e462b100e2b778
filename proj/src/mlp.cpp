#include "skillrl/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace skillrl {

namespace {

// Orthogonal-style init: QR of a Gaussian matrix, rows/cols truncated to
// shape, scaled by gain. Sign-fixed so the factorization is unique.
Mat orthogonal(int rows, int cols, Rng& rng, double gain) {
  const int n = std::max(rows, cols);
  Mat g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ();
  Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  return gain * q.topLeftCorner(rows, cols);
}

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

}  // namespace

Mlp::Mlp(int in_dim, const std::vector<int>& hidden, int out_dim, Rng& rng,
         double out_scale)
    : in_dim_(in_dim), out_dim_(out_dim) {
  std::vector<int> dims;
  dims.push_back(in_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out_dim);
  const int layers = static_cast<int>(dims.size()) - 1;
  for (int l = 0; l < layers; ++l) {
    const bool last = (l == layers - 1);
    const double gain = last ? out_scale : std::sqrt(2.0);
    w_.push_back(orthogonal(dims[l + 1], dims[l], rng, gain));
    b_.push_back(Vec::Zero(dims[l + 1]));
  }
  zero_grad();
  for (std::size_t l = 0; l < w_.size(); ++l) {
    mw_.push_back(Mat::Zero(w_[l].rows(), w_[l].cols()));
    vw_.push_back(Mat::Zero(w_[l].rows(), w_[l].cols()));
    mb_.push_back(Vec::Zero(b_[l].size()));
    vb_.push_back(Vec::Zero(b_[l].size()));
  }
}

Vec Mlp::forward(const Vec& x) const {
  Vec h = x;
  for (std::size_t l = 0; l + 1 < w_.size(); ++l) {
    h = (w_[l] * h + b_[l]).array().tanh();
  }
  return w_.back() * h + b_.back();
}

Mat Mlp::forward_batch(const Mat& X) const {
  Mat h = X;
  for (std::size_t l = 0; l + 1 < w_.size(); ++l) {
    h = ((h * w_[l].transpose()).rowwise() + b_[l].transpose()).array().tanh();
  }
  return (h * w_.back().transpose()).rowwise() + b_.back().transpose();
}

void Mlp::backward(const Mat& X, const Mat& dY) {
  if (X.rows() != dY.rows()) {
    throw std::invalid_argument("Mlp::backward: row count mismatch");
  }
  // Forward pass, keeping post-activation values per layer.
  std::vector<Mat> acts;
  acts.push_back(X);
  for (std::size_t l = 0; l + 1 < w_.size(); ++l) {
    acts.push_back(((acts.back() * w_[l].transpose()).rowwise() + b_[l].transpose())
                       .array()
                       .tanh()
                       .matrix());
  }
  Mat delta = dY;
  for (int l = static_cast<int>(w_.size()) - 1; l >= 0; --l) {
    gw_[l].noalias() += delta.transpose() * acts[l];
    gb_[l] += delta.colwise().sum().transpose();
    if (l > 0) {
      Mat back = delta * w_[l];
      delta = back.array() * (1.0 - acts[l].array().square());
    }
  }
}

void Mlp::zero_grad() {
  gw_.clear();
  gb_.clear();
  for (std::size_t l = 0; l < w_.size(); ++l) {
    gw_.push_back(Mat::Zero(w_[l].rows(), w_[l].cols()));
    gb_.push_back(Vec::Zero(b_[l].size()));
  }
}

void Mlp::adam_step(double lr) {
  ++adam_t_;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(adam_t_));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(adam_t_));
  for (std::size_t l = 0; l < w_.size(); ++l) {
    mw_[l] = kAdamBeta1 * mw_[l] + (1.0 - kAdamBeta1) * gw_[l];
    vw_[l] = kAdamBeta2 * vw_[l].array() + (1.0 - kAdamBeta2) * gw_[l].array().square();
    w_[l].array() -= lr * (mw_[l].array() / c1) /
                     ((vw_[l].array() / c2).sqrt() + kAdamEps);
    mb_[l] = kAdamBeta1 * mb_[l] + (1.0 - kAdamBeta1) * gb_[l];
    vb_[l] = kAdamBeta2 * vb_[l].array() + (1.0 - kAdamBeta2) * gb_[l].array().square();
    b_[l].array() -= lr * (mb_[l].array() / c1) /
                     ((vb_[l].array() / c2).sqrt() + kAdamEps);
  }
}

void Mlp::reset_optimizer() {
  zero_grad();
  for (std::size_t l = 0; l < w_.size(); ++l) {
    mw_[l].setZero();
    vw_[l].setZero();
    mb_[l].setZero();
    vb_[l].setZero();
  }
  adam_t_ = 0;
}

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    n += static_cast<std::size_t>(w_[l].size()) + static_cast<std::size_t>(b_[l].size());
  }
  return n;
}

bool Mlp::params_finite() const {
  for (std::size_t l = 0; l < w_.size(); ++l) {
    if (!w_[l].allFinite() || !b_[l].allFinite()) return false;
  }
  return true;
}

void Mlp::zero_output_layer() {
  w_.back().setZero();
  b_.back().setZero();
}

void Mlp::append_outputs(int extra, double bias_init) {
  if (extra <= 0) throw std::invalid_argument("append_outputs: extra must be positive");
  const auto grow_mat = [extra](Mat& m) {
    Mat g = Mat::Zero(m.rows() + extra, m.cols());
    g.topRows(m.rows()) = m;
    m = std::move(g);
  };
  const auto grow_vec = [extra](Vec& v, double fill) {
    Vec g = Vec::Constant(v.size() + extra, fill);
    g.head(v.size()) = v;
    v = std::move(g);
  };
  grow_mat(w_.back());
  grow_vec(b_.back(), bias_init);
  grow_mat(gw_.back());
  grow_vec(gb_.back(), 0.0);
  grow_mat(mw_.back());
  grow_vec(mb_.back(), 0.0);
  grow_mat(vw_.back());
  grow_vec(vb_.back(), 0.0);
  out_dim_ += extra;
}

nlohmann::json Mlp::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < w_.size(); ++l) {
    nlohmann::json jl;
    jl["rows"] = w_[l].rows();
    jl["cols"] = w_[l].cols();
    std::vector<double> wflat(w_[l].size());
    // Row-major export regardless of Eigen's storage order.
    for (int r = 0; r < w_[l].rows(); ++r)
      for (int c = 0; c < w_[l].cols(); ++c)
        wflat[static_cast<std::size_t>(r) * w_[l].cols() + c] = w_[l](r, c);
    jl["w"] = wflat;
    jl["b"] = std::vector<double>(b_[l].data(), b_[l].data() + b_[l].size());
    layers.push_back(jl);
  }
  return nlohmann::json{{"in", in_dim_}, {"out", out_dim_}, {"layers", layers}};
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  Mlp net;
  net.in_dim_ = j.at("in").get<int>();
  net.out_dim_ = j.at("out").get<int>();
  for (const auto& jl : j.at("layers")) {
    const int rows = jl.at("rows").get<int>();
    const int cols = jl.at("cols").get<int>();
    const auto wflat = jl.at("w").get<std::vector<double>>();
    const auto bvec = jl.at("b").get<std::vector<double>>();
    if (wflat.size() != static_cast<std::size_t>(rows) * cols ||
        bvec.size() != static_cast<std::size_t>(rows)) {
      throw std::runtime_error("Mlp::from_json: shape mismatch");
    }
    Mat w(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        w(r, c) = wflat[static_cast<std::size_t>(r) * cols + c];
    net.w_.push_back(std::move(w));
    net.b_.push_back(Eigen::Map<const Vec>(bvec.data(), rows));
  }
  net.zero_grad();
  for (std::size_t l = 0; l < net.w_.size(); ++l) {
    net.mw_.push_back(Mat::Zero(net.w_[l].rows(), net.w_[l].cols()));
    net.vw_.push_back(Mat::Zero(net.w_[l].rows(), net.w_[l].cols()));
    net.mb_.push_back(Vec::Zero(net.b_[l].size()));
    net.vb_.push_back(Vec::Zero(net.b_[l].size()));
  }
  return net;
}

bool Mlp::params_equal(const Mlp& other) const {
  if (w_.size() != other.w_.size()) return false;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    if (w_[l].rows() != other.w_[l].rows() || w_[l].cols() != other.w_[l].cols())
      return false;
    if (w_[l] != other.w_[l] || b_[l] != other.b_[l]) return false;
  }
  return true;
}

void AdamVec::step(Vec& param, const Vec& grad, double lr) {
  if (t_ == 0) {
    m_ = Vec::Zero(param.size());
    v_ = Vec::Zero(param.size());
  }
  ++t_;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t_));
  m_ = kAdamBeta1 * m_ + (1.0 - kAdamBeta1) * grad;
  v_ = kAdamBeta2 * v_.array() + (1.0 - kAdamBeta2) * grad.array().square();
  param.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + kAdamEps);
}

void AdamVec::reset() { t_ = 0; }

}  // namespace skillrl
