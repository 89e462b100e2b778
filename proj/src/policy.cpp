#include "skillrl/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace skillrl {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * ln(2*pi)
constexpr double kLogStdInit = 0.0;
constexpr double kLogStdMin = -2.5;
constexpr double kLogStdMax = 0.7;
constexpr int kCheckpointVersion = 1;

void require_finite_moments(const GaussianMoments& m) {
  if (!m.mean.allFinite() || !m.var.allFinite() || (m.var.array() <= 0.0).any()) {
    throw std::runtime_error(
        "policy produced non-finite action distribution (corrupted parameters)");
  }
}

Vec softmax(const Vec& z) {
  const double zmax = z.maxCoeff();
  Vec e = (z.array() - zmax).exp();
  return e / e.sum();
}

}  // namespace

GaussianMoments poe_compose(const std::vector<GaussianMoments>& experts,
                            const Vec& weights) {
  if (experts.empty()) {
    throw std::invalid_argument("poe_compose: no experts");
  }
  if (weights.size() != static_cast<Eigen::Index>(experts.size())) {
    throw std::invalid_argument("poe_compose: weight count mismatch");
  }
  if ((weights.array() < 0.0).any()) {
    throw std::invalid_argument("poe_compose: negative weight");
  }
  if (weights.sum() <= 0.0) {
    throw std::invalid_argument("poe_compose: weights sum to zero");
  }
  const Eigen::Index dim = experts[0].mean.size();
  Vec precision = Vec::Zero(dim);
  Vec num = Vec::Zero(dim);
  for (std::size_t i = 0; i < experts.size(); ++i) {
    const auto& e = experts[i];
    if (e.mean.size() != dim || e.var.size() != dim) {
      throw std::invalid_argument("poe_compose: dimension mismatch");
    }
    if ((e.var.array() <= 0.0).any()) {
      throw std::invalid_argument("poe_compose: nonpositive variance");
    }
    const double w = weights(static_cast<Eigen::Index>(i));
    precision.array() += w / e.var.array();
    num.array() += w * e.mean.array() / e.var.array();
  }
  GaussianMoments out;
  out.mean = (num.array() / precision.array()).matrix();
  out.var = precision.array().inverse().matrix();
  return out;
}

double gaussian_log_prob(const GaussianMoments& m, const Vec& a) {
  const auto d = (a - m.mean).array();
  return (-kHalfLog2Pi - 0.5 * m.var.array().log() -
          0.5 * d.square() / m.var.array())
      .sum();
}

std::pair<Vec, double> act(const StochasticPolicy& policy, const Vec& state,
                           Rng& rng, bool deterministic) {
  GaussianMoments m = policy.moments(state);
  require_finite_moments(m);
  Vec a = m.mean;
  if (!deterministic) {
    for (Eigen::Index d = 0; d < a.size(); ++d) {
      a(d) += std::sqrt(m.var(d)) * rng.normal();
    }
  }
  return {a, gaussian_log_prob(m, a)};
}

// ---------------------------------------------------------------------------
// GaussianPolicy

GaussianPolicy::GaussianPolicy(int state_dim, int action_dim, Rng& rng,
                               const std::vector<int>& hidden)
    : mean_(state_dim, hidden, action_dim, rng) {
  log_std_ = Vec::Constant(action_dim, kLogStdInit);
  g_log_std_ = Vec::Zero(action_dim);
}

GaussianMoments GaussianPolicy::moments(const Vec& state) const {
  GaussianMoments m;
  m.mean = mean_.forward(state);
  m.var = (2.0 * log_std_.array()).exp().matrix();
  return m;
}

Vec GaussianPolicy::log_prob_batch(const Mat& states, const Mat& actions) const {
  const Mat mu = mean_.forward_batch(states);
  const Eigen::RowVectorXd var = (2.0 * log_std_.array()).exp().matrix().transpose();
  const Mat diff = actions - mu;
  const double base =
      -static_cast<double>(log_std_.size()) * kHalfLog2Pi - log_std_.sum();
  const Vec quad =
      (diff.array().square().rowwise() / var.array()).rowwise().sum().matrix();
  return Vec::Constant(states.rows(), base) - 0.5 * quad;
}

void GaussianPolicy::accumulate_log_prob_grad(const Mat& states, const Mat& actions,
                                              const Vec& coeff) {
  const Mat mu = mean_.forward_batch(states);
  const Eigen::RowVectorXd var = (2.0 * log_std_.array()).exp().matrix().transpose();
  const Mat diff = actions - mu;
  const Mat d_mu =
      ((diff.array().rowwise() / var.array()).colwise() * coeff.array()).matrix();
  mean_.backward(states, d_mu);
  const Mat sq = ((diff.array().square().rowwise() / var.array()) - 1.0).matrix();
  g_log_std_ +=
      (sq.array().colwise() * coeff.array()).colwise().sum().transpose().matrix();
}

void GaussianPolicy::zero_grad() {
  mean_.zero_grad();
  g_log_std_.setZero();
}

void GaussianPolicy::adam_step(double lr) {
  mean_.adam_step(lr);
  log_std_adam_.step(log_std_, g_log_std_, lr);
  log_std_ = log_std_.array().max(kLogStdMin).min(kLogStdMax).matrix();
}

void GaussianPolicy::reset_optimizer() {
  mean_.reset_optimizer();
  g_log_std_.setZero();
  log_std_adam_.reset();
}

std::size_t GaussianPolicy::trainable_param_count() const {
  return mean_.param_count() + static_cast<std::size_t>(log_std_.size());
}

std::unique_ptr<StochasticPolicy> GaussianPolicy::clone_policy() const {
  return std::make_unique<GaussianPolicy>(*this);
}

nlohmann::json GaussianPolicy::checkpoint() const {
  return nlohmann::json{
      {"format_version", kCheckpointVersion},
      {"kind", "gaussian_policy"},
      {"mean", mean_.to_json()},
      {"log_std",
       std::vector<double>(log_std_.data(), log_std_.data() + log_std_.size())}};
}

GaussianPolicy GaussianPolicy::from_checkpoint(const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint format_version");
  }
  if (j.at("kind").get<std::string>() != "gaussian_policy") {
    throw std::runtime_error("checkpoint kind is not gaussian_policy");
  }
  GaussianPolicy p(Mlp::from_json(j.at("mean")));
  const auto ls = j.at("log_std").get<std::vector<double>>();
  if (ls.size() != static_cast<std::size_t>(p.mean_.out_dim())) {
    throw std::runtime_error("checkpoint log_std size mismatch");
  }
  p.log_std_ = Eigen::Map<const Vec>(ls.data(), static_cast<Eigen::Index>(ls.size()));
  p.g_log_std_ = Vec::Zero(p.log_std_.size());
  return p;
}

bool GaussianPolicy::params_equal(const GaussianPolicy& other) const {
  return mean_.params_equal(other.mean_) && log_std_ == other.log_std_;
}

void GaussianPolicy::accumulate_external_grad(const Mat& states, const Mat& g_mean,
                                              const Vec& g_log_std) {
  mean_.backward(states, g_mean);
  g_log_std_ += g_log_std;
}

// ---------------------------------------------------------------------------
// ValueFunction

ValueFunction::ValueFunction(int state_dim, Rng& rng, const std::vector<int>& hidden)
    : net_(state_dim, hidden, 1, rng, 1.0) {}

double ValueFunction::value(const Vec& state) const { return net_.forward(state)(0); }

Vec ValueFunction::value_batch(const Mat& states) const {
  return net_.forward_batch(states).col(0);
}

void ValueFunction::accumulate_value_grad(const Mat& states, const Vec& coeff) {
  net_.backward(states, coeff);
}

void ValueFunction::zero_grad() { net_.zero_grad(); }

void ValueFunction::adam_step(double lr) { net_.adam_step(lr); }

nlohmann::json ValueFunction::checkpoint() const {
  return nlohmann::json{{"format_version", kCheckpointVersion},
                        {"kind", "value_function"},
                        {"net", net_.to_json()}};
}

ValueFunction ValueFunction::from_checkpoint(const nlohmann::json& j) {
  if (j.at("kind").get<std::string>() != "value_function") {
    throw std::runtime_error("checkpoint kind is not value_function");
  }
  return ValueFunction(Mlp::from_json(j.at("net")));
}

// ---------------------------------------------------------------------------
// MixerFunction

MixerFunction::MixerFunction(int state_dim, int num_experts, Rng& rng,
                             const std::vector<int>& hidden)
    : net_(state_dim, hidden, num_experts, rng, 1.0) {
  // Start from exactly uniform weights so a fresh mixture reproduces the
  // unweighted product of its experts.
  net_.zero_output_layer();
}

Vec MixerFunction::weights(const Vec& state) const {
  return softmax(net_.forward(state));
}

Mat MixerFunction::weights_batch(const Mat& states) const {
  Mat z = net_.forward_batch(states);
  for (Eigen::Index n = 0; n < z.rows(); ++n) {
    z.row(n) = softmax(z.row(n).transpose()).transpose();
  }
  return z;
}

nlohmann::json MixerFunction::checkpoint() const {
  return nlohmann::json{{"format_version", kCheckpointVersion},
                        {"kind", "mixer"},
                        {"net", net_.to_json()}};
}

MixerFunction MixerFunction::from_checkpoint(const nlohmann::json& j) {
  if (j.at("kind").get<std::string>() != "mixer") {
    throw std::runtime_error("checkpoint kind is not mixer");
  }
  return MixerFunction(Mlp::from_json(j.at("net")));
}

// ---------------------------------------------------------------------------
// MixturePolicy

MixturePolicy::MixturePolicy(std::vector<GaussianPolicy> experts,
                             std::vector<bool> frozen, MixerFunction mixer)
    : experts_(std::move(experts)),
      frozen_(std::move(frozen)),
      mixer_(std::move(mixer)) {
  if (experts_.empty()) {
    throw std::invalid_argument("MixturePolicy: no experts");
  }
  if (frozen_.size() != experts_.size()) {
    throw std::invalid_argument("MixturePolicy: frozen flag count mismatch");
  }
  if (mixer_.num_experts() != static_cast<int>(experts_.size())) {
    throw std::invalid_argument("MixturePolicy: mixer output size mismatch");
  }
  for (const auto& e : experts_) {
    if (e.state_dim() != experts_[0].state_dim() ||
        e.action_dim() != experts_[0].action_dim()) {
      throw std::invalid_argument("MixturePolicy: expert dimension mismatch");
    }
  }
}

int MixturePolicy::state_dim() const { return experts_[0].state_dim(); }
int MixturePolicy::action_dim() const { return experts_[0].action_dim(); }

GaussianMoments MixturePolicy::moments(const Vec& state) const {
  return mixture_moments(experts_, mixer_, state);
}

GaussianMoments mixture_moments(const std::vector<GaussianPolicy>& experts,
                                const MixerFunction& mixer, const Vec& state) {
  std::vector<GaussianMoments> ms;
  ms.reserve(experts.size());
  for (const auto& e : experts) ms.push_back(e.moments(state));
  return poe_compose(ms, mixer.weights(state));
}

namespace {

/// Batch forward through the product composition, keeping everything the
/// backward pass needs. Matrices are N x action_dim unless noted.
struct MixForward {
  Mat W;                // N x k mixer weights
  std::vector<Mat> mu;  // per expert, N x D means
  Mat lambda;           // k x D per-expert precisions
  Mat P;                // composed precision
  Mat Mc;               // composed mean
};

MixForward mix_forward(const std::vector<GaussianPolicy>& experts,
                       const MixerFunction& mixer, const Mat& states) {
  MixForward f;
  const int k = static_cast<int>(experts.size());
  const Eigen::Index n = states.rows();
  const Eigen::Index d = experts[0].log_std().size();
  f.W = mixer.weights_batch(states);
  f.lambda.resize(k, d);
  f.mu.reserve(experts.size());
  for (int i = 0; i < k; ++i) {
    const auto& e = experts[static_cast<std::size_t>(i)];
    f.mu.push_back(e.mean_batch(states));
    f.lambda.row(i) = (-2.0 * e.log_std().array()).exp().matrix().transpose();
  }
  f.P = Mat::Zero(n, d);
  Mat num = Mat::Zero(n, d);
  for (int i = 0; i < k; ++i) {
    const Mat scaled = (f.mu[static_cast<std::size_t>(i)].array().rowwise() *
                        f.lambda.row(i).array())
                           .matrix();
    f.P.noalias() += f.W.col(i) * f.lambda.row(i);
    num += (scaled.array().colwise() * f.W.col(i).array()).matrix();
  }
  f.Mc = (num.array() / f.P.array()).matrix();
  return f;
}

}  // namespace

Vec MixturePolicy::log_prob_batch(const Mat& states, const Mat& actions) const {
  return mixture_log_prob_batch(experts_, mixer_, states, actions);
}

Vec mixture_log_prob_batch(const std::vector<GaussianPolicy>& experts,
                           const MixerFunction& mixer, const Mat& states,
                           const Mat& actions) {
  const MixForward f = mix_forward(experts, mixer, states);
  const Mat diff = actions - f.Mc;
  // Per dim: -0.5 ln 2pi + 0.5 ln P - 0.5 diff^2 P.
  const Vec out = ((0.5 * f.P.array().log() -
                    0.5 * diff.array().square() * f.P.array())
                       .rowwise()
                       .sum() -
                   kHalfLog2Pi * static_cast<double>(f.P.cols()))
                      .matrix();
  return out;
}

void MixturePolicy::accumulate_log_prob_grad(const Mat& states, const Mat& actions,
                                             const Vec& coeff) {
  mixture_accumulate_log_prob_grad(experts_, frozen_, mixer_, states, actions, coeff);
}

void mixture_accumulate_log_prob_grad(std::vector<GaussianPolicy>& experts,
                                      const std::vector<bool>& frozen,
                                      MixerFunction& mixer, const Mat& states,
                                      const Mat& actions, const Vec& coeff) {
  const MixForward f = mix_forward(experts, mixer, states);
  const int k = static_cast<int>(experts.size());
  const Mat diff = actions - f.Mc;

  // Gradients of sum_n coeff_n logp_n wrt composed mean and precision,
  // then wrt the raw numerator (num = Mc * P) and P.
  const Mat g_mc = ((diff.array() * f.P.array()).colwise() * coeff.array()).matrix();
  const Mat g_p =
      (((0.5 * f.P.array().inverse() - 0.5 * diff.array().square()).colwise() *
        coeff.array()))
          .matrix();
  const Mat g_num = (g_mc.array() / f.P.array()).matrix();
  const Mat g_p_total = (g_p.array() - g_num.array() * f.Mc.array()).matrix();

  Mat g_w(states.rows(), k);
  for (int i = 0; i < k; ++i) {
    const auto lam = f.lambda.row(i).array();
    const Mat& mu_i = f.mu[static_cast<std::size_t>(i)];
    const Mat common = (g_num.array() * mu_i.array() + g_p_total.array()).matrix();
    g_w.col(i) = (common.array().rowwise() * lam).rowwise().sum().matrix();
    if (!frozen[static_cast<std::size_t>(i)]) {
      const Mat g_mu =
          ((g_num.array().colwise() * f.W.col(i).array()).rowwise() * lam).matrix();
      const Eigen::RowVectorXd col_sums =
          (common.array().colwise() * f.W.col(i).array()).colwise().sum().matrix();
      // d lambda / d log_std = -2 lambda
      const Vec g_log_std =
          (col_sums.array() * (-2.0) * lam).matrix().transpose();
      experts[static_cast<std::size_t>(i)].accumulate_external_grad(states, g_mu,
                                                                     g_log_std);
    }
  }

  // Softmax backward into mixer logits.
  Mat g_z(states.rows(), k);
  for (Eigen::Index n = 0; n < states.rows(); ++n) {
    const double dot = g_w.row(n).dot(f.W.row(n));
    g_z.row(n) = (f.W.row(n).array() * (g_w.row(n).array() - dot)).matrix();
  }
  mixer.net().backward(states, g_z);
}

void MixturePolicy::zero_grad() {
  for (auto& e : experts_) e.zero_grad();
  mixer_.net().zero_grad();
}

void MixturePolicy::adam_step(double lr) {
  for (std::size_t i = 0; i < experts_.size(); ++i) {
    if (!frozen_[i]) experts_[i].adam_step(lr);
  }
  mixer_.net().adam_step(lr);
}

void MixturePolicy::reset_optimizer() {
  for (auto& e : experts_) e.reset_optimizer();
  mixer_.net().reset_optimizer();
}

std::size_t MixturePolicy::trainable_param_count() const {
  std::size_t n = mixer_.net().param_count();
  for (std::size_t i = 0; i < experts_.size(); ++i) {
    if (!frozen_[i]) n += experts_[i].trainable_param_count();
  }
  return n;
}

std::unique_ptr<StochasticPolicy> MixturePolicy::clone_policy() const {
  return std::make_unique<MixturePolicy>(*this);
}

nlohmann::json MixturePolicy::checkpoint() const {
  nlohmann::json js_experts = nlohmann::json::array();
  for (const auto& e : experts_) js_experts.push_back(e.checkpoint());
  return nlohmann::json{{"format_version", kCheckpointVersion},
                        {"kind", "mixture_policy"},
                        {"experts", js_experts},
                        {"frozen", frozen_},
                        {"mixer", mixer_.checkpoint()}};
}

std::pair<Vec, double> mixture_act(const std::vector<GaussianPolicy>& experts,
                                   const MixerFunction& mixer, const Vec& state,
                                   Rng& rng, bool deterministic) {
  std::vector<GaussianMoments> ms;
  ms.reserve(experts.size());
  for (const auto& e : experts) ms.push_back(e.moments(state));
  GaussianMoments m = poe_compose(ms, mixer.weights(state));
  require_finite_moments(m);
  Vec a = m.mean;
  if (!deterministic) {
    for (Eigen::Index d = 0; d < a.size(); ++d) {
      a(d) += std::sqrt(m.var(d)) * rng.normal();
    }
  }
  return {a, gaussian_log_prob(m, a)};
}

std::string checkpoint_string(const StochasticPolicy& policy) {
  return policy.checkpoint().dump();
}

GaussianPolicy load_gaussian_checkpoint(const nlohmann::json& j) {
  return GaussianPolicy::from_checkpoint(j);
}

}  // namespace skillrl
