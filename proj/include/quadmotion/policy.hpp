#pragma once

#include <utility>

#include "quadmotion/net.hpp"

namespace quadmotion {

/// How the action distribution's log-std is produced.
enum class PolicyStdMode {
  StateIndependent,  // trainable per-dimension parameter vector
  NetOutput,         // network emits 2*A values: [mean; log_std]
};

inline PolicyStdMode policy_std_mode_from_string(const std::string& s) {
  if (s == "state_independent") return PolicyStdMode::StateIndependent;
  if (s == "net_output") return PolicyStdMode::NetOutput;
  throw std::invalid_argument("unknown policy_std mode: " + s);
}

/// Diagonal-Gaussian policy over PD joint targets. Flat parameter layout is
/// [net params; log_std params] (the latter empty in NetOutput mode), so one
/// Adam state covers the whole policy.
class GaussianPolicy {
 public:
  GaussianPolicy() = default;

  GaussianPolicy(std::vector<int> net_dims, Activation act, int action_dim, PolicyStdMode mode,
                 double log_std_init)
      : net_(std::move(net_dims), act), action_dim_(action_dim), mode_(mode) {
    const int expected =
        mode_ == PolicyStdMode::NetOutput ? 2 * action_dim_ : action_dim_;
    if (net_.output_dim() != expected)
      throw std::invalid_argument("GaussianPolicy: net output dim must be " +
                                  std::to_string(expected));
    if (mode_ == PolicyStdMode::StateIndependent)
      log_std_ = Eigen::VectorXd::Constant(action_dim_, clamp_log_std(log_std_init));
  }

  int action_dim() const { return action_dim_; }
  int obs_dim() const { return net_.input_dim(); }
  PolicyStdMode std_mode() const { return mode_; }
  MlpNet& net() { return net_; }
  const MlpNet& net() const { return net_; }
  const Eigen::VectorXd& log_std_param() const { return log_std_; }

  void init_random(RngStream& rng, double final_layer_scale = 0.01) {
    net_.init_random(rng, final_layer_scale);
  }

  int param_count() const { return net_.param_count() + static_cast<int>(log_std_.size()); }

  Eigen::VectorXd flat_params() const {
    Eigen::VectorXd p(param_count());
    p.head(net_.param_count()) = net_.params();
    if (log_std_.size() > 0) p.tail(log_std_.size()) = log_std_;
    return p;
  }

  void set_flat_params(const Eigen::VectorXd& p) {
    if (p.size() != param_count())
      throw std::invalid_argument("GaussianPolicy::set_flat_params: size mismatch");
    net_.params() = p.head(net_.param_count());
    if (log_std_.size() > 0) {
      log_std_ = p.tail(log_std_.size());
      for (Eigen::Index i = 0; i < log_std_.size(); ++i)
        log_std_[i] = clamp_log_std(log_std_[i]);  // keep the parameter in range
    }
  }

  /// Distribution heads for a batch of observations (columns).
  void heads(const Eigen::MatrixXd& obs, Eigen::MatrixXd& mean, Eigen::MatrixXd& log_std,
             GradTape* tape = nullptr) const {
    const Eigen::MatrixXd out = net_.forward(obs, tape);
    if (mode_ == PolicyStdMode::NetOutput) {
      mean = out.topRows(action_dim_);
      log_std = out.bottomRows(action_dim_).array().min(kLogStdMax).max(kLogStdMin).matrix();
    } else {
      mean = out;
      log_std = log_std_.replicate(1, obs.cols());
    }
  }

  std::pair<Eigen::VectorXd, double> act(const Eigen::VectorXd& obs, RngStream& rng) const {
    Eigen::MatrixXd mean, log_std;
    heads(obs, mean, log_std);
    const Eigen::VectorXd a = DiagGaussian::sample(mean.col(0), log_std.col(0), rng);
    return {a, DiagGaussian::log_prob(a, mean.col(0), log_std.col(0))};
  }

  Eigen::VectorXd mean_action(const Eigen::VectorXd& obs) const {
    Eigen::MatrixXd mean, log_std;
    heads(obs, mean, log_std);
    return mean.col(0);
  }

  Eigen::VectorXd log_prob_batch(const Eigen::MatrixXd& actions, const Eigen::MatrixXd& mean,
                                 const Eigen::MatrixXd& log_std) const {
    Eigen::VectorXd lp(actions.cols());
    for (Eigen::Index i = 0; i < actions.cols(); ++i)
      lp[i] = DiagGaussian::log_prob(actions.col(i), mean.col(i), log_std.col(i));
    return lp;
  }

  /// Mean entropy of the batch distribution.
  double entropy(const Eigen::MatrixXd& log_std) const {
    const double c = 0.5 * std::log(2.0 * M_PI * M_E);
    return (log_std.array() + c).sum() / static_cast<double>(log_std.cols());
  }

  /// Backward through the heads: d_mean and d_log_std are dL/dmean and
  /// dL/dlog_std per sample. Returns the flat gradient aligned with
  /// flat_params(). In NetOutput mode out-of-range log-std rows get zero
  /// gradient (clamp subgradient).
  Eigen::VectorXd backward_heads(GradTape& tape, const Eigen::MatrixXd& d_mean,
                                 const Eigen::MatrixXd& d_log_std,
                                 const Eigen::MatrixXd& log_std) const {
    Eigen::VectorXd flat = Eigen::VectorXd::Zero(param_count());
    if (mode_ == PolicyStdMode::NetOutput) {
      Eigen::MatrixXd dout(2 * action_dim_, d_mean.cols());
      dout.topRows(action_dim_) = d_mean;
      Eigen::MatrixXd mask =
          ((log_std.array() > kLogStdMin) && (log_std.array() < kLogStdMax))
              .select(Eigen::MatrixXd::Ones(log_std.rows(), log_std.cols()),
                      Eigen::MatrixXd::Zero(log_std.rows(), log_std.cols()));
      dout.bottomRows(action_dim_) = d_log_std.cwiseProduct(mask);
      flat.head(net_.param_count()) = net_.backward(tape, dout).param_grad;
    } else {
      flat.head(net_.param_count()) = net_.backward(tape, d_mean).param_grad;
      flat.tail(action_dim_) = d_log_std.rowwise().sum();
    }
    return flat;
  }

  static double clamp_log_std(double v) { return std::min(std::max(v, kLogStdMin), kLogStdMax); }

  void save(CheckpointWriter& w, const std::string& prefix) const {
    w.add_net(prefix + ".net", net_);
    Eigen::VectorXd meta(2);
    meta << static_cast<double>(action_dim_), mode_ == PolicyStdMode::NetOutput ? 1.0 : 0.0;
    w.add_vector(prefix + ".meta", meta);
    if (log_std_.size() > 0) w.add_vector(prefix + ".log_std", log_std_);
  }

  static GaussianPolicy load(const CheckpointReader& r, const std::string& prefix) {
    const MlpNet& net = r.net(prefix + ".net");
    const Eigen::VectorXd& meta = r.vector(prefix + ".meta");
    GaussianPolicy p(net.dims(), net.activation(), static_cast<int>(meta[0]),
                     meta[1] > 0.5 ? PolicyStdMode::NetOutput : PolicyStdMode::StateIndependent,
                     0.0);
    p.net_.params() = net.params();
    if (r.has_vector(prefix + ".log_std"))
      p.log_std_ = r.vector(prefix + ".log_std");
    return p;
  }

 private:
  MlpNet net_;
  Eigen::VectorXd log_std_;
  int action_dim_ = 0;
  PolicyStdMode mode_ = PolicyStdMode::StateIndependent;
};

}  // namespace quadmotion
