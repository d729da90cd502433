#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "quadmotion/net.hpp"
#include "quadmotion/parallel.hpp"
#include "quadmotion/policy.hpp"
#include "quadmotion/sim.hpp"

namespace quadmotion {

struct PpoHyper {
  double clip_eps = 0.2;
  double gamma = 0.99;
  double lam = 0.95;
  int n_epochs = 5;
  int n_minibatches = 4;
  double value_coeff = 1.0;
  double entropy_coeff = 0.005;
  double max_grad_norm = 1.0;
  double lr_actor = 1e-3;
  double lr_critic = 1e-3;

  void validate() const {
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw std::invalid_argument("PpoHyper: clip_eps");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("PpoHyper: gamma");
    if (!(lam > 0.0 && lam <= 1.0)) throw std::invalid_argument("PpoHyper: lambda");
    if (n_epochs < 1 || n_minibatches < 1) throw std::invalid_argument("PpoHyper: epochs/minibatches");
  }
};

/// On-policy transition storage for N_envs x N_steps; column index is
/// env * n_steps + step. Cleared after every update.
struct RolloutBuffer {
  int n_envs = 0, n_steps = 0;
  Eigen::MatrixXd actor_obs, critic_obs, actions;
  Eigen::VectorXd rewards, dones, values, log_probs;
  Eigen::VectorXd advantages, returns;
  bool filled = false;

  RolloutBuffer() = default;
  RolloutBuffer(int envs, int steps, int actor_dim, int critic_dim, int action_dim)
      : n_envs(envs), n_steps(steps) {
    const int n = envs * steps;
    actor_obs.resize(actor_dim, n);
    critic_obs.resize(critic_dim, n);
    actions.resize(action_dim, n);
    rewards.resize(n);
    dones.resize(n);
    values.resize(n);
    log_probs.resize(n);
    advantages.resize(n);
    returns.resize(n);
  }

  int size() const { return n_envs * n_steps; }
  int col(int env, int step) const { return env * n_steps + step; }
  void clear() { filled = false; }
};

struct CompletedReturn {
  double G = 0.0;
  int motion_id = -1;
  int env_index = -1;
};

/// Running episodic return per env plus the list of completed returns since
/// the last refresh (incomplete episodes are discarded on refresh).
struct EpisodeReturns {
  Eigen::VectorXd running;
  std::vector<CompletedReturn> completed;

  void reset(int n_envs) {
    running = Eigen::VectorXd::Zero(n_envs);
    completed.clear();
  }
};

struct RolloutStats {
  double mean_r_track = 0.0;
  double mean_reward = 0.0;
  int episodes_completed = 0;
};

/// Affine map from normalized policy actions to PD joint targets.
struct ActionMap {
  JointVec center = JointVec::Zero();
  double scale = 1.0;

  JointVec apply(const Eigen::VectorXd& raw) const {
    if (raw.size() != kNumJoints) throw std::invalid_argument("ActionMap: action dim mismatch");
    return center + scale * JointVec(raw);
  }
};

/// Collects exactly n_steps transitions per environment. Terminated
/// environments auto-reset to frame 0 of their assigned motion. Environments
/// are stepped in parallel; each one only touches its own state and rng
/// streams, so the result is independent of num_threads.
inline RolloutStats collect_rollout(std::vector<QuadEnv>& envs, const GaussianPolicy& policy,
                                    const MlpNet& critic, RolloutBuffer& buffer,
                                    EpisodeReturns& returns, const ActionMap& action_map = {},
                                    int num_threads = 1) {
  const int n_envs = static_cast<int>(envs.size());
  if (n_envs == 0) throw std::invalid_argument("collect_rollout: no environments");
  if (buffer.n_envs != n_envs) throw std::invalid_argument("collect_rollout: buffer env count");
  if (buffer.filled) throw std::logic_error("collect_rollout: buffer not cleared");
  if (returns.running.size() != n_envs) throw std::invalid_argument("collect_rollout: returns size");

  std::vector<std::vector<CompletedReturn>> completed(static_cast<std::size_t>(n_envs));
  std::vector<double> track_sum(static_cast<std::size_t>(n_envs), 0.0);
  std::vector<double> reward_sum(static_cast<std::size_t>(n_envs), 0.0);

  parallel_for(n_envs, num_threads, [&](int e) {
    QuadEnv& env = envs[static_cast<std::size_t>(e)];
    double G = returns.running[e];
    for (int k = 0; k < buffer.n_steps; ++k) {
      const int idx = buffer.col(e, k);
      const ObsSplit& obs = env.obs();
      if (!obs.actor.allFinite() || !obs.critic.allFinite())
        throw SimError("collect_rollout: non-finite observation in env " + std::to_string(e));
      const auto [action, logp] = policy.act(obs.actor, env.action_rng());
      const double value = critic.forward(obs.critic)(0, 0);

      buffer.actor_obs.col(idx) = obs.actor;
      buffer.critic_obs.col(idx) = obs.critic;
      buffer.actions.col(idx) = action;  // raw policy-space action

      const QuadEnv::StepOut out = env.step(action_map.apply(action));
      if (!std::isfinite(out.reward.total))
        throw SimError("collect_rollout: non-finite reward in env " + std::to_string(e) +
                       " at step " + std::to_string(k));
      buffer.rewards[idx] = out.reward.total;
      buffer.dones[idx] = out.terminated ? 1.0 : 0.0;
      buffer.values[idx] = value;
      buffer.log_probs[idx] = logp;

      G += out.reward.total;
      track_sum[static_cast<std::size_t>(e)] += out.reward.r_track;
      reward_sum[static_cast<std::size_t>(e)] += out.reward.total;
      if (out.terminated) {
        completed[static_cast<std::size_t>(e)].push_back({G, env.motion_id(), e});
        G = 0.0;
        env.reset();
      }
    }
    returns.running[e] = G;
  });

  // merge in env order so the result is independent of thread scheduling
  RolloutStats stats;
  for (int e = 0; e < n_envs; ++e) {
    for (const CompletedReturn& c : completed[static_cast<std::size_t>(e)])
      returns.completed.push_back(c);
    stats.mean_r_track += track_sum[static_cast<std::size_t>(e)];
    stats.mean_reward += reward_sum[static_cast<std::size_t>(e)];
    stats.episodes_completed += static_cast<int>(completed[static_cast<std::size_t>(e)].size());
  }
  const double n = static_cast<double>(buffer.size());
  stats.mean_r_track /= n;
  stats.mean_reward /= n;
  buffer.filled = true;
  return stats;
}

/// Critic values for the observation following the last stored transition.
inline Eigen::VectorXd bootstrap_values(const std::vector<QuadEnv>& envs, const MlpNet& critic) {
  if (envs.empty()) return Eigen::VectorXd();
  Eigen::MatrixXd obs(envs.front().obs().critic.size(), static_cast<Eigen::Index>(envs.size()));
  for (std::size_t e = 0; e < envs.size(); ++e) obs.col(static_cast<Eigen::Index>(e)) = envs[e].obs().critic;
  return critic.forward(obs).row(0).transpose();
}

/// GAE(lambda) with done masking; return targets are advantages + values.
inline void compute_gae(RolloutBuffer& buffer, const Eigen::VectorXd& bootstrap, double gamma,
                        double lam) {
  if (!buffer.filled) throw std::logic_error("compute_gae: buffer not filled");
  if (bootstrap.size() != buffer.n_envs)
    throw std::invalid_argument("compute_gae: bootstrap length mismatch");
  for (int e = 0; e < buffer.n_envs; ++e) {
    double adv = 0.0;
    for (int k = buffer.n_steps - 1; k >= 0; --k) {
      const int idx = buffer.col(e, k);
      const double nonterminal = 1.0 - buffer.dones[idx];
      const double next_value =
          (k == buffer.n_steps - 1) ? bootstrap[e] : buffer.values[buffer.col(e, k + 1)];
      const double delta =
          buffer.rewards[idx] + gamma * next_value * nonterminal - buffer.values[idx];
      adv = delta + gamma * lam * nonterminal * adv;
      buffer.advantages[idx] = adv;
      buffer.returns[idx] = adv + buffer.values[idx];
    }
  }
}

/// Per-sample clipped-surrogate contribution -min(rho*A, clip(rho)*A).
inline double clipped_surrogate(double ratio, double advantage, double clip_eps) {
  const double clipped = std::min(std::max(ratio, 1.0 - clip_eps), 1.0 + clip_eps);
  return -std::min(ratio * advantage, clipped * advantage);
}

struct UpdateStats {
  double actor_loss = 0.0;   // clipped surrogate (without the entropy bonus)
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

/// PPO update: n_epochs passes over shuffled minibatches, asymmetric
/// actor/critic optimizers, global gradient-norm clipping. Advantages are
/// normalized over the whole batch before the first epoch.
inline UpdateStats ppo_update(GaussianPolicy& policy, MlpNet& critic, AdamState& opt_actor,
                              AdamState& opt_critic, RolloutBuffer& buffer, const PpoHyper& hyper,
                              RngStream& shuffle_rng) {
  hyper.validate();
  if (!buffer.filled) throw std::logic_error("ppo_update: buffer not filled");
  const int n = buffer.size();

  // normalize advantages: mean 0, std 1
  const double mean = buffer.advantages.mean();
  const double var = (buffer.advantages.array() - mean).square().sum() / n;
  const double stddev = std::sqrt(std::max(var, 0.0));
  buffer.advantages = (buffer.advantages.array() - mean) / (stddev + 1e-8);

  UpdateStats stats;
  int n_batches = 0;

  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);

  const int action_dim = policy.action_dim();
  for (int epoch = 0; epoch < hyper.n_epochs; ++epoch) {
    shuffle_rng.shuffle(perm);
    int cursor = 0;
    for (int mb = 0; mb < hyper.n_minibatches; ++mb) {
      const int remaining = n - cursor;
      const int batches_left = hyper.n_minibatches - mb;
      const int bsize = remaining / batches_left + (remaining % batches_left > 0 ? 1 : 0);
      if (bsize == 0) continue;

      Eigen::MatrixXd mb_actor_obs(buffer.actor_obs.rows(), bsize);
      Eigen::MatrixXd mb_critic_obs(buffer.critic_obs.rows(), bsize);
      Eigen::MatrixXd mb_actions(action_dim, bsize);
      Eigen::VectorXd mb_adv(bsize), mb_ret(bsize), mb_logp_old(bsize);
      for (int i = 0; i < bsize; ++i) {
        const int idx = perm[static_cast<std::size_t>(cursor + i)];
        mb_actor_obs.col(i) = buffer.actor_obs.col(idx);
        mb_critic_obs.col(i) = buffer.critic_obs.col(idx);
        mb_actions.col(i) = buffer.actions.col(idx);
        mb_adv[i] = buffer.advantages[idx];
        mb_ret[i] = buffer.returns[idx];
        mb_logp_old[i] = buffer.log_probs[idx];
      }
      cursor += bsize;

      // ---- actor ----
      GradTape tape;
      Eigen::MatrixXd mean_out, log_std;
      policy.heads(mb_actor_obs, mean_out, log_std, &tape);
      const Eigen::VectorXd logp_new = policy.log_prob_batch(mb_actions, mean_out, log_std);
      const Eigen::ArrayXd ratio = (logp_new - mb_logp_old).array().exp();

      double surrogate = 0.0;
      double clipped_count = 0.0;
      Eigen::VectorXd dlogp(bsize);
      for (int i = 0; i < bsize; ++i) {
        const double a = mb_adv[i];
        const double r = ratio[i];
        surrogate += clipped_surrogate(r, a, hyper.clip_eps);
        const double r_clip = std::min(std::max(r, 1.0 - hyper.clip_eps), 1.0 + hyper.clip_eps);
        // derivative of -min(r A, clip(r) A): active only on the unclipped branch
        dlogp[i] = (r * a <= r_clip * a) ? -a * r / bsize : 0.0;
        if (std::abs(r - 1.0) > hyper.clip_eps) clipped_count += 1.0;
      }
      surrogate /= bsize;
      const double entropy = policy.entropy(log_std);
      const double actor_loss = surrogate - hyper.entropy_coeff * entropy;

      GradTape vtape;
      const Eigen::VectorXd v = critic.forward(mb_critic_obs, &vtape).row(0).transpose();
      const Eigen::VectorXd verr = v - mb_ret;
      const double value_loss = hyper.value_coeff * verr.squaredNorm() / bsize;
      if (!std::isfinite(actor_loss) || !std::isfinite(value_loss))
        throw SimError("ppo_update: non-finite loss, update aborted");

      const Eigen::ArrayXXd sigma2 = (2.0 * log_std.array()).exp();
      const Eigen::ArrayXXd diff = mb_actions.array() - mean_out.array();
      Eigen::MatrixXd d_mean(action_dim, bsize), d_log_std(action_dim, bsize);
      for (int i = 0; i < bsize; ++i) {
        d_mean.col(i) = (dlogp[i] * diff.col(i) / sigma2.col(i)).matrix();
        d_log_std.col(i) =
            (dlogp[i] * (diff.col(i).square() / sigma2.col(i) - 1.0)).matrix();
        d_log_std.col(i).array() += -hyper.entropy_coeff / bsize;
      }
      Eigen::VectorXd actor_grad = policy.backward_heads(tape, d_mean, d_log_std, log_std);
      const double a_norm = actor_grad.norm();
      if (a_norm > hyper.max_grad_norm) actor_grad *= hyper.max_grad_norm / a_norm;
      Eigen::VectorXd actor_params = policy.flat_params();
      opt_actor.apply(actor_params, actor_grad);
      policy.set_flat_params(actor_params);

      // ---- critic ----
      Eigen::MatrixXd dv(1, bsize);
      dv.row(0) = (2.0 * hyper.value_coeff / bsize) * verr.transpose();
      Eigen::VectorXd critic_grad = critic.backward(vtape, dv).param_grad;
      const double c_norm = critic_grad.norm();
      if (c_norm > hyper.max_grad_norm) critic_grad *= hyper.max_grad_norm / c_norm;
      opt_critic.apply(critic.params(), critic_grad);

      stats.actor_loss += surrogate;
      stats.value_loss += value_loss;
      stats.entropy += entropy;
      stats.clip_fraction += clipped_count / bsize;
      stats.approx_kl += (mb_logp_old - logp_new).mean();
      ++n_batches;
    }
  }
  if (n_batches > 0) {
    stats.actor_loss /= n_batches;
    stats.value_loss /= n_batches;
    stats.entropy /= n_batches;
    stats.clip_fraction /= n_batches;
    stats.approx_kl /= n_batches;
  }
  buffer.clear();
  return stats;
}

}  // namespace quadmotion
