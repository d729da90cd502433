#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "quadmotion/config.hpp"
#include "quadmotion/generator.hpp"
#include "quadmotion/ppo.hpp"

namespace quadmotion {

/// Exponential-moving-average baseline over completed episodic returns.
/// The first update seeds the baseline with the batch mean.
struct EmaBaseline {
  double b = 0.0;
  double alpha = 0.05;
  bool initialized = false;
};

inline void ema_update(EmaBaseline& baseline, const std::vector<double>& returns) {
  if (returns.empty()) throw std::invalid_argument("ema_update: empty return list");
  double mean = 0.0;
  for (double g : returns) mean += g;
  mean /= static_cast<double>(returns.size());
  baseline.b = baseline.initialized ? (1.0 - baseline.alpha) * baseline.b + baseline.alpha * mean
                                    : mean;
  baseline.initialized = true;
}

/// Round-robin motion assignment: env e tracks sample e mod n_samples.
inline std::vector<int> assign_motions(int n_samples, int n_envs) {
  if (n_samples < 1) throw std::invalid_argument("assign_motions: need at least one sample");
  std::vector<int> map(static_cast<std::size_t>(n_envs));
  for (int e = 0; e < n_envs; ++e) map[static_cast<std::size_t>(e)] = e % n_samples;
  return map;
}

/// Mean completed return per sample id; samples without a completed episode
/// come back empty and are excluded from the generator step.
inline std::vector<std::optional<double>> per_sample_returns(
    const std::vector<CompletedReturn>& completed, int n_samples) {
  std::vector<double> sum(static_cast<std::size_t>(n_samples), 0.0);
  std::vector<int> count(static_cast<std::size_t>(n_samples), 0);
  for (const CompletedReturn& c : completed) {
    if (c.motion_id < 0 || c.motion_id >= n_samples) continue;
    sum[static_cast<std::size_t>(c.motion_id)] += c.G;
    count[static_cast<std::size_t>(c.motion_id)] += 1;
  }
  std::vector<std::optional<double>> out(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i)
    if (count[static_cast<std::size_t>(i)] > 0)
      out[static_cast<std::size_t>(i)] = sum[static_cast<std::size_t>(i)] /
                                         count[static_cast<std::size_t>(i)];
  return out;
}

/// One refresh worth of reference motions.
struct MotionSet {
  std::vector<std::shared_ptr<const MotionClip>> clips;
  std::vector<Eigen::VectorXd> embeds;
  std::vector<GenSample> samples;  // populated in generator mode
};

struct TrainLogRow {
  int iteration = 0;
  bool refresh = false;
  bool gen_update = false;
  double mean_return = 0.0;
  int completed = 0;
  double r_track_mean = 0.0;
  UpdateStats ppo;
  double gen_l_recon = 0.0;
  double gen_l_rl = 0.0;
  double baseline = 0.0;
};

inline std::vector<std::string> train_csv_columns() {
  return {"iteration",  "refresh",   "gen_update", "mean_return", "completed",
          "r_track_mean", "actor_loss", "value_loss", "entropy",     "clip_fraction",
          "approx_kl",  "gen_l_recon", "gen_l_rl",  "baseline"};
}

inline std::vector<std::string> train_csv_row(const TrainLogRow& r) {
  return {std::to_string(r.iteration),
          r.refresh ? "1" : "0",
          r.gen_update ? "1" : "0",
          fmt_double(r.mean_return),
          std::to_string(r.completed),
          fmt_double(r.r_track_mean),
          fmt_double(r.ppo.actor_loss),
          fmt_double(r.ppo.value_loss),
          fmt_double(r.ppo.entropy),
          fmt_double(r.ppo.clip_fraction),
          fmt_double(r.ppo.approx_kl),
          fmt_double(r.gen_l_recon),
          fmt_double(r.gen_l_rl),
          fmt_double(r.baseline)};
}

/// Joint generation-and-control training loop.
///
/// Schedule per iteration i in 1..N_iter:
///   - i == 0 (mod K_R): sample a fresh motion set, reset all envs, clear the
///     running and completed returns (plus one initial set before i=1);
///   - every i: collect one rollout, run GAE and a PPO update, clear buffer;
///   - i == K_R-1 (mod K_R): EMA-update the baseline from completed returns
///     and take one generator RL step on L_recon + L_RL.
///
/// With a fixed motion schedule (tracker mode) the same loop runs without
/// the generator step, which makes a frozen-generator joint run and a
/// tracker run on the recorded motion sets bit-identical on the PPO side.
class JointTrainer {
 public:
  explicit JointTrainer(const RunConfig& rc)
      : rc_(rc),
        vocab_(rc.make_vocab()),
        shuffle_rng_(RngStream::derive(rc.master_seed, "ppo_shuffle")),
        gen_rng_(RngStream::derive(rc.master_seed, "gen_sample")) {
    const EnvConfig& ec = rc_.sim.env;
    const int actor_dim = actor_obs_dim(ec);
    const int critic_dim = critic_obs_dim(ec);

    std::vector<int> actor_dims{actor_dim};
    for (int h : rc_.ppo.actor_hidden) actor_dims.push_back(h);
    actor_dims.push_back(rc_.ppo.policy_std == PolicyStdMode::NetOutput ? 2 * kNumJoints
                                                                        : kNumJoints);
    policy_ = GaussianPolicy(actor_dims, rc_.ppo.activation, kNumJoints, rc_.ppo.policy_std,
                             rc_.ppo.log_std_init);
    RngStream pol_rng = RngStream::derive(rc_.master_seed, "policy_init");
    policy_.init_random(pol_rng, 0.01);

    std::vector<int> critic_dims{critic_dim};
    for (int h : rc_.ppo.critic_hidden) critic_dims.push_back(h);
    critic_dims.push_back(1);
    critic_ = MlpNet(critic_dims, rc_.ppo.activation);
    RngStream crit_rng = RngStream::derive(rc_.master_seed, "critic_init");
    critic_.init_random(crit_rng, 1.0);

    opt_actor_ = AdamState(policy_.param_count(), rc_.ppo.hyper.lr_actor);
    opt_critic_ = AdamState(critic_.param_count(), rc_.ppo.hyper.lr_critic);

    envs_.reserve(static_cast<std::size_t>(rc_.ppo.n_envs));
    for (int e = 0; e < rc_.ppo.n_envs; ++e)
      envs_.emplace_back(rc_.morphology, ec, rc_.sim.nominal, rc_.master_seed, e);

    buffer_ = RolloutBuffer(rc_.ppo.n_envs, rc_.ppo.n_steps, actor_dim, critic_dim, kNumJoints);
    returns_.reset(rc_.ppo.n_envs);
    baseline_.alpha = rc_.trainer.ema_alpha;
  }

  /// Generator mode: motions come from the model at every refresh.
  void set_generator(GenLatentModel generator) {
    generator_ = std::move(generator);
    fixed_sets_.clear();
  }

  /// Tracker mode: a fixed motion-set schedule; set r is used at the r-th
  /// refresh (the last set repeats once the schedule is exhausted).
  void set_fixed_motions(std::vector<MotionSet> sets) {
    if (sets.empty()) throw std::invalid_argument("set_fixed_motions: no motion sets");
    for (const MotionSet& s : sets)
      if (s.clips.empty()) throw std::invalid_argument("set_fixed_motions: empty motion set");
    fixed_sets_ = std::move(sets);
    generator_.reset();
  }

  void set_recon_dataset(std::vector<MotionClip> clips) { recon_clips_ = std::move(clips); }

  GaussianPolicy& policy() { return policy_; }
  MlpNet& critic() { return critic_; }
  GenLatentModel& generator() { return *generator_; }
  bool has_generator() const { return generator_.has_value(); }
  const std::vector<MotionSet>& motion_history() const { return motion_history_; }
  const std::vector<TrainLogRow>& log() const { return log_; }

  struct Result {
    std::string metrics_csv;
    std::filesystem::path metrics_path;
  };

  Result run() {
    rc_.trainer.validate();
    if (!generator_ && fixed_sets_.empty())
      throw std::logic_error("JointTrainer: neither generator nor fixed motions configured");

    CsvWriter csv(std::filesystem::path(rc_.paths.log_dir) / "train_metrics.csv",
                  train_csv_columns());
    const int K = rc_.trainer.k_refresh;
    refresh();

    for (int i = 1; i <= rc_.trainer.n_iter; ++i) {
      TrainLogRow row;
      row.iteration = i;
      try {
        if (i % K == 0) {
          refresh();
          row.refresh = true;
        }
        const std::size_t completed_before = returns_.completed.size();
        const RolloutStats stats = collect_rollout(envs_, policy_, critic_, buffer_, returns_,
                                                   rc_.action_map(), rc_.num_threads);
        const Eigen::VectorXd boot = bootstrap_values(envs_, critic_);
        compute_gae(buffer_, boot, rc_.ppo.hyper.gamma, rc_.ppo.hyper.lam);
        row.ppo = ppo_update(policy_, critic_, opt_actor_, opt_critic_, buffer_, rc_.ppo.hyper,
                             shuffle_rng_);

        row.r_track_mean = stats.mean_r_track;
        row.completed = static_cast<int>(returns_.completed.size() - completed_before);
        if (row.completed > 0) {
          double sum = 0.0;
          for (std::size_t c = completed_before; c < returns_.completed.size(); ++c)
            sum += returns_.completed[c].G;
          row.mean_return = sum / row.completed;
        }

        if (i % K == K - 1 && generator_) {
          row.gen_update = true;
          const auto gen_stats = generator_step();
          row.gen_l_recon = gen_stats.l_recon;
          row.gen_l_rl = gen_stats.l_rl;
        }
      } catch (const std::exception& e) {
        // halt with the iteration index; keep the checkpoints and the log
        save_checkpoints("halt_");
        csv.flush();
        throw SimError("training halted at iteration " + std::to_string(i) + ": " + e.what());
      }
      row.baseline = baseline_.b;
      log_.push_back(row);
      csv.add_row(train_csv_row(row));

      if (rc_.trainer.checkpoint_every > 0 && i % rc_.trainer.checkpoint_every == 0)
        save_checkpoints("iter_" + std::to_string(i) + "_");
    }
    save_checkpoints("");
    csv.flush();
    return Result{csv.content(), csv.path()};
  }

  void save_checkpoints(const std::string& prefix) const {
    const std::filesystem::path dir(rc_.paths.checkpoint_dir);
    {
      CheckpointWriter w(dir / (prefix + "policy.ckpt"));
      policy_.save(w, "actor");
      w.add_adam("opt.actor", opt_actor_);
      w.close();
    }
    {
      CheckpointWriter w(dir / (prefix + "critic.ckpt"));
      w.add_net("critic.net", critic_);
      w.add_adam("opt.critic", opt_critic_);
      w.close();
    }
    if (generator_) {
      CheckpointWriter w(dir / (prefix + "generator.ckpt"));
      generator_->save(w);
      w.close();
    }
  }

 private:
  void refresh() {
    MotionSet set;
    if (generator_) {
      generator_->set_learning_rate(rc_.generator.lr_joint);
      for (int s = 0; s < rc_.trainer.n_motions; ++s) {
        const std::string& cmd =
            vocab_.entries[static_cast<std::size_t>(s % vocab_.size())].id;
        const SimState& anchor =
            envs_[static_cast<std::size_t>(s % static_cast<int>(envs_.size()))].state();
        GenSample sample = generator_->sample(
            vocab_, cmd, anchor, rc_.morphology, gen_rng_,
            "gen_r" + std::to_string(refresh_count_) + "_s" + std::to_string(s));
        set.clips.push_back(std::make_shared<MotionClip>(sample.motion));
        set.embeds.push_back(vocab_.embedding(cmd));
        set.samples.push_back(std::move(sample));
      }
    } else {
      const std::size_t idx = std::min(static_cast<std::size_t>(refresh_count_),
                                       fixed_sets_.size() - 1);
      set = fixed_sets_[idx];
      if (set.embeds.size() != set.clips.size()) {
        set.embeds.clear();
        for (const auto& clip : set.clips)
          set.embeds.push_back(vocab_.embedding_or_zero(clip->annotations.command));
      }
    }

    const std::vector<int> assignment =
        assign_motions(static_cast<int>(set.clips.size()), static_cast<int>(envs_.size()));
    for (std::size_t e = 0; e < envs_.size(); ++e) {
      const int s = assignment[e];
      envs_[e].set_motion(set.clips[static_cast<std::size_t>(s)],
                          set.embeds[static_cast<std::size_t>(s)], s);
      envs_[e].reset();
    }
    returns_.reset(static_cast<int>(envs_.size()));
    current_set_ = set;
    motion_history_.push_back(std::move(set));
    ++refresh_count_;
  }

  GenLatentModel::RlStats generator_step() {
    GenLatentModel::RlStats stats;
    std::vector<double> flat;
    for (const CompletedReturn& c : returns_.completed) flat.push_back(c.G);
    if (flat.empty()) return stats;  // no completed episode yet: skip, keep baseline

    ema_update(baseline_, flat);
    const auto by_sample =
        per_sample_returns(returns_.completed, static_cast<int>(current_set_.samples.size()));
    std::vector<GenSample> samples;
    std::vector<double> sample_returns;
    for (std::size_t s = 0; s < current_set_.samples.size(); ++s) {
      if (!by_sample[s].has_value()) continue;
      samples.push_back(current_set_.samples[s]);
      sample_returns.push_back(*by_sample[s]);
    }
    if (samples.empty()) return stats;

    std::optional<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> recon;
    if (rc_.trainer.recon_in_joint && !recon_clips_.empty()) {
      const GenConfig& g = rc_.generator.gen;
      std::vector<std::pair<int, int>> windows;
      for (std::size_t c = 0; c < recon_clips_.size(); ++c)
        if (recon_clips_[c].length() >= g.window)
          windows.emplace_back(static_cast<int>(c), 0);
      if (!windows.empty()) {
        const int bsize = std::min<int>(rc_.generator.pretrain_batch,
                                        static_cast<int>(windows.size()));
        Eigen::MatrixXd w(g.frame_dim(), bsize);
        Eigen::MatrixXd cond(g.cond_dim(), bsize);
        for (int i = 0; i < bsize; ++i) {
          const MotionClip& clip = recon_clips_[static_cast<std::size_t>(windows[static_cast<std::size_t>(i)].first)];
          w.col(i) = window_features(clip, 0, g.window);
          Eigen::VectorXd cv(g.cond_dim());
          cv.head(g.embed_dim) = vocab_.embedding_or_zero(clip.annotations.command);
          cv.tail(kStateFeatureDim) = state_features(clip.frames.front(), clip.has_qd);
          cond.col(i) = cv;
        }
        recon = std::make_pair(std::move(w), std::move(cond));
      }
    }
    return generator_->rl_update(samples, sample_returns, baseline_.b, recon);
  }

  RunConfig rc_;
  CommandVocab vocab_;
  GaussianPolicy policy_;
  MlpNet critic_;
  AdamState opt_actor_, opt_critic_;
  std::vector<QuadEnv> envs_;
  RolloutBuffer buffer_;
  EpisodeReturns returns_;
  EmaBaseline baseline_;
  RngStream shuffle_rng_;
  RngStream gen_rng_;
  std::optional<GenLatentModel> generator_;
  std::vector<MotionSet> fixed_sets_;
  std::vector<MotionClip> recon_clips_;
  MotionSet current_set_;
  std::vector<MotionSet> motion_history_;
  std::vector<TrainLogRow> log_;
  int refresh_count_ = 0;
};

}  // namespace quadmotion
