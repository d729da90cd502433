#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "quadmotion/clip.hpp"
#include "quadmotion/parallel.hpp"
#include "quadmotion/policy.hpp"
#include "quadmotion/ppo.hpp"
#include "quadmotion/sim.hpp"

namespace quadmotion {

/// Mean absolute joint-angle error in radians, averaged over all 12 actuated
/// joints and the overlapping time steps. Clips of unequal length are
/// truncated to the shorter one (truncated flag on the evaluation result).
inline double mjpe(const MotionClip& ref, const MotionClip& sim) {
  const int T = std::min(ref.length(), sim.length());
  if (T == 0) throw std::invalid_argument("mjpe: zero overlapping frames");
  double sum = 0.0;
  for (int t = 0; t < T; ++t)
    sum += (ref.frames[static_cast<std::size_t>(t)].q - sim.frames[static_cast<std::size_t>(t)].q)
               .cwiseAbs()
               .sum();
  return sum / (static_cast<double>(T) * kNumJoints);
}

/// Mean absolute rigid-body position error in meters over the 13 FK
/// keypoints, 3 coordinate axes and the overlapping time steps; positions are
/// global (no root alignment).
inline double mbpe(const MotionClip& ref, const MotionClip& sim, const Morphology& morph) {
  const int T = std::min(ref.length(), sim.length());
  if (T == 0) throw std::invalid_argument("mbpe: zero overlapping frames");
  double sum = 0.0;
  for (int t = 0; t < T; ++t) {
    const MotionFrame& fr = ref.frames[static_cast<std::size_t>(t)];
    const MotionFrame& fs = sim.frames[static_cast<std::size_t>(t)];
    const KeypointSet kr = forward_kinematics(morph, frame_root(fr), fr.q);
    const KeypointSet ks = forward_kinematics(morph, frame_root(fs), fs.q);
    for (int k = 0; k < kNumKeypoints; ++k) sum += (kr[k] - ks[k]).cwiseAbs().sum();
  }
  return sum / (static_cast<double>(T) * kNumKeypoints * 3.0);
}

/// Per-body MBPE map keyed by keypoint name.
inline std::map<std::string, double> mbpe_per_body(const MotionClip& ref, const MotionClip& sim,
                                                   const Morphology& morph) {
  const int T = std::min(ref.length(), sim.length());
  if (T == 0) throw std::invalid_argument("mbpe_per_body: zero overlapping frames");
  std::array<double, kNumKeypoints> sums{};
  for (int t = 0; t < T; ++t) {
    const MotionFrame& fr = ref.frames[static_cast<std::size_t>(t)];
    const MotionFrame& fs = sim.frames[static_cast<std::size_t>(t)];
    const KeypointSet kr = forward_kinematics(morph, frame_root(fr), fr.q);
    const KeypointSet ks = forward_kinematics(morph, frame_root(fs), fs.q);
    for (int k = 0; k < kNumKeypoints; ++k)
      sums[static_cast<std::size_t>(k)] += (kr[k] - ks[k]).cwiseAbs().sum();
  }
  std::map<std::string, double> out;
  for (int k = 0; k < kNumKeypoints; ++k)
    out[kKeypointNames[static_cast<std::size_t>(k)]] =
        sums[static_cast<std::size_t>(k)] / (static_cast<double>(T) * 3.0);
  return out;
}

inline std::vector<double> per_frame_mjpe(const MotionClip& ref, const MotionClip& sim) {
  const int T = std::min(ref.length(), sim.length());
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t)
    out.push_back((ref.frames[static_cast<std::size_t>(t)].q -
                   sim.frames[static_cast<std::size_t>(t)].q)
                      .cwiseAbs()
                      .sum() /
                  kNumJoints);
  return out;
}

struct TrackingEval {
  std::string clip_id;
  double mjpe = 0.0;
  double mbpe = 0.0;
  std::vector<double> per_frame_mjpe;
  std::map<std::string, double> per_body_mbpe;
  double episode_completion = 0.0;  // fraction of the reference survived
  double mean_r_track = 0.0;
  bool truncated = false;
  bool failed = false;  // NaN rollout; excluded from aggregates
};

struct EvalSettings {
  int max_steps = 0;  // 0: full reference
};

/// Deterministic policy rollout against one reference clip: mean actions, no
/// exploration noise, no domain randomization, no reset noise. Returns the
/// simulated trajectory as a clip alongside the evaluation record.
inline TrackingEval evaluate_clip(const GaussianPolicy& policy, const ActionMap& action_map,
                                  const Morphology& morph, const EnvConfig& cfg,
                                  const DynamicsParams& nominal,
                                  const std::shared_ptr<const MotionClip>& clip,
                                  const Eigen::VectorXd& command_embed, const EvalSettings& settings,
                                  MotionClip* sim_out = nullptr) {
  TrackingEval eval;
  eval.clip_id = clip->id;
  EnvConfig eval_cfg = cfg;
  if (settings.max_steps > 0) eval_cfg.max_episode_steps = settings.max_steps;

  QuadEnv env(morph, eval_cfg, nominal, /*master_seed=*/0, /*env_index=*/0);
  env.set_motion(clip, command_embed, 0);
  env.set_randomization(false);
  env.set_reset_noise(false);
  env.reset();

  MotionClip sim;
  sim.id = clip->id + "_sim";
  sim.source = clip->source;
  sim.annotations = clip->annotations;
  sim.has_qd = true;
  auto record = [&](const SimState& s) {
    MotionFrame f;
    f.root_pos = s.root.position;
    f.root_quat = s.root.orientation;
    f.q = s.q;
    f.qd = s.qd;
    f.contact = s.foot_contact;
    sim.frames.push_back(f);
  };
  record(env.state());

  const int horizon = episode_length(*clip, eval_cfg);
  double track_sum = 0.0;
  int steps = 0;
  try {
    for (int t = 0; t < horizon; ++t) {
      const JointVec action = action_map.apply(policy.mean_action(env.obs().actor));
      const QuadEnv::StepOut out = env.step(action);
      record(env.state());
      track_sum += out.reward.r_track;
      ++steps;
      if (out.terminated && out.reason != TerminationReason::Timeout) break;
    }
  } catch (const SimError&) {
    eval.failed = true;
  }

  eval.episode_completion = horizon > 0 ? static_cast<double>(steps) / horizon : 0.0;
  eval.mean_r_track = steps > 0 ? track_sum / steps : 0.0;
  if (!eval.failed) {
    eval.truncated = sim.length() != clip->length();
    eval.mjpe = mjpe(*clip, sim);
    eval.mbpe = mbpe(*clip, sim, morph);
    eval.per_frame_mjpe = per_frame_mjpe(*clip, sim);
    eval.per_body_mbpe = mbpe_per_body(*clip, sim, morph);
  }
  if (sim_out) *sim_out = std::move(sim);
  return eval;
}

struct EvalAggregate {
  std::vector<TrackingEval> per_clip;
  double mean_mjpe = 0.0;
  double mean_mbpe = 0.0;
  double mean_completion = 0.0;
  double mean_r_track = 0.0;
  int failed_count = 0;
};

/// Evaluates a policy over a validation clip set; clips run independently in
/// parallel, aggregation excludes failed (NaN) rollouts with an explicit
/// count.
inline EvalAggregate evaluate_policy(const GaussianPolicy& policy, const ActionMap& action_map,
                                     const Morphology& morph, const EnvConfig& cfg,
                                     const DynamicsParams& nominal,
                                     const std::vector<std::shared_ptr<const MotionClip>>& clips,
                                     const std::vector<Eigen::VectorXd>& embeds,
                                     const EvalSettings& settings, int num_threads = 1) {
  if (clips.size() != embeds.size())
    throw std::invalid_argument("evaluate_policy: clip/embedding count mismatch");
  EvalAggregate agg;
  agg.per_clip.resize(clips.size());
  parallel_for(static_cast<int>(clips.size()), num_threads, [&](int i) {
    agg.per_clip[static_cast<std::size_t>(i)] =
        evaluate_clip(policy, action_map, morph, cfg, nominal, clips[static_cast<std::size_t>(i)],
                      embeds[static_cast<std::size_t>(i)], settings);
  });
  int n = 0;
  for (const TrackingEval& e : agg.per_clip) {
    if (e.failed) {
      ++agg.failed_count;
      continue;
    }
    agg.mean_mjpe += e.mjpe;
    agg.mean_mbpe += e.mbpe;
    agg.mean_completion += e.episode_completion;
    agg.mean_r_track += e.mean_r_track;
    ++n;
  }
  if (n > 0) {
    agg.mean_mjpe /= n;
    agg.mean_mbpe /= n;
    agg.mean_completion /= n;
    agg.mean_r_track /= n;
  }
  return agg;
}

}  // namespace quadmotion
