#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "quadmotion/clip.hpp"
#include "quadmotion/config.hpp"
#include "quadmotion/kinematics.hpp"
#include "quadmotion/rng.hpp"
#include "quadmotion/sim.hpp"

namespace qmtest {

using namespace quadmotion;

inline Morphology test_morphology() {
  Morphology m;
  m.trunk_dims = Vec3(0.4, 0.12, 0.12);
  m.hip_offsets = {Vec3(0.19, 0.047, 0.0), Vec3(0.19, -0.047, 0.0), Vec3(-0.19, 0.047, 0.0),
                   Vec3(-0.19, -0.047, 0.0)};
  m.l_hip = 0.08;
  m.l_thigh = 0.21;
  m.l_calf = 0.21;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    m.joint_lower[3 * leg + 0] = -0.8;
    m.joint_upper[3 * leg + 0] = 0.8;
    m.joint_lower[3 * leg + 1] = -1.6;
    m.joint_upper[3 * leg + 1] = 2.4;
    m.joint_lower[3 * leg + 2] = -2.7;
    m.joint_upper[3 * leg + 2] = 0.0;
  }
  m.torque_limit = JointVec::Constant(23.7);
  m.trunk_mass = 6.0;
  m.leg_joint_inertia = 0.02;
  return m;
}

inline JointVec standing_pose() {
  JointVec q = JointVec::Zero();
  for (int leg = 0; leg < kNumLegs; ++leg) {
    q[3 * leg + 1] = 0.6;
    q[3 * leg + 2] = -1.2;
  }
  return q;
}

inline double standing_height(const Morphology& m) {
  return m.l_thigh * std::cos(0.6) + m.l_calf * std::cos(0.6 - 1.2);
}

/// Joint config drawn from the interior of the limits (stays away from the
/// exact bounds so IK basins are well separated).
inline JointVec random_interior_config(const Morphology& m, RngStream& rng, double margin = 0.1) {
  JointVec q;
  for (int j = 0; j < kNumJoints; ++j) {
    const double lo = m.joint_lower[j], hi = m.joint_upper[j];
    const double pad = margin * (hi - lo);
    q[j] = rng.uniform(lo + pad, hi - pad);
  }
  return q;
}

/// Constant standing clip with feet exactly on the ground.
inline MotionClip standing_clip(const Morphology& m, int frames, const std::string& id = "stand") {
  MotionClip clip;
  clip.id = id;
  clip.source = "artist";
  clip.annotations = {"standing still", "idle", "stand"};
  clip.has_qd = true;
  const JointVec q = standing_pose();
  MotionFrame f;
  f.root_pos = Vec3(0.0, 0.0, standing_height(m));
  f.root_quat = Quat(1, 0, 0, 0);
  f.q = q;
  f.qd = JointVec::Zero();
  for (int leg = 0; leg < kNumLegs; ++leg) f.contact[static_cast<std::size_t>(leg)] = true;
  clip.frames.assign(static_cast<std::size_t>(frames), f);
  return clip;
}

/// Sinusoidal joint reference around the standing pose; contact-free task
/// clips keep the root fixed at standing height.
inline MotionClip sinusoid_clip(const Morphology& m, int frames, double amp_flex, double amp_abd,
                                double omega, std::uint64_t seed, const std::string& id) {
  MotionClip clip;
  clip.id = id;
  clip.source = "artist";
  clip.annotations = {"sinusoidal joint sweep", "calibration", "sway"};
  clip.has_qd = true;
  const JointVec center = standing_pose();
  RngStream rng(seed, 77);
  JointVec amp, phase;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    amp[3 * leg + 0] = amp_abd;
    amp[3 * leg + 1] = amp_flex;
    amp[3 * leg + 2] = amp_flex;
    for (int k = 0; k < 3; ++k) phase[3 * leg + k] = rng.uniform(0.0, 2.0 * M_PI);
  }
  clip.frames.reserve(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    const double time = static_cast<double>(t) / kClipFps;
    MotionFrame f;
    f.root_pos = Vec3(0.0, 0.0, standing_height(m));
    f.root_quat = Quat(1, 0, 0, 0);
    for (int j = 0; j < kNumJoints; ++j) {
      f.q[j] = center[j] + amp[j] * std::sin(omega * time + phase[j]);
      f.qd[j] = amp[j] * omega * std::cos(omega * time + phase[j]);
    }
    f.q = clamp_to_limits(m, f.q);
    clip.frames.push_back(f);
  }
  return clip;
}

/// Small, fast run configuration for trainer-level tests. Contact-free,
/// zero gravity, tiny nets; paths must still be pointed at a scratch dir.
inline RunConfig test_run_config(const std::string& scratch_name) {
  RunConfig rc;
  rc.master_seed = 11;
  rc.num_threads = 1;
  rc.morphology = test_morphology();
  rc.sim.env.contact_enabled = false;
  rc.sim.env.reset_noise = ResetNoise{0.01, 0.0, 0.0, 0.0};
  rc.sim.nominal.gravity = 0.0;
  rc.ppo.n_envs = 4;
  rc.ppo.n_steps = 8;
  rc.ppo.actor_hidden = {24, 16};
  rc.ppo.critic_hidden = {24, 16};
  rc.ppo.action_center = standing_pose();
  rc.ppo.action_scale = 0.5;
  rc.generator.gen.latent_dim = 4;
  rc.generator.gen.window = 20;
  rc.generator.gen.encoder_hidden = {16};
  rc.generator.gen.decoder_hidden = {16};
  rc.generator.gen.prior_hidden = {12};
  rc.generator.lr_joint = 0.01;
  rc.trainer.n_iter = 9;
  rc.trainer.k_refresh = 3;
  rc.trainer.n_motions = 2;
  rc.trainer.ema_alpha = 0.1;
  const auto scratch = std::filesystem::temp_directory_path() / "quadmotion_tests" / scratch_name;
  std::filesystem::create_directories(scratch);
  rc.paths.dataset_dir = (scratch / "data").string();
  rc.paths.checkpoint_dir = (scratch / "checkpoints").string();
  rc.paths.log_dir = (scratch / "logs").string();
  return rc;
}

inline MotionClip random_clip(RngStream& rng, int frames, bool with_qd, const std::string& id) {
  MotionClip clip;
  clip.id = id;
  clip.source = kClipSources[static_cast<std::size_t>(rng.uniform_index(4))];
  clip.annotations = {"random motion", "test scenario", "do something"};
  clip.has_qd = with_qd;
  clip.frames.reserve(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    MotionFrame f;
    f.root_pos = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.1, 0.6));
    Quat q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    if (q.norm() < 1e-6) q = Quat(1, 0, 0, 0);
    q.normalize();
    f.root_quat = q;
    for (int j = 0; j < kNumJoints; ++j) {
      f.q[j] = rng.uniform(-1.5, 1.5);
      if (with_qd) f.qd[j] = rng.uniform(-3, 3);
    }
    for (int leg = 0; leg < kNumLegs; ++leg)
      f.contact[static_cast<std::size_t>(leg)] = rng.uniform01() < 0.5;
    clip.frames.push_back(f);
  }
  return clip;
}

}  // namespace qmtest
