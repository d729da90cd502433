#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "quadmotion/clip.hpp"
#include "quadmotion/io_util.hpp"
#include "quadmotion/kinematics.hpp"
#include "quadmotion/rng.hpp"

namespace quadmotion {

/// Episode-level dynamics parameters; the randomized subset of these forms
/// the privileged part of the critic observation.
struct DynamicsParams {
  double friction_coeff = 0.8;      // Coulomb friction bound (dimensionless)
  double mass_scale = 1.0;          // multiplier on trunk mass
  double kp = 25.0;                 // PD stiffness, N*m/rad
  double kd = 1.0;                  // PD damping, N*m*s/rad
  double contact_stiffness = 2e4;   // N/m
  double contact_damping = 300.0;   // N*s/m (normal and tangential)
  double max_contact_force = 500.0; // N, per-foot normal saturation
  double gravity = 9.81;            // m/s^2

  void validate() const {
    if (friction_coeff < 0.0) throw std::invalid_argument("DynamicsParams: friction < 0");
    if (!(kp > 0.0) || !(kd > 0.0)) throw std::invalid_argument("DynamicsParams: PD gains <= 0");
    if (!(contact_stiffness > 0.0))
      throw std::invalid_argument("DynamicsParams: contact_stiffness <= 0");
    if (!(max_contact_force > 0.0))
      throw std::invalid_argument("DynamicsParams: max_contact_force <= 0");
    if (contact_damping < 0.0) throw std::invalid_argument("DynamicsParams: contact_damping < 0");
    if (mass_scale <= 0.0) throw std::invalid_argument("DynamicsParams: mass_scale <= 0");
  }
};

/// Multiplicative domain-randomization ranges applied on reset.
struct RandomizationRanges {
  std::pair<double, double> friction{0.5, 1.25};
  std::pair<double, double> mass{0.8, 1.2};
  std::pair<double, double> kp{0.9, 1.1};
  std::pair<double, double> kd{0.9, 1.1};

  void validate() const {
    for (const auto& r : {friction, mass, kp, kd})
      if (r.first > r.second)
        throw std::invalid_argument("RandomizationRanges: lo > hi");
  }
};

inline DynamicsParams randomize(const DynamicsParams& nominal, const RandomizationRanges& ranges,
                                RngStream& rng) {
  ranges.validate();
  DynamicsParams p = nominal;
  p.friction_coeff = nominal.friction_coeff * rng.uniform(ranges.friction.first, ranges.friction.second);
  p.mass_scale = nominal.mass_scale * rng.uniform(ranges.mass.first, ranges.mass.second);
  p.kp = nominal.kp * rng.uniform(ranges.kp.first, ranges.kp.second);
  p.kd = nominal.kd * rng.uniform(ranges.kd.first, ranges.kd.second);
  return p;
}

/// Full physics state of the floating-base model.
struct SimState {
  RootPose root;
  Vec3 lin_vel{0, 0, 0};   // world frame
  Vec3 ang_vel{0, 0, 0};   // world frame
  JointVec q = JointVec::Zero();
  JointVec qd = JointVec::Zero();
  std::array<bool, kNumLegs> foot_contact{};
  std::array<double, kNumLegs> contact_force{};  // normal force, N
  double time = 0.0;
  int episode_step = 0;

  bool all_finite() const {
    return root.position.allFinite() && root.orientation.coeffs().allFinite() &&
           lin_vel.allFinite() && ang_vel.allFinite() && q.allFinite() && qd.allFinite();
  }
};

struct RewardWeights {
  double track = 1.0;
  double action_rate = -0.01;
  double energy = -0.0005;
  double alive = 0.05;
  double termination = -10.0;
};

struct TerminationConfig {
  double min_root_height = 0.08;            // m
  double max_tilt = 60.0 * M_PI / 180.0;    // rad
  double max_keypoint_error = 0.5;          // m
};

struct ResetNoise {
  double q = 0.02;        // rad, uniform
  double qd = 0.0;        // rad/s, uniform
  double root_pos = 0.0;  // m, uniform per axis
  double root_rot = 0.0;  // rad, small-angle uniform per axis
};

struct EnvConfig {
  double dt_control = 0.02;   // 50 Hz control
  int substeps = 4;           // 5 ms physics substep
  bool contact_enabled = true;
  int warmup_substeps = 10;
  int ref_window = 4;         // future reference frames in the actor obs
  int command_embed_dim = 8;
  int max_episode_steps = 0;  // 0: run to the end of the reference clip
  RewardWeights reward;
  double c_feet = 2.0;        // Eq-style tracking coefficients
  double c_trunk = 1.0;
  double c_intermediate = 0.5;
  TerminationConfig termination;
  ResetNoise reset_noise;
  RandomizationRanges randomization;

  std::array<double, kNumKeypoints> keypoint_coeffs() const {
    std::array<double, kNumKeypoints> c{};
    c[kTrunk] = c_trunk;
    for (int leg = 0; leg < kNumLegs; ++leg) {
      c[static_cast<std::size_t>(hip_keypoint(leg))] = c_intermediate;
      c[static_cast<std::size_t>(knee_keypoint(leg))] = c_intermediate;
      c[static_cast<std::size_t>(foot_keypoint(leg))] = c_feet;
    }
    return c;
  }
};

/// exp(-sum_j c_j e_j) with the exponent clamped so the value stays in (0,1].
inline double tracking_reward_kernel(const double* sq_errors, const double* coeffs, int n) {
  double s = 0.0;
  for (int j = 0; j < n; ++j) s += coeffs[j] * sq_errors[j];
  return std::exp(-std::min(s, 700.0));
}

/// Keypoint-space tracking reward against a reference (root pose + joints).
inline double tracking_reward(const SimState& state, const RootPose& ref_root,
                              const JointVec& ref_q, const Morphology& morph,
                              const std::array<double, kNumKeypoints>& coeffs) {
  const KeypointSet sim_kp = forward_kinematics(morph, state.root, state.q);
  const KeypointSet ref_kp = forward_kinematics(morph, ref_root, ref_q);
  std::array<double, kNumKeypoints> sq{};
  for (int k = 0; k < kNumKeypoints; ++k)
    sq[static_cast<std::size_t>(k)] = (sim_kp[k] - ref_kp[k]).squaredNorm();
  return tracking_reward_kernel(sq.data(), coeffs.data(), kNumKeypoints);
}

struct RewardTerms {
  double r_track = 0.0;        // raw exp(.) value in (0, 1]
  double r_action_rate = 0.0;  // weighted, <= 0
  double r_energy = 0.0;       // weighted, <= 0
  double r_alive = 0.0;        // weighted, >= 0
  double r_termination = 0.0;  // weighted, <= 0
  double total = 0.0;          // w_track * r_track + the rest
};

enum class TerminationReason { None, Fall, Tilt, TrackingDivergence, Timeout };

inline const char* to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::None: return "none";
    case TerminationReason::Fall: return "fall";
    case TerminationReason::Tilt: return "tilt";
    case TerminationReason::TrackingDivergence: return "tracking-divergence";
    case TerminationReason::Timeout: return "timeout";
  }
  return "none";
}

inline int episode_length(const MotionClip& motion, const EnvConfig& cfg) {
  int len = motion.length() - 1;
  if (cfg.max_episode_steps > 0) len = std::min(len, cfg.max_episode_steps);
  return std::max(len, 1);
}

inline RootPose frame_root(const MotionFrame& f) {
  RootPose r;
  r.position = f.root_pos;
  r.orientation = f.root_quat.normalized();
  return r;
}

/// Fall / tilt / tracking-divergence / timeout check, in that priority.
inline TerminationReason check_termination(const SimState& state, const MotionClip& motion,
                                           int step_index, const Morphology& morph,
                                           const EnvConfig& cfg) {
  if (state.root.position.z() < cfg.termination.min_root_height) return TerminationReason::Fall;
  const Vec3 body_up = state.root.orientation * Vec3(0, 0, 1);
  const double tilt = std::acos(std::clamp(body_up.z(), -1.0, 1.0));
  if (tilt > cfg.termination.max_tilt) return TerminationReason::Tilt;

  const int ref_idx = std::min(step_index, motion.length() - 1);
  const MotionFrame& f = motion.frames[static_cast<std::size_t>(ref_idx)];
  const KeypointSet sim_kp = forward_kinematics(morph, state.root, state.q);
  const KeypointSet ref_kp = forward_kinematics(morph, frame_root(f), f.q);
  double max_err = 0.0;
  for (int k = 0; k < kNumKeypoints; ++k)
    max_err = std::max(max_err, (sim_kp[k] - ref_kp[k]).norm());
  if (max_err > cfg.termination.max_keypoint_error) return TerminationReason::TrackingDivergence;

  if (step_index >= episode_length(motion, cfg)) return TerminationReason::Timeout;
  return TerminationReason::None;
}

/// One semi-implicit Euler physics substep. Trunk is the only dynamic body;
/// joints integrate under PD torque with per-joint effective inertia; ground
/// contact acts at the four foot points as a spring-damper normal force plus
/// damped tangential friction clamped by the Coulomb bound.
/// Pure function of (state, target, params); accumulates sum|tau*qd| into
/// energy_abs for the energy reward term.
inline void sim_substep(SimState& s, const JointVec& target_q, const DynamicsParams& params,
                        const Morphology& morph, const EnvConfig& cfg, double dt,
                        double& energy_abs) {
  // PD joint torques, clipped to the hardware torque limit
  JointVec tau = params.kp * (target_q - s.q) - params.kd * s.qd;
  for (int j = 0; j < kNumJoints; ++j) {
    tau[j] = std::clamp(tau[j], -morph.torque_limit[j], morph.torque_limit[j]);
    energy_abs += std::abs(tau[j] * s.qd[j]);
  }
  s.qd += (tau / morph.leg_joint_inertia) * dt;
  s.q += s.qd * dt;
  for (int j = 0; j < kNumJoints; ++j) {
    if (s.q[j] < morph.joint_lower[j]) {
      s.q[j] = morph.joint_lower[j];
      s.qd[j] = 0.0;
    } else if (s.q[j] > morph.joint_upper[j]) {
      s.q[j] = morph.joint_upper[j];
      s.qd[j] = 0.0;
    }
  }

  const double mass = morph.trunk_mass * params.mass_scale;
  Vec3 force(0.0, 0.0, -mass * params.gravity);
  Vec3 torque = Vec3::Zero();
  s.foot_contact.fill(false);
  s.contact_force.fill(0.0);

  if (cfg.contact_enabled) {
    const KeypointSet kp = forward_kinematics(morph, s.root, s.q);
    for (int leg = 0; leg < kNumLegs; ++leg) {
      const Vec3 foot = kp[foot_keypoint(leg)];
      if (foot.z() >= 0.0) continue;
      const Vec3 r = foot - s.root.position;
      const KeypointJacobian J = fk_jacobian(morph, s.root, s.q, foot_keypoint(leg));
      const Vec3 v = s.lin_vel + s.ang_vel.cross(r) + J * s.qd;
      double fn = -params.contact_stiffness * foot.z() - params.contact_damping * v.z();
      // saturate: keeps deep-penetration starts (bad references) integrable
      fn = std::clamp(fn, 0.0, params.max_contact_force);
      Vec3 ft = -params.contact_damping * Vec3(v.x(), v.y(), 0.0);
      const double ft_max = params.friction_coeff * fn;
      const double ft_norm = ft.norm();
      if (ft_norm > ft_max && ft_norm > 0.0) ft *= ft_max / ft_norm;
      const Vec3 f = ft + Vec3(0.0, 0.0, fn);
      force += f;
      torque += r.cross(f);
      s.foot_contact[static_cast<std::size_t>(leg)] = true;
      s.contact_force[static_cast<std::size_t>(leg)] = fn;
    }
  }

  // trunk rigid-body integration (box inertia)
  const Mat3 R = s.root.orientation.toRotationMatrix();
  const Vec3 d = morph.trunk_dims;
  const Vec3 inertia_diag(mass / 12.0 * (d.y() * d.y() + d.z() * d.z()),
                          mass / 12.0 * (d.x() * d.x() + d.z() * d.z()),
                          mass / 12.0 * (d.x() * d.x() + d.y() * d.y()));
  const Vec3 omega_body = R.transpose() * s.ang_vel;
  const Vec3 momentum_body = inertia_diag.cwiseProduct(omega_body);
  const Vec3 gyro = s.ang_vel.cross(R * momentum_body);
  const Vec3 ang_acc = R * ((R.transpose() * (torque - gyro)).cwiseQuotient(inertia_diag));

  s.lin_vel += force / mass * dt;
  s.ang_vel += ang_acc * dt;
  s.root.position += s.lin_vel * dt;
  const Quat omega_quat(0.0, s.ang_vel.x(), s.ang_vel.y(), s.ang_vel.z());
  s.root.orientation.coeffs() += 0.5 * (omega_quat * s.root.orientation).coeffs() * dt;
  s.root.orientation.normalize();
  s.time += dt;
}

// ---------------------------------------------------------------------------
// Observations
// ---------------------------------------------------------------------------

constexpr int kRefFrameFeatures = 12 + 3 + 4;  // q_ref, delta root pos (body), relative quat

struct ObsSegment {
  std::string name;
  int offset = 0;
  int size = 0;
  bool privileged = false;
};

inline std::vector<ObsSegment> actor_obs_layout(const EnvConfig& cfg) {
  std::vector<ObsSegment> segs;
  int off = 0;
  auto add = [&](const char* name, int size) {
    segs.push_back({name, off, size, false});
    off += size;
  };
  add("q", kNumJoints);
  add("qd", kNumJoints);
  add("ang_vel_body", 3);
  add("projected_gravity", 3);
  add("prev_action", kNumJoints);
  add("ref_window", cfg.ref_window * kRefFrameFeatures);
  add("command_embed", cfg.command_embed_dim);
  return segs;
}

inline std::vector<ObsSegment> critic_obs_layout(const EnvConfig& cfg) {
  std::vector<ObsSegment> segs = actor_obs_layout(cfg);
  int off = segs.empty() ? 0 : segs.back().offset + segs.back().size;
  auto add = [&](const char* name, int size) {
    segs.push_back({name, off, size, true});
    off += size;
  };
  add("root_lin_vel", 3);
  add("dyn_params", 4);  // friction, mass_scale, kp, kd
  add("contact_forces", kNumLegs);
  return segs;
}

inline int obs_dim(const std::vector<ObsSegment>& segs) {
  return segs.empty() ? 0 : segs.back().offset + segs.back().size;
}

inline int actor_obs_dim(const EnvConfig& cfg) { return obs_dim(actor_obs_layout(cfg)); }
inline int critic_obs_dim(const EnvConfig& cfg) { return obs_dim(critic_obs_layout(cfg)); }

/// Actor (proprioceptive) and critic (actor + privileged) observation pair.
/// The privileged block is strictly appended after the actor block, so the
/// actor never sees root linear velocity, dynamics parameters or contact
/// forces.
struct ObsSplit {
  Eigen::VectorXd actor;
  Eigen::VectorXd critic;
};

inline ObsSplit build_obs(const SimState& s, const JointVec& prev_action, const MotionClip& motion,
                          const EnvConfig& cfg, const DynamicsParams& params,
                          const Eigen::VectorXd& command_embed) {
  if (command_embed.size() != cfg.command_embed_dim)
    throw std::invalid_argument("build_obs: command embedding dim mismatch");
  ObsSplit obs;
  obs.actor.resize(actor_obs_dim(cfg));
  const Quat q_inv = s.root.orientation.conjugate();
  int off = 0;
  obs.actor.segment<kNumJoints>(off) = s.q;
  off += kNumJoints;
  obs.actor.segment<kNumJoints>(off) = s.qd;
  off += kNumJoints;
  obs.actor.segment<3>(off) = q_inv * s.ang_vel;
  off += 3;
  obs.actor.segment<3>(off) = q_inv * Vec3(0, 0, -1);
  off += 3;
  obs.actor.segment<kNumJoints>(off) = prev_action;
  off += kNumJoints;
  const int last = motion.length() - 1;
  for (int w = 1; w <= cfg.ref_window; ++w) {
    const int idx = std::min(s.episode_step + w, last);
    const MotionFrame& f = motion.frames[static_cast<std::size_t>(idx)];
    obs.actor.segment<kNumJoints>(off) = f.q;
    off += kNumJoints;
    obs.actor.segment<3>(off) = q_inv * (f.root_pos - s.root.position);
    off += 3;
    const Quat rel = q_inv * f.root_quat.normalized();
    obs.actor[off + 0] = rel.w();
    obs.actor[off + 1] = rel.x();
    obs.actor[off + 2] = rel.y();
    obs.actor[off + 3] = rel.z();
    off += 4;
  }
  obs.actor.segment(off, cfg.command_embed_dim) = command_embed;
  off += cfg.command_embed_dim;

  obs.critic.resize(critic_obs_dim(cfg));
  obs.critic.head(off) = obs.actor;
  obs.critic.segment<3>(off) = s.lin_vel;
  off += 3;
  obs.critic[off + 0] = params.friction_coeff;
  obs.critic[off + 1] = params.mass_scale;
  obs.critic[off + 2] = params.kp;
  obs.critic[off + 3] = params.kd;
  off += 4;
  for (int leg = 0; leg < kNumLegs; ++leg)
    obs.critic[off + leg] = s.contact_force[static_cast<std::size_t>(leg)];
  return obs;
}

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

/// A single tracking environment instance. Each instance owns two private rng
/// streams (dynamics/reset noise and action sampling) derived from
/// (master_seed, env_index), so a batch of environments can be stepped by any
/// number of threads with identical results.
class QuadEnv {
 public:
  QuadEnv(Morphology morph, EnvConfig cfg, DynamicsParams nominal, std::uint64_t master_seed,
          int env_index)
      : morph_(std::move(morph)),
        cfg_(cfg),
        nominal_(nominal),
        params_(nominal),
        env_index_(env_index),
        dyn_rng_(RngStream::derive(master_seed, "env.dyn", static_cast<std::uint64_t>(env_index))),
        act_rng_(RngStream::derive(master_seed, "env.act", static_cast<std::uint64_t>(env_index))) {
    morph_.validate();
    nominal_.validate();
    cfg_.randomization.validate();
  }

  void set_motion(std::shared_ptr<const MotionClip> motion, Eigen::VectorXd command_embed,
                  int motion_id) {
    if (!motion || motion->frames.empty()) throw std::invalid_argument("QuadEnv: empty motion");
    motion_ = std::move(motion);
    embed_ = std::move(command_embed);
    motion_id_ = motion_id;
  }

  void set_randomization(bool on) { randomize_ = on; }
  void set_reset_noise(bool on) { reset_noise_ = on; }

  int env_index() const { return env_index_; }
  int motion_id() const { return motion_id_; }
  const MotionClip& motion() const { return *motion_; }
  const SimState& state() const { return state_; }
  const ObsSplit& obs() const { return obs_; }
  const DynamicsParams& params() const { return params_; }
  const Morphology& morph() const { return morph_; }
  const EnvConfig& config() const { return cfg_; }
  RngStream& action_rng() { return act_rng_; }
  const JointVec& prev_action() const { return prev_action_; }

  /// Initializes the state to the motion's first frame plus configured noise,
  /// settles contact for a few warm-up substeps, and rebuilds observations.
  ObsSplit reset() {
    if (!motion_) throw std::logic_error("QuadEnv::reset: no motion assigned");
    params_ = randomize_ ? randomize(nominal_, cfg_.randomization, dyn_rng_) : nominal_;

    const MotionFrame& f0 = motion_->frames.front();
    state_ = SimState{};
    state_.root.position = f0.root_pos;
    state_.root.orientation = f0.root_quat.normalized();
    state_.q = clamp_to_limits(morph_, f0.q);
    if (motion_->has_qd) state_.qd = f0.qd;

    if (reset_noise_) {
      const ResetNoise& n = cfg_.reset_noise;
      for (int j = 0; j < kNumJoints; ++j) state_.q[j] += dyn_rng_.uniform(-n.q, n.q);
      state_.q = clamp_to_limits(morph_, state_.q);
      for (int j = 0; j < kNumJoints; ++j) state_.qd[j] += dyn_rng_.uniform(-n.qd, n.qd);
      for (int a = 0; a < 3; ++a)
        state_.root.position[a] += dyn_rng_.uniform(-n.root_pos, n.root_pos);
      Vec3 rot;
      for (int a = 0; a < 3; ++a) rot[a] = dyn_rng_.uniform(-n.root_rot, n.root_rot);
      const double angle = rot.norm();
      if (angle > 0.0)
        state_.root.orientation =
            Quat(Eigen::AngleAxisd(angle, rot / angle)) * state_.root.orientation;
    }

    double energy_unused = 0.0;
    const JointVec hold = clamp_to_limits(morph_, f0.q);
    const double dt = cfg_.dt_control / cfg_.substeps;
    for (int i = 0; i < cfg_.warmup_substeps; ++i)
      sim_substep(state_, hold, params_, morph_, cfg_, dt, energy_unused);
    state_.time = 0.0;
    state_.episode_step = 0;

    prev_action_ = hold;
    obs_ = build_obs(state_, prev_action_, *motion_, cfg_, params_, embed_);
    return obs_;
  }

  struct StepOut {
    RewardTerms reward;
    bool terminated = false;
    TerminationReason reason = TerminationReason::None;
  };

  /// Advances one control step (dt_control split into physics substeps).
  /// The action is a target joint position vector, clipped to joint limits.
  StepOut step(const JointVec& action) {
    if (!motion_) throw std::logic_error("QuadEnv::step: no motion assigned");
    if (!action.allFinite())
      throw SimError("env " + std::to_string(env_index_) + ": non-finite action at step " +
                     std::to_string(state_.episode_step));
    const JointVec target = clamp_to_limits(morph_, action);

    double energy_abs = 0.0;
    const double dt = cfg_.dt_control / cfg_.substeps;
    for (int i = 0; i < cfg_.substeps; ++i)
      sim_substep(state_, target, params_, morph_, cfg_, dt, energy_abs);
    energy_abs /= cfg_.substeps;
    state_.episode_step += 1;

    if (!state_.all_finite())
      throw SimError("env " + std::to_string(env_index_) + ": NaN state at step " +
                     std::to_string(state_.episode_step) + " (motion " +
                     std::to_string(motion_id_) + ")");

    const int ref_idx = std::min(state_.episode_step, motion_->length() - 1);
    const MotionFrame& ref = motion_->frames[static_cast<std::size_t>(ref_idx)];

    StepOut out;
    const TerminationReason reason = check_termination(state_, *motion_, state_.episode_step,
                                                       morph_, cfg_);
    out.reason = reason;
    out.terminated = reason != TerminationReason::None;
    const bool failure = out.terminated && reason != TerminationReason::Timeout;

    RewardTerms& r = out.reward;
    r.r_track = tracking_reward(state_, frame_root(ref), ref.q, morph_, cfg_.keypoint_coeffs());
    r.r_action_rate = cfg_.reward.action_rate * (target - prev_action_).squaredNorm();
    r.r_energy = cfg_.reward.energy * energy_abs;
    r.r_alive = cfg_.reward.alive;
    r.r_termination = failure ? cfg_.reward.termination : 0.0;
    r.total = cfg_.reward.track * r.r_track + r.r_action_rate + r.r_energy + r.r_alive +
              r.r_termination;

    prev_action_ = target;
    obs_ = build_obs(state_, prev_action_, *motion_, cfg_, params_, embed_);
    return out;
  }

 private:
  Morphology morph_;
  EnvConfig cfg_;
  DynamicsParams nominal_;
  DynamicsParams params_;
  int env_index_ = 0;
  int motion_id_ = -1;
  bool randomize_ = true;
  bool reset_noise_ = true;
  std::shared_ptr<const MotionClip> motion_;
  Eigen::VectorXd embed_;
  SimState state_;
  JointVec prev_action_ = JointVec::Zero();
  ObsSplit obs_;
  RngStream dyn_rng_;
  RngStream act_rng_;
};

}  // namespace quadmotion
