#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace quadmotion {

constexpr int kNumLegs = 4;
constexpr int kNumJoints = 12;
constexpr int kNumKeypoints = 13;

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using JointVec = Eigen::Matrix<double, kNumJoints, 1>;
using KeypointJacobian = Eigen::Matrix<double, 3, kNumJoints>;

/// Leg order used everywhere: FL, FR, RL, RR.
/// Joint order within a leg: hip-abduction (about trunk x), hip-flexion
/// (about leg y), knee-flexion (about leg y). Zero configuration = legs
/// straight down; positive hip flexion swings the foot toward trunk +x.
enum Keypoint : int {
  kTrunk = 0,
  kHipFL, kHipFR, kHipRL, kHipRR,
  kKneeFL, kKneeFR, kKneeRL, kKneeRR,
  kFootFL, kFootFR, kFootRL, kFootRR,
};

inline constexpr std::array<const char*, kNumKeypoints> kKeypointNames = {
    "trunk",
    "hip_fl", "hip_fr", "hip_rl", "hip_rr",
    "knee_fl", "knee_fr", "knee_rl", "knee_rr",
    "foot_fl", "foot_fr", "foot_rl", "foot_rr",
};

inline constexpr int hip_keypoint(int leg) { return 1 + leg; }
inline constexpr int knee_keypoint(int leg) { return 5 + leg; }
inline constexpr int foot_keypoint(int leg) { return 9 + leg; }

/// Returns the leg index of a keypoint, or -1 for the trunk.
inline constexpr int keypoint_leg(int kp) { return kp == kTrunk ? -1 : (kp - 1) % 4; }

inline int keypoint_from_name(const std::string& name) {
  for (int i = 0; i < kNumKeypoints; ++i)
    if (name == kKeypointNames[static_cast<std::size_t>(i)]) return i;
  throw std::out_of_range("unknown keypoint id: " + name);
}

/// 13 world-frame points: trunk plus hip/knee/foot per leg.
struct KeypointSet {
  std::array<Vec3, kNumKeypoints> points;

  Vec3& operator[](int i) { return points[static_cast<std::size_t>(i)]; }
  const Vec3& operator[](int i) const { return points[static_cast<std::size_t>(i)]; }

  bool all_finite() const {
    for (const auto& p : points)
      if (!p.allFinite()) return false;
    return true;
  }
};

struct RootPose {
  Vec3 position{0.0, 0.0, 0.0};
  Quat orientation{1.0, 0.0, 0.0, 0.0};  // (w, x, y, z)

  bool valid() const {
    return position.allFinite() && orientation.coeffs().allFinite() &&
           std::abs(orientation.norm() - 1.0) < 1e-9;
  }
};

/// Quadruped kinematic description. Trunk plus four 3-DoF legs; each leg is
/// a lateral hip link followed by a thigh/calf chain in the sagittal plane
/// of the abducted hip frame.
struct Morphology {
  Vec3 trunk_dims{0.4, 0.12, 0.12};           // box extents, m
  std::array<Vec3, kNumLegs> hip_offsets{};   // trunk frame, order FL FR RL RR
  double l_hip = 0.08;                        // lateral hip link, m
  double l_thigh = 0.21;                      // m
  double l_calf = 0.21;                       // m
  JointVec joint_lower = JointVec::Zero();    // rad
  JointVec joint_upper = JointVec::Zero();    // rad
  JointVec torque_limit = JointVec::Zero();   // N*m
  double trunk_mass = 6.0;                    // kg
  double leg_joint_inertia = 0.02;            // kg*m^2, effective per joint

  /// +1 for left legs (FL, RL), -1 for right legs (FR, RR).
  static double side_sign(int leg) { return (leg == 0 || leg == 2) ? 1.0 : -1.0; }

  void validate() const {
    if (!(l_thigh > 0.0) || !(l_calf > 0.0))
      throw std::invalid_argument("Morphology: link lengths must be positive");
    if (!(l_hip >= 0.0)) throw std::invalid_argument("Morphology: l_hip must be nonnegative");
    if (!(trunk_mass > 0.0)) throw std::invalid_argument("Morphology: trunk_mass must be positive");
    if (!(leg_joint_inertia > 0.0))
      throw std::invalid_argument("Morphology: leg_joint_inertia must be positive");
    for (int j = 0; j < kNumJoints; ++j)
      if (!(joint_lower[j] < joint_upper[j]))
        throw std::invalid_argument("Morphology: joint limit lo >= hi at joint " +
                                    std::to_string(j));
    // mirror symmetry about the trunk x-z plane: FL<->FR and RL<->RR
    for (int pair = 0; pair < 2; ++pair) {
      const Vec3& left = hip_offsets[static_cast<std::size_t>(2 * pair)];
      const Vec3& right = hip_offsets[static_cast<std::size_t>(2 * pair + 1)];
      if (std::abs(left.x() - right.x()) > 1e-9 || std::abs(left.y() + right.y()) > 1e-9 ||
          std::abs(left.z() - right.z()) > 1e-9)
        throw std::invalid_argument("Morphology: hip_offsets not mirror-symmetric");
    }
  }
};

inline Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}

/// d(rot_x)/da.
inline Mat3 rot_x_deriv(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << 0, 0, 0, 0, -s, -c, 0, c, -s;
  return r;
}

namespace detail {

/// Point of the thigh/calf chain in the (pre-abduction) hip frame.
/// x is sagittal, y carries the lateral hip link, z points up.
inline Vec3 leg_chain_point(const Morphology& m, int leg, double q_flex, double q_knee,
                            bool include_calf) {
  const double side = Morphology::side_sign(leg);
  const double s1 = std::sin(q_flex), c1 = std::cos(q_flex);
  Vec3 p(m.l_thigh * s1, side * m.l_hip, -m.l_thigh * c1);
  if (include_calf) {
    const double s12 = std::sin(q_flex + q_knee), c12 = std::cos(q_flex + q_knee);
    p.x() += m.l_calf * s12;
    p.z() -= m.l_calf * c12;
  }
  return p;
}

}  // namespace detail

/// World-frame positions of the 13 keypoints.
inline KeypointSet forward_kinematics(const Morphology& m, const RootPose& root,
                                      const JointVec& q) {
  if (!q.allFinite()) throw std::domain_error("forward_kinematics: non-finite joint angles");
  if (!root.position.allFinite() || !root.orientation.coeffs().allFinite())
    throw std::domain_error("forward_kinematics: non-finite root pose");
  const Mat3 R = root.orientation.toRotationMatrix();
  KeypointSet out;
  out[kTrunk] = root.position;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const Vec3& hip = m.hip_offsets[static_cast<std::size_t>(leg)];
    const double q0 = q[3 * leg + 0];
    const double q1 = q[3 * leg + 1];
    const double q2 = q[3 * leg + 2];
    const Mat3 Rx = rot_x(q0);
    const Vec3 knee_local = Rx * detail::leg_chain_point(m, leg, q1, q2, false);
    const Vec3 foot_local = Rx * detail::leg_chain_point(m, leg, q1, q2, true);
    out[hip_keypoint(leg)] = root.position + R * hip;
    out[knee_keypoint(leg)] = root.position + R * (hip + knee_local);
    out[foot_keypoint(leg)] = root.position + R * (hip + foot_local);
  }
  return out;
}

/// d(keypoint position)/d(q), 3x12. Columns of joints off the keypoint's
/// chain are zero; trunk and hip keypoints do not depend on q at all.
inline KeypointJacobian fk_jacobian(const Morphology& m, const RootPose& root, const JointVec& q,
                                    int keypoint) {
  if (keypoint < 0 || keypoint >= kNumKeypoints)
    throw std::out_of_range("fk_jacobian: unknown keypoint id " + std::to_string(keypoint));
  if (!q.allFinite()) throw std::domain_error("fk_jacobian: non-finite joint angles");
  KeypointJacobian J = KeypointJacobian::Zero();
  const int leg = keypoint_leg(keypoint);
  if (leg < 0 || keypoint == hip_keypoint(leg)) return J;

  const bool with_calf = (keypoint == foot_keypoint(leg));
  const double side = Morphology::side_sign(leg);
  const double q0 = q[3 * leg + 0];
  const double q1 = q[3 * leg + 1];
  const double q2 = q[3 * leg + 2];
  const double s1 = std::sin(q1), c1 = std::cos(q1);
  const double s12 = std::sin(q1 + q2), c12 = std::cos(q1 + q2);

  Vec3 p(m.l_thigh * s1, side * m.l_hip, -m.l_thigh * c1);
  Vec3 dp_dq1(m.l_thigh * c1, 0.0, m.l_thigh * s1);
  Vec3 dp_dq2 = Vec3::Zero();
  if (with_calf) {
    p += Vec3(m.l_calf * s12, 0.0, -m.l_calf * c12);
    dp_dq1 += Vec3(m.l_calf * c12, 0.0, m.l_calf * s12);
    dp_dq2 = Vec3(m.l_calf * c12, 0.0, m.l_calf * s12);
  }

  const Mat3 R = root.orientation.toRotationMatrix();
  const Mat3 Rx = rot_x(q0);
  J.col(3 * leg + 0) = R * (rot_x_deriv(q0) * p);
  J.col(3 * leg + 1) = R * (Rx * dp_dq1);
  if (with_calf) J.col(3 * leg + 2) = R * (Rx * dp_dq2);
  return J;
}

/// Per-joint clamp into [lo, hi]; idempotent projection.
inline JointVec clamp_to_limits(const Morphology& m, const JointVec& q) {
  JointVec out;
  for (int j = 0; j < kNumJoints; ++j)
    out[j] = std::min(std::max(q[j], m.joint_lower[j]), m.joint_upper[j]);
  return out;
}

inline bool within_limits(const Morphology& m, const JointVec& q, double tol = 0.0) {
  for (int j = 0; j < kNumJoints; ++j)
    if (q[j] < m.joint_lower[j] - tol || q[j] > m.joint_upper[j] + tol) return false;
  return true;
}

}  // namespace quadmotion
