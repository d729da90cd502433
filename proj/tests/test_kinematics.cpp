#include <catch2/catch.hpp>

#include "helpers.hpp"
#include "quadmotion/kinematics.hpp"

using namespace quadmotion;
using qmtest::test_morphology;

TEST_CASE("zero configuration puts feet straight down from the hips") {
  const Morphology m = test_morphology();
  const KeypointSet kp = forward_kinematics(m, RootPose{}, JointVec::Zero());
  REQUIRE(kp[kTrunk].isApprox(Vec3::Zero(), 1e-14));
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const Vec3 hip = m.hip_offsets[static_cast<std::size_t>(leg)];
    const double side = Morphology::side_sign(leg);
    const Vec3 expected_foot = hip + Vec3(0.0, side * m.l_hip, -(m.l_thigh + m.l_calf));
    REQUIRE((kp[foot_keypoint(leg)] - expected_foot).norm() < 1e-14);
    REQUIRE((kp[hip_keypoint(leg)] - hip).norm() < 1e-14);
    const Vec3 expected_knee = hip + Vec3(0.0, side * m.l_hip, -m.l_thigh);
    REQUIRE((kp[knee_keypoint(leg)] - expected_knee).norm() < 1e-14);
  }
}

TEST_CASE("hip flexion of pi/2 swings the FL foot forward") {
  const Morphology m = test_morphology();
  JointVec q = JointVec::Zero();
  q[1] = M_PI / 2.0;  // FL hip-flexion
  const KeypointSet kp = forward_kinematics(m, RootPose{}, q);
  const Vec3 hip = m.hip_offsets[0];
  const Vec3 expected = hip + Vec3(m.l_thigh + m.l_calf, m.l_hip, 0.0);
  REQUIRE((kp[kFootFL] - expected).norm() < 1e-12);
}

TEST_CASE("FK is equivariant under root translation") {
  const Morphology m = test_morphology();
  RngStream rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const JointVec q = qmtest::random_interior_config(m, rng);
    RootPose base;
    const KeypointSet kp0 = forward_kinematics(m, base, q);
    RootPose moved = base;
    moved.position = Vec3(1.0, 2.0, 3.0);
    const KeypointSet kp1 = forward_kinematics(m, moved, q);
    for (int k = 0; k < kNumKeypoints; ++k)
      REQUIRE((kp1[k] - kp0[k] - Vec3(1.0, 2.0, 3.0)).norm() < 1e-12);
  }
}

TEST_CASE("FK is equivariant under root rotation") {
  const Morphology m = test_morphology();
  RngStream rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const JointVec q = qmtest::random_interior_config(m, rng);
    RootPose base;
    base.position = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const KeypointSet kp0 = forward_kinematics(m, base, q);
    Quat rot(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    rot.normalize();
    RootPose rotated = base;
    rotated.orientation = rot;
    const KeypointSet kp1 = forward_kinematics(m, rotated, q);
    for (int k = 0; k < kNumKeypoints; ++k) {
      const Vec3 expected = base.position + rot * (kp0[k] - base.position);
      REQUIRE((kp1[k] - expected).norm() < 1e-12);
    }
  }
}

TEST_CASE("fk_jacobian matches central finite differences") {
  const Morphology m = test_morphology();
  RngStream rng(9);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    JointVec q = qmtest::random_interior_config(m, rng);
    RootPose root;
    root.position = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0, 1));
    Quat rot(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    rot.normalize();
    root.orientation = rot;
    const int kp = static_cast<int>(rng.uniform_index(kNumKeypoints));
    const KeypointJacobian J = fk_jacobian(m, root, q, kp);
    for (int j = 0; j < kNumJoints; ++j) {
      JointVec qp = q, qm = q;
      qp[j] += h;
      qm[j] -= h;
      const Vec3 dp = (forward_kinematics(m, root, qp)[kp] - forward_kinematics(m, root, qm)[kp]) /
                      (2.0 * h);
      REQUIRE((J.col(j) - dp).cwiseAbs().maxCoeff() < 1e-5);
    }
  }
}

TEST_CASE("jacobian sparsity follows the kinematic chains") {
  const Morphology m = test_morphology();
  RngStream rng(10);
  const JointVec q = qmtest::random_interior_config(m, rng);

  REQUIRE(fk_jacobian(m, RootPose{}, q, kTrunk).isZero(0.0));
  REQUIRE(fk_jacobian(m, RootPose{}, q, kHipRR).isZero(0.0));

  const KeypointJacobian J = fk_jacobian(m, RootPose{}, q, kFootFL);
  for (int j = 3; j < kNumJoints; ++j) REQUIRE(J.col(j).isZero(0.0));
  REQUIRE(J.leftCols<3>().norm() > 0.0);
}

TEST_CASE("clamp_to_limits is an idempotent projection") {
  const Morphology m = test_morphology();
  RngStream rng(11);

  JointVec inside = qmtest::random_interior_config(m, rng);
  REQUIRE(clamp_to_limits(m, inside) == inside);

  JointVec q = inside;
  q[4] = m.joint_upper[4] + 0.5;
  const JointVec clamped = clamp_to_limits(m, q);
  REQUIRE(clamped[4] == m.joint_upper[4]);
  REQUIRE(within_limits(m, clamped));
  REQUIRE(clamp_to_limits(m, clamped) == clamped);
}

TEST_CASE("kinematics error paths") {
  const Morphology m = test_morphology();
  JointVec q = JointVec::Zero();
  q[3] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(forward_kinematics(m, RootPose{}, q), std::domain_error);
  REQUIRE_THROWS_AS(fk_jacobian(m, RootPose{}, JointVec::Zero(), 99), std::out_of_range);
  REQUIRE_THROWS_AS(keypoint_from_name("elbow"), std::out_of_range);

  Morphology bad = m;
  bad.joint_lower[0] = bad.joint_upper[0];
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);

  Morphology asym = m;
  asym.hip_offsets[1].y() = 0.05;
  REQUIRE_THROWS_AS(asym.validate(), std::invalid_argument);
}
