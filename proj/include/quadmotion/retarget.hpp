#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "quadmotion/clip.hpp"
#include "quadmotion/io_util.hpp"
#include "quadmotion/kinematics.hpp"

namespace quadmotion {

/// Per-keypoint IK weights plus the temporal-smoothness regularizer weight.
/// End-effectors carry larger weights to preserve contact fidelity.
struct RetargetWeights {
  std::array<double, kNumKeypoints> w_keypoint{};
  double w_reg = 0.1;

  static RetargetWeights defaults() {
    RetargetWeights w;
    w.w_keypoint[kTrunk] = 1.0;
    for (int leg = 0; leg < kNumLegs; ++leg) {
      w.w_keypoint[static_cast<std::size_t>(hip_keypoint(leg))] = 1.0;
      w.w_keypoint[static_cast<std::size_t>(knee_keypoint(leg))] = 1.0;
      w.w_keypoint[static_cast<std::size_t>(foot_keypoint(leg))] = 5.0;
    }
    w.w_reg = 0.1;
    return w;
  }

  void validate() const {
    double max_w = 0.0;
    for (double w : w_keypoint) {
      if (w < 0.0) throw std::invalid_argument("RetargetWeights: negative keypoint weight");
      max_w = std::max(max_w, w);
    }
    if (w_reg < 0.0) throw std::invalid_argument("RetargetWeights: negative w_reg");
    if (!(max_w > 0.0)) throw std::invalid_argument("RetargetWeights: all keypoint weights zero");
  }
};

struct RetargetSolverSettings {
  int max_iters = 50;
  double objective_tol = 1e-8;   // stop when the accepted decrease falls below
  double gradient_tol = 1e-10;   // projected-gradient stationarity
  double lambda_init = 1e-4;     // Levenberg damping
  int max_backtracks = 25;
  int max_stalls = 5;            // consecutive damped attempts without decrease
  // when the warm-started solve lands above this keypoint RMS, re-solve from
  // the fallback starts and keep the best objective (local-minimum escape)
  double restart_residual = 0.01;
  std::vector<JointVec> fallback_starts{JointVec::Zero()};
};

struct RetargetProblem {
  Morphology morph;
  std::vector<KeypointSet> targets;   // p_hat per frame
  std::vector<RootPose> root_track;   // given, not optimized
  RetargetWeights weights = RetargetWeights::defaults();
  RetargetSolverSettings solver;

  void validate() const {
    morph.validate();
    weights.validate();
    if (targets.empty()) throw std::invalid_argument("RetargetProblem: no target frames");
    if (targets.size() != root_track.size())
      throw std::invalid_argument("RetargetProblem: targets/root_track length mismatch");
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (!targets[t].all_finite())
        throw std::domain_error("RetargetProblem: non-finite target at frame " + std::to_string(t));
      if (!root_track[t].valid())
        throw std::domain_error("RetargetProblem: invalid root pose at frame " + std::to_string(t));
    }
  }
};

struct FrameSolution {
  JointVec q = JointVec::Zero();
  double residual_rms = 0.0;  // RMS position error over keypoints with w > 0, m
  bool converged = false;
  int iterations = 0;
};

struct RetargetResult {
  std::vector<JointVec> q_traj;
  std::vector<double> residuals;
  std::vector<bool> converged;
};

namespace detail {

inline double retarget_objective(const RetargetProblem& p, std::size_t t, const JointVec& q,
                                 const JointVec& q_prev) {
  const KeypointSet fk = forward_kinematics(p.morph, p.root_track[t], q);
  double obj = 0.0;
  for (int k = 0; k < kNumKeypoints; ++k) {
    const double w = p.weights.w_keypoint[static_cast<std::size_t>(k)];
    if (w > 0.0) obj += w * (fk[k] - p.targets[t][k]).squaredNorm();
  }
  obj += p.weights.w_reg * (q - q_prev).squaredNorm();
  return obj;
}

inline double residual_rms(const RetargetProblem& p, std::size_t t, const JointVec& q) {
  const KeypointSet fk = forward_kinematics(p.morph, p.root_track[t], q);
  double sum = 0.0;
  int n = 0;
  for (int k = 0; k < kNumKeypoints; ++k) {
    if (p.weights.w_keypoint[static_cast<std::size_t>(k)] > 0.0) {
      sum += (fk[k] - p.targets[t][k]).squaredNorm();
      ++n;
    }
  }
  return n > 0 ? std::sqrt(sum / n) : 0.0;
}

}  // namespace detail

namespace detail {

/// One damped Gauss-Newton descent from a fixed start point.
inline FrameSolution solve_frame_from(const RetargetProblem& p, std::size_t t,
                                      const JointVec& q_prev, const JointVec& q_start) {
  const RetargetSolverSettings& s = p.solver;

  FrameSolution sol;
  JointVec q = clamp_to_limits(p.morph, q_start);
  double obj = retarget_objective(p, t, q, q_prev);
  double lambda = s.lambda_init;
  int stalls = 0;

  // weighted residual rows: 3 per active keypoint plus 12 regularizer rows
  std::vector<int> active;
  for (int k = 0; k < kNumKeypoints; ++k)
    if (p.weights.w_keypoint[static_cast<std::size_t>(k)] > 0.0) active.push_back(k);
  const int rows = 3 * static_cast<int>(active.size()) + kNumJoints;
  Eigen::MatrixXd J(rows, kNumJoints);
  Eigen::VectorXd r(rows);

  for (int iter = 0; iter < s.max_iters; ++iter) {
    if (obj <= 1e-18) {
      sol.converged = true;
      break;
    }
    const KeypointSet fk = forward_kinematics(p.morph, p.root_track[t], q);
    J.setZero();
    int row = 0;
    for (int k : active) {
      const double sw = std::sqrt(p.weights.w_keypoint[static_cast<std::size_t>(k)]);
      r.segment<3>(row) = sw * (fk[k] - p.targets[t][k]);
      J.block<3, kNumJoints>(row, 0) = sw * fk_jacobian(p.morph, p.root_track[t], q, k);
      row += 3;
    }
    const double sw_reg = std::sqrt(p.weights.w_reg);
    r.segment<kNumJoints>(row) = sw_reg * (q - q_prev);
    J.block<kNumJoints, kNumJoints>(row, 0) = sw_reg * JointVec::Ones().asDiagonal().toDenseMatrix();

    const Eigen::Matrix<double, kNumJoints, 1> g = J.transpose() * r;

    // projected-gradient stationarity (handles limit-bound optima exactly)
    double pg_inf = 0.0;
    for (int j = 0; j < kNumJoints; ++j) {
      double gj = g[j];
      if (q[j] <= p.morph.joint_lower[j] && gj > 0.0) gj = 0.0;
      if (q[j] >= p.morph.joint_upper[j] && gj < 0.0) gj = 0.0;
      pg_inf = std::max(pg_inf, std::abs(gj));
    }
    if (pg_inf < s.gradient_tol) {
      sol.converged = true;
      break;
    }

    Eigen::Matrix<double, kNumJoints, kNumJoints> H = J.transpose() * J;
    H.diagonal().array() += lambda;
    const JointVec delta = H.ldlt().solve(-g);

    double step = 1.0;
    bool accepted = false;
    JointVec q_new;
    double obj_new = obj;
    for (int bt = 0; bt < s.max_backtracks; ++bt) {
      q_new = clamp_to_limits(p.morph, q + step * delta);
      obj_new = retarget_objective(p, t, q_new, q_prev);
      if (obj_new < obj) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++sol.iterations;
    if (!accepted) {
      lambda *= 10.0;
      if (++stalls >= s.max_stalls) break;  // divergence: reported via converged=false
      continue;
    }
    stalls = 0;
    lambda = std::max(lambda / 3.0, 1e-12);
    // a sub-tolerance improvement counts as converged; the step is discarded
    // so that re-solving from a stationary point returns it unchanged
    if (obj - obj_new < s.objective_tol) {
      sol.converged = true;
      break;
    }
    q = q_new;
    obj = obj_new;
  }

  sol.q = q;
  sol.residual_rms = residual_rms(p, t, q);
  return sol;
}

}  // namespace detail

/// Solves one frame of the weighted IK objective
///   sum_i w_i ||FK_i(q) - p_hat_i||^2 + w_reg ||q - q_prev||^2
/// by damped Gauss-Newton: Levenberg damping for conditioning, backtracking
/// halving on the step, and projection onto joint limits after every trial
/// step. The returned configuration always satisfies the limits and its
/// objective never exceeds the objective at q_prev. A warm-started solve that
/// lands above restart_residual is retried from the configured fallback
/// starts and the lowest objective wins (deterministic local-minimum escape).
inline FrameSolution solve_frame(const RetargetProblem& p, std::size_t t, const JointVec& q_prev) {
  if (t >= p.targets.size()) throw std::out_of_range("solve_frame: frame index out of range");
  if (!p.targets[t].all_finite()) throw std::domain_error("solve_frame: non-finite targets");
  if (!q_prev.allFinite()) throw std::domain_error("solve_frame: non-finite q_prev");

  FrameSolution best = detail::solve_frame_from(p, t, q_prev, q_prev);
  if (best.residual_rms > p.solver.restart_residual) {
    double best_obj = detail::retarget_objective(p, t, best.q, q_prev);
    for (const JointVec& start : p.solver.fallback_starts) {
      const FrameSolution alt = detail::solve_frame_from(p, t, q_prev, start);
      const double alt_obj = detail::retarget_objective(p, t, alt.q, q_prev);
      if (alt_obj < best_obj) {
        best = alt;
        best_obj = alt_obj;
      }
    }
  }
  return best;
}

/// Sequential trajectory solve, each frame warm-started from the previous
/// solution (which also supplies the w_reg anchor). Deterministic; per-frame
/// divergence is propagated in the converged flags, never aborts.
inline RetargetResult solve_trajectory(const RetargetProblem& p, const JointVec& q_init) {
  p.validate();
  RetargetResult res;
  res.q_traj.reserve(p.targets.size());
  res.residuals.reserve(p.targets.size());
  res.converged.reserve(p.targets.size());
  JointVec q_prev = clamp_to_limits(p.morph, q_init);
  for (std::size_t t = 0; t < p.targets.size(); ++t) {
    const FrameSolution sol = solve_frame(p, t, q_prev);
    res.q_traj.push_back(sol.q);
    res.residuals.push_back(sol.residual_rms);
    res.converged.push_back(sol.converged);
    q_prev = sol.q;
  }
  return res;
}

struct FootSkate {
  double mean_speed = 0.0;  // m/s, world-frame tangential, contact frames only
  bool any_contact = false;
};

/// Mean tangential (horizontal) foot speed over frame pairs where the foot is
/// flagged in contact at both endpoints. Returns 0 with any_contact=false when
/// no such pair exists.
inline FootSkate foot_skate_score(const Morphology& morph, const std::vector<RootPose>& root_track,
                                  const std::vector<JointVec>& q_traj,
                                  const std::vector<std::array<bool, kNumLegs>>& contacts,
                                  double fps = kClipFps) {
  if (root_track.size() != q_traj.size() || contacts.size() != q_traj.size())
    throw std::invalid_argument("foot_skate_score: trajectory length mismatch");
  FootSkate out;
  double sum = 0.0;
  int n = 0;
  std::array<Vec3, kNumLegs> prev_feet;
  for (std::size_t t = 0; t < q_traj.size(); ++t) {
    const KeypointSet fk = forward_kinematics(morph, root_track[t], q_traj[t]);
    for (int leg = 0; leg < kNumLegs; ++leg) {
      const Vec3 foot = fk[foot_keypoint(leg)];
      if (t > 0 && contacts[t - 1][static_cast<std::size_t>(leg)] &&
          contacts[t][static_cast<std::size_t>(leg)]) {
        const Vec3 d = foot - prev_feet[static_cast<std::size_t>(leg)];
        sum += std::hypot(d.x(), d.y()) * fps;
        ++n;
      }
      prev_feet[static_cast<std::size_t>(leg)] = foot;
    }
  }
  if (n > 0) {
    out.mean_speed = sum / n;
    out.any_contact = true;
  }
  return out;
}

/// Reads keypoint target trajectories from CSV with header
/// "frame,keypoint,x,y,z" (one row per keypoint per frame, all 13 keypoints
/// required for every frame, frames numbered 0..T-1).
inline std::vector<KeypointSet> read_keypoint_csv(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.find("frame") == std::string::npos)
    throw FormatError(path.string() + ": expected header \"frame,keypoint,x,y,z\"");
  std::map<int, std::pair<KeypointSet, std::array<bool, kNumKeypoints>>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string frame_s, kp_s, x_s, y_s, z_s;
    if (!std::getline(ls, frame_s, ',') || !std::getline(ls, kp_s, ',') ||
        !std::getline(ls, x_s, ',') || !std::getline(ls, y_s, ',') || !std::getline(ls, z_s))
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 5 fields");
    int frame = 0, kp = 0;
    try {
      frame = std::stoi(frame_s);
      kp = keypoint_from_name(kp_s);
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    auto& entry = rows[frame];
    entry.first[kp] = Vec3(std::stod(x_s), std::stod(y_s), std::stod(z_s));
    entry.second[static_cast<std::size_t>(kp)] = true;
  }
  if (rows.empty()) throw FormatError(path.string() + ": no keypoint rows");
  std::vector<KeypointSet> out;
  int expected = 0;
  for (const auto& [frame, entry] : rows) {
    if (frame != expected)
      throw FormatError(path.string() + ": frames must be contiguous from 0, missing frame " +
                        std::to_string(expected));
    for (int k = 0; k < kNumKeypoints; ++k)
      if (!entry.second[static_cast<std::size_t>(k)])
        throw FormatError(path.string() + ": frame " + std::to_string(frame) +
                          " missing keypoint \"" + kKeypointNames[static_cast<std::size_t>(k)] +
                          "\"");
    out.push_back(entry.first);
    ++expected;
  }
  return out;
}

}  // namespace quadmotion
