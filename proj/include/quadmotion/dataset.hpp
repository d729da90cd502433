#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "quadmotion/clip.hpp"
#include "quadmotion/parallel.hpp"

namespace quadmotion {

struct DedupConfig {
  double threshold = 0.05;  // rad/s mean per-step DTW cost
  int fixed_window = 100;   // 2 s fallback windows
  int min_segment = 5;      // frames; shorter boundary scraps merge into neighbors
};

struct Segment {
  std::string clip_id;
  int clip_index = 0;
  int begin = 0;  // inclusive frame
  int end = 0;    // exclusive frame

  int length() const { return end - begin; }
};

/// Splits a clip at gait-cycle boundaries (rising edges of the FL-foot
/// contact signal). With fewer than two rising edges it falls back to fixed
/// windows. Segments partition the clip; scraps shorter than min_segment are
/// merged into their neighbor.
inline std::vector<Segment> segment_clip(const MotionClip& clip, int clip_index,
                                         const DedupConfig& cfg = {}) {
  if (clip.length() < 25)
    throw std::invalid_argument("segment_clip: clip \"" + clip.id + "\" shorter than 25 frames");

  std::vector<int> boundaries{0};
  std::vector<int> edges;
  for (int t = 1; t < clip.length(); ++t) {
    const bool prev = clip.frames[static_cast<std::size_t>(t - 1)].contact[0];
    const bool cur = clip.frames[static_cast<std::size_t>(t)].contact[0];
    if (cur && !prev) edges.push_back(t);
  }
  if (static_cast<int>(edges.size()) >= 2) {
    for (int e : edges) boundaries.push_back(e);
  } else {
    for (int t = cfg.fixed_window; t < clip.length(); t += cfg.fixed_window) boundaries.push_back(t);
  }
  boundaries.push_back(clip.length());
  std::sort(boundaries.begin(), boundaries.end());
  boundaries.erase(std::unique(boundaries.begin(), boundaries.end()), boundaries.end());

  std::vector<Segment> segs;
  for (std::size_t i = 0; i + 1 < boundaries.size(); ++i)
    segs.push_back({clip.id, clip_index, boundaries[i], boundaries[i + 1]});

  // merge scraps into neighbors, preserving the partition
  for (std::size_t i = 0; i < segs.size();) {
    if (segs[i].length() >= cfg.min_segment || segs.size() == 1) {
      ++i;
      continue;
    }
    if (i + 1 < segs.size()) {
      segs[i + 1].begin = segs[i].begin;
      segs.erase(segs.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      segs[i - 1].end = segs[i].end;
      segs.pop_back();
    }
  }
  return segs;
}

/// Classic DTW in joint-velocity space with Euclidean local cost. Returns
/// total path cost; path_length receives the number of matched pairs on the
/// optimal path (used for length normalization).
inline double dtw_cost(const std::vector<JointVec>& a, const std::vector<JointVec>& b,
                       int* path_length = nullptr) {
  if (a.empty() || b.empty()) throw std::invalid_argument("dtw_cost: empty sequence");
  const int n = static_cast<int>(a.size());
  const int m = static_cast<int>(b.size());
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd D(n + 1, m + 1);
  Eigen::MatrixXi L(n + 1, m + 1);
  D.setConstant(inf);
  L.setZero();
  D(0, 0) = 0.0;
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      const double cost = (a[static_cast<std::size_t>(i - 1)] - b[static_cast<std::size_t>(j - 1)]).norm();
      // tie-break: diagonal first, then the shorter warping path; symmetric
      double best = D(i - 1, j - 1);
      int len = L(i - 1, j - 1);
      if (D(i - 1, j) < best || (D(i - 1, j) == best && L(i - 1, j) < len)) {
        best = D(i - 1, j);
        len = L(i - 1, j);
      }
      if (D(i, j - 1) < best || (D(i, j - 1) == best && L(i, j - 1) < len)) {
        best = D(i, j - 1);
        len = L(i, j - 1);
      }
      D(i, j) = cost + best;
      L(i, j) = len + 1;
    }
  }
  if (path_length) *path_length = L(n, m);
  return D(n, m);
}

/// DTW distance normalized by the optimal warping-path length; symmetric and
/// zero for sequences identical up to zero-cost warping.
inline double dtw_distance(const std::vector<JointVec>& a, const std::vector<JointVec>& b) {
  int len = 0;
  const double cost = dtw_cost(a, b, &len);
  return cost / std::max(len, 1);
}

struct DedupReport {
  std::vector<Segment> segments;
  std::vector<std::vector<int>> clusters;   // indices into segments
  std::vector<int> representatives;         // one segment index per cluster
  int unique_count = 0;
};

namespace detail {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void merge(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

}  // namespace detail

/// Merges segments whose pairwise normalized DTW distance (joint-velocity
/// space) falls strictly below the threshold. The representative of each
/// cluster is its longest segment, ties broken by lowest clip id then lowest
/// start frame, which makes the report invariant to input ordering.
inline DedupReport dedup(const std::vector<MotionClip>& clips, const DedupConfig& cfg = {},
                         int num_threads = 1) {
  if (!(cfg.threshold >= 0.0)) throw std::invalid_argument("dedup: threshold must be >= 0");
  DedupReport report;
  std::vector<std::vector<JointVec>> velocities;
  for (std::size_t c = 0; c < clips.size(); ++c) {
    for (const Segment& seg : segment_clip(clips[c], static_cast<int>(c), cfg)) {
      report.segments.push_back(seg);
      velocities.push_back(joint_velocities(clips[c], seg.begin, seg.end));
    }
  }
  const int n = static_cast<int>(report.segments.size());

  // order-independent canonical segment ordering
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    const Segment& a = report.segments[static_cast<std::size_t>(x)];
    const Segment& b = report.segments[static_cast<std::size_t>(y)];
    return std::tie(a.clip_id, a.begin, a.end) < std::tie(b.clip_id, b.begin, b.end);
  });
  std::vector<Segment> sorted_segs;
  std::vector<std::vector<JointVec>> sorted_vel;
  for (int idx : order) {
    sorted_segs.push_back(report.segments[static_cast<std::size_t>(idx)]);
    sorted_vel.push_back(std::move(velocities[static_cast<std::size_t>(idx)]));
  }
  report.segments = std::move(sorted_segs);

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  std::vector<double> dist(pairs.size(), 0.0);
  parallel_for(static_cast<int>(pairs.size()), num_threads, [&](int k) {
    dist[static_cast<std::size_t>(k)] =
        dtw_distance(sorted_vel[static_cast<std::size_t>(pairs[static_cast<std::size_t>(k)].first)],
                     sorted_vel[static_cast<std::size_t>(pairs[static_cast<std::size_t>(k)].second)]);
  });

  detail::UnionFind uf(n);
  for (std::size_t k = 0; k < pairs.size(); ++k)
    if (dist[k] < cfg.threshold) uf.merge(pairs[k].first, pairs[k].second);

  std::vector<std::vector<int>> by_root(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) by_root[static_cast<std::size_t>(uf.find(i))].push_back(i);
  for (auto& members : by_root) {
    if (members.empty()) continue;
    int rep = members.front();
    for (int i : members) {
      const Segment& a = report.segments[static_cast<std::size_t>(i)];
      const Segment& r = report.segments[static_cast<std::size_t>(rep)];
      if (a.length() > r.length() ||
          (a.length() == r.length() && std::tie(a.clip_id, a.begin) < std::tie(r.clip_id, r.begin)))
        rep = i;
    }
    report.clusters.push_back(members);
    report.representatives.push_back(rep);
  }
  report.unique_count = static_cast<int>(report.clusters.size());
  return report;
}

constexpr int kFeatureDim = 40;

/// 40-dimensional dynamic feature vector: mean/std of root linear and angular
/// velocity (12), per-joint mean and std (24), per-foot contact duty factor
/// (4). Invariant to rigid world translation of the clip.
inline Eigen::VectorXd extract_features(const MotionClip& clip) {
  const int T = clip.length();
  if (T < 2) throw std::invalid_argument("extract_features: need >= 2 frames");
  const double fps = kClipFps;

  Eigen::MatrixXd lin(3, T - 1), ang(3, T - 1);
  for (int t = 0; t + 1 < T; ++t) {
    const MotionFrame& a = clip.frames[static_cast<std::size_t>(t)];
    const MotionFrame& b = clip.frames[static_cast<std::size_t>(t + 1)];
    lin.col(t) = (b.root_pos - a.root_pos) * fps;
    const Quat dq = b.root_quat.normalized() * a.root_quat.normalized().conjugate();
    Eigen::AngleAxisd aa(dq);
    double angle = aa.angle();
    if (angle > M_PI) angle -= 2.0 * M_PI;  // shortest arc
    ang.col(t) = aa.axis() * angle * fps;
  }

  auto mean_std = [](const Eigen::VectorXd& v) {
    const double mean = v.mean();
    const double var = (v.array() - mean).square().sum() / v.size();
    return std::make_pair(mean, std::sqrt(std::max(var, 0.0)));
  };

  Eigen::VectorXd f(kFeatureDim);
  int off = 0;
  for (int axis = 0; axis < 3; ++axis) {
    const auto [m, s] = mean_std(lin.row(axis).transpose());
    f[off++] = m;
    f[off++] = s;
  }
  for (int axis = 0; axis < 3; ++axis) {
    const auto [m, s] = mean_std(ang.row(axis).transpose());
    f[off++] = m;
    f[off++] = s;
  }
  for (int j = 0; j < kNumJoints; ++j) {
    Eigen::VectorXd qj(T);
    for (int t = 0; t < T; ++t) qj[t] = clip.frames[static_cast<std::size_t>(t)].q[j];
    const auto [m, s] = mean_std(qj);
    f[off++] = m;
    f[off++] = s;
  }
  for (int leg = 0; leg < kNumLegs; ++leg) {
    int in_contact = 0;
    for (int t = 0; t < T; ++t)
      if (clip.frames[static_cast<std::size_t>(t)].contact[static_cast<std::size_t>(leg)]) ++in_contact;
    f[off++] = static_cast<double>(in_contact) / T;
  }
  return f;
}

/// PCA to 2D via covariance eigendecomposition. Components are sorted by
/// descending eigenvalue (ties by index) and sign-fixed so the largest
/// magnitude loading of each component is positive.
inline std::vector<Eigen::Vector2d> pca_project(const std::vector<Eigen::VectorXd>& features) {
  if (features.size() < 3) throw std::invalid_argument("pca_project: need >= 3 feature vectors");
  const int d = static_cast<int>(features.front().size());
  const int n = static_cast<int>(features.size());
  for (const auto& f : features)
    if (f.size() != d) throw std::invalid_argument("pca_project: inconsistent feature dims");

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& f : features) mean += f;
  mean /= n;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& f : features) {
    const Eigen::VectorXd c = f - mean;
    cov += c * c.transpose();
  }
  cov /= n;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw std::runtime_error("pca_project: eigensolver failed");
  // eigenvalues come in ascending order; take the top two
  std::array<int, 2> comp = {d - 1, d - 2};
  Eigen::MatrixXd basis(d, 2);
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd v = eig.eigenvectors().col(comp[static_cast<std::size_t>(k)]);
    int arg = 0;
    for (int i = 1; i < d; ++i)
      if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
    if (v[arg] < 0.0) v = -v;
    basis.col(k) = v;
  }

  std::vector<Eigen::Vector2d> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(basis.transpose() * (f - mean));
  return out;
}

}  // namespace quadmotion
