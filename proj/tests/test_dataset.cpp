#include <catch2/catch.hpp>

#include <algorithm>

#include "helpers.hpp"
#include "quadmotion/dataset.hpp"

using namespace quadmotion;
using qmtest::test_morphology;

namespace {

JointVec scalar_frame(double v) {
  JointVec q = JointVec::Zero();
  q[0] = v;
  return q;
}

std::vector<JointVec> seq(std::initializer_list<double> values) {
  std::vector<JointVec> out;
  for (double v : values) out.push_back(scalar_frame(v));
  return out;
}

/// k distinct sinusoid clips, each with extra noisy duplicates (noise on both
/// q and qd so the stored joint-velocity space carries it too).
std::vector<MotionClip> dedup_corpus(int k, int duplicates, double noise, std::uint64_t seed) {
  const Morphology m = test_morphology();
  std::vector<MotionClip> clips;
  RngStream noise_rng(seed, 5);
  for (int base = 0; base < k; ++base) {
    const MotionClip original = qmtest::sinusoid_clip(
        m, 60, 0.35, 0.15, 2.0 + 0.45 * base, seed + static_cast<std::uint64_t>(base) * 13,
        "base_" + std::to_string(base));
    clips.push_back(original);
    for (int d = 0; d < duplicates; ++d) {
      MotionClip copy = original;
      copy.id = "dup_" + std::to_string(base) + "_" + std::to_string(d);
      for (MotionFrame& f : copy.frames)
        for (int j = 0; j < kNumJoints; ++j) {
          f.q[j] += noise * noise_rng.normal();
          f.qd[j] += noise * noise_rng.normal();
        }
      clips.push_back(std::move(copy));
    }
  }
  return clips;
}

}  // namespace

TEST_CASE("dtw closed-form cases") {
  SECTION("identical sequences have zero distance") {
    const auto a = seq({0.3, -0.2, 1.0, 0.5});
    REQUIRE(dtw_distance(a, a) == 0.0);
  }
  SECTION("constant offset: cost 2 over a diagonal path of length 2") {
    int len = 0;
    const double cost = dtw_cost(seq({0.0, 0.0}), seq({1.0, 1.0}), &len);
    REQUIRE(cost == Approx(2.0));
    REQUIRE(len == 2);
    REQUIRE(dtw_distance(seq({0.0, 0.0}), seq({1.0, 1.0})) == Approx(1.0));
  }
  SECTION("a repeated frame is absorbed by warping") {
    REQUIRE(dtw_distance(seq({1.0, 2.0, 3.0}), seq({1.0, 2.0, 2.0, 3.0})) == Approx(0.0));
  }
  SECTION("empty sequences are rejected") {
    std::vector<JointVec> empty;
    REQUIRE_THROWS_AS(dtw_distance(empty, seq({1.0})), std::invalid_argument);
  }
  SECTION("symmetric and nonnegative on random sequences") {
    RngStream rng(121);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<JointVec> a, b;
      const int na = 2 + static_cast<int>(rng.uniform_index(8));
      const int nb = 2 + static_cast<int>(rng.uniform_index(8));
      for (int i = 0; i < na; ++i) a.push_back(JointVec::NullaryExpr([&](Eigen::Index) { return rng.normal(); }));
      for (int i = 0; i < nb; ++i) b.push_back(JointVec::NullaryExpr([&](Eigen::Index) { return rng.normal(); }));
      const double ab = dtw_distance(a, b);
      REQUIRE(ab >= 0.0);
      REQUIRE(ab == dtw_distance(b, a));
    }
  }
}

TEST_CASE("segmentation follows FL gait cycles with a fixed-window fallback") {
  const Morphology m = test_morphology();

  SECTION("three full cycles give three cycle segments") {
    MotionClip clip = qmtest::standing_clip(m, 120);
    for (int t = 0; t < 120; ++t)
      clip.frames[static_cast<std::size_t>(t)].contact[0] = (t % 40) < 15 && t >= 1;
    // rising edges at 40 and 80 (the t=1 edge also counts)
    const auto segs = segment_clip(clip, 0);
    REQUIRE(segs.size() == 3);
    REQUIRE(segs[0].begin == 0);
    REQUIRE(segs[0].end == 40);
    REQUIRE(segs[1].end == 80);
    REQUIRE(segs[2].end == 120);
  }
  SECTION("cycles plus a trailing remainder") {
    MotionClip clip = qmtest::standing_clip(m, 130);
    for (int t = 0; t < 130; ++t) {
      bool c = false;
      if (t >= 40 && t < 55) c = true;
      if (t >= 80 && t < 95) c = true;
      clip.frames[static_cast<std::size_t>(t)].contact[0] = c;
    }
    const auto segs = segment_clip(clip, 0);
    REQUIRE(segs.size() == 3);  // [0,40) [40,80) [80,130)
    REQUIRE(segs[2].begin == 80);
    REQUIRE(segs[2].end == 130);
  }
  SECTION("feet never in contact fall back to fixed 100-frame windows") {
    MotionClip clip = qmtest::standing_clip(m, 250);
    for (auto& f : clip.frames) f.contact = {false, false, false, false};
    const auto segs = segment_clip(clip, 0);
    REQUIRE(segs.size() == 3);
    REQUIRE(segs[0].end == 100);
    REQUIRE(segs[1].end == 200);
    REQUIRE(segs[2].end == 250);
  }
  SECTION("segments always partition the frame range") {
    RngStream rng(122);
    for (int trial = 0; trial < 10; ++trial) {
      MotionClip clip = qmtest::standing_clip(m, 60 + static_cast<int>(rng.uniform_index(200)));
      for (auto& f : clip.frames) f.contact[0] = rng.uniform01() < 0.3;
      const auto segs = segment_clip(clip, 0);
      int cursor = 0;
      for (const Segment& s : segs) {
        REQUIRE(s.begin == cursor);
        REQUIRE(s.end > s.begin);
        cursor = s.end;
      }
      REQUIRE(cursor == clip.length());
    }
  }
  SECTION("too-short clips are rejected") {
    const MotionClip clip = qmtest::standing_clip(m, 20);
    REQUIRE_THROWS_AS(segment_clip(clip, 0), std::invalid_argument);
  }
}

TEST_CASE("dedup merges noisy duplicates into unique atomic motions") {
  const auto clips = dedup_corpus(5, 5, 0.001, 77);
  DedupConfig cfg;  // default threshold 0.05

  const DedupReport report = dedup(clips, cfg);
  REQUIRE(report.segments.size() == 30);
  REQUIRE(report.unique_count == 5);

  SECTION("threshold 0 keeps every segment separate") {
    DedupConfig zero = cfg;
    zero.threshold = 0.0;
    REQUIRE(dedup(clips, zero).unique_count == 30);
  }
  SECTION("infinite threshold collapses everything") {
    DedupConfig inf = cfg;
    inf.threshold = std::numeric_limits<double>::infinity();
    REQUIRE(dedup(clips, inf).unique_count == 1);
  }
  SECTION("input order does not matter") {
    std::vector<MotionClip> shuffled = clips;
    RngStream rng(123);
    for (std::size_t i = shuffled.size(); i > 1; --i)
      std::swap(shuffled[i - 1], shuffled[rng.uniform_index(i)]);
    const DedupReport again = dedup(shuffled, cfg);
    REQUIRE(again.unique_count == report.unique_count);
    auto rep_keys = [](const DedupReport& r) {
      std::vector<std::pair<std::string, int>> keys;
      for (int rep : r.representatives)
        keys.emplace_back(r.segments[static_cast<std::size_t>(rep)].clip_id,
                          r.segments[static_cast<std::size_t>(rep)].begin);
      std::sort(keys.begin(), keys.end());
      return keys;
    };
    REQUIRE(rep_keys(again) == rep_keys(report));
  }
  SECTION("parallel DTW matches single-threaded") {
    const DedupReport par = dedup(clips, cfg, 4);
    REQUIRE(par.unique_count == report.unique_count);
    REQUIRE(par.representatives == report.representatives);
  }
}

TEST_CASE("feature extraction layout and invariances") {
  const Morphology m = test_morphology();

  SECTION("stationary clip has zero velocities and duty factors") {
    MotionClip clip = qmtest::standing_clip(m, 30);
    for (auto& f : clip.frames) f.contact = {false, false, false, false};
    const Eigen::VectorXd f = extract_features(clip);
    REQUIRE(f.size() == kFeatureDim);
    REQUIRE(f.head(12).isZero(1e-12));                    // root velocity stats
    for (int j = 0; j < kNumJoints; ++j) REQUIRE(f[12 + 2 * j + 1] == Approx(0.0).margin(1e-12));
    REQUIRE(f.tail(4).isZero(0.0));                       // duty factors
  }
  SECTION("duty factor counts contact frames") {
    MotionClip clip = qmtest::standing_clip(m, 40);
    for (int t = 0; t < 40; ++t)
      clip.frames[static_cast<std::size_t>(t)].contact = {t < 10, true, false, false};
    const Eigen::VectorXd f = extract_features(clip);
    REQUIRE(f[36] == Approx(0.25));
    REQUIRE(f[37] == Approx(1.0));
    REQUIRE(f[38] == 0.0);
  }
  SECTION("rigid world translation leaves features unchanged") {
    RngStream rng(124);
    MotionClip clip = qmtest::sinusoid_clip(m, 50, 0.3, 0.1, 3.0, 11, "feat");
    const Eigen::VectorXd f0 = extract_features(clip);
    for (auto& fr : clip.frames) fr.root_pos += Vec3(3.0, -2.0, 1.0);
    const Eigen::VectorXd f1 = extract_features(clip);
    REQUIRE((f0 - f1).cwiseAbs().maxCoeff() < 1e-9);
  }
  SECTION("clips shorter than two frames are rejected") {
    const MotionClip clip = qmtest::standing_clip(m, 1);
    REQUIRE_THROWS_AS(extract_features(clip), std::invalid_argument);
  }
}

TEST_CASE("pca projection") {
  SECTION("needs at least three vectors") {
    std::vector<Eigen::VectorXd> two(2, Eigen::VectorXd::Zero(4));
    REQUIRE_THROWS_AS(pca_project(two), std::invalid_argument);
  }
  SECTION("collinear data has a vanishing second coordinate") {
    std::vector<Eigen::VectorXd> feats;
    for (int i = 0; i < 12; ++i) {
      Eigen::VectorXd f(2);
      f << 0.5 * i, 1.5 * i;  // a line through the origin
      feats.push_back(f);
    }
    const auto coords = pca_project(feats);
    for (const auto& c : coords) REQUIRE(std::abs(c.y()) < 1e-10);
    // first coordinate spreads along the line
    REQUIRE(std::abs(coords.front().x() - coords.back().x()) > 1.0);
  }
  SECTION("duplicated vectors map to identical projections") {
    RngStream rng(125);
    std::vector<Eigen::VectorXd> feats;
    for (int i = 0; i < 6; ++i) feats.push_back(rng.normal_vector(5));
    feats.push_back(feats[2]);
    const auto coords = pca_project(feats);
    REQUIRE(coords[2] == coords.back());
  }
}
