#include <catch2/catch.hpp>

#include <filesystem>

#include "helpers.hpp"
#include "quadmotion/clip.hpp"

using namespace quadmotion;

namespace {

std::filesystem::path tmp_dir() {
  auto p = std::filesystem::temp_directory_path() / "quadmotion_clip_tests";
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("clip write/read round-trip is byte identical") {
  RngStream rng(21);
  for (int i = 0; i < 50; ++i) {
    const MotionClip clip = qmtest::random_clip(rng, 1 + static_cast<int>(rng.uniform_index(30)),
                                                i % 2 == 0, "clip_" + std::to_string(i));
    const auto path = tmp_dir() / ("rt_" + std::to_string(i) + ".json");
    write_clip(clip, path);
    const std::string first = read_text_file(path);
    const MotionClip back = read_clip(path);
    write_clip(back, path);
    REQUIRE(read_text_file(path) == first);
    REQUIRE(back.id == clip.id);
    REQUIRE(back.has_qd == clip.has_qd);
    REQUIRE(back.length() == clip.length());
  }
}

TEST_CASE("clip schema violations are rejected with diagnostics") {
  RngStream rng(22);
  const MotionClip clip = qmtest::random_clip(rng, 5, true, "schema");
  const std::string good = serialize_clip(clip);

  SECTION("wrong fps") {
    std::string bad = good;
    const auto pos = bad.find("\"fps\":50");
    bad.replace(pos, 8, "\"fps\":60");
    REQUIRE_THROWS_WITH(parse_clip(bad), Catch::Contains("fps must be 50"));
  }
  SECTION("missing annotation layer") {
    nlohmann::json j = nlohmann::json::parse(good);
    j["annotations"].erase("scenario");
    REQUIRE_THROWS_WITH(clip_from_json(j), Catch::Contains("missing annotation layer \"scenario\""));
  }
  SECTION("quaternion norm off") {
    nlohmann::json j = nlohmann::json::parse(good);
    j["frames"][0][3] = 2.0;
    REQUIRE_THROWS_WITH(clip_from_json(j), Catch::Contains("quaternion norm"));
  }
  SECTION("bad contact flag") {
    nlohmann::json j = nlohmann::json::parse(good);
    j["frames"][0][34] = 0.5;
    REQUIRE_THROWS_WITH(clip_from_json(j), Catch::Contains("contact flag"));
  }
  SECTION("frame arity mismatch") {
    nlohmann::json j = nlohmann::json::parse(good);
    j["frames"][1].erase(34);
    REQUIRE_THROWS_WITH(clip_from_json(j), Catch::Contains("expected 23 or 35"));
  }
  SECTION("unknown source") {
    nlohmann::json j = nlohmann::json::parse(good);
    j["source"] = "dreams";
    REQUIRE_THROWS_WITH(clip_from_json(j), Catch::Contains("unknown source"));
  }
  SECTION("unknown top-level key") {
    nlohmann::json j = nlohmann::json::parse(good);
    j["extra"] = 1;
    REQUIRE_THROWS_WITH(clip_from_json(j), Catch::Contains("unknown top-level key"));
  }
  SECTION("empty frames") {
    nlohmann::json j = nlohmann::json::parse(good);
    j["frames"] = nlohmann::json::array();
    REQUIRE_THROWS_WITH(clip_from_json(j), Catch::Contains("non-empty"));
  }
}

TEST_CASE("joint velocities come from stored qd or finite differences") {
  const Morphology m = qmtest::test_morphology();
  MotionClip clip = qmtest::sinusoid_clip(m, 30, 0.3, 0.1, 4.0, 5, "vel");

  const auto stored = joint_velocities(clip, 0, clip.length());
  REQUIRE(stored.size() == 30);
  REQUIRE(stored[3] == clip.frames[3].qd);

  MotionClip no_qd = clip;
  no_qd.has_qd = false;
  const auto fd = joint_velocities(no_qd, 0, no_qd.length());
  REQUIRE(fd.size() == 29);
  const JointVec expect = (clip.frames[1].q - clip.frames[0].q) * 50.0;
  REQUIRE((fd[0] - expect).norm() < 1e-12);

  REQUIRE_THROWS_AS(joint_velocities(clip, 3, 3), std::invalid_argument);
}
