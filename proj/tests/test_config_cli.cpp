#include <catch2/catch.hpp>

#include <filesystem>

#include "helpers.hpp"
#include "quadmotion/cli.hpp"
#include "quadmotion/config.hpp"

using namespace quadmotion;

namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "quadmotion_cli_tests" / name;
  fs::create_directories(dir);
  return dir;
}

/// The shipped default config, rebased onto a scratch directory.
nlohmann::json scratch_config(const fs::path& dir) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(fs::path(QM_SOURCE_DIR) / "configs" /
                                                          "default.json"));
  j["paths"]["dataset_dir"] = (dir / "data").string();
  j["paths"]["checkpoint_dir"] = (dir / "checkpoints").string();
  j["paths"]["log_dir"] = (dir / "logs").string();
  return j;
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j) {
  const fs::path p = dir / "config.json";
  write_text_file(p, j.dump(2) + "\n");
  return p;
}

void write_noisy_duplicates(const fs::path& data_dir, int k, int dups) {
  const Morphology m = qmtest::test_morphology();
  RngStream noise(19, 3);
  for (int base = 0; base < k; ++base) {
    const MotionClip original = qmtest::sinusoid_clip(m, 60, 0.35, 0.15, 2.0 + 0.5 * base,
                                                      31 + static_cast<std::uint64_t>(base),
                                                      "clip_" + std::to_string(base));
    write_clip(original, data_dir / (original.id + ".json"));
    for (int d = 0; d < dups; ++d) {
      MotionClip copy = original;
      copy.id = "clip_" + std::to_string(base) + "_dup" + std::to_string(d);
      for (MotionFrame& f : copy.frames)
        for (int j = 0; j < kNumJoints; ++j) {
          f.q[j] += 0.001 * noise.normal();
          f.qd[j] += 0.001 * noise.normal();
        }
      write_clip(copy, data_dir / (copy.id + ".json"));
    }
  }
}

}  // namespace

TEST_CASE("the shipped default config parses and round-trips") {
  const nlohmann::json j = nlohmann::json::parse(
      read_text_file(fs::path(QM_SOURCE_DIR) / "configs" / "default.json"));
  const RunConfig rc = parse_run_config(j);
  REQUIRE(rc.morphology.l_thigh == Approx(0.21));
  REQUIRE(rc.ppo.n_envs == 64);
  REQUIRE(rc.ppo.n_steps == 24);
  REQUIRE(rc.trainer.k_refresh == 100);
  REQUIRE(rc.generator.commands.size() == 8);
  REQUIRE(rc.sim.env.command_embed_dim == rc.generator.gen.embed_dim);

  // full snapshot round-trip: to_json . parse = identity
  const nlohmann::json snap = to_json(rc);
  const RunConfig back = parse_run_config(snap);
  REQUIRE(to_json(back) == snap);
}

TEST_CASE("strict parsing rejects unknown keys with their path") {
  const fs::path dir = scratch_dir("strict");
  nlohmann::json j = scratch_config(dir);

  SECTION("top level") {
    j["extra_section"] = 1;
    REQUIRE_THROWS_WITH(parse_run_config(j), Catch::Contains("unknown key \"extra_section\""));
  }
  SECTION("nested") {
    j["ppo"]["learning_rate"] = 0.1;
    REQUIRE_THROWS_WITH(parse_run_config(j), Catch::Contains("ppo.learning_rate"));
  }
  SECTION("deeply nested") {
    j["simenv"]["reward"]["style"] = "fancy";
    REQUIRE_THROWS_WITH(parse_run_config(j), Catch::Contains("simenv.reward.style"));
  }
  SECTION("missing morphology") {
    j.erase("morphology");
    REQUIRE_THROWS_WITH(parse_run_config(j), Catch::Contains("morphology"));
  }
  SECTION("type errors carry the key path") {
    j["ppo"]["gamma"] = "high";
    REQUIRE_THROWS_WITH(parse_run_config(j), Catch::Contains("ppo.gamma"));
  }
  SECTION("torque_limit accepts a per-joint array") {
    j["morphology"]["torque_limit"] = std::vector<double>(12, 20.0);
    j["morphology"]["torque_limit"][3] = 30.0;
    const RunConfig rc = parse_run_config(j);
    REQUIRE(rc.morphology.torque_limit[0] == 20.0);
    REQUIRE(rc.morphology.torque_limit[3] == 30.0);
  }
  SECTION("k_refresh defaults to tracker_steps_per_motion") {
    j["trainer"].erase("k_refresh");
    j["trainer"]["tracker_steps_per_motion"] = 37;
    const RunConfig rc = parse_run_config(j);
    REQUIRE(rc.trainer.k_refresh == 37);
  }
}

TEST_CASE("cli exit codes") {
  const fs::path dir = scratch_dir("exit_codes");
  const fs::path cfg = write_config(dir, scratch_config(dir));

  SECTION("unknown subcommand exits 2") {
    REQUIRE(cli::run_cli({"--config", cfg.string(), "fly"}) == 2);
  }
  SECTION("unknown flag exits 2") {
    REQUIRE(cli::run_cli({"--config", cfg.string(), "dedup", "--wat", "1"}) == 2);
  }
  SECTION("config parse error exits 3") {
    const fs::path bad = dir / "bad.json";
    write_text_file(bad, "{\"morphology\": {}}");
    REQUIRE(cli::run_cli({"--config", bad.string(), "dedup", "--input", dir.string(), "--out",
                          (dir / "r.json").string()}) == 3);
  }
  SECTION("unreadable config exits 3") {
    REQUIRE(cli::run_cli({"--config", (dir / "missing.json").string(), "dedup", "--input",
                          dir.string(), "--out", (dir / "r.json").string()}) == 3);
  }
  SECTION("runtime failure exits 1") {
    REQUIRE(cli::run_cli({"--config", cfg.string(), "dedup", "--input",
                          (dir / "empty_dir_that_does_not_exist").string(), "--out",
                          (dir / "r.json").string()}) == 1);
  }
}

TEST_CASE("dedup subcommand: degenerate threshold, determinism, manifest re-run") {
  const fs::path dir = scratch_dir("dedup_cmd");
  const fs::path data = dir / "data";
  fs::create_directories(data);
  write_noisy_duplicates(data, 3, 2);
  const fs::path cfg = write_config(dir, scratch_config(dir));
  const fs::path report = dir / "out" / "report.json";

  REQUIRE(cli::run_cli({"--config", cfg.string(), "dedup", "--input", data.string(), "--out",
                        report.string()}) == 0);
  const nlohmann::json r1 = nlohmann::json::parse(read_text_file(report));
  REQUIRE(r1.at("unique_count").get<int>() == 3);
  REQUIRE(r1.at("segment_count").get<int>() == 9);

  SECTION("threshold 0 keeps every segment") {
    REQUIRE(cli::run_cli({"--config", cfg.string(), "dedup", "--input", data.string(),
                          "--threshold", "0", "--out", report.string()}) == 0);
    REQUIRE(nlohmann::json::parse(read_text_file(report)).at("unique_count").get<int>() == 9);
  }
  SECTION("identical inputs give byte-identical outputs") {
    const std::string bytes = read_text_file(report);
    REQUIRE(cli::run_cli({"--config", cfg.string(), "dedup", "--input", data.string(), "--out",
                          report.string()}) == 0);
    REQUIRE(read_text_file(report) == bytes);
  }
  SECTION("the manifest alone re-runs the experiment") {
    const std::string bytes = read_text_file(report);
    const fs::path manifest = dir / "out" / "manifest.json";
    REQUIRE(fs::exists(manifest));
    const nlohmann::json m = nlohmann::json::parse(read_text_file(manifest));
    REQUIRE(m.at("command") == "dedup");
    REQUIRE(m.at("version") == std::string(kVersionString));

    // rebuild the config from the manifest and re-run with the recorded args
    const RunConfig rc = cli::config_from_manifest(manifest);
    const fs::path cfg2 = dir / "from_manifest.json";
    write_text_file(cfg2, to_json(rc).dump(2));
    std::vector<std::string> args = m.at("args").get<std::vector<std::string>>();
    for (auto& a : args)
      if (a == cfg.string()) a = cfg2.string();
    REQUIRE(cli::run_cli(args) == 0);
    REQUIRE(read_text_file(report) == bytes);
  }
}

TEST_CASE("features subcommand writes feature and projection CSVs") {
  const fs::path dir = scratch_dir("features_cmd");
  const fs::path data = dir / "data";
  fs::create_directories(data);
  write_noisy_duplicates(data, 4, 0);
  const fs::path cfg = write_config(dir, scratch_config(dir));
  const fs::path out = dir / "out";

  REQUIRE(cli::run_cli({"--config", cfg.string(), "features", "--input", data.string(), "--out",
                        out.string()}) == 0);
  const std::string feats = read_text_file(out / "features.csv");
  REQUIRE(feats.rfind("clip_id,f0,", 0) == 0);
  REQUIRE(std::count(feats.begin(), feats.end(), '\n') == 5);  // header + 4 clips
  REQUIRE(fs::exists(out / "projection.csv"));
}

TEST_CASE("retarget subcommand round-trips a clip through IK") {
  const fs::path dir = scratch_dir("retarget_cmd");
  const Morphology m = qmtest::test_morphology();
  const MotionClip src = qmtest::sinusoid_clip(m, 30, 0.25, 0.1, 3.0, 21, "src");
  const fs::path src_path = dir / "src.json";
  write_clip(src, src_path);
  nlohmann::json j = scratch_config(dir);
  const fs::path cfg = write_config(dir, j);
  const fs::path out = dir / "out" / "retargeted.json";

  REQUIRE(cli::run_cli({"--config", cfg.string(), "retarget", "--input", src_path.string(),
                        "--output", out.string()}) == 0);
  const MotionClip result = read_clip(out);
  REQUIRE(result.length() == src.length());
  // the source is FK-consistent with our own morphology, so after the
  // w_reg-damped transient away from q_init the IK recovers the joint
  // trajectory almost exactly
  double worst = 0.0;
  for (int t = 5; t < result.length(); ++t)
    worst = std::max(worst, (result.frames[static_cast<std::size_t>(t)].q -
                             src.frames[static_cast<std::size_t>(t)].q)
                                .cwiseAbs()
                                .maxCoeff());
  REQUIRE(worst < 0.05);
}

TEST_CASE("gen subcommand writes vocabulary-conditioned clips") {
  const fs::path dir = scratch_dir("gen_cmd");
  const fs::path cfg = write_config(dir, scratch_config(dir));
  const fs::path out = dir / "gen";
  REQUIRE(cli::run_cli({"--config", cfg.string(), "gen", "--command", "walk_forward", "--count",
                        "2", "--out", out.string()}) == 0);
  const MotionClip clip = read_clip(out / "gen_walk_forward_0.json");
  REQUIRE(clip.length() == 50);
  REQUIRE(clip.annotations.command == "walk forward");
  REQUIRE(cli::run_cli({"--config", cfg.string(), "gen", "--command", "moonwalk", "--count", "1",
                        "--out", out.string()}) == 1);
}
