#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "quadmotion/config.hpp"
#include "quadmotion/dataset.hpp"
#include "quadmotion/metrics.hpp"
#include "quadmotion/retarget.hpp"
#include "quadmotion/trainer.hpp"

namespace quadmotion {
namespace cli {

namespace fs = std::filesystem;

inline void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& rc,
                           const std::vector<std::string>& args) {
  nlohmann::json m;
  m["command"] = command;
  m["args"] = args;
  m["config"] = to_json(rc);
  m["seed"] = rc.master_seed;
  m["version"] = kVersionString;
  write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

/// Re-runnable config extracted from a manifest written by write_manifest.
inline RunConfig config_from_manifest(const fs::path& manifest_path) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_text_file(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("manifest: " + std::string(e.what()));
  }
  if (!m.contains("config")) throw ConfigError("manifest: missing \"config\"");
  return parse_run_config(m.at("config"));
}

inline std::vector<fs::path> collect_clip_paths(const std::vector<std::string>& inputs) {
  std::vector<fs::path> paths;
  for (const std::string& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      for (const auto& entry : fs::directory_iterator(p))
        if (entry.is_regular_file() && entry.path().extension() == ".json" &&
            entry.path().filename() != "manifest.json")
          paths.push_back(entry.path());
    } else {
      paths.push_back(p);
    }
  }
  std::sort(paths.begin(), paths.end());
  return paths;
}

inline std::vector<MotionClip> load_clips(const std::vector<std::string>& inputs) {
  std::vector<MotionClip> clips;
  for (const fs::path& p : collect_clip_paths(inputs)) clips.push_back(read_clip(p));
  if (clips.empty()) throw FormatError("no clips found in the given inputs");
  return clips;
}

// ---------------------------------------------------------------------------
// subcommand implementations
// ---------------------------------------------------------------------------

inline int cmd_retarget(const RunConfig& rc, const std::string& input, const std::string& output,
                        const std::string& id, const std::string& source,
                        const std::vector<std::string>& args) {
  const fs::path in_path(input);
  std::vector<KeypointSet> targets;
  std::vector<RootPose> roots;
  AnnotationTriple annotations;
  std::string clip_source = source;

  const double scale = rc.retarget.scale;
  if (in_path.extension() == ".json") {
    const MotionClip src = read_clip(in_path);
    annotations = src.annotations;
    clip_source = src.source;
    for (const MotionFrame& f : src.frames) {
      RootPose root = frame_root(f);
      KeypointSet kp = forward_kinematics(rc.morphology, root, f.q);
      for (auto& p : kp.points) p *= scale;
      root.position *= scale;
      targets.push_back(kp);
      roots.push_back(root);
    }
  } else {
    targets = read_keypoint_csv(in_path);
    for (KeypointSet& kp : targets) {
      for (auto& p : kp.points) p *= scale;
      RootPose root;
      root.position = kp[kTrunk];
      roots.push_back(root);
    }
  }

  RetargetProblem problem;
  problem.morph = rc.morphology;
  problem.targets = std::move(targets);
  problem.root_track = std::move(roots);
  problem.weights = rc.retarget.weights;
  problem.solver = rc.retarget.solver;
  const RetargetResult result = solve_trajectory(problem, rc.retarget.q_init);

  MotionClip out;
  out.id = id.empty() ? in_path.stem().string() : id;
  out.source = clip_source;
  out.annotations = annotations;
  out.has_qd = false;
  for (std::size_t t = 0; t < result.q_traj.size(); ++t) {
    MotionFrame f;
    f.root_pos = problem.root_track[t].position;
    f.root_quat = problem.root_track[t].orientation;
    f.q = result.q_traj[t];
    const KeypointSet kp = forward_kinematics(rc.morphology, problem.root_track[t], f.q);
    for (int leg = 0; leg < kNumLegs; ++leg)
      f.contact[static_cast<std::size_t>(leg)] =
          kp[foot_keypoint(leg)].z() < rc.retarget.contact_height;
    out.frames.push_back(f);
  }
  write_clip(out, output);

  double worst = 0.0, mean = 0.0;
  int diverged = 0;
  for (std::size_t t = 0; t < result.residuals.size(); ++t) {
    worst = std::max(worst, result.residuals[t]);
    mean += result.residuals[t];
    if (!result.converged[t]) ++diverged;
  }
  mean /= static_cast<double>(result.residuals.size());
  std::cout << "retargeted " << result.q_traj.size() << " frames to " << output
            << " (mean residual " << fmt_double(mean) << " m, worst " << fmt_double(worst)
            << " m, diverged " << diverged << ")\n";
  write_manifest(fs::path(output).has_parent_path() ? fs::path(output).parent_path() : fs::path("."),
                 "retarget", rc, args);
  return 0;
}

inline int cmd_dedup(const RunConfig& rc, const std::vector<std::string>& inputs, double threshold,
                     const std::string& out, const std::vector<std::string>& args) {
  DedupConfig cfg = rc.dedup;
  if (threshold >= 0.0) cfg.threshold = threshold;
  const std::vector<MotionClip> clips = load_clips(inputs);
  const DedupReport report = dedup(clips, cfg, rc.num_threads);

  nlohmann::json j;
  j["threshold"] = cfg.threshold;
  j["segment_count"] = static_cast<int>(report.segments.size());
  j["unique_count"] = report.unique_count;
  nlohmann::json clusters = nlohmann::json::array();
  for (std::size_t c = 0; c < report.clusters.size(); ++c) {
    nlohmann::json cluster;
    const Segment& rep = report.segments[static_cast<std::size_t>(report.representatives[c])];
    cluster["representative"] = {{"clip", rep.clip_id}, {"begin", rep.begin}, {"end", rep.end}};
    nlohmann::json members = nlohmann::json::array();
    for (int s : report.clusters[c]) {
      const Segment& seg = report.segments[static_cast<std::size_t>(s)];
      members.push_back({{"clip", seg.clip_id}, {"begin", seg.begin}, {"end", seg.end}});
    }
    cluster["segments"] = members;
    clusters.push_back(cluster);
  }
  j["clusters"] = clusters;
  write_text_file(out, j.dump(2) + "\n");
  std::cout << "dedup: " << report.segments.size() << " segments -> " << report.unique_count
            << " unique atomic motions (threshold " << fmt_double(cfg.threshold) << ")\n";
  write_manifest(fs::path(out).has_parent_path() ? fs::path(out).parent_path() : fs::path("."),
                 "dedup", rc, args);
  return 0;
}

inline int cmd_features(const RunConfig& rc, const std::vector<std::string>& inputs,
                        const std::string& out_dir, const std::vector<std::string>& args) {
  const std::vector<MotionClip> clips = load_clips(inputs);
  std::vector<std::string> cols{"clip_id"};
  for (int i = 0; i < kFeatureDim; ++i) cols.push_back("f" + std::to_string(i));
  CsvWriter features_csv(fs::path(out_dir) / "features.csv", cols);
  std::vector<Eigen::VectorXd> features;
  for (const MotionClip& clip : clips) {
    const Eigen::VectorXd f = extract_features(clip);
    features.push_back(f);
    std::vector<std::string> row{clip.id};
    for (int i = 0; i < kFeatureDim; ++i) row.push_back(fmt_double(f[i]));
    features_csv.add_row(row);
  }
  features_csv.flush();

  if (features.size() >= 3) {
    CsvWriter proj_csv(fs::path(out_dir) / "projection.csv", {"clip_id", "x", "y"});
    const auto coords = pca_project(features);
    for (std::size_t i = 0; i < clips.size(); ++i)
      proj_csv.add_row({clips[i].id, fmt_double(coords[i].x()), fmt_double(coords[i].y())});
    proj_csv.flush();
  } else {
    std::cout << "features: fewer than 3 clips, skipping the 2D projection\n";
  }
  std::cout << "features: wrote " << features.size() << " rows to " << out_dir << "\n";
  write_manifest(out_dir, "features", rc, args);
  return 0;
}

inline std::vector<Eigen::VectorXd> clip_embeds(const std::vector<MotionClip>& clips,
                                                const CommandVocab& vocab) {
  std::vector<Eigen::VectorXd> embeds;
  for (const MotionClip& c : clips) embeds.push_back(vocab.embedding_or_zero(c.annotations.command));
  return embeds;
}

inline int cmd_train_tracker(const RunConfig& rc, const std::vector<std::string>& motion_inputs,
                             const std::vector<std::string>& args) {
  const std::vector<std::string> inputs =
      motion_inputs.empty() ? std::vector<std::string>{rc.paths.dataset_dir} : motion_inputs;
  const std::vector<MotionClip> clips = load_clips(inputs);
  const CommandVocab vocab = rc.make_vocab();

  MotionSet set;
  for (const MotionClip& c : clips) set.clips.push_back(std::make_shared<MotionClip>(c));
  for (const MotionClip& c : clips) set.embeds.push_back(vocab.embedding_or_zero(c.annotations.command));

  JointTrainer trainer(rc);
  trainer.set_fixed_motions({set});
  const JointTrainer::Result result = trainer.run();
  std::cout << "train-tracker: " << rc.trainer.n_iter << " iterations on " << clips.size()
            << " motions; metrics at " << result.metrics_path.string() << "\n";
  write_manifest(rc.paths.log_dir, "train-tracker", rc, args);
  return 0;
}

inline int cmd_train_joint(const RunConfig& rc, const std::string& generator_ckpt,
                           const std::vector<std::string>& args) {
  JointTrainer trainer(rc);
  GenLatentModel gen(rc.generator.gen);
  if (!generator_ckpt.empty()) {
    CheckpointReader reader(generator_ckpt);
    gen = GenLatentModel::load(reader, rc.generator.gen);
  } else {
    RngStream gen_rng = RngStream::derive(rc.master_seed, "gen_init");
    gen.init_random(gen_rng);
  }

  std::vector<MotionClip> dataset;
  if (rc.generator.pretrain_epochs > 0 || rc.trainer.recon_in_joint) {
    if (fs::is_directory(rc.paths.dataset_dir)) dataset = load_clips({rc.paths.dataset_dir});
    if (dataset.empty() && rc.generator.pretrain_epochs > 0)
      throw FormatError("train-joint: pretraining requested but the dataset dir holds no clips");
  }
  if (rc.generator.pretrain_epochs > 0) {
    const CommandVocab vocab = rc.make_vocab();
    RngStream pre_rng = RngStream::derive(rc.master_seed, "gen_pretrain");
    const auto curve = gen.pretrain(dataset, vocab, rc.generator.pretrain_epochs,
                                    rc.generator.pretrain_batch, pre_rng);
    std::cout << "train-joint: pretrained generator, loss " << fmt_double(curve.front()) << " -> "
              << fmt_double(curve.back()) << "\n";
  }

  trainer.set_generator(std::move(gen));
  if (rc.trainer.recon_in_joint && !dataset.empty()) trainer.set_recon_dataset(std::move(dataset));
  const JointTrainer::Result result = trainer.run();
  std::cout << "train-joint: " << rc.trainer.n_iter << " iterations; metrics at "
            << result.metrics_path.string() << "\n";
  write_manifest(rc.paths.log_dir, "train-joint", rc, args);
  return 0;
}

inline int cmd_eval(const RunConfig& rc, const std::string& policy_path,
                    const std::vector<std::string>& clip_inputs, const std::string& out,
                    const std::string& traces_dir, const std::vector<std::string>& args) {
  CheckpointReader reader(policy_path);
  const GaussianPolicy policy = GaussianPolicy::load(reader, "actor");
  const std::vector<MotionClip> clips = load_clips(
      clip_inputs.empty() ? std::vector<std::string>{rc.paths.dataset_dir} : clip_inputs);
  const CommandVocab vocab = rc.make_vocab();

  std::vector<std::shared_ptr<const MotionClip>> shared;
  for (const MotionClip& c : clips) shared.push_back(std::make_shared<MotionClip>(c));
  const EvalAggregate agg =
      evaluate_policy(policy, rc.action_map(), rc.morphology, rc.sim.env, rc.sim.nominal, shared,
                      clip_embeds(clips, vocab), rc.eval, rc.num_threads);

  CsvWriter csv(out, {"clip_id", "mjpe", "mbpe", "completion", "mean_r_track", "failed"});
  for (const TrackingEval& e : agg.per_clip)
    csv.add_row({e.clip_id, fmt_double(e.mjpe), fmt_double(e.mbpe),
                 fmt_double(e.episode_completion), fmt_double(e.mean_r_track),
                 e.failed ? "1" : "0"});
  csv.add_row({"__aggregate__", fmt_double(agg.mean_mjpe), fmt_double(agg.mean_mbpe),
               fmt_double(agg.mean_completion), fmt_double(agg.mean_r_track),
               std::to_string(agg.failed_count)});
  csv.flush();

  if (!traces_dir.empty()) {
    for (const TrackingEval& e : agg.per_clip) {
      if (e.failed) continue;
      CsvWriter trace(fs::path(traces_dir) / (e.clip_id + "_trace.csv"), {"frame", "mjpe"});
      for (std::size_t t = 0; t < e.per_frame_mjpe.size(); ++t)
        trace.add_row({std::to_string(t), fmt_double(e.per_frame_mjpe[t])});
      trace.flush();
    }
  }
  std::cout << "eval: " << clips.size() << " clips, MJPE " << fmt_double(agg.mean_mjpe)
            << " rad, MBPE " << fmt_double(agg.mean_mbpe) << " m, completion "
            << fmt_double(agg.mean_completion) << ", failed " << agg.failed_count << "\n";
  write_manifest(fs::path(out).has_parent_path() ? fs::path(out).parent_path() : fs::path("."),
                 "eval", rc, args);
  return 0;
}

inline int cmd_rollout(const RunConfig& rc, const std::string& policy_path, bool replay,
                       const std::string& clip_path, const std::string& out,
                       const std::string& trace_csv, const std::vector<std::string>& args) {
  const MotionClip ref = read_clip(clip_path);
  auto shared = std::make_shared<MotionClip>(ref);
  const CommandVocab vocab = rc.make_vocab();
  const Eigen::VectorXd embed = vocab.embedding_or_zero(ref.annotations.command);

  MotionClip sim;
  if (replay) {
    // feed-forward replay: PD target = next reference frame
    EnvConfig cfg = rc.sim.env;
    QuadEnv env(rc.morphology, cfg, rc.sim.nominal, rc.master_seed, 0);
    env.set_motion(shared, embed, 0);
    env.set_randomization(false);
    env.set_reset_noise(false);
    env.reset();
    sim.id = ref.id + "_sim";
    sim.source = ref.source;
    sim.annotations = ref.annotations;
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
    const int horizon = episode_length(ref, cfg);
    for (int t = 0; t < horizon; ++t) {
      const int idx = std::min(t + 1, ref.length() - 1);
      const QuadEnv::StepOut step =
          env.step(ref.frames[static_cast<std::size_t>(idx)].q);
      record(env.state());
      if (step.terminated && step.reason != TerminationReason::Timeout) break;
    }
  } else {
    if (policy_path.empty())
      throw ConfigError("rollout: either --policy or --replay is required");
    CheckpointReader reader(policy_path);
    const GaussianPolicy policy = GaussianPolicy::load(reader, "actor");
    evaluate_clip(policy, rc.action_map(), rc.morphology, rc.sim.env, rc.sim.nominal, shared, embed,
                  rc.eval, &sim);
  }
  write_clip(sim, out);

  if (!trace_csv.empty()) {
    CsvWriter csv(trace_csv, {"frame", "mjpe", "r_track"});
    const int T = std::min(ref.length(), sim.length());
    for (int t = 0; t < T; ++t) {
      const MotionFrame& fr = ref.frames[static_cast<std::size_t>(t)];
      const MotionFrame& fsim = sim.frames[static_cast<std::size_t>(t)];
      SimState s;
      s.root = frame_root(fsim);
      s.q = fsim.q;
      const double rt = tracking_reward(s, frame_root(fr), fr.q, rc.morphology,
                                        rc.sim.env.keypoint_coeffs());
      const double err = (fr.q - fsim.q).cwiseAbs().sum() / kNumJoints;
      csv.add_row({std::to_string(t), fmt_double(err), fmt_double(rt)});
    }
    csv.flush();
  }
  std::cout << "rollout: " << sim.length() << " frames written to " << out << "\n";
  write_manifest(fs::path(out).has_parent_path() ? fs::path(out).parent_path() : fs::path("."),
                 "rollout", rc, args);
  return 0;
}

inline int cmd_gen(const RunConfig& rc, const std::string& generator_ckpt,
                   const std::string& command, int count, const std::string& out_dir,
                   const std::vector<std::string>& args) {
  GenLatentModel gen(rc.generator.gen);
  if (!generator_ckpt.empty()) {
    CheckpointReader reader(generator_ckpt);
    gen = GenLatentModel::load(reader, rc.generator.gen);
  } else {
    RngStream gen_rng = RngStream::derive(rc.master_seed, "gen_init");
    gen.init_random(gen_rng);
  }
  const CommandVocab vocab = rc.make_vocab();

  // deterministic anchor: the configured action-center pose standing at its
  // own FK height
  SimState anchor;
  anchor.q = rc.ppo.action_center;
  const KeypointSet kp = forward_kinematics(rc.morphology, RootPose{}, anchor.q);
  double lowest = 0.0;
  for (int leg = 0; leg < kNumLegs; ++leg)
    lowest = std::min(lowest, kp[foot_keypoint(leg)].z());
  anchor.root.position = Vec3(0, 0, -lowest);

  RngStream rng = RngStream::derive(rc.master_seed, "gen_sample");
  for (int k = 0; k < count; ++k) {
    const GenSample sample =
        gen.sample(vocab, command, anchor, rc.morphology, rng,
                   "gen_" + command + "_" + std::to_string(k));
    write_clip(sample.motion, fs::path(out_dir) / (sample.motion.id + ".json"));
  }
  std::cout << "gen: wrote " << count << " samples of \"" << command << "\" to " << out_dir << "\n";
  write_manifest(out_dir, "gen", rc, args);
  return 0;
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

inline int run_cli(std::vector<std::string> args) {
  CLI::App app{"quadmotion: retarget, deduplicate, train and evaluate quadruped motions"};
  app.require_subcommand(1);

  std::string config_path;
  long long seed_override = -1;
  app.add_option("--config", config_path, "run configuration JSON")->required();
  app.add_option("--seed", seed_override, "override master_seed from the config");

  std::string input, output, clip_id, source = "mocap";
  auto* retarget = app.add_subcommand("retarget", "solve IK from keypoints or a source clip");
  retarget->add_option("--input", input, "source clip (.json) or keypoint CSV")->required();
  retarget->add_option("--output", output, "output clip path")->required();
  retarget->add_option("--id", clip_id, "output clip id (default: input stem)");
  retarget->add_option("--source", source, "source tag for CSV imports");

  std::vector<std::string> inputs;
  double threshold = -1.0;
  std::string out;
  auto* dedup_cmd = app.add_subcommand("dedup", "DTW deduplication into unique atomic motions");
  dedup_cmd->add_option("--input", inputs, "clip files or directories")->required();
  dedup_cmd->add_option("--threshold", threshold, "DTW merge threshold (rad/s)");
  dedup_cmd->add_option("--out", out, "report JSON path")->required();

  auto* features_cmd = app.add_subcommand("features", "dynamic feature vectors + 2D projection");
  features_cmd->add_option("--input", inputs, "clip files or directories")->required();
  features_cmd->add_option("--out", out, "output directory")->required();

  std::vector<std::string> motions;
  auto* tracker_cmd = app.add_subcommand("train-tracker", "PPO tracking on fixed motions");
  tracker_cmd->add_option("--motions", motions, "motion clips or directories");

  std::string generator_ckpt;
  auto* joint_cmd = app.add_subcommand("train-joint", "joint generator + tracker training");
  joint_cmd->add_option("--generator", generator_ckpt, "generator checkpoint to start from");

  std::string policy_path, traces_dir;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a policy on validation clips");
  eval_cmd->add_option("--policy", policy_path, "policy checkpoint")->required();
  eval_cmd->add_option("--clips", inputs, "clip files or directories");
  eval_cmd->add_option("--out", out, "output CSV path")->required();
  eval_cmd->add_option("--traces", traces_dir, "directory for per-frame error traces");

  bool replay = false;
  std::string clip_path, trace_csv;
  auto* rollout_cmd = app.add_subcommand("rollout", "simulate one clip and export the trajectory");
  rollout_cmd->add_option("--policy", policy_path, "policy checkpoint");
  rollout_cmd->add_flag("--replay", replay, "feed-forward replay instead of a policy");
  rollout_cmd->add_option("--clip", clip_path, "reference clip")->required();
  rollout_cmd->add_option("--out", out, "output clip path")->required();
  rollout_cmd->add_option("--trace", trace_csv, "optional per-frame trace CSV");

  std::string command;
  int count = 1;
  auto* gen_cmd = app.add_subcommand("gen", "sample motions from the generator");
  gen_cmd->add_option("--generator", generator_ckpt, "generator checkpoint (default: seed init)");
  gen_cmd->add_option("--command", command, "command id from the vocabulary")->required();
  gen_cmd->add_option("--count", count, "number of samples");
  gen_cmd->add_option("--out", out, "output directory")->required();

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("quadmotion");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "error class=usage message=\"" << e.what() << "\"\n";
    return 2;
  }

  try {
    RunConfig rc = load_run_config(config_path);
    if (seed_override >= 0) rc.master_seed = static_cast<std::uint64_t>(seed_override);
    // environment overrides are limited to paths
    if (const char* v = std::getenv("QUADMOTION_DATASET_DIR")) rc.paths.dataset_dir = v;
    if (const char* v = std::getenv("QUADMOTION_CHECKPOINT_DIR")) rc.paths.checkpoint_dir = v;
    if (const char* v = std::getenv("QUADMOTION_LOG_DIR")) rc.paths.log_dir = v;

    if (app.got_subcommand(retarget)) return cmd_retarget(rc, input, output, clip_id, source, args);
    if (app.got_subcommand(dedup_cmd)) return cmd_dedup(rc, inputs, threshold, out, args);
    if (app.got_subcommand(features_cmd)) return cmd_features(rc, inputs, out, args);
    if (app.got_subcommand(tracker_cmd)) return cmd_train_tracker(rc, motions, args);
    if (app.got_subcommand(joint_cmd)) return cmd_train_joint(rc, generator_ckpt, args);
    if (app.got_subcommand(eval_cmd)) return cmd_eval(rc, policy_path, inputs, out, traces_dir, args);
    if (app.got_subcommand(rollout_cmd))
      return cmd_rollout(rc, policy_path, replay, clip_path, out, trace_csv, args);
    if (app.got_subcommand(gen_cmd)) return cmd_gen(rc, generator_ckpt, command, count, out, args);
    std::cerr << "error class=usage message=\"no subcommand\"\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error class=config message=\"" << e.what() << "\"\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error class=runtime message=\"" << e.what() << "\"\n";
    return 1;
  }
}

}  // namespace cli
}  // namespace quadmotion
