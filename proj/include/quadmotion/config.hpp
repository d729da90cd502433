#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "quadmotion/dataset.hpp"
#include "quadmotion/generator.hpp"
#include "quadmotion/io_util.hpp"
#include "quadmotion/kinematics.hpp"
#include "quadmotion/metrics.hpp"
#include "quadmotion/ppo.hpp"
#include "quadmotion/retarget.hpp"
#include "quadmotion/sim.hpp"

namespace quadmotion {

inline const char* kVersionString = "quadmotion 0.1.0";

namespace cfgdetail {

using nlohmann::json;

inline void check_keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config: " + path + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key \"" + (path.empty() ? it.key() : path + "." + it.key()) +
                        "\"");
}

inline double num(const json& j, const std::string& path, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError("config: " + path + "." + key + " must be a number");
  return v.get<double>();
}

inline int integer(const json& j, const std::string& path, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError("config: " + path + "." + key + " must be an integer");
  return v.get<int>();
}

inline bool boolean(const json& j, const std::string& path, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError("config: " + path + "." + key + " must be a boolean");
  return v.get<bool>();
}

inline std::string str(const json& j, const std::string& path, const char* key,
                       const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_string()) throw ConfigError("config: " + path + "." + key + " must be a string");
  return v.get<std::string>();
}

inline std::vector<double> num_array(const json& j, const std::string& path, const char* key,
                                     std::size_t n) {
  if (!j.contains(key))
    throw ConfigError("config: missing required key \"" + path + "." + key + "\"");
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != n)
    throw ConfigError("config: " + path + "." + key + " must be an array of " + std::to_string(n) +
                      " numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError("config: " + path + "." + key + " must hold numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

inline std::vector<int> int_list(const json& j, const std::string& path, const char* key,
                                 std::vector<int> fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array()) throw ConfigError("config: " + path + "." + key + " must be an array");
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer())
      throw ConfigError("config: " + path + "." + key + " must hold integers");
    out.push_back(e.get<int>());
  }
  return out;
}

inline std::pair<double, double> range(const json& j, const std::string& path, const char* key,
                                       std::pair<double, double> fallback) {
  if (!j.contains(key)) return fallback;
  const auto v = num_array(j, path, key, 2);
  return {v[0], v[1]};
}

}  // namespace cfgdetail

struct PathsConfig {
  std::string dataset_dir = "data";
  std::string checkpoint_dir = "checkpoints";
  std::string log_dir = "logs";
};

struct RetargetConfig {
  RetargetWeights weights = RetargetWeights::defaults();
  RetargetSolverSettings solver;
  double scale = 1.0;           // uniform scale on imported keypoints
  JointVec q_init = JointVec::Zero();
  double contact_height = 0.02; // foot-contact inference on the output clip
};

struct PpoConfig {
  PpoHyper hyper;
  int n_envs = 64;
  int n_steps = 24;
  std::vector<int> actor_hidden{256, 128, 64, 32};
  std::vector<int> critic_hidden{256, 128, 64, 32};
  Activation activation = Activation::Elu;
  PolicyStdMode policy_std = PolicyStdMode::StateIndependent;
  double log_std_init = -1.0;
  double action_scale = 0.5;
  JointVec action_center = JointVec::Zero();
};

struct GeneratorConfig {
  GenConfig gen;
  double lr_joint = 1e-4;  // generator RL step size in joint training
  int pretrain_epochs = 0;
  int pretrain_batch = 16;
  std::vector<CommandVocab::Entry> commands{
      {"walk_forward", "walk forward"},   {"walk_backward", "walk backward"},
      {"turn_left", "turn left"},         {"turn_right", "turn right"},
      {"sit", "sit"},                     {"stand", "stand"},
      {"raise_your_hand", "raise your hand"}, {"dance", "dance"},
  };
};

struct TrainerConfig {
  int n_iter = 1000;
  int k_refresh = 100;  // K_R: refresh period; generator update at K_R-1 (mod K_R)
  int tracker_steps_per_motion = 100;
  double ema_alpha = 0.05;
  int n_motions = 8;
  int checkpoint_every = 0;
  bool recon_in_joint = false;

  void validate() const {
    if (k_refresh < 2) throw ConfigError("trainer: k_refresh must be >= 2");
    if (n_iter < 1) throw ConfigError("trainer: n_iter must be >= 1");
    if (!(ema_alpha > 0.0 && ema_alpha <= 1.0)) throw ConfigError("trainer: ema_alpha in (0,1]");
    if (n_motions < 1) throw ConfigError("trainer: n_motions must be >= 1");
  }
};

struct SimSection {
  EnvConfig env;
  DynamicsParams nominal;
};

/// Full run configuration: master seed, paths, and one section per module.
/// Unknown keys anywhere are rejected.
struct RunConfig {
  std::uint64_t master_seed = 1;
  int num_threads = 1;
  PathsConfig paths;
  Morphology morphology;
  RetargetConfig retarget;
  SimSection sim;
  PpoConfig ppo;
  GeneratorConfig generator;
  TrainerConfig trainer;
  DedupConfig dedup;
  EvalSettings eval;

  CommandVocab make_vocab() const {
    return CommandVocab::make(generator.commands, generator.gen.embed_dim, master_seed);
  }
  ActionMap action_map() const { return ActionMap{ppo.action_center, ppo.action_scale}; }
};

inline Morphology morphology_from_json(const nlohmann::json& j) {
  using namespace cfgdetail;
  const std::string path = "morphology";
  check_keys(j, path, {"trunk_dims", "trunk_mass", "hip_offsets", "l_hip", "l_thigh", "l_calf",
                       "joint_limits", "torque_limit", "leg_joint_inertia"});
  Morphology m;
  const auto dims = num_array(j, path, "trunk_dims", 3);
  m.trunk_dims = Vec3(dims[0], dims[1], dims[2]);
  m.trunk_mass = num(j, path, "trunk_mass", 6.0);
  if (!j.contains("hip_offsets")) throw ConfigError("config: morphology.hip_offsets is required");
  check_keys(j.at("hip_offsets"), path + ".hip_offsets", {"fl", "fr", "rl", "rr"});
  const char* legs[4] = {"fl", "fr", "rl", "rr"};
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const auto v = num_array(j.at("hip_offsets"), path + ".hip_offsets", legs[leg], 3);
    m.hip_offsets[static_cast<std::size_t>(leg)] = Vec3(v[0], v[1], v[2]);
  }
  m.l_hip = num(j, path, "l_hip", 0.08);
  m.l_thigh = num(j, path, "l_thigh", 0.21);
  m.l_calf = num(j, path, "l_calf", 0.21);
  if (!j.contains("joint_limits")) throw ConfigError("config: morphology.joint_limits is required");
  const nlohmann::json& lim = j.at("joint_limits");
  check_keys(lim, path + ".joint_limits", {"abduction", "hip_flexion", "knee_flexion"});
  const auto abd = num_array(lim, path + ".joint_limits", "abduction", 2);
  const auto hip = num_array(lim, path + ".joint_limits", "hip_flexion", 2);
  const auto knee = num_array(lim, path + ".joint_limits", "knee_flexion", 2);
  for (int leg = 0; leg < kNumLegs; ++leg) {
    m.joint_lower[3 * leg + 0] = abd[0];
    m.joint_upper[3 * leg + 0] = abd[1];
    m.joint_lower[3 * leg + 1] = hip[0];
    m.joint_upper[3 * leg + 1] = hip[1];
    m.joint_lower[3 * leg + 2] = knee[0];
    m.joint_upper[3 * leg + 2] = knee[1];
  }
  if (j.contains("torque_limit") && j.at("torque_limit").is_array()) {
    const auto tl = num_array(j, path, "torque_limit", kNumJoints);
    for (int i = 0; i < kNumJoints; ++i) m.torque_limit[i] = tl[static_cast<std::size_t>(i)];
  } else {
    m.torque_limit = JointVec::Constant(num(j, path, "torque_limit", 23.7));
  }
  m.leg_joint_inertia = num(j, path, "leg_joint_inertia", 0.02);
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: morphology invalid: ") + e.what());
  }
  return m;
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
  using namespace cfgdetail;
  check_keys(j, "", {"master_seed", "num_threads", "paths", "morphology", "retarget", "simenv",
                     "ppo", "generator", "trainer", "dedup", "eval"});
  RunConfig rc;
  if (j.contains("master_seed")) {
    if (!j.at("master_seed").is_number_integer())
      throw ConfigError("config: master_seed must be an integer");
    rc.master_seed = j.at("master_seed").get<std::uint64_t>();
  }
  rc.num_threads = integer(j, "", "num_threads", 1);
  if (rc.num_threads < 1) throw ConfigError("config: num_threads must be >= 1");

  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    check_keys(p, "paths", {"dataset_dir", "checkpoint_dir", "log_dir"});
    rc.paths.dataset_dir = str(p, "paths", "dataset_dir", rc.paths.dataset_dir);
    rc.paths.checkpoint_dir = str(p, "paths", "checkpoint_dir", rc.paths.checkpoint_dir);
    rc.paths.log_dir = str(p, "paths", "log_dir", rc.paths.log_dir);
  }

  if (!j.contains("morphology")) throw ConfigError("config: missing required section \"morphology\"");
  rc.morphology = morphology_from_json(j.at("morphology"));

  if (j.contains("retarget")) {
    const auto& r = j.at("retarget");
    check_keys(r, "retarget",
               {"w_feet", "w_knees", "w_hips", "w_trunk", "w_reg", "max_iters", "objective_tol",
                "scale", "q_init", "contact_height"});
    RetargetConfig& rt = rc.retarget;
    const double w_feet = num(r, "retarget", "w_feet", 5.0);
    const double w_knees = num(r, "retarget", "w_knees", 1.0);
    const double w_hips = num(r, "retarget", "w_hips", 1.0);
    rt.weights.w_keypoint[kTrunk] = num(r, "retarget", "w_trunk", 1.0);
    for (int leg = 0; leg < kNumLegs; ++leg) {
      rt.weights.w_keypoint[static_cast<std::size_t>(hip_keypoint(leg))] = w_hips;
      rt.weights.w_keypoint[static_cast<std::size_t>(knee_keypoint(leg))] = w_knees;
      rt.weights.w_keypoint[static_cast<std::size_t>(foot_keypoint(leg))] = w_feet;
    }
    rt.weights.w_reg = num(r, "retarget", "w_reg", 0.1);
    rt.solver.max_iters = integer(r, "retarget", "max_iters", 50);
    rt.solver.objective_tol = num(r, "retarget", "objective_tol", 1e-8);
    rt.scale = num(r, "retarget", "scale", 1.0);
    if (r.contains("q_init")) {
      const auto qi = num_array(r, "retarget", "q_init", kNumJoints);
      for (int i = 0; i < kNumJoints; ++i) rt.q_init[i] = qi[static_cast<std::size_t>(i)];
    }
    rt.contact_height = num(r, "retarget", "contact_height", 0.02);
  }

  if (j.contains("simenv")) {
    const auto& s = j.at("simenv");
    check_keys(s, "simenv",
               {"dt_control", "substeps", "contact_enabled", "warmup_substeps", "ref_window",
                "max_episode_steps", "command_embed_dim", "friction", "kp", "kd",
                "contact_stiffness", "contact_damping", "max_contact_force", "gravity", "reward", "tracking_coeffs",
                "termination", "reset_noise", "randomization"});
    EnvConfig& e = rc.sim.env;
    DynamicsParams& d = rc.sim.nominal;
    e.dt_control = num(s, "simenv", "dt_control", e.dt_control);
    e.substeps = integer(s, "simenv", "substeps", e.substeps);
    e.contact_enabled = boolean(s, "simenv", "contact_enabled", e.contact_enabled);
    e.warmup_substeps = integer(s, "simenv", "warmup_substeps", e.warmup_substeps);
    e.ref_window = integer(s, "simenv", "ref_window", e.ref_window);
    e.max_episode_steps = integer(s, "simenv", "max_episode_steps", e.max_episode_steps);
    e.command_embed_dim = integer(s, "simenv", "command_embed_dim", e.command_embed_dim);
    d.friction_coeff = num(s, "simenv", "friction", d.friction_coeff);
    d.kp = num(s, "simenv", "kp", d.kp);
    d.kd = num(s, "simenv", "kd", d.kd);
    d.contact_stiffness = num(s, "simenv", "contact_stiffness", d.contact_stiffness);
    d.contact_damping = num(s, "simenv", "contact_damping", d.contact_damping);
    d.max_contact_force = num(s, "simenv", "max_contact_force", d.max_contact_force);
    d.gravity = num(s, "simenv", "gravity", d.gravity);
    if (s.contains("reward")) {
      const auto& w = s.at("reward");
      check_keys(w, "simenv.reward", {"track", "action_rate", "energy", "alive", "termination"});
      e.reward.track = num(w, "simenv.reward", "track", e.reward.track);
      e.reward.action_rate = num(w, "simenv.reward", "action_rate", e.reward.action_rate);
      e.reward.energy = num(w, "simenv.reward", "energy", e.reward.energy);
      e.reward.alive = num(w, "simenv.reward", "alive", e.reward.alive);
      e.reward.termination = num(w, "simenv.reward", "termination", e.reward.termination);
    }
    if (s.contains("tracking_coeffs")) {
      const auto& c = s.at("tracking_coeffs");
      check_keys(c, "simenv.tracking_coeffs", {"feet", "trunk", "intermediate"});
      e.c_feet = num(c, "simenv.tracking_coeffs", "feet", e.c_feet);
      e.c_trunk = num(c, "simenv.tracking_coeffs", "trunk", e.c_trunk);
      e.c_intermediate = num(c, "simenv.tracking_coeffs", "intermediate", e.c_intermediate);
    }
    if (s.contains("termination")) {
      const auto& t = s.at("termination");
      check_keys(t, "simenv.termination", {"min_root_height", "max_tilt_deg", "max_keypoint_error"});
      e.termination.min_root_height =
          num(t, "simenv.termination", "min_root_height", e.termination.min_root_height);
      e.termination.max_tilt =
          num(t, "simenv.termination", "max_tilt_deg", e.termination.max_tilt * 180.0 / M_PI) *
          M_PI / 180.0;
      e.termination.max_keypoint_error =
          num(t, "simenv.termination", "max_keypoint_error", e.termination.max_keypoint_error);
    }
    if (s.contains("reset_noise")) {
      const auto& nz = s.at("reset_noise");
      check_keys(nz, "simenv.reset_noise", {"q", "qd", "root_pos", "root_rot"});
      e.reset_noise.q = num(nz, "simenv.reset_noise", "q", e.reset_noise.q);
      e.reset_noise.qd = num(nz, "simenv.reset_noise", "qd", e.reset_noise.qd);
      e.reset_noise.root_pos = num(nz, "simenv.reset_noise", "root_pos", e.reset_noise.root_pos);
      e.reset_noise.root_rot = num(nz, "simenv.reset_noise", "root_rot", e.reset_noise.root_rot);
    }
    if (s.contains("randomization")) {
      const auto& r = s.at("randomization");
      check_keys(r, "simenv.randomization", {"friction", "mass", "kp", "kd"});
      e.randomization.friction = range(r, "simenv.randomization", "friction", e.randomization.friction);
      e.randomization.mass = range(r, "simenv.randomization", "mass", e.randomization.mass);
      e.randomization.kp = range(r, "simenv.randomization", "kp", e.randomization.kp);
      e.randomization.kd = range(r, "simenv.randomization", "kd", e.randomization.kd);
    }
  }

  if (j.contains("ppo")) {
    const auto& p = j.at("ppo");
    check_keys(p, "ppo",
               {"clip_eps", "gamma", "lambda", "n_epochs", "n_minibatches", "value_coeff",
                "entropy_coeff", "max_grad_norm", "lr_actor", "lr_critic", "n_envs", "n_steps",
                "actor_hidden", "critic_hidden", "activation", "policy_std", "log_std_init",
                "action_scale", "action_center"});
    PpoConfig& pc = rc.ppo;
    pc.hyper.clip_eps = num(p, "ppo", "clip_eps", pc.hyper.clip_eps);
    pc.hyper.gamma = num(p, "ppo", "gamma", pc.hyper.gamma);
    pc.hyper.lam = num(p, "ppo", "lambda", pc.hyper.lam);
    pc.hyper.n_epochs = integer(p, "ppo", "n_epochs", pc.hyper.n_epochs);
    pc.hyper.n_minibatches = integer(p, "ppo", "n_minibatches", pc.hyper.n_minibatches);
    pc.hyper.value_coeff = num(p, "ppo", "value_coeff", pc.hyper.value_coeff);
    pc.hyper.entropy_coeff = num(p, "ppo", "entropy_coeff", pc.hyper.entropy_coeff);
    pc.hyper.max_grad_norm = num(p, "ppo", "max_grad_norm", pc.hyper.max_grad_norm);
    pc.hyper.lr_actor = num(p, "ppo", "lr_actor", pc.hyper.lr_actor);
    pc.hyper.lr_critic = num(p, "ppo", "lr_critic", pc.hyper.lr_critic);
    pc.n_envs = integer(p, "ppo", "n_envs", pc.n_envs);
    pc.n_steps = integer(p, "ppo", "n_steps", pc.n_steps);
    pc.actor_hidden = int_list(p, "ppo", "actor_hidden", pc.actor_hidden);
    pc.critic_hidden = int_list(p, "ppo", "critic_hidden", pc.critic_hidden);
    try {
      pc.activation = activation_from_string(str(p, "ppo", "activation", to_string(pc.activation)));
      pc.policy_std = policy_std_mode_from_string(
          str(p, "ppo", "policy_std",
              pc.policy_std == PolicyStdMode::NetOutput ? "net_output" : "state_independent"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ppo: ") + e.what());
    }
    pc.log_std_init = num(p, "ppo", "log_std_init", pc.log_std_init);
    pc.action_scale = num(p, "ppo", "action_scale", pc.action_scale);
    if (p.contains("action_center")) {
      const auto ac = num_array(p, "ppo", "action_center", kNumJoints);
      for (int i = 0; i < kNumJoints; ++i) pc.action_center[i] = ac[static_cast<std::size_t>(i)];
    }
    try {
      pc.hyper.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ppo invalid: ") + e.what());
    }
    if (pc.n_envs < 1 || pc.n_steps < 1) throw ConfigError("config: ppo.n_envs/n_steps must be >= 1");
  }

  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    check_keys(g, "generator",
               {"latent_dim", "window", "embed_dim", "encoder_hidden", "decoder_hidden",
                "prior_hidden", "activation", "beta", "lr_pretrain", "lr_joint", "contact_height",
                "pretrain_epochs", "pretrain_batch", "commands"});
    GeneratorConfig& gc = rc.generator;
    gc.gen.latent_dim = integer(g, "generator", "latent_dim", gc.gen.latent_dim);
    gc.gen.window = integer(g, "generator", "window", gc.gen.window);
    gc.gen.embed_dim = integer(g, "generator", "embed_dim", gc.gen.embed_dim);
    gc.gen.encoder_hidden = int_list(g, "generator", "encoder_hidden", gc.gen.encoder_hidden);
    gc.gen.decoder_hidden = int_list(g, "generator", "decoder_hidden", gc.gen.decoder_hidden);
    gc.gen.prior_hidden = int_list(g, "generator", "prior_hidden", gc.gen.prior_hidden);
    try {
      gc.gen.activation =
          activation_from_string(str(g, "generator", "activation", to_string(gc.gen.activation)));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: generator: ") + e.what());
    }
    gc.gen.beta = num(g, "generator", "beta", gc.gen.beta);
    gc.gen.lr = num(g, "generator", "lr_pretrain", gc.gen.lr);
    gc.lr_joint = num(g, "generator", "lr_joint", gc.lr_joint);
    gc.gen.contact_height = num(g, "generator", "contact_height", gc.gen.contact_height);
    gc.pretrain_epochs = integer(g, "generator", "pretrain_epochs", gc.pretrain_epochs);
    gc.pretrain_batch = integer(g, "generator", "pretrain_batch", gc.pretrain_batch);
    if (g.contains("commands")) {
      const auto& cmds = g.at("commands");
      if (!cmds.is_array() || cmds.empty())
        throw ConfigError("config: generator.commands must be a non-empty array");
      gc.commands.clear();
      for (const auto& c : cmds) {
        check_keys(c, "generator.commands[]", {"id", "text"});
        if (!c.contains("id") || !c.contains("text"))
          throw ConfigError("config: generator.commands entries need id and text");
        gc.commands.push_back({c.at("id").get<std::string>(), c.at("text").get<std::string>()});
      }
    }
    if (rc.sim.env.command_embed_dim != gc.gen.embed_dim)
      rc.sim.env.command_embed_dim = gc.gen.embed_dim;
  }

  if (j.contains("trainer")) {
    const auto& t = j.at("trainer");
    check_keys(t, "trainer",
               {"n_iter", "k_refresh", "tracker_steps_per_motion", "ema_alpha", "n_motions",
                "checkpoint_every", "recon_in_joint"});
    TrainerConfig& tc = rc.trainer;
    tc.n_iter = integer(t, "trainer", "n_iter", tc.n_iter);
    tc.tracker_steps_per_motion =
        integer(t, "trainer", "tracker_steps_per_motion", tc.tracker_steps_per_motion);
    // K_R defaults to the tracker-steps-per-motion budget unless set explicitly
    tc.k_refresh = integer(t, "trainer", "k_refresh", tc.tracker_steps_per_motion);
    tc.ema_alpha = num(t, "trainer", "ema_alpha", tc.ema_alpha);
    tc.n_motions = integer(t, "trainer", "n_motions", tc.n_motions);
    tc.checkpoint_every = integer(t, "trainer", "checkpoint_every", tc.checkpoint_every);
    tc.recon_in_joint = boolean(t, "trainer", "recon_in_joint", tc.recon_in_joint);
    tc.validate();
  } else {
    rc.trainer.k_refresh = rc.trainer.tracker_steps_per_motion;
  }

  if (j.contains("dedup")) {
    const auto& d = j.at("dedup");
    check_keys(d, "dedup", {"threshold", "fixed_window", "min_segment"});
    rc.dedup.threshold = num(d, "dedup", "threshold", rc.dedup.threshold);
    rc.dedup.fixed_window = integer(d, "dedup", "fixed_window", rc.dedup.fixed_window);
    rc.dedup.min_segment = integer(d, "dedup", "min_segment", rc.dedup.min_segment);
  }

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, "eval", {"max_steps"});
    rc.eval.max_steps = integer(e, "eval", "max_steps", rc.eval.max_steps);
  }
  return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: JSON parse error in " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

/// Full canonical snapshot of a RunConfig; parse_run_config(to_json(rc))
/// reproduces rc, which is what run manifests rely on.
inline nlohmann::json to_json(const RunConfig& rc) {
  nlohmann::json j;
  j["master_seed"] = rc.master_seed;
  j["num_threads"] = rc.num_threads;
  j["paths"] = {{"dataset_dir", rc.paths.dataset_dir},
                {"checkpoint_dir", rc.paths.checkpoint_dir},
                {"log_dir", rc.paths.log_dir}};
  const Morphology& m = rc.morphology;
  j["morphology"] = {
      {"trunk_dims", {m.trunk_dims.x(), m.trunk_dims.y(), m.trunk_dims.z()}},
      {"trunk_mass", m.trunk_mass},
      {"hip_offsets",
       {{"fl", {m.hip_offsets[0].x(), m.hip_offsets[0].y(), m.hip_offsets[0].z()}},
        {"fr", {m.hip_offsets[1].x(), m.hip_offsets[1].y(), m.hip_offsets[1].z()}},
        {"rl", {m.hip_offsets[2].x(), m.hip_offsets[2].y(), m.hip_offsets[2].z()}},
        {"rr", {m.hip_offsets[3].x(), m.hip_offsets[3].y(), m.hip_offsets[3].z()}}}},
      {"l_hip", m.l_hip},
      {"l_thigh", m.l_thigh},
      {"l_calf", m.l_calf},
      {"joint_limits",
       {{"abduction", {m.joint_lower[0], m.joint_upper[0]}},
        {"hip_flexion", {m.joint_lower[1], m.joint_upper[1]}},
        {"knee_flexion", {m.joint_lower[2], m.joint_upper[2]}}}},
      {"torque_limit", m.torque_limit[0]},
      {"leg_joint_inertia", m.leg_joint_inertia}};
  const RetargetConfig& rt = rc.retarget;
  j["retarget"] = {{"w_feet", rt.weights.w_keypoint[kFootFL]},
                   {"w_knees", rt.weights.w_keypoint[kKneeFL]},
                   {"w_hips", rt.weights.w_keypoint[kHipFL]},
                   {"w_trunk", rt.weights.w_keypoint[kTrunk]},
                   {"w_reg", rt.weights.w_reg},
                   {"max_iters", rt.solver.max_iters},
                   {"objective_tol", rt.solver.objective_tol},
                   {"scale", rt.scale},
                   {"q_init", std::vector<double>(rt.q_init.data(), rt.q_init.data() + kNumJoints)},
                   {"contact_height", rt.contact_height}};
  const EnvConfig& e = rc.sim.env;
  const DynamicsParams& d = rc.sim.nominal;
  j["simenv"] = {
      {"dt_control", e.dt_control},
      {"substeps", e.substeps},
      {"contact_enabled", e.contact_enabled},
      {"warmup_substeps", e.warmup_substeps},
      {"ref_window", e.ref_window},
      {"max_episode_steps", e.max_episode_steps},
      {"command_embed_dim", e.command_embed_dim},
      {"friction", d.friction_coeff},
      {"kp", d.kp},
      {"kd", d.kd},
      {"contact_stiffness", d.contact_stiffness},
      {"contact_damping", d.contact_damping},
      {"max_contact_force", d.max_contact_force},
      {"gravity", d.gravity},
      {"reward",
       {{"track", e.reward.track},
        {"action_rate", e.reward.action_rate},
        {"energy", e.reward.energy},
        {"alive", e.reward.alive},
        {"termination", e.reward.termination}}},
      {"tracking_coeffs",
       {{"feet", e.c_feet}, {"trunk", e.c_trunk}, {"intermediate", e.c_intermediate}}},
      {"termination",
       {{"min_root_height", e.termination.min_root_height},
        {"max_tilt_deg", e.termination.max_tilt * 180.0 / M_PI},
        {"max_keypoint_error", e.termination.max_keypoint_error}}},
      {"reset_noise",
       {{"q", e.reset_noise.q},
        {"qd", e.reset_noise.qd},
        {"root_pos", e.reset_noise.root_pos},
        {"root_rot", e.reset_noise.root_rot}}},
      {"randomization",
       {{"friction", {e.randomization.friction.first, e.randomization.friction.second}},
        {"mass", {e.randomization.mass.first, e.randomization.mass.second}},
        {"kp", {e.randomization.kp.first, e.randomization.kp.second}},
        {"kd", {e.randomization.kd.first, e.randomization.kd.second}}}}};
  const PpoConfig& pc = rc.ppo;
  j["ppo"] = {{"clip_eps", pc.hyper.clip_eps},
              {"gamma", pc.hyper.gamma},
              {"lambda", pc.hyper.lam},
              {"n_epochs", pc.hyper.n_epochs},
              {"n_minibatches", pc.hyper.n_minibatches},
              {"value_coeff", pc.hyper.value_coeff},
              {"entropy_coeff", pc.hyper.entropy_coeff},
              {"max_grad_norm", pc.hyper.max_grad_norm},
              {"lr_actor", pc.hyper.lr_actor},
              {"lr_critic", pc.hyper.lr_critic},
              {"n_envs", pc.n_envs},
              {"n_steps", pc.n_steps},
              {"actor_hidden", pc.actor_hidden},
              {"critic_hidden", pc.critic_hidden},
              {"activation", to_string(pc.activation)},
              {"policy_std",
               pc.policy_std == PolicyStdMode::NetOutput ? "net_output" : "state_independent"},
              {"log_std_init", pc.log_std_init},
              {"action_scale", pc.action_scale},
              {"action_center",
               std::vector<double>(pc.action_center.data(), pc.action_center.data() + kNumJoints)}};
  const GeneratorConfig& gc = rc.generator;
  nlohmann::json cmds = nlohmann::json::array();
  for (const auto& c : gc.commands) cmds.push_back({{"id", c.id}, {"text", c.text}});
  j["generator"] = {{"latent_dim", gc.gen.latent_dim},
                    {"window", gc.gen.window},
                    {"embed_dim", gc.gen.embed_dim},
                    {"encoder_hidden", gc.gen.encoder_hidden},
                    {"decoder_hidden", gc.gen.decoder_hidden},
                    {"prior_hidden", gc.gen.prior_hidden},
                    {"activation", to_string(gc.gen.activation)},
                    {"beta", gc.gen.beta},
                    {"lr_pretrain", gc.gen.lr},
                    {"lr_joint", gc.lr_joint},
                    {"contact_height", gc.gen.contact_height},
                    {"pretrain_epochs", gc.pretrain_epochs},
                    {"pretrain_batch", gc.pretrain_batch},
                    {"commands", cmds}};
  const TrainerConfig& tc = rc.trainer;
  j["trainer"] = {{"n_iter", tc.n_iter},
                  {"k_refresh", tc.k_refresh},
                  {"tracker_steps_per_motion", tc.tracker_steps_per_motion},
                  {"ema_alpha", tc.ema_alpha},
                  {"n_motions", tc.n_motions},
                  {"checkpoint_every", tc.checkpoint_every},
                  {"recon_in_joint", tc.recon_in_joint}};
  j["dedup"] = {{"threshold", rc.dedup.threshold},
                {"fixed_window", rc.dedup.fixed_window},
                {"min_segment", rc.dedup.min_segment}};
  j["eval"] = {{"max_steps", rc.eval.max_steps}};
  return j;
}

}  // namespace quadmotion
