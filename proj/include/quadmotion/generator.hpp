#pragma once

#include <optional>
#include <string>
#include <vector>

#include "quadmotion/clip.hpp"
#include "quadmotion/net.hpp"
#include "quadmotion/sim.hpp"

namespace quadmotion {

/// Fixed command vocabulary with a seeded embedding table. The embedding of a
/// command conditions both the generator prior/decoder and the tracking
/// policy observation.
struct CommandVocab {
  struct Entry {
    std::string id;    // machine name, e.g. "walk_forward"
    std::string text;  // display text, e.g. "walk forward"
  };
  std::vector<Entry> entries;
  Eigen::MatrixXd embeddings;  // embed_dim x vocab size

  static CommandVocab make(std::vector<Entry> entries, int embed_dim, std::uint64_t seed) {
    CommandVocab v;
    v.entries = std::move(entries);
    for (std::size_t i = 0; i < v.entries.size(); ++i)
      for (std::size_t j = i + 1; j < v.entries.size(); ++j)
        if (v.entries[i].id == v.entries[j].id)
          throw std::invalid_argument("CommandVocab: duplicate command id " + v.entries[i].id);
    RngStream rng = RngStream::derive(seed, "command_vocab");
    v.embeddings.resize(embed_dim, static_cast<Eigen::Index>(v.entries.size()));
    const double scale = 1.0 / std::sqrt(static_cast<double>(std::max(embed_dim, 1)));
    for (Eigen::Index c = 0; c < v.embeddings.cols(); ++c)
      for (Eigen::Index r = 0; r < v.embeddings.rows(); ++r)
        v.embeddings(r, c) = scale * rng.normal();
    return v;
  }

  int size() const { return static_cast<int>(entries.size()); }
  int embed_dim() const { return static_cast<int>(embeddings.rows()); }

  int index_of(const std::string& id) const {
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i].id == id) return static_cast<int>(i);
    throw std::invalid_argument("CommandVocab: unknown command id \"" + id + "\"");
  }

  Eigen::VectorXd embedding(const std::string& id) const {
    return embeddings.col(index_of(id));
  }

  /// Embedding looked up by id or display text; zeros when unknown (clips
  /// from outside the vocabulary still train the tracker).
  Eigen::VectorXd embedding_or_zero(const std::string& id_or_text) const {
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i].id == id_or_text || entries[i].text == id_or_text)
        return embeddings.col(static_cast<Eigen::Index>(i));
    return Eigen::VectorXd::Zero(embeddings.rows());
  }
};

constexpr int kGenFrameFeatures = 3 + 4 + kNumJoints;  // root pos, quat wxyz, q
constexpr int kStateFeatureDim = 1 + 3 + kNumJoints + kNumJoints;
constexpr double kLogVarMin = -8.0;
constexpr double kLogVarMax = 4.0;

struct GenConfig {
  int latent_dim = 16;
  int window = 50;  // M frames at 50 Hz
  int embed_dim = 8;
  std::vector<int> encoder_hidden{128, 64};
  std::vector<int> decoder_hidden{128, 64};
  std::vector<int> prior_hidden{64, 64};
  Activation activation = Activation::Elu;
  double beta = 1e-3;        // KL weight in the reconstruction loss
  double lr = 2e-4;          // pretraining learning rate
  double contact_height = 0.02;

  void validate() const {
    if (latent_dim < 1 || window < 1 || embed_dim < 0)
      throw std::invalid_argument("GenConfig: bad dimensions");
    if (beta < 0.0) throw std::invalid_argument("GenConfig: beta < 0");
  }

  int cond_dim() const { return embed_dim + kStateFeatureDim; }
  int frame_dim() const { return kGenFrameFeatures * window; }
};

/// Anchor-state features fed to the prior/decoder: root height, projected
/// gravity, joint positions and velocities.
inline Eigen::VectorXd state_features(const SimState& s) {
  Eigen::VectorXd f(kStateFeatureDim);
  f[0] = s.root.position.z();
  f.segment<3>(1) = s.root.orientation.conjugate() * Vec3(0, 0, -1);
  f.segment<kNumJoints>(4) = s.q;
  f.segment<kNumJoints>(4 + kNumJoints) = s.qd;
  return f;
}

inline Eigen::VectorXd state_features(const MotionFrame& frame, bool has_qd) {
  SimState s;
  s.root.position = frame.root_pos;
  s.root.orientation = frame.root_quat.normalized();
  s.q = frame.q;
  if (has_qd) s.qd = frame.qd;
  return state_features(s);
}

/// Flattened per-frame features of clip[start, start+window).
inline Eigen::VectorXd window_features(const MotionClip& clip, int start, int window) {
  if (start < 0 || start + window > clip.length())
    throw std::invalid_argument("window_features: clip shorter than the requested window");
  Eigen::VectorXd w(kGenFrameFeatures * window);
  for (int t = 0; t < window; ++t) {
    const MotionFrame& f = clip.frames[static_cast<std::size_t>(start + t)];
    int off = kGenFrameFeatures * t;
    w.segment<3>(off) = f.root_pos;
    w[off + 3] = f.root_quat.w();
    w[off + 4] = f.root_quat.x();
    w[off + 5] = f.root_quat.y();
    w[off + 6] = f.root_quat.z();
    w.segment<kNumJoints>(off + 7) = f.q;
  }
  return w;
}

/// One generator draw: latent, its exact prior log-density, the decoded
/// (limit-clamped) motion, and the conditioning that produced it.
struct GenSample {
  Eigen::VectorXd z;
  double log_prior = 0.0;
  MotionClip motion;
  std::string command;
  Eigen::VectorXd cond;
};

/// Conditional latent motion model: encoder E(m) -> q(z|m), decoder D(z, c)
/// and a conditional diagonal-Gaussian prior p(z | c, s_t) whose log-density
/// is exact. The prior receives the policy-gradient feedback; the decoder
/// and encoder train only through the reconstruction loss.
class GenLatentModel {
 public:
  GenLatentModel() = default;

  explicit GenLatentModel(const GenConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::vector<int> enc_dims{cfg_.frame_dim()};
    enc_dims.insert(enc_dims.end(), cfg_.encoder_hidden.begin(), cfg_.encoder_hidden.end());
    enc_dims.push_back(2 * cfg_.latent_dim);
    std::vector<int> dec_dims{cfg_.latent_dim + cfg_.cond_dim()};
    dec_dims.insert(dec_dims.end(), cfg_.decoder_hidden.begin(), cfg_.decoder_hidden.end());
    dec_dims.push_back(cfg_.frame_dim());
    std::vector<int> prior_dims{cfg_.cond_dim()};
    prior_dims.insert(prior_dims.end(), cfg_.prior_hidden.begin(), cfg_.prior_hidden.end());
    prior_dims.push_back(2 * cfg_.latent_dim);
    encoder_ = MlpNet(enc_dims, cfg_.activation);
    decoder_ = MlpNet(dec_dims, cfg_.activation);
    prior_ = MlpNet(prior_dims, cfg_.activation);
    opt_encoder_ = AdamState(encoder_.param_count(), cfg_.lr);
    opt_decoder_ = AdamState(decoder_.param_count(), cfg_.lr);
    opt_prior_ = AdamState(prior_.param_count(), cfg_.lr);
  }

  const GenConfig& config() const { return cfg_; }
  MlpNet& encoder() { return encoder_; }
  MlpNet& decoder() { return decoder_; }
  MlpNet& prior() { return prior_; }
  const MlpNet& prior() const { return prior_; }

  void init_random(RngStream& rng) {
    encoder_.init_random(rng);
    decoder_.init_random(rng, 0.1);
    prior_.init_random(rng, 0.1);
  }

  void set_learning_rate(double lr) {
    opt_encoder_.lr = lr;
    opt_decoder_.lr = lr;
    opt_prior_.lr = lr;
  }

  Eigen::VectorXd condition(const Eigen::VectorXd& embed, const SimState& s_t) const {
    if (embed.size() != cfg_.embed_dim)
      throw std::invalid_argument("GenLatentModel: embedding dim mismatch");
    Eigen::VectorXd cond(cfg_.cond_dim());
    cond.head(cfg_.embed_dim) = embed;
    cond.tail(kStateFeatureDim) = state_features(s_t);
    return cond;
  }

  /// Reparameterized draw from the conditional prior plus deterministic
  /// decode. log_prior is the exact diagonal-Gaussian log density at z.
  GenSample sample(const CommandVocab& vocab, const std::string& command_id, const SimState& s_t,
                   const Morphology& morph, RngStream& rng, const std::string& clip_id) const {
    const Eigen::VectorXd embed = vocab.embedding(command_id);
    GenSample out;
    out.command = command_id;
    out.cond = condition(embed, s_t);

    Eigen::VectorXd mu, log_var;
    prior_heads(out.cond, mu, log_var);
    const Eigen::VectorXd log_std = 0.5 * log_var;
    out.z = DiagGaussian::sample(mu, log_std, rng);
    out.log_prior = DiagGaussian::log_prob(out.z, mu, log_std);
    out.motion = decode_clip(out.z, out.cond, morph, clip_id,
                             vocab.entries[static_cast<std::size_t>(vocab.index_of(command_id))].text);
    return out;
  }

  void prior_heads(const Eigen::VectorXd& cond, Eigen::VectorXd& mu, Eigen::VectorXd& log_var) const {
    const Eigen::MatrixXd out = prior_.forward(cond);
    mu = out.col(0).head(cfg_.latent_dim);
    log_var = out.col(0).tail(cfg_.latent_dim).array().min(kLogVarMax).max(kLogVarMin).matrix();
  }

  /// Decodes latent + condition into a clip: quaternions renormalized, joint
  /// angles clamped to the limits, contacts inferred from foot height.
  MotionClip decode_clip(const Eigen::VectorXd& z, const Eigen::VectorXd& cond,
                         const Morphology& morph, const std::string& clip_id,
                         const std::string& command_text) const {
    Eigen::VectorXd dec_in(cfg_.latent_dim + cfg_.cond_dim());
    dec_in.head(cfg_.latent_dim) = z;
    dec_in.tail(cfg_.cond_dim()) = cond;
    const Eigen::VectorXd feat = decoder_.forward(dec_in).col(0);

    MotionClip clip;
    clip.id = clip_id;
    clip.source = "video_gen";
    clip.annotations = {"", "", command_text};
    clip.has_qd = false;
    clip.frames.reserve(static_cast<std::size_t>(cfg_.window));
    for (int t = 0; t < cfg_.window; ++t) {
      const int off = kGenFrameFeatures * t;
      MotionFrame f;
      f.root_pos = feat.segment<3>(off);
      Quat q(feat[off + 3], feat[off + 4], feat[off + 5], feat[off + 6]);
      f.root_quat = q.norm() > 1e-8 ? q.normalized() : Quat(1, 0, 0, 0);
      f.q = clamp_to_limits(morph, feat.segment<kNumJoints>(off + 7));
      RootPose root{f.root_pos, f.root_quat};
      const KeypointSet kp = forward_kinematics(morph, root, f.q);
      for (int leg = 0; leg < kNumLegs; ++leg)
        f.contact[static_cast<std::size_t>(leg)] =
            kp[foot_keypoint(leg)].z() < cfg_.contact_height;
      clip.frames.push_back(f);
    }
    return clip;
  }

  struct ReconOut {
    double loss = 0.0;
    double recon_mse = 0.0;
    double kl = 0.0;
    Eigen::VectorXd g_encoder, g_decoder, g_prior;
  };

  /// ELBO-style reconstruction: deterministic encode (z = posterior mean),
  /// decode, mean-squared error plus beta-weighted KL(q || p). Gradients for
  /// all three nets.
  ReconOut recon_grads(const Eigen::MatrixXd& windows, const Eigen::MatrixXd& conds) const {
    const int B = static_cast<int>(windows.cols());
    if (B == 0 || conds.cols() != B) throw std::invalid_argument("recon_grads: batch mismatch");
    const int Z = cfg_.latent_dim;
    const int F = cfg_.frame_dim();

    GradTape enc_tape;
    const Eigen::MatrixXd enc_out = encoder_.forward(windows, &enc_tape);
    const Eigen::MatrixXd mu_q = enc_out.topRows(Z);
    const Eigen::MatrixXd lv_q_raw = enc_out.bottomRows(Z);
    const Eigen::MatrixXd lv_q = lv_q_raw.array().min(kLogVarMax).max(kLogVarMin).matrix();

    Eigen::MatrixXd dec_in(Z + cfg_.cond_dim(), B);
    dec_in.topRows(Z) = mu_q;
    dec_in.bottomRows(cfg_.cond_dim()) = conds;
    GradTape dec_tape;
    const Eigen::MatrixXd recon = decoder_.forward(dec_in, &dec_tape);

    GradTape prior_tape;
    const Eigen::MatrixXd prior_out = prior_.forward(conds, &prior_tape);
    const Eigen::MatrixXd mu_p = prior_out.topRows(Z);
    const Eigen::MatrixXd lv_p_raw = prior_out.bottomRows(Z);
    const Eigen::MatrixXd lv_p = lv_p_raw.array().min(kLogVarMax).max(kLogVarMin).matrix();

    ReconOut out;
    const Eigen::MatrixXd err = recon - windows;
    out.recon_mse = err.squaredNorm() / (static_cast<double>(F) * B);

    const Eigen::ArrayXXd var_q = lv_q.array().exp();
    const Eigen::ArrayXXd inv_var_p = (-lv_p.array()).exp();
    const Eigen::ArrayXXd dmu = (mu_q - mu_p).array();
    const Eigen::ArrayXXd kl_terms =
        0.5 * (lv_p.array() - lv_q.array() + (var_q + dmu.square()) * inv_var_p - 1.0);
    out.kl = kl_terms.sum() / B;
    out.loss = out.recon_mse + cfg_.beta * out.kl;

    // reconstruction path
    const Eigen::MatrixXd d_recon = (2.0 / (static_cast<double>(F) * B)) * err;
    auto dec_grads = decoder_.backward(dec_tape, d_recon);
    out.g_decoder = std::move(dec_grads.param_grad);
    const Eigen::MatrixXd dz = dec_grads.input_grad.topRows(Z);

    // KL path; clamp masks pass gradient only where the raw log-var is active
    const double kb = cfg_.beta / B;
    auto active = [](const Eigen::MatrixXd& raw) -> Eigen::ArrayXXd {
      return ((raw.array() > kLogVarMin) && (raw.array() < kLogVarMax)).cast<double>();
    };
    const Eigen::ArrayXXd d_mu_q = kb * dmu * inv_var_p;
    const Eigen::ArrayXXd d_lv_q = (kb * 0.5 * (var_q * inv_var_p - 1.0)) * active(lv_q_raw);
    const Eigen::ArrayXXd d_mu_p = -kb * dmu * inv_var_p;
    const Eigen::ArrayXXd d_lv_p =
        (kb * 0.5 * (1.0 - (var_q + dmu.square()) * inv_var_p)) * active(lv_p_raw);

    Eigen::MatrixXd d_enc_out(2 * Z, B);
    d_enc_out.topRows(Z) = dz + d_mu_q.matrix();
    d_enc_out.bottomRows(Z) = d_lv_q.matrix();
    out.g_encoder = encoder_.backward(enc_tape, d_enc_out).param_grad;

    Eigen::MatrixXd d_prior_out(2 * Z, B);
    d_prior_out.topRows(Z) = d_mu_p.matrix();
    d_prior_out.bottomRows(Z) = d_lv_p.matrix();
    out.g_prior = prior_.backward(prior_tape, d_prior_out).param_grad;
    return out;
  }

  /// Reconstruction loss of one clip window under condition (c, s_t).
  ReconOut recon_loss(const MotionClip& clip, int start, const Eigen::VectorXd& embed,
                      const SimState& s_t) const {
    if (clip.length() < start + cfg_.window)
      throw std::invalid_argument("recon_loss: clip shorter than the window length");
    const Eigen::MatrixXd w = window_features(clip, start, cfg_.window);
    const Eigen::MatrixXd cond = condition(embed, s_t);
    return recon_grads(w, cond);
  }

  struct RlStats {
    double l_rl = 0.0;
    double l_recon = 0.0;
    double mean_advantage = 0.0;
  };

  /// Alg-1 generator step: L_R = L_recon + L_RL with
  /// L_RL = -mean_i(log p(z_i | c_i, s_i) * (G_i - b)). The RL gradient flows
  /// into the prior only; encoder/decoder receive gradient only through the
  /// optional reconstruction batch. A net whose total gradient is exactly
  /// zero is left untouched (so zero advantages change nothing).
  RlStats rl_update(const std::vector<GenSample>& samples, const std::vector<double>& sample_returns,
                    double baseline,
                    const std::optional<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>>& recon_batch =
                        std::nullopt) {
    if (samples.empty()) throw std::invalid_argument("rl_update: no samples");
    if (samples.size() != sample_returns.size())
      throw std::invalid_argument("rl_update: sample/return count mismatch");
    const int n = static_cast<int>(samples.size());
    const int Z = cfg_.latent_dim;

    Eigen::MatrixXd conds(cfg_.cond_dim(), n);
    for (int i = 0; i < n; ++i) conds.col(i) = samples[static_cast<std::size_t>(i)].cond;

    GradTape tape;
    const Eigen::MatrixXd prior_out = prior_.forward(conds, &tape);
    const Eigen::MatrixXd mu = prior_out.topRows(Z);
    const Eigen::MatrixXd lv_raw = prior_out.bottomRows(Z);
    const Eigen::MatrixXd lv = lv_raw.array().min(kLogVarMax).max(kLogVarMin).matrix();

    RlStats stats;
    Eigen::MatrixXd d_mu = Eigen::MatrixXd::Zero(Z, n);
    Eigen::MatrixXd d_lv = Eigen::MatrixXd::Zero(Z, n);
    for (int i = 0; i < n; ++i) {
      const GenSample& s = samples[static_cast<std::size_t>(i)];
      const double adv = sample_returns[static_cast<std::size_t>(i)] - baseline;
      stats.mean_advantage += adv / n;
      const Eigen::VectorXd log_std = 0.5 * lv.col(i);
      const double logp = DiagGaussian::log_prob(s.z, mu.col(i), log_std);
      stats.l_rl += -logp * adv / n;
      const double scale = -adv / n;  // dL/dlogp
      const Eigen::ArrayXd inv_var = (-lv.col(i).array()).exp();
      const Eigen::ArrayXd diff = (s.z - mu.col(i)).array();
      d_mu.col(i) = (scale * diff * inv_var).matrix();
      d_lv.col(i) = (scale * 0.5 * (diff.square() * inv_var - 1.0)).matrix();
    }
    // clamp subgradient
    d_lv = (d_lv.array() * ((lv_raw.array() > kLogVarMin) && (lv_raw.array() < kLogVarMax)).cast<double>()).matrix();

    Eigen::VectorXd g_prior = prior_.backward(tape, [&] {
      Eigen::MatrixXd d(2 * Z, n);
      d.topRows(Z) = d_mu;
      d.bottomRows(Z) = d_lv;
      return d;
    }()).param_grad;

    Eigen::VectorXd g_encoder = Eigen::VectorXd::Zero(encoder_.param_count());
    Eigen::VectorXd g_decoder = Eigen::VectorXd::Zero(decoder_.param_count());
    if (recon_batch) {
      const ReconOut recon = recon_grads(recon_batch->first, recon_batch->second);
      stats.l_recon = recon.loss;
      g_prior += recon.g_prior;
      g_encoder = recon.g_encoder;
      g_decoder = recon.g_decoder;
    }

    if (!g_prior.isZero(0.0)) opt_prior_.apply(prior_.params(), g_prior);
    if (!g_encoder.isZero(0.0)) opt_encoder_.apply(encoder_.params(), g_encoder);
    if (!g_decoder.isZero(0.0)) opt_decoder_.apply(decoder_.params(), g_decoder);
    return stats;
  }

  /// Minimizes the reconstruction loss over all stride-M/2 windows of the
  /// dataset. Deterministic given the rng stream; returns per-epoch mean loss.
  std::vector<double> pretrain(const std::vector<MotionClip>& clips, const CommandVocab& vocab,
                               int epochs, int batch_size, RngStream& rng) {
    struct WindowRef {
      int clip = 0, start = 0;
    };
    std::vector<WindowRef> windows;
    for (std::size_t c = 0; c < clips.size(); ++c) {
      const int stride = std::max(cfg_.window / 2, 1);
      for (int s = 0; s + cfg_.window <= clips[c].length(); s += stride)
        windows.push_back({static_cast<int>(c), s});
    }
    if (windows.empty())
      throw std::invalid_argument("pretrain: empty dataset (no clip holds a full window)");

    std::vector<int> order(windows.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> curve;
    curve.reserve(static_cast<std::size_t>(epochs));
    for (int epoch = 0; epoch < epochs; ++epoch) {
      rng.shuffle(order);
      double total = 0.0;  // window-weighted so the epoch mean is batching-independent
      int seen = 0;
      for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(batch_size)) {
        const int bsize = static_cast<int>(std::min(static_cast<std::size_t>(batch_size),
                                                    order.size() - at));
        Eigen::MatrixXd w(cfg_.frame_dim(), bsize);
        Eigen::MatrixXd cond(cfg_.cond_dim(), bsize);
        for (int i = 0; i < bsize; ++i) {
          const WindowRef& ref = windows[static_cast<std::size_t>(order[at + static_cast<std::size_t>(i)])];
          const MotionClip& clip = clips[static_cast<std::size_t>(ref.clip)];
          w.col(i) = window_features(clip, ref.start, cfg_.window);
          Eigen::VectorXd c(cfg_.cond_dim());
          c.head(cfg_.embed_dim) = vocab.embedding_or_zero(clip.annotations.command);
          c.tail(kStateFeatureDim) =
              state_features(clip.frames[static_cast<std::size_t>(ref.start)], clip.has_qd);
          cond.col(i) = c;
        }
        const ReconOut out = recon_grads(w, cond);
        opt_encoder_.apply(encoder_.params(), out.g_encoder);
        opt_decoder_.apply(decoder_.params(), out.g_decoder);
        opt_prior_.apply(prior_.params(), out.g_prior);
        total += out.loss * bsize;
        seen += bsize;
      }
      curve.push_back(total / std::max(seen, 1));
    }
    return curve;
  }

  void save(CheckpointWriter& w, const std::string& prefix = "generator") const {
    w.add_net(prefix + ".encoder", encoder_);
    w.add_net(prefix + ".decoder", decoder_);
    w.add_net(prefix + ".prior", prior_);
    Eigen::VectorXd meta(5);
    meta << cfg_.latent_dim, cfg_.window, cfg_.embed_dim, cfg_.beta, cfg_.contact_height;
    w.add_vector(prefix + ".meta", meta);
  }

  static GenLatentModel load(const CheckpointReader& r, const GenConfig& cfg,
                             const std::string& prefix = "generator") {
    GenLatentModel m(cfg);
    const Eigen::VectorXd& meta = r.vector(prefix + ".meta");
    if (static_cast<int>(meta[0]) != cfg.latent_dim || static_cast<int>(meta[1]) != cfg.window ||
        static_cast<int>(meta[2]) != cfg.embed_dim)
      throw FormatError("generator checkpoint does not match the configured dimensions");
    m.encoder_.params() = r.net(prefix + ".encoder").params();
    m.decoder_.params() = r.net(prefix + ".decoder").params();
    m.prior_.params() = r.net(prefix + ".prior").params();
    return m;
  }

 private:
  GenConfig cfg_;
  MlpNet encoder_, decoder_, prior_;
  AdamState opt_encoder_, opt_decoder_, opt_prior_;
};

}  // namespace quadmotion
