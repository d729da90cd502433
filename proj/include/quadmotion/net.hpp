#pragma once

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "quadmotion/io_util.hpp"
#include "quadmotion/rng.hpp"

namespace quadmotion {

enum class Activation { Tanh, Elu };

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "elu") return Activation::Elu;
  throw std::invalid_argument("unknown activation: " + s);
}

inline std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "elu"; }

/// Cached activations for one forward batch; consumed by exactly one
/// backward pass.
struct GradTape {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> hidden;  // post-activation, per hidden layer
  bool consumed = false;
};

/// Feed-forward network over a flat parameter vector with hand-rolled
/// reverse-mode gradients. Hidden layers use the configured nonlinearity,
/// the output layer is linear. Columns are batch samples.
class MlpNet {
 public:
  MlpNet() = default;

  MlpNet(std::vector<int> dims, Activation act) : dims_(std::move(dims)), act_(act) {
    if (dims_.size() < 2) throw std::invalid_argument("MlpNet: need at least input/output dims");
    for (int d : dims_)
      if (d <= 0) throw std::invalid_argument("MlpNet: layer widths must be positive");
    int n = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) n += (dims_[l] + 1) * dims_[l + 1];
    params_ = Eigen::VectorXd::Zero(n);
  }

  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  int param_count() const { return static_cast<int>(params_.size()); }
  const std::vector<int>& dims() const { return dims_; }
  Activation activation() const { return act_; }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  /// Xavier-uniform weights, zero biases; the final layer can be shrunk
  /// (policy heads start near the action center that way).
  void init_random(RngStream& rng, double final_layer_scale = 1.0) {
    int off = 0;
    const int layers = num_layers();
    for (int l = 0; l < layers; ++l) {
      const int in = dims_[static_cast<std::size_t>(l)];
      const int out = dims_[static_cast<std::size_t>(l) + 1];
      double limit = std::sqrt(6.0 / (in + out));
      if (l == layers - 1) limit *= final_layer_scale;
      for (int i = 0; i < in * out; ++i) params_[off + i] = rng.uniform(-limit, limit);
      off += in * out;
      for (int i = 0; i < out; ++i) params_[off + i] = 0.0;
      off += out;
    }
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, GradTape* tape = nullptr) const {
    if (input.rows() != dims_.front())
      throw std::invalid_argument("MlpNet::forward: input width " + std::to_string(input.rows()) +
                                  " != " + std::to_string(dims_.front()));
    if (tape) {
      tape->input = input;
      tape->hidden.clear();
      tape->consumed = false;
    }
    Eigen::MatrixXd h = input;
    int off = 0;
    const int layers = num_layers();
    for (int l = 0; l < layers; ++l) {
      const int in = dims_[static_cast<std::size_t>(l)];
      const int out = dims_[static_cast<std::size_t>(l) + 1];
      Eigen::Map<const Eigen::MatrixXd> W(params_.data() + off, out, in);
      off += in * out;
      Eigen::Map<const Eigen::VectorXd> b(params_.data() + off, out);
      off += out;
      Eigen::MatrixXd z = (W * h).colwise() + b;
      if (l + 1 < layers) {
        apply_activation(z);
        if (tape) tape->hidden.push_back(z);
      }
      h = std::move(z);
    }
    return h;
  }

  struct Gradients {
    Eigen::VectorXd param_grad;
    Eigen::MatrixXd input_grad;
  };

  /// Exact reverse-mode gradients of the forward map; consumes the tape.
  Gradients backward(GradTape& tape, const Eigen::MatrixXd& output_grad) const {
    if (tape.consumed) throw std::logic_error("MlpNet::backward: GradTape already consumed");
    tape.consumed = true;
    if (output_grad.rows() != dims_.back() || output_grad.cols() != tape.input.cols())
      throw std::invalid_argument("MlpNet::backward: output gradient shape mismatch");

    Gradients g;
    g.param_grad = Eigen::VectorXd::Zero(params_.size());
    Eigen::MatrixXd delta = output_grad;
    const int layers = num_layers();
    for (int l = layers - 1; l >= 0; --l) {
      const int in = dims_[static_cast<std::size_t>(l)];
      const int out = dims_[static_cast<std::size_t>(l) + 1];
      const int off = layer_offset(l);
      const Eigen::MatrixXd& h_prev =
          (l == 0) ? tape.input : tape.hidden[static_cast<std::size_t>(l - 1)];
      Eigen::Map<const Eigen::MatrixXd> W(params_.data() + off, out, in);
      Eigen::Map<Eigen::MatrixXd> gW(g.param_grad.data() + off, out, in);
      Eigen::Map<Eigen::VectorXd> gb(g.param_grad.data() + off + in * out, out);
      gW = delta * h_prev.transpose();
      gb = delta.rowwise().sum();
      Eigen::MatrixXd back = W.transpose() * delta;
      if (l > 0) {
        const Eigen::MatrixXd& h = tape.hidden[static_cast<std::size_t>(l - 1)];
        delta = back.cwiseProduct(activation_deriv(h));
      } else {
        g.input_grad = std::move(back);
      }
    }
    return g;
  }

 private:
  int num_layers() const { return static_cast<int>(dims_.size()) - 1; }

  int layer_offset(int layer) const {
    int off = 0;
    for (int l = 0; l < layer; ++l)
      off += (dims_[static_cast<std::size_t>(l)] + 1) * dims_[static_cast<std::size_t>(l) + 1];
    return off;
  }

  void apply_activation(Eigen::MatrixXd& z) const {
    if (act_ == Activation::Tanh) {
      z = z.array().tanh();
    } else {
      z = z.array().max(0.0) + (z.array().min(0.0).exp() - 1.0);
    }
  }

  /// Derivative expressed through the post-activation value.
  Eigen::MatrixXd activation_deriv(const Eigen::MatrixXd& h) const {
    if (act_ == Activation::Tanh) return (1.0 - h.array().square()).matrix();
    return (h.array() > 0.0).select(Eigen::MatrixXd::Ones(h.rows(), h.cols()),
                                    (h.array() + 1.0).matrix());
  }

  std::vector<int> dims_;
  Activation act_ = Activation::Tanh;
  Eigen::VectorXd params_;
};

/// Adam with bias correction; decoupled weight decay off by default.
struct AdamState {
  Eigen::VectorXd m, v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  AdamState() = default;
  AdamState(Eigen::Index n, double learning_rate) : lr(learning_rate) {
    m = Eigen::VectorXd::Zero(n);
    v = Eigen::VectorXd::Zero(n);
  }

  void apply(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    if (params.size() != m.size() || grad.size() != m.size())
      throw std::invalid_argument("AdamState::apply: shape mismatch");
    if (!grad.allFinite()) throw std::domain_error("AdamState::apply: non-finite gradient");
    ++step;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    const Eigen::ArrayXd m_hat = m.array() / c1;
    const Eigen::ArrayXd v_hat = v.array() / c2;
    params.array() -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * params.array());
  }
};

constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;

/// Diagonal-Gaussian head math shared by the policy and the generator prior.
struct DiagGaussian {
  static double log_prob(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                         const Eigen::VectorXd& log_std) {
    const double d = static_cast<double>(x.size());
    const Eigen::ArrayXd z = (x - mean).array() * (-log_std).array().exp();
    return -0.5 * z.square().sum() - log_std.sum() - 0.5 * d * std::log(2.0 * M_PI);
  }

  static Eigen::VectorXd sample(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std,
                                RngStream& rng) {
    return mean + (log_std.array().exp() * rng.normal_vector(mean.size()).array()).matrix();
  }

  static double entropy(const Eigen::VectorXd& log_std) {
    return log_std.sum() + 0.5 * static_cast<double>(log_std.size()) * std::log(2.0 * M_PI * M_E);
  }
};

// ---------------------------------------------------------------------------
// Checkpoints: magic bytes, named blobs, little-endian 64-bit floats.
// ---------------------------------------------------------------------------

namespace ckpt {

inline constexpr char kMagic[8] = {'Q', 'M', 'C', 'K', 'P', 'T', '0', '1'};
static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts unsupported");

enum class BlobKind : std::uint32_t { Vector = 0, Net = 1, Adam = 2 };

}  // namespace ckpt

class CheckpointWriter {
 public:
  explicit CheckpointWriter(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw FormatError("cannot write checkpoint: " + path.string());
    out_.write(ckpt::kMagic, sizeof(ckpt::kMagic));
    const std::uint32_t version = 1;
    write_pod(version);
  }

  void add_vector(const std::string& name, const Eigen::VectorXd& v) {
    begin_blob(name, ckpt::BlobKind::Vector);
    write_pod(static_cast<std::uint64_t>(v.size()));
    write_doubles(v.data(), static_cast<std::size_t>(v.size()));
  }

  void add_net(const std::string& name, const MlpNet& net) {
    begin_blob(name, ckpt::BlobKind::Net);
    write_pod(static_cast<std::uint32_t>(net.activation()));
    write_pod(static_cast<std::uint32_t>(net.dims().size()));
    for (int d : net.dims()) write_pod(static_cast<std::uint64_t>(d));
    write_pod(static_cast<std::uint64_t>(net.params().size()));
    write_doubles(net.params().data(), static_cast<std::size_t>(net.params().size()));
  }

  void add_adam(const std::string& name, const AdamState& a) {
    begin_blob(name, ckpt::BlobKind::Adam);
    write_pod(static_cast<std::uint64_t>(a.m.size()));
    write_pod(static_cast<std::uint64_t>(a.step));
    for (double d : {a.lr, a.beta1, a.beta2, a.eps, a.weight_decay}) write_pod(d);
    write_doubles(a.m.data(), static_cast<std::size_t>(a.m.size()));
    write_doubles(a.v.data(), static_cast<std::size_t>(a.v.size()));
  }

  void close() {
    out_.flush();
    if (!out_) throw FormatError("checkpoint write failed: " + path_.string());
    out_.close();
  }

 private:
  void begin_blob(const std::string& name, ckpt::BlobKind kind) {
    write_pod(static_cast<std::uint32_t>(name.size()));
    out_.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(static_cast<std::uint32_t>(kind));
  }

  template <typename T>
  void write_pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }

  void write_doubles(const double* p, std::size_t n) {
    out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  }

  std::filesystem::path path_;
  std::ofstream out_;
};

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, ckpt::kMagic, sizeof(magic)) != 0)
      throw FormatError(path.string() + ": bad checkpoint magic");
    std::uint32_t version = 0;
    read_pod(in, version);
    if (version != 1) throw FormatError(path.string() + ": unsupported checkpoint version");
    while (in.peek() != EOF) {
      std::uint32_t name_len = 0;
      read_pod(in, name_len);
      std::string name(name_len, '\0');
      in.read(name.data(), name_len);
      std::uint32_t kind = 0;
      read_pod(in, kind);
      switch (static_cast<ckpt::BlobKind>(kind)) {
        case ckpt::BlobKind::Vector: {
          std::uint64_t n = 0;
          read_pod(in, n);
          Eigen::VectorXd v(static_cast<Eigen::Index>(n));
          read_doubles(in, v.data(), n);
          vectors_[name] = std::move(v);
          break;
        }
        case ckpt::BlobKind::Net: {
          std::uint32_t act = 0, ndims = 0;
          read_pod(in, act);
          read_pod(in, ndims);
          std::vector<int> dims(ndims);
          for (auto& d : dims) {
            std::uint64_t v = 0;
            read_pod(in, v);
            d = static_cast<int>(v);
          }
          std::uint64_t n = 0;
          read_pod(in, n);
          MlpNet net(dims, static_cast<Activation>(act));
          if (static_cast<std::uint64_t>(net.param_count()) != n)
            throw FormatError(path.string() + ": net blob \"" + name + "\" size mismatch");
          read_doubles(in, net.params().data(), n);
          nets_.emplace(name, std::move(net));
          break;
        }
        case ckpt::BlobKind::Adam: {
          std::uint64_t n = 0, step = 0;
          read_pod(in, n);
          read_pod(in, step);
          AdamState a(static_cast<Eigen::Index>(n), 0.0);
          a.step = static_cast<long>(step);
          read_pod(in, a.lr);
          read_pod(in, a.beta1);
          read_pod(in, a.beta2);
          read_pod(in, a.eps);
          read_pod(in, a.weight_decay);
          read_doubles(in, a.m.data(), n);
          read_doubles(in, a.v.data(), n);
          adams_[name] = std::move(a);
          break;
        }
        default:
          throw FormatError(path.string() + ": unknown blob kind");
      }
      if (!in) throw FormatError(path.string() + ": truncated checkpoint");
    }
  }

  const Eigen::VectorXd& vector(const std::string& name) const { return find(vectors_, name); }
  const MlpNet& net(const std::string& name) const { return find(nets_, name); }
  const AdamState& adam(const std::string& name) const { return find(adams_, name); }
  bool has_vector(const std::string& name) const { return vectors_.count(name) > 0; }
  bool has_net(const std::string& name) const { return nets_.count(name) > 0; }

 private:
  template <typename T>
  static void read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
  }
  static void read_doubles(std::ifstream& in, double* p, std::uint64_t n) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  }
  template <typename M>
  static const typename M::mapped_type& find(const M& map, const std::string& name) {
    auto it = map.find(name);
    if (it == map.end()) throw FormatError("checkpoint blob not found: " + name);
    return it->second;
  }

  std::map<std::string, Eigen::VectorXd> vectors_;
  std::map<std::string, MlpNet> nets_;
  std::map<std::string, AdamState> adams_;
};

}  // namespace quadmotion
