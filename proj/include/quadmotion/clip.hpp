#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "quadmotion/io_util.hpp"
#include "quadmotion/kinematics.hpp"

namespace quadmotion {

constexpr int kClipFps = 50;

/// Three text layers carried by every clip: a fine-grained action label, an
/// interaction scenario, and an executable command. Fields may be empty for
/// synthetic clips but all three must be present in the file.
struct AnnotationTriple {
  std::string action_label;
  std::string scenario;
  std::string command;
};

inline const std::array<std::string, 4> kClipSources = {"mocap", "video_gen", "artist", "teleop"};

struct MotionFrame {
  Vec3 root_pos{0, 0, 0};
  Quat root_quat{1, 0, 0, 0};  // (w, x, y, z)
  JointVec q = JointVec::Zero();
  JointVec qd = JointVec::Zero();  // meaningful only when clip.has_qd
  std::array<bool, kNumLegs> contact{};
};

/// A 50 Hz motion clip: root trajectory, 12 joint angles (optionally joint
/// velocities), per-foot contact flags, and the annotation triple.
struct MotionClip {
  std::string id;
  std::string source = "mocap";
  int fps = kClipFps;
  bool has_qd = false;
  std::vector<MotionFrame> frames;
  AnnotationTriple annotations;

  int length() const { return static_cast<int>(frames.size()); }
  double duration() const { return static_cast<double>(frames.size()) / kClipFps; }
};

namespace detail {

inline std::string json_escape(const std::string& s) { return nlohmann::json(s).dump(); }

inline void check_clip(const MotionClip& clip) {
  if (clip.fps != kClipFps) throw FormatError("clip \"" + clip.id + "\": fps must be 50");
  if (clip.frames.empty()) throw FormatError("clip \"" + clip.id + "\": frame count must be >= 1");
  bool known_source = false;
  for (const auto& s : kClipSources) known_source |= (s == clip.source);
  if (!known_source) throw FormatError("clip \"" + clip.id + "\": unknown source \"" + clip.source + "\"");
  for (std::size_t t = 0; t < clip.frames.size(); ++t) {
    const MotionFrame& f = clip.frames[t];
    if (!f.root_pos.allFinite() || !f.root_quat.coeffs().allFinite() || !f.q.allFinite() ||
        (clip.has_qd && !f.qd.allFinite()))
      throw FormatError("clip \"" + clip.id + "\": non-finite value in frame " + std::to_string(t));
    if (std::abs(f.root_quat.norm() - 1.0) > 1e-6)
      throw FormatError("clip \"" + clip.id + "\": quaternion norm off by > 1e-6 in frame " +
                        std::to_string(t));
  }
}

}  // namespace detail

/// Canonical clip serialization: sorted keys, one frame per line, doubles at
/// 17 significant digits. write -> read -> write is byte-identical.
///
/// Frame layout (23 or 35 numbers): root position xyz, root quaternion wxyz,
/// 12 joint angles, optionally 12 joint velocities, 4 contact flags (0/1).
inline std::string serialize_clip(const MotionClip& clip) {
  detail::check_clip(clip);
  std::string out;
  out.reserve(64 * clip.frames.size() + 256);
  out += "{\"annotations\":{\"action_label\":";
  out += detail::json_escape(clip.annotations.action_label);
  out += ",\"command\":";
  out += detail::json_escape(clip.annotations.command);
  out += ",\"scenario\":";
  out += detail::json_escape(clip.annotations.scenario);
  out += "},\"fps\":50,\"frames\":[\n";
  for (std::size_t t = 0; t < clip.frames.size(); ++t) {
    const MotionFrame& f = clip.frames[t];
    out += '[';
    auto push = [&out](double v) {
      out += fmt_double(v);
      out += ',';
    };
    push(f.root_pos.x());
    push(f.root_pos.y());
    push(f.root_pos.z());
    push(f.root_quat.w());
    push(f.root_quat.x());
    push(f.root_quat.y());
    push(f.root_quat.z());
    for (int j = 0; j < kNumJoints; ++j) push(f.q[j]);
    if (clip.has_qd)
      for (int j = 0; j < kNumJoints; ++j) push(f.qd[j]);
    for (int foot = 0; foot < kNumLegs; ++foot) {
      out += f.contact[static_cast<std::size_t>(foot)] ? '1' : '0';
      if (foot + 1 < kNumLegs) out += ',';
    }
    out += (t + 1 < clip.frames.size()) ? "],\n" : "]\n";
  }
  out += "],\"id\":";
  out += detail::json_escape(clip.id);
  out += ",\"source\":";
  out += detail::json_escape(clip.source);
  out += "}\n";
  return out;
}

inline MotionClip clip_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("clip: top level must be a JSON object");
  const std::array<std::string, 5> required = {"annotations", "fps", "frames", "id", "source"};
  for (const auto& key : required)
    if (!j.contains(key)) throw FormatError("clip: missing top-level key \"" + key + "\"");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const auto& key : required) known |= (it.key() == key);
    if (!known) throw FormatError("clip: unknown top-level key \"" + it.key() + "\"");
  }

  MotionClip clip;
  clip.id = j.at("id").get<std::string>();
  clip.source = j.at("source").get<std::string>();
  if (!j.at("fps").is_number_integer() || j.at("fps").get<int>() != kClipFps)
    throw FormatError("clip \"" + clip.id + "\": fps must be 50");
  clip.fps = kClipFps;

  const nlohmann::json& ann = j.at("annotations");
  if (!ann.is_object()) throw FormatError("clip \"" + clip.id + "\": annotations must be an object");
  for (const char* layer : {"action_label", "scenario", "command"})
    if (!ann.contains(layer))
      throw FormatError("clip \"" + clip.id + "\": missing annotation layer \"" +
                        std::string(layer) + "\"");
  if (ann.size() != 3)
    throw FormatError("clip \"" + clip.id + "\": annotations must contain exactly 3 layers");
  clip.annotations.action_label = ann.at("action_label").get<std::string>();
  clip.annotations.scenario = ann.at("scenario").get<std::string>();
  clip.annotations.command = ann.at("command").get<std::string>();

  const nlohmann::json& frames = j.at("frames");
  if (!frames.is_array() || frames.empty())
    throw FormatError("clip \"" + clip.id + "\": frames must be a non-empty array");

  const int base = 3 + 4 + kNumJoints + kNumLegs;       // 23
  const int with_qd = base + kNumJoints;                // 35
  int arity = -1;
  clip.frames.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const nlohmann::json& row = frames[t];
    if (!row.is_array())
      throw FormatError("clip \"" + clip.id + "\": frame " + std::to_string(t) + " must be an array");
    const int n = static_cast<int>(row.size());
    if (n != base && n != with_qd)
      throw FormatError("clip \"" + clip.id + "\": frame " + std::to_string(t) + ": expected " +
                        std::to_string(base) + " or " + std::to_string(with_qd) +
                        " numbers, got " + std::to_string(n));
    if (arity < 0) {
      arity = n;
      clip.has_qd = (n == with_qd);
    } else if (n != arity) {
      throw FormatError("clip \"" + clip.id + "\": frame arity mismatch at frame " +
                        std::to_string(t));
    }
    for (const auto& v : row)
      if (!v.is_number())
        throw FormatError("clip \"" + clip.id + "\": non-numeric entry in frame " +
                          std::to_string(t));
    MotionFrame f;
    int k = 0;
    auto next = [&row, &k]() { return row[static_cast<std::size_t>(k++)].get<double>(); };
    // sequenced reads: argument evaluation order is unspecified
    f.root_pos.x() = next();
    f.root_pos.y() = next();
    f.root_pos.z() = next();
    const double qw = next(), qx = next(), qy = next(), qz = next();
    f.root_quat = Quat(qw, qx, qy, qz);
    for (int jj = 0; jj < kNumJoints; ++jj) f.q[jj] = next();
    if (clip.has_qd)
      for (int jj = 0; jj < kNumJoints; ++jj) f.qd[jj] = next();
    for (int foot = 0; foot < kNumLegs; ++foot) {
      const double c = next();
      if (c != 0.0 && c != 1.0)
        throw FormatError("clip \"" + clip.id + "\": contact flag must be 0 or 1 in frame " +
                          std::to_string(t));
      f.contact[static_cast<std::size_t>(foot)] = (c == 1.0);
    }
    clip.frames.push_back(f);
  }
  detail::check_clip(clip);
  return clip;
}

inline MotionClip parse_clip(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("clip: JSON parse error: ") + e.what());
  }
  return clip_from_json(j);
}

inline MotionClip read_clip(const std::filesystem::path& path) {
  try {
    return parse_clip(read_text_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_clip(const MotionClip& clip, const std::filesystem::path& path) {
  write_text_file(path, serialize_clip(clip));
}

/// Joint-velocity sequence of [begin, end): stored qd when present, central
/// of forward differences otherwise. Result has end-begin-1 entries for
/// finite differences, end-begin when qd is stored.
inline std::vector<JointVec> joint_velocities(const MotionClip& clip, int begin, int end) {
  if (begin < 0 || end > clip.length() || begin >= end)
    throw std::invalid_argument("joint_velocities: bad frame range");
  std::vector<JointVec> out;
  if (clip.has_qd) {
    out.reserve(static_cast<std::size_t>(end - begin));
    for (int t = begin; t < end; ++t) out.push_back(clip.frames[static_cast<std::size_t>(t)].qd);
  } else {
    if (end - begin < 2)
      throw std::invalid_argument("joint_velocities: need >= 2 frames without stored qd");
    out.reserve(static_cast<std::size_t>(end - begin - 1));
    for (int t = begin; t + 1 < end; ++t)
      out.push_back((clip.frames[static_cast<std::size_t>(t + 1)].q -
                     clip.frames[static_cast<std::size_t>(t)].q) *
                    static_cast<double>(kClipFps));
  }
  return out;
}

}  // namespace quadmotion
