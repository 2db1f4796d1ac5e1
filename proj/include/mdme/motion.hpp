#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mdme/rng.hpp"

namespace mdme {

using FrameMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ChannelRole { foot, gravity, height, joint, lin_vel, ang_vel, other };

std::string role_name(ChannelRole role);
ChannelRole parse_role(const std::string& name);

/// Accepted unit tags: rad, rad/s, m, m/s, unitless.
bool is_known_unit(const std::string& unit);

struct ChannelInfo {
  std::string name;
  std::string unit;
  ChannelRole role = ChannelRole::other;
  char axis = 0;  // 'x', 'y', 'z' or 0

  bool operator==(const ChannelInfo&) const = default;
};

/// Channel permutation plus sign flips applied under one reflection.
struct MirrorMap {
  std::vector<std::pair<std::size_t, std::size_t>> swaps;
  std::vector<std::size_t> negate;

  /// Throws ConfigError unless the map is an involution on [0, channels).
  void validate(std::size_t channels) const;
  bool operator==(const MirrorMap&) const = default;
};

enum class MirrorAxis { x, y };

struct MotionSequence {
  std::string name;
  double rate = 50.0;
  std::vector<ChannelInfo> channels;
  FrameMatrix data;  // frames x channels
  std::optional<MirrorMap> mirror_x;
  std::optional<MirrorMap> mirror_y;

  std::size_t frames() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t channel_count() const { return channels.size(); }
  /// Indices of channels with the given role, in column order.
  std::vector<std::size_t> channels_with_role(ChannelRole role) const;
  void validate() const;
};

/// Channel set, rest pose and reflections for one platform family.
struct MotionLayout {
  std::string name;
  std::vector<ChannelInfo> channels;
  std::vector<double> rest;
  MirrorMap mirror_x;
  MirrorMap mirror_y;
};

/// Four feet (LF, RF, LH, RH) x/y/z in the base frame, projected gravity,
/// base height: 16 channels.
MotionLayout quadruped_layout();
/// Axis-angle orientations of `joints` body joints, projected gravity, base
/// linear and angular velocity: 3 * joints + 9 channels.
MotionLayout humanoid_layout(std::size_t joints = 22);
MotionLayout layout_by_name(const std::string& name);

/// Reads the text format: `#`-prefixed JSON header, CSV header row, data rows.
MotionSequence load_motion(const std::string& path);
void save_motion(const MotionSequence& seq, const std::string& path);
/// Every motion file in a directory, sorted by file name.
std::vector<MotionSequence> load_motion_dir(const std::string& dir);

/// H consecutive frames, oldest first, row-major [H x n_g].
struct GoalWindow {
  std::size_t history = 0;
  std::size_t goal_dim = 0;
  std::vector<double> values;
  double dt = 0.02;

  double at(std::size_t frame, std::size_t channel) const { return values[frame * goal_dim + channel]; }
  /// The newest frame.
  std::vector<double> latest() const;
};

/// Frames t - H + 1 .. t; frames before the start repeat frame 0.
GoalWindow window(const MotionSequence& seq, std::size_t t, std::size_t history);

MotionSequence mirror(const MotionSequence& seq, MirrorAxis axis);
/// Scales base height and foot z channels.
MotionSequence scale_height(const MotionSequence& seq, double factor);

/// Uniform noise for channels matching a selector: "role:<role>",
/// "unit:<unit>" or "*". The first matching rule wins.
struct NoiseRule {
  std::string selector;
  double low = 0.0;
  double high = 0.0;
};
struct NoiseSpec {
  std::vector<NoiseRule> rules;
};
MotionSequence perturb(const MotionSequence& seq, const NoiseSpec& spec, Rng& rng);

struct Sinusoid {
  std::size_t channel = 0;
  double freq = 1.0;  // Hz
  double amp = 0.0;
  double phase = 0.0;
};
struct Bump {
  std::size_t channel = 0;
  double center = 0.0;  // s
  double width = 0.1;   // s
  double amp = 0.0;
};
struct MotionSpec {
  std::string name = "synthetic";
  double rate = 50.0;
  std::size_t frames = 250;
  std::vector<ChannelInfo> channels;
  std::vector<double> base;
  std::vector<Sinusoid> sinusoids;
  std::vector<Bump> bumps;
  double noise = 0.0;
  std::optional<MirrorMap> mirror_x;
  std::optional<MirrorMap> mirror_y;
};

/// base + sinusoid bank + Gaussian bumps + white noise; gravity renormalised.
MotionSequence synth_motion(const MotionSpec& spec, Rng& rng);
/// A gait-like spec: shared base frequency, local faster oscillations and
/// a few transient bumps.
MotionSpec random_motion_spec(const MotionLayout& layout, const std::string& name, std::size_t frames, Rng& rng);
std::vector<MotionSequence> synth_corpus(const MotionLayout& layout, std::size_t count, std::size_t frames,
                                         std::uint64_t seed);

enum class Component { joint, pose, twist, none };
std::string component_name(Component c);

/// Synthetic stand-in for a retargeting pipeline.
///
/// u_t = s_t + gain * (s_t - s_{t-lag}), y = Q u with Q orthogonal, then the
/// warp y + a s log cosh((y - c) / s) and per-channel offsets, where
/// c = Q * rest pose of the matching bundled layout (zero otherwise) and
/// s = warp_scale. With `twist`, six more channels are derived from
/// (s_t - s_{t-lag}) * rate / lag the same way with c = 0 and s scaled by
/// rate / lag. The warp's slope lies in (1 - a, 1 + a), so for a in [0, 1)
/// the map is invertible. The constants depend only on `seed` and the
/// channel count.
struct RetargetConfig {
  bool identity = false;
  std::uint64_t seed = 17;
  double gain = 0.6;
  std::size_t lag = 5;
  double warp_amp = 0.9;
  double warp_scale = 0.02;
  double offset = 1.0;
  bool twist = true;
};

struct SupervisedPair {
  std::string name;
  MotionSequence input;
  FrameMatrix target;  // frames x target channels
  std::vector<Component> layout;
};

SupervisedPair synth_retarget(const MotionSequence& seq, const RetargetConfig& cfg);
/// Mirrors the input and rebuilds the target from it.
SupervisedPair mirror_pair(const SupervisedPair& pair, MirrorAxis axis, const RetargetConfig& cfg);

enum class Reflection { none, x, y, xy };
std::string reflection_name(Reflection r);
Reflection parse_reflection(const std::string& name);

struct AugmentSpec {
  std::vector<Reflection> reflections{Reflection::none, Reflection::x, Reflection::y, Reflection::xy};
  std::vector<double> scales{0.9, 1.0, 1.1};
};
/// Every motion under every reflection and height scale.
std::vector<MotionSequence> augment(const std::vector<MotionSequence>& motions, const AugmentSpec& spec);

}  // namespace mdme
