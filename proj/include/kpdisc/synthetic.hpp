#pragma once

#include "kpdisc/data.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace kpdisc {

enum class SpriteShape { ellipse, disc };

/// An elliptical (or circular) agent with a coloured marker at its head end so
/// that orientation is visible.
struct SpriteDesc {
  SpriteShape shape = SpriteShape::ellipse;
  double major = 8.0;  // semi-axis along the heading, pixels
  double minor = 4.5;  // semi-axis across the heading, pixels
  std::array<float, 3> body{0.1f, 0.1f, 0.15f};
  std::array<float, 3> marker{0.9f, 0.2f, 0.2f};
  bool has_marker = true;

  double diameter() const { return 2.0 * major; }
};

struct AgentPose {
  double x = 0.0;      // column, pixel units (pixel i has its centre at i)
  double y = 0.0;      // row
  double theta = 0.0;  // heading, radians, counter-clockwise from +x in image coords
};

/// Named parts tracked for every agent, in this order.
inline constexpr std::array<const char*, 5> kPartNames = {"center", "head", "tail", "left", "right"};
inline constexpr std::size_t kPartsPerAgent = kPartNames.size();

struct PartPoint {
  double x = 0.0;
  double y = 0.0;
};

/// Ground truth: `parts[frame][agent][part]`.
using PartTracks = std::vector<std::vector<std::array<PartPoint, kPartsPerAgent>>>;

/// Random-motion parameters used when no trajectory is scripted.
struct MotionModel {
  double max_speed = 2.5;       // pixels / frame
  double velocity_noise = 0.5;  // pixels / frame, per-frame innovation
  double velocity_decay = 0.9;
  double turn_noise = 0.04;     // radians / frame
  double turn_decay = 0.9;
};

struct SyntheticScene {
  Frame background;
  std::vector<SpriteDesc> agents;
  /// `trajectories[agent][frame]`; leave empty to draw random motion from the seed.
  std::vector<std::vector<AgentPose>> trajectories;
  MotionModel motion;
};

struct SyntheticVideo {
  FrameStore frames;
  std::vector<std::vector<AgentPose>> trajectories;  // [agent][frame]
  PartTracks parts;                                  // [frame][agent][part]
};

/// Smooth static background texture from a few low-frequency sinusoids.
Frame make_background(std::int64_t size, std::uint64_t seed);

/// Scene with `n_agents` visually distinct sprites scaled to the frame size.
SyntheticScene make_default_scene(std::int64_t size, int n_agents, std::uint64_t seed);

/// Part coordinates of `sprite` at `pose`.
std::array<PartPoint, kPartsPerAgent> sprite_parts(const SpriteDesc& sprite, const AgentPose& pose);

/// Renders an anti-aliased video. The background never changes; only sprites
/// move. All randomness derives from `seed`. Throws InvalidArgument if a
/// sprite cannot fit in the frame or a scripted trajectory leaves it.
SyntheticVideo generate_synthetic(const SyntheticScene& scene, std::int64_t n_frames,
                                  std::uint64_t seed);

/// CSV with columns frame,agent,part,x,y (pixels).
void write_part_tracks(const std::filesystem::path& path, const PartTracks& parts);
PartTracks read_part_tracks(const std::filesystem::path& path);

}  // namespace kpdisc
