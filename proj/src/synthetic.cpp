#include "kpdisc/synthetic.hpp"

#include "kpdisc/error.hpp"
#include "kpdisc/io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace kpdisc {

namespace {

// Fraction of the pixel centred at distance `sd` (negative inside) covered by the shape.
inline float coverage(double sd) { return static_cast<float>(std::clamp(0.5 - sd, 0.0, 1.0)); }

double ellipse_signed_distance(double lx, double ly, double a, double b) {
  const double r = std::sqrt((lx / a) * (lx / a) + (ly / b) * (ly / b));
  if (r < 1e-12) return -std::min(a, b);
  const double gx = lx / (a * a);
  const double gy = ly / (b * b);
  const double g = std::sqrt(gx * gx + gy * gy) / r;
  return (r - 1.0) / g;
}

void check_inside(const SpriteDesc& s, const AgentPose& p, std::int64_t h, std::int64_t w) {
  for (const auto& q : sprite_parts(s, p))
    if (q.x < 0.0 || q.y < 0.0 || q.x > static_cast<double>(w - 1) || q.y > static_cast<double>(h - 1))
      throw InvalidArgument("scripted trajectory moves a sprite part outside the frame");
}

std::vector<AgentPose> random_trajectory(const SpriteDesc& s, const MotionModel& m, std::int64_t n,
                                         std::int64_t h, std::int64_t w, std::mt19937_64& rng) {
  const double margin = s.major + 1.0;
  std::uniform_real_distribution<double> ux(margin, static_cast<double>(w - 1) - margin);
  std::uniform_real_distribution<double> uy(margin, static_cast<double>(h - 1) - margin);
  std::uniform_real_distribution<double> ut(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> nv(0.0, m.velocity_noise);
  std::normal_distribution<double> nt(0.0, m.turn_noise);

  AgentPose p{ux(rng), uy(rng), ut(rng)};
  double vx = 0.0, vy = 0.0, omega = 0.0;
  std::vector<AgentPose> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t t = 0; t < n; ++t) {
    out.push_back(p);
    vx = m.velocity_decay * vx + nv(rng);
    vy = m.velocity_decay * vy + nv(rng);
    const double speed = std::hypot(vx, vy);
    if (speed > m.max_speed) {
      vx *= m.max_speed / speed;
      vy *= m.max_speed / speed;
    }
    p.x += vx;
    p.y += vy;
    const double hi_x = static_cast<double>(w - 1) - margin;
    const double hi_y = static_cast<double>(h - 1) - margin;
    if (p.x < margin) { p.x = margin; vx = std::abs(vx); }
    if (p.x > hi_x) { p.x = hi_x; vx = -std::abs(vx); }
    if (p.y < margin) { p.y = margin; vy = std::abs(vy); }
    if (p.y > hi_y) { p.y = hi_y; vy = -std::abs(vy); }
    omega = m.turn_decay * omega + nt(rng);
    p.theta += omega;
  }
  return out;
}

void draw_sprite(float* img, std::int64_t h, std::int64_t w, const SpriteDesc& s, const AgentPose& p) {
  const double c = std::cos(p.theta);
  const double sn = std::sin(p.theta);
  const double a = s.major;
  const double b = s.shape == SpriteShape::disc ? s.major : s.minor;
  const double marker_r = 0.55 * b;
  const double marker_x = 0.55 * a;
  const double reach = a + 2.0;
  const auto x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(p.x - reach)));
  const auto x1 = std::min<std::int64_t>(w - 1, static_cast<std::int64_t>(std::ceil(p.x + reach)));
  const auto y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(p.y - reach)));
  const auto y1 = std::min<std::int64_t>(h - 1, static_cast<std::int64_t>(std::ceil(p.y + reach)));
  const std::int64_t plane = h * w;
  for (std::int64_t y = y0; y <= y1; ++y) {
    for (std::int64_t x = x0; x <= x1; ++x) {
      const double dx = static_cast<double>(x) - p.x;
      const double dy = static_cast<double>(y) - p.y;
      const double lx = c * dx + sn * dy;
      const double ly = -sn * dx + c * dy;
      const float body = coverage(ellipse_signed_distance(lx, ly, a, b));
      if (body <= 0.0f) continue;
      float mark = 0.0f;
      if (s.has_marker) mark = coverage(std::hypot(lx - marker_x, ly) - marker_r) * body;
      for (int ch = 0; ch < 3; ++ch) {
        float& v = img[ch * plane + y * w + x];
        v = v * (1.0f - body) + body * s.body[static_cast<std::size_t>(ch)];
        v = v * (1.0f - mark) + mark * s.marker[static_cast<std::size_t>(ch)];
      }
    }
  }
}

}  // namespace

std::array<PartPoint, kPartsPerAgent> sprite_parts(const SpriteDesc& s, const AgentPose& p) {
  const double c = std::cos(p.theta);
  const double sn = std::sin(p.theta);
  const double b = s.shape == SpriteShape::disc ? s.major : s.minor;
  return {PartPoint{p.x, p.y},
          PartPoint{p.x + s.major * c, p.y + s.major * sn},
          PartPoint{p.x - s.major * c, p.y - s.major * sn},
          PartPoint{p.x - b * sn, p.y + b * c},
          PartPoint{p.x + b * sn, p.y - b * c}};
}

Frame make_background(std::int64_t size, std::uint64_t seed) {
  if (size <= 0) throw InvalidArgument("background size must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> freq(0.5, 3.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> sign(-1.0, 1.0);
  auto bg = torch::empty({3, size, size}, torch::kFloat32);
  auto acc = bg.accessor<float, 3>();
  for (int ch = 0; ch < 3; ++ch) {
    struct Wave { double fx, fy, ph; };
    std::array<Wave, 4> waves{};
    for (auto& wv : waves)
      wv = {freq(rng) * (sign(rng) < 0 ? -1 : 1), freq(rng) * (sign(rng) < 0 ? -1 : 1), phase(rng)};
    for (std::int64_t y = 0; y < size; ++y)
      for (std::int64_t x = 0; x < size; ++x) {
        double v = 0.45;
        for (const auto& wv : waves)
          v += 0.06 * std::sin(2.0 * std::numbers::pi *
                                   (wv.fx * static_cast<double>(x) + wv.fy * static_cast<double>(y)) /
                                   static_cast<double>(size) +
                               wv.ph);
        acc[ch][y][x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  }
  return Frame::make(bg, 0);
}

SyntheticScene make_default_scene(std::int64_t size, int n_agents, std::uint64_t seed) {
  if (n_agents < 1) throw InvalidArgument("need at least one agent");
  static const std::array<std::array<float, 3>, 4> kBodies = {
      {{0.1f, 0.1f, 0.15f}, {0.95f, 0.95f, 0.9f}, {0.85f, 0.6f, 0.1f}, {0.2f, 0.55f, 0.25f}}};
  static const std::array<std::array<float, 3>, 4> kMarkers = {
      {{0.9f, 0.2f, 0.2f}, {0.2f, 0.3f, 0.9f}, {0.1f, 0.1f, 0.1f}, {0.95f, 0.95f, 0.95f}}};
  SyntheticScene scene{make_background(size, seed), {}, {}, {}};
  const double scale = static_cast<double>(size) / 64.0;
  for (int i = 0; i < n_agents; ++i) {
    SpriteDesc s;
    s.major = 8.0 * scale;
    s.minor = 4.5 * scale;
    s.body = kBodies[static_cast<std::size_t>(i) % kBodies.size()];
    s.marker = kMarkers[static_cast<std::size_t>(i) % kMarkers.size()];
    scene.agents.push_back(s);
  }
  scene.motion.max_speed *= scale;
  scene.motion.velocity_noise *= scale;
  return scene;
}

SyntheticVideo generate_synthetic(const SyntheticScene& scene, std::int64_t n_frames, std::uint64_t seed) {
  if (n_frames < 2) throw InvalidArgument("need at least two frames");
  const auto h = scene.background.height();
  const auto w = scene.background.width();
  for (const auto& s : scene.agents) {
    if (s.major <= 0.0 || s.minor <= 0.0) throw InvalidArgument("sprite size must be positive");
    if (2.0 * s.major + 2.0 >= static_cast<double>(std::min(h, w)))
      throw InvalidArgument("sprite is larger than the frame");
  }

  std::mt19937_64 rng(seed);
  SyntheticVideo out;
  if (scene.trajectories.empty()) {
    for (const auto& s : scene.agents)
      out.trajectories.push_back(random_trajectory(s, scene.motion, n_frames, h, w, rng));
  } else {
    if (scene.trajectories.size() != scene.agents.size())
      throw InvalidArgument("one trajectory per agent is required");
    for (std::size_t a = 0; a < scene.agents.size(); ++a) {
      const auto& tr = scene.trajectories[a];
      if (static_cast<std::int64_t>(tr.size()) < n_frames)
        throw InvalidArgument("scripted trajectory shorter than n_frames");
      for (std::int64_t t = 0; t < n_frames; ++t)
        check_inside(scene.agents[a], tr[static_cast<std::size_t>(t)], h, w);
      out.trajectories.emplace_back(tr.begin(), tr.begin() + n_frames);
    }
  }

  auto video = torch::empty({n_frames, 3, h, w}, torch::kUInt8);
  auto bg = scene.background.pixels().contiguous();
  auto canvas = torch::empty_like(bg);
  out.parts.resize(static_cast<std::size_t>(n_frames));
  for (std::int64_t t = 0; t < n_frames; ++t) {
    canvas.copy_(bg);
    auto& frame_parts = out.parts[static_cast<std::size_t>(t)];
    for (std::size_t a = 0; a < scene.agents.size(); ++a) {
      const auto& pose = out.trajectories[a][static_cast<std::size_t>(t)];
      draw_sprite(canvas.data_ptr<float>(), h, w, scene.agents[a], pose);
      frame_parts.push_back(sprite_parts(scene.agents[a], pose));
    }
    video[t].copy_(canvas.mul(255.0f).round_().clamp_(0, 255).to(torch::kUInt8));
  }
  out.frames = FrameStore(video);
  return out;
}

void write_part_tracks(const std::filesystem::path& path, const PartTracks& parts) {
  io::atomic_write(path, [&](std::ostream& os) {
    os << "frame,agent,part,x,y\n";
    for (std::size_t t = 0; t < parts.size(); ++t)
      for (std::size_t a = 0; a < parts[t].size(); ++a)
        for (std::size_t p = 0; p < kPartsPerAgent; ++p)
          os << t << ',' << a << ',' << kPartNames[p] << ',' << io::format_double(parts[t][a][p].x) << ','
             << io::format_double(parts[t][a][p].y) << '\n';
  });
}

PartTracks read_part_tracks(const std::filesystem::path& path) {
  auto table = io::read_csv(path);
  const auto cf = table.column("frame"), ca = table.column("agent"), cp = table.column("part"),
             cx = table.column("x"), cy = table.column("y");
  PartTracks out;
  for (const auto& row : table.rows) {
    const auto t = static_cast<std::size_t>(std::stoll(row[cf]));
    const auto a = static_cast<std::size_t>(std::stoll(row[ca]));
    auto it = std::find_if(kPartNames.begin(), kPartNames.end(), [&](const char* n) { return row[cp] == n; });
    if (it == kPartNames.end()) throw FormatError("unknown part name " + row[cp]);
    const auto p = static_cast<std::size_t>(it - kPartNames.begin());
    if (out.size() <= t) out.resize(t + 1);
    if (out[t].size() <= a) out[t].resize(a + 1);
    out[t][a][p] = PartPoint{std::stod(row[cx]), std::stod(row[cy])};
  }
  return out;
}

}  // namespace kpdisc
