#include "kpdisc/tracks.hpp"

#include "kpdisc/error.hpp"
#include "kpdisc/io.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <map>

namespace kpdisc {

namespace {

constexpr std::array<char, 8> kMagic = {'K', 'P', 'D', 'T', 'R', 'K', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

const char* kHeader = "frame,kp_id,u,v,confidence,sigma2_x,sigma2_y,sigma2_xy";

}  // namespace

TrackTensor to_tensor(const std::vector<KeypointRecord>& records) {
  if (records.empty()) throw EmptyResult("no keypoint records");
  std::map<std::int64_t, std::map<int, const KeypointRecord*>> by_frame;
  for (const auto& r : records) {
    if (!by_frame[r.frame].emplace(r.kp_id, &r).second)
      throw InvalidArgument("duplicate record for frame " + std::to_string(r.frame) + " keypoint " +
                            std::to_string(r.kp_id));
  }
  const auto k = static_cast<std::int64_t>(by_frame.begin()->second.size());
  const auto f = static_cast<std::int64_t>(by_frame.size());
  TrackTensor t;
  t.coords = torch::empty({f, k, 2}, torch::kFloat64);
  t.confidence = torch::empty({f, k}, torch::kFloat64);
  t.cov = torch::empty({f, k, 3}, torch::kFloat64);
  auto c = t.coords.accessor<double, 3>();
  auto q = t.confidence.accessor<double, 2>();
  auto s = t.cov.accessor<double, 3>();
  std::int64_t i = 0;
  for (const auto& [frame, kps] : by_frame) {
    if (i > 0 && frame != t.frames.back() + 1)
      throw InvalidArgument("track is missing frame " + std::to_string(t.frames.back() + 1));
    if (static_cast<std::int64_t>(kps.size()) != k)
      throw InvalidArgument("frame " + std::to_string(frame) + " has a different keypoint count");
    for (std::int64_t j = 0; j < k; ++j) {
      auto it = kps.find(static_cast<int>(j));
      if (it == kps.end())
        throw InvalidArgument("frame " + std::to_string(frame) + " is missing keypoint " + std::to_string(j));
      const auto& r = *it->second;
      c[i][j][0] = r.u;
      c[i][j][1] = r.v;
      q[i][j] = r.confidence;
      s[i][j][0] = r.sigma2_x;
      s[i][j][1] = r.sigma2_y;
      s[i][j][2] = r.sigma2_xy;
    }
    t.frames.push_back(frame);
    ++i;
  }
  return t;
}

std::vector<KeypointRecord> from_tensor(const TrackTensor& t) {
  auto coords = t.coords.to(torch::kFloat64).contiguous();
  auto conf = t.confidence.to(torch::kFloat64).contiguous();
  auto cov = t.cov.to(torch::kFloat64).contiguous();
  auto c = coords.accessor<double, 3>();
  auto q = conf.accessor<double, 2>();
  auto s = cov.accessor<double, 3>();
  std::vector<KeypointRecord> out;
  for (std::size_t i = 0; i < t.frames.size(); ++i)
    for (std::int64_t j = 0; j < coords.size(1); ++j) {
      const auto ii = static_cast<std::int64_t>(i);
      out.push_back({t.frames[i], static_cast<int>(j), c[ii][j][0], c[ii][j][1], q[ii][j], s[ii][j][0], s[ii][j][1],
                     s[ii][j][2]});
    }
  return out;
}

void write_tracks_csv(const std::filesystem::path& path, const std::vector<KeypointRecord>& records) {
  io::atomic_write(path, [&](std::ostream& os) {
    os << kHeader << '\n';
    for (const auto& r : records)
      os << r.frame << ',' << r.kp_id << ',' << io::format_double(r.u) << ',' << io::format_double(r.v) << ','
         << io::format_double(r.confidence) << ',' << io::format_double(r.sigma2_x) << ','
         << io::format_double(r.sigma2_y) << ',' << io::format_double(r.sigma2_xy) << '\n';
  });
}

std::vector<KeypointRecord> read_tracks_csv(const std::filesystem::path& path) {
  auto t = io::read_csv(path);
  const std::array<std::string, 8> names = {"frame", "kp_id", "u", "v", "confidence", "sigma2_x", "sigma2_y",
                                            "sigma2_xy"};
  std::array<std::size_t, 8> col{};
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!t.has_column(names[i])) throw FormatError(path.string() + " lacks column " + names[i]);
    col[i] = t.column(names[i]);
  }
  std::vector<KeypointRecord> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    try {
      out.push_back({std::stoll(row.at(col[0])), std::stoi(row.at(col[1])), std::stod(row.at(col[2])),
                     std::stod(row.at(col[3])), std::stod(row.at(col[4])), std::stod(row.at(col[5])),
                     std::stod(row.at(col[6])), std::stod(row.at(col[7]))});
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": malformed track row");
    }
  }
  return out;
}

void write_tracks_binary(const std::filesystem::path& path, const std::vector<KeypointRecord>& records) {
  io::atomic_write(
      path,
      [&](std::ostream& os) {
        os.write(kMagic.data(), kMagic.size());
        os.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
        const std::uint64_t n = records.size();
        os.write(reinterpret_cast<const char*>(&n), sizeof n);
        for (const auto& r : records) {
          const std::int32_t id = r.kp_id, pad = 0;
          os.write(reinterpret_cast<const char*>(&r.frame), 8);
          os.write(reinterpret_cast<const char*>(&id), 4);
          os.write(reinterpret_cast<const char*>(&pad), 4);
          for (double d : {r.u, r.v, r.confidence, r.sigma2_x, r.sigma2_y, r.sigma2_xy})
            os.write(reinterpret_cast<const char*>(&d), 8);
        }
      },
      /*binary=*/true);
}

std::vector<KeypointRecord> read_tracks_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::array<char, 8> magic{};
  std::uint32_t version = 0;
  std::uint64_t n = 0;
  in.read(magic.data(), 8);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&n), 8);
  if (!in || magic != kMagic) throw FormatError(path.string() + " is not a track file");
  if (version != kVersion) throw FormatError("unsupported track file version " + std::to_string(version));
  std::vector<KeypointRecord> out(n);
  for (auto& r : out) {
    std::int32_t id = 0, pad = 0;
    in.read(reinterpret_cast<char*>(&r.frame), 8);
    in.read(reinterpret_cast<char*>(&id), 4);
    in.read(reinterpret_cast<char*>(&pad), 4);
    for (double* d : {&r.u, &r.v, &r.confidence, &r.sigma2_x, &r.sigma2_y, &r.sigma2_xy})
      in.read(reinterpret_cast<char*>(d), 8);
    r.kp_id = id;
  }
  if (!in) throw FormatError("truncated track file " + path.string());
  return out;
}

std::vector<KeypointRecord> read_tracks(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? read_tracks_csv(path) : read_tracks_binary(path);
}

}  // namespace kpdisc
