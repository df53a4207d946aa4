#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace kpdisc {

/// One keypoint in one frame.
struct KeypointRecord {
  std::int64_t frame = 0;
  int kp_id = 0;
  double u = 0.0;
  double v = 0.0;
  double confidence = 0.0;
  double sigma2_x = 0.0;
  double sigma2_y = 0.0;
  double sigma2_xy = 0.0;

  bool operator==(const KeypointRecord&) const = default;
};

/// Dense view of a track table: frames in ascending order, every frame holding
/// keypoints 0..K-1. Tensors are float64.
struct TrackTensor {
  std::vector<std::int64_t> frames;
  torch::Tensor coords;      // [F, K, 2]
  torch::Tensor confidence;  // [F, K]
  torch::Tensor cov;         // [F, K, 3] as (sigma2_x, sigma2_y, sigma2_xy)
  std::int64_t k() const { return coords.size(1); }
};

/// Throws InvalidArgument if a (frame, kp_id) is missing or repeated, or if
/// the frame numbers are not consecutive.
TrackTensor to_tensor(const std::vector<KeypointRecord>& records);
std::vector<KeypointRecord> from_tensor(const TrackTensor& t);

/// CSV header: frame,kp_id,u,v,confidence,sigma2_x,sigma2_y,sigma2_xy.
void write_tracks_csv(const std::filesystem::path& path, const std::vector<KeypointRecord>& records);
std::vector<KeypointRecord> read_tracks_csv(const std::filesystem::path& path);

/// Binary container: magic "KPDTRK\0\0", u32 version, u64 count, then fixed
/// 8-field little-endian records (i64, i32 + 4 pad bytes, 6 x f64).
void write_tracks_binary(const std::filesystem::path& path, const std::vector<KeypointRecord>& records);
std::vector<KeypointRecord> read_tracks_binary(const std::filesystem::path& path);

/// Dispatches on the file extension (`.csv` or anything else for binary).
std::vector<KeypointRecord> read_tracks(const std::filesystem::path& path);

}  // namespace kpdisc
