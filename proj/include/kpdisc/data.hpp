#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace kpdisc {

/// One video frame. Pixels are stored channel-first, `[3, H, W]`, float32 in [0, 1].
class Frame {
public:
  /// Validates shape and range; throws InvalidArgument / ShapeError.
  static Frame make(torch::Tensor pixels, std::int64_t index,
                    std::optional<double> timestamp = std::nullopt);

  const torch::Tensor& pixels() const noexcept { return pixels_; }
  std::int64_t index() const noexcept { return index_; }
  std::optional<double> timestamp() const noexcept { return timestamp_; }
  std::int64_t height() const { return pixels_.size(1); }
  std::int64_t width() const { return pixels_.size(2); }

private:
  Frame(torch::Tensor p, std::int64_t i, std::optional<double> ts)
      : pixels_(std::move(p)), index_(i), timestamp_(ts) {}

  torch::Tensor pixels_;
  std::int64_t index_ = 0;
  std::optional<double> timestamp_;
};

/// Reference frame I_t and future frame I_{t+T}.
class FramePair {
public:
  static FramePair make(Frame reference, Frame future);

  const Frame& reference() const noexcept { return reference_; }
  const Frame& future() const noexcept { return future_; }
  std::int64_t gap() const noexcept { return future_.index() - reference_.index(); }

private:
  FramePair(Frame r, Frame f) : reference_(std::move(r)), future_(std::move(f)) {}

  Frame reference_;
  Frame future_;
};

struct PairIndex {
  std::int64_t reference = 0;
  std::int64_t future = 0;
  bool operator==(const PairIndex&) const = default;
};

/// Pairs (i, i + gap) for i = 0, stride, 2*stride, ... while i + gap < length.
/// Throws EmptyResult when the video has fewer than gap + 1 frames.
std::vector<PairIndex> sample_pair_indices(std::int64_t video_length, std::int64_t gap,
                                           std::int64_t stride);

std::vector<FramePair> sample_pairs(const std::vector<Frame>& video, std::int64_t gap,
                                    std::int64_t stride);

/// Pair manifest: one `ref_index,future_index` line per pair.
void write_pair_manifest(const std::filesystem::path& path, const std::vector<PairIndex>& pairs);
std::vector<PairIndex> read_pair_manifest(const std::filesystem::path& path);

/// Axis-aligned crop, `x`/`width` along columns and `y`/`height` along rows.
struct Rect {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t width = 0;
  std::int64_t height = 0;
  bool operator==(const Rect&) const = default;
};

/// Square `box_size` crop centred on the value-weighted centroid of all cells of
/// `diff_map` ([H, W]) above `threshold`, clamped to lie inside the map.
/// Throws EmptyResult("no motion detected") when nothing exceeds the threshold.
Rect motion_roi(const torch::Tensor& diff_map, double threshold, std::int64_t box_size);

/// Compact frame storage for training: uint8 `[N, 3, H, W]` at the training
/// resolution, converted to float on access.
class FrameStore {
public:
  FrameStore() = default;
  explicit FrameStore(torch::Tensor frames_u8);

  static FrameStore from_frames(const std::vector<Frame>& frames);

  std::int64_t size() const { return frames_.defined() ? frames_.size(0) : 0; }
  std::int64_t height() const { return frames_.size(2); }
  std::int64_t width() const { return frames_.size(3); }

  /// float32 `[3, H, W]` in [0, 1].
  torch::Tensor at(std::int64_t i) const;
  /// float32 `[B, 3, H, W]` for the given indices.
  torch::Tensor gather(const std::vector<std::int64_t>& indices) const;
  Frame frame(std::int64_t i) const;

  const torch::Tensor& raw() const noexcept { return frames_; }

private:
  torch::Tensor frames_;
};

struct LoadOptions {
  std::int64_t resolution = 256;  // square output side; 0 keeps the source size
  std::optional<Rect> crop;       // applied before resizing
  double fps = 0.0;               // used for timestamps when > 0
};

/// Loads a directory of images (sorted by file name) or a video file.
/// Frames are converted to RGB, cropped, bilinearly resized and scaled to [0, 1].
FrameStore load_video(const std::filesystem::path& source, const LoadOptions& options);

/// Writes frames as zero-padded PNG files `frame_000000.png`, ... into `dir`.
void save_frames_png(const FrameStore& frames, const std::filesystem::path& dir);

/// Bilinear resize of a float `[3, H, W]` or `[B, 3, H, W]` tensor.
torch::Tensor resize_bilinear(const torch::Tensor& images, std::int64_t height, std::int64_t width);

}  // namespace kpdisc
