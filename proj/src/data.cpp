#include "kpdisc/data.hpp"

#include "kpdisc/error.hpp"
#include "kpdisc/io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace kpdisc {

namespace fs = std::filesystem;

Frame Frame::make(torch::Tensor pixels, std::int64_t index, std::optional<double> timestamp) {
  if (!pixels.defined() || pixels.dim() != 3 || pixels.size(0) != 3)
    throw ShapeError("frame pixels must be [3, H, W]");
  if (pixels.size(1) <= 0 || pixels.size(2) <= 0) throw ShapeError("frame must be non-empty");
  pixels = pixels.to(torch::kFloat32).contiguous();
  auto lo = pixels.min().item<float>();
  auto hi = pixels.max().item<float>();
  if (!(lo >= 0.0f && hi <= 1.0f)) throw InvalidArgument("frame pixel values must lie in [0, 1]");
  return Frame(std::move(pixels), index, timestamp);
}

FramePair FramePair::make(Frame reference, Frame future) {
  if (reference.pixels().sizes() != future.pixels().sizes())
    throw ShapeError("frame pair must have equal dimensions");
  if (future.index() - reference.index() < 1)
    throw InvalidArgument("future frame must come after the reference frame");
  return FramePair(std::move(reference), std::move(future));
}

std::vector<PairIndex> sample_pair_indices(std::int64_t video_length, std::int64_t gap,
                                           std::int64_t stride) {
  if (gap < 1) throw InvalidArgument("gap must be >= 1");
  if (stride < 1) throw InvalidArgument("stride must be >= 1");
  if (video_length <= gap)
    throw EmptyResult("video of " + std::to_string(video_length) +
                      " frames is too short for gap " + std::to_string(gap));
  std::vector<PairIndex> pairs;
  pairs.reserve(static_cast<std::size_t>((video_length - gap - 1) / stride + 1));
  for (std::int64_t i = 0; i + gap < video_length; i += stride) pairs.push_back({i, i + gap});
  return pairs;
}

std::vector<FramePair> sample_pairs(const std::vector<Frame>& video, std::int64_t gap,
                                    std::int64_t stride) {
  auto idx = sample_pair_indices(static_cast<std::int64_t>(video.size()), gap, stride);
  std::vector<FramePair> out;
  out.reserve(idx.size());
  for (auto p : idx)
    out.push_back(FramePair::make(video[static_cast<std::size_t>(p.reference)],
                                  video[static_cast<std::size_t>(p.future)]));
  return out;
}

void write_pair_manifest(const fs::path& path, const std::vector<PairIndex>& pairs) {
  io::atomic_write(path, [&](std::ostream& os) {
    for (auto p : pairs) os << p.reference << ',' << p.future << '\n';
  });
}

std::vector<PairIndex> read_pair_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<PairIndex> out;
  std::string line;
  while (std::getline(in, line)) {
    auto t = io::trim(line);
    if (t.empty()) continue;
    auto cells = io::split(t, ',');
    if (cells.size() != 2) throw FormatError("pair manifest line must be 'ref,future': " + t);
    out.push_back({std::stoll(cells[0]), std::stoll(cells[1])});
  }
  return out;
}

Rect motion_roi(const torch::Tensor& diff_map, double threshold, std::int64_t box_size) {
  if (diff_map.dim() != 2) throw ShapeError("motion_roi expects an [H, W] map");
  const auto h = diff_map.size(0);
  const auto w = diff_map.size(1);
  if (box_size <= 0 || box_size > std::min(h, w))
    throw InvalidArgument("box_size must be in [1, min(H, W)]");
  auto m = diff_map.to(torch::kFloat64).contiguous();
  if (m.min().item<double>() < 0.0) throw InvalidArgument("diff map must be nonnegative");

  auto mass = torch::where(m > threshold, m, torch::zeros_like(m));
  const double total = mass.sum().item<double>();
  if (!(total > 0.0)) throw EmptyResult("no motion detected");

  auto rows = torch::arange(h, torch::kFloat64).unsqueeze(1);
  auto cols = torch::arange(w, torch::kFloat64).unsqueeze(0);
  const double cy = (mass * rows).sum().item<double>() / total;
  const double cx = (mass * cols).sum().item<double>() / total;

  // Box columns x0 .. x0 + box - 1 have their middle at x0 + (box - 1) / 2.
  auto place = [box_size](double c, std::int64_t extent) {
    auto start = static_cast<std::int64_t>(std::floor(c - (box_size - 1) / 2.0 + 0.5));
    return std::clamp<std::int64_t>(start, 0, extent - box_size);
  };
  return Rect{place(cx, w), place(cy, h), box_size, box_size};
}

FrameStore::FrameStore(torch::Tensor frames_u8) : frames_(std::move(frames_u8)) {
  if (frames_.dim() != 4 || frames_.size(1) != 3 || frames_.scalar_type() != torch::kUInt8)
    throw ShapeError("FrameStore expects uint8 [N, 3, H, W]");
}

FrameStore FrameStore::from_frames(const std::vector<Frame>& frames) {
  if (frames.empty()) throw EmptyResult("no frames");
  std::vector<torch::Tensor> parts;
  parts.reserve(frames.size());
  for (const auto& f : frames)
    parts.push_back((f.pixels() * 255.0f).round().clamp(0, 255).to(torch::kUInt8));
  return FrameStore(torch::stack(parts));
}

torch::Tensor FrameStore::at(std::int64_t i) const {
  if (i < 0 || i >= size()) throw InvalidArgument("frame index out of range");
  return frames_[i].to(torch::kFloat32).div_(255.0f);
}

torch::Tensor FrameStore::gather(const std::vector<std::int64_t>& indices) const {
  auto idx = torch::tensor(indices, torch::kLong);
  if (!indices.empty() && (idx.min().item<std::int64_t>() < 0 || idx.max().item<std::int64_t>() >= size()))
    throw InvalidArgument("frame index out of range");
  return frames_.index_select(0, idx).to(torch::kFloat32).div_(255.0f);
}

Frame FrameStore::frame(std::int64_t i) const { return Frame::make(at(i), i); }

torch::Tensor resize_bilinear(const torch::Tensor& images, std::int64_t height, std::int64_t width) {
  namespace F = torch::nn::functional;
  const bool single = images.dim() == 3;
  auto x = single ? images.unsqueeze(0) : images;
  if (x.size(2) == height && x.size(3) == width) return images;
  auto y = F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{height, width})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
  return single ? y.squeeze(0) : y;
}

namespace {

bool is_image_file(const fs::path& p) {
  static const std::set<std::string> kExt = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"};
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return kExt.count(ext) > 0;
}

torch::Tensor to_chw_u8(const cv::Mat& bgr, const LoadOptions& opt) {
  cv::Mat img = bgr;
  if (img.channels() == 1) cv::cvtColor(img, img, cv::COLOR_GRAY2BGR);
  if (img.channels() == 4) cv::cvtColor(img, img, cv::COLOR_BGRA2BGR);
  if (img.depth() != CV_8U) img.convertTo(img, CV_8U, img.depth() == CV_16U ? 1.0 / 257.0 : 255.0);
  if (opt.crop) {
    const auto& r = *opt.crop;
    if (r.x < 0 || r.y < 0 || r.x + r.width > img.cols || r.y + r.height > img.rows)
      throw InvalidArgument("crop rectangle outside the frame");
    img = img(cv::Rect(static_cast<int>(r.x), static_cast<int>(r.y), static_cast<int>(r.width),
                       static_cast<int>(r.height)));
  }
  if (opt.resolution > 0 && (img.cols != opt.resolution || img.rows != opt.resolution)) {
    cv::Mat resized;
    cv::resize(img, resized, cv::Size(static_cast<int>(opt.resolution), static_cast<int>(opt.resolution)),
               0, 0, cv::INTER_LINEAR);
    img = resized;
  }
  cv::Mat rgb;
  cv::cvtColor(img, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).contiguous();
}

}  // namespace

FrameStore load_video(const fs::path& source, const LoadOptions& options) {
  std::vector<torch::Tensor> frames;
  if (fs::is_directory(source)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(source))
      if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      cv::Mat img = cv::imread(f.string(), cv::IMREAD_UNCHANGED);
      if (img.empty()) throw FormatError("cannot decode image " + f.string());
      frames.push_back(to_chw_u8(img, options));
    }
  } else if (fs::is_regular_file(source)) {
    cv::VideoCapture cap(source.string());
    if (!cap.isOpened()) throw FormatError("cannot open video " + source.string());
    cv::Mat img;
    while (cap.read(img)) frames.push_back(to_chw_u8(img, options));
  } else {
    throw Error("video source does not exist: " + source.string());
  }
  if (frames.empty()) throw EmptyResult("no frames found in " + source.string());
  return FrameStore(torch::stack(frames));
}

void save_frames_png(const FrameStore& frames, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::int64_t i = 0; i < frames.size(); ++i) {
    auto hwc = frames.raw()[i].permute({1, 2, 0}).contiguous();
    cv::Mat rgb(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3, hwc.data_ptr());
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    std::ostringstream name;
    name << "frame_" << std::setw(6) << std::setfill('0') << i << ".png";
    const auto path = dir / name.str();
    const auto tmp = dir / (name.str() + ".tmp.png");
    if (!cv::imwrite(tmp.string(), bgr)) throw Error("cannot write " + path.string());
    fs::rename(tmp, path);
  }
}

}  // namespace kpdisc
