#pragma once

#include "kpdisc/tracks.hpp"

#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kpdisc {

// ---- keypoint regression -------------------------------------------------

struct RegressionResult {
  torch::Tensor weights;  // [2K, 2M], annotated ~ discovered @ weights (no intercept)
  bool regularized = false;
  double train_error = 0.0;  // %-MSE on the training images
  double test_error = 0.0;   // %-MSE on the held-out images (0 if none)
  std::map<std::string, double> per_activity;  // held-out %-MSE by activity label
};

/// Least-squares map from discovered `[N, K, 2]` to annotated `[N, M, 2]`
/// coordinates, fitted on `train` rows only. Coordinates are normalized by the
/// image side, so the error is the mean Euclidean distance * 100. A
/// rank-deficient design falls back to a ridge solve with `ridge` and a warning.
RegressionResult fit_keypoint_regression(const torch::Tensor& discovered, const torch::Tensor& annotated,
                                         const std::vector<std::int64_t>& train,
                                         const std::vector<std::int64_t>& test = {},
                                         const std::vector<std::string>& activity = {}, double ridge = 1e-6);

/// Annotated coordinates predicted by a fitted map, `[N, M, 2]`.
torch::Tensor apply_regression(const RegressionResult& r, const torch::Tensor& discovered);

/// Mean Euclidean error * 100 for coordinates in image-side units.
double percent_mse(const torch::Tensor& predicted, const torch::Tensor& annotated);

/// Fraction of points with Euclidean error <= threshold (inclusive).
double pck(const torch::Tensor& predicted, const torch::Tensor& annotated, double threshold);

// ---- tracking against ground truth ----------------------------------------

struct PartMatch {
  int keypoint = 0;
  int agent = 0;
  int part = 0;
  double offset_u = 0.0, offset_v = 0.0;  // constant keypoint-to-part offset, normalized
  double calib_error = 0.0;  // mean error on the calibration frames, pixels
  double test_error = 0.0;   // mean error on the held-out frames, pixels
};

/// For every keypoint, fits a constant offset to each ground-truth part on the
/// calibration frames, keeps the part with the smallest calibration error and
/// reports the error of that fit on the held-out frames. Keypoints are
/// normalized `[N, K, 2]`; parts are pixel coordinates `[N, A, P, 2]` of an
/// image with side `image_size` (pixel i at normalized i / (size - 1)).
std::vector<PartMatch> match_keypoints_to_parts(const torch::Tensor& calib_keypoints, const torch::Tensor& calib_parts,
                                                const torch::Tensor& test_keypoints, const torch::Tensor& test_parts,
                                                std::int64_t image_size);

struct BodyMatch {
  int keypoint = 0;
  int agent = 0;
  double along = 0.0, across = 0.0;  // body-frame coordinates in units of the two reference axes
  double calib_error = 0.0;  // pixels
  double test_error = 0.0;   // pixels
};

/// For every keypoint and agent, fits a fixed point of the agent's body frame,
/// c + along * (axis - c) + across * (side - c), with c, axis and side the
/// parts `origin`, `axis` and `side`, by least squares on the calibration
/// frames. Keeps the agent with the smallest calibration error and reports the
/// held-out error. Shapes and units as in match_keypoints_to_parts.
std::vector<BodyMatch> match_keypoints_to_bodies(const torch::Tensor& calib_keypoints, const torch::Tensor& calib_parts,
                                                 const torch::Tensor& test_keypoints, const torch::Tensor& test_parts,
                                                 std::int64_t image_size, int origin, int axis, int side);

// ---- pulse analysis --------------------------------------------------------

struct Spectrogram {
  torch::Tensor magnitude;   // [windows, bins]
  std::vector<double> times;        // window centres, seconds
  std::vector<double> frequencies;  // bin centres, Hz
  /// Dominant bin frequency per window; empty optional when the window's
  /// spectrum stays below the noise floor.
  std::vector<std::optional<double>> dominant;
  /// Frequency with the largest time-averaged magnitude, if any window has signal.
  std::optional<double> dominant_band;
  double bin_width = 0.0;
};

/// Short-time magnitude spectrum of a 1-D series (mean removed per window,
/// Hann taper). Throws EmptyResult if the series is shorter than one window.
Spectrogram spectrogram(const std::vector<double>& series, double fps, double window_s = 4.0, double overlap = 0.5,
                        double noise_floor = 1e-9);

/// Mean pairwise distance between keypoints whose mean confidence is at least
/// `min_confidence`, per frame. Needs at least two such keypoints.
std::vector<double> mean_pairwise_distance(const TrackTensor& tracks, double min_confidence = 0.0);

Spectrogram pulse_spectrogram(const TrackTensor& tracks, double fps, double window_s = 4.0, double overlap = 0.5,
                              double min_confidence = 0.0, double noise_floor = 1e-9);

// ---- wind analysis ---------------------------------------------------------

struct WindSample {
  double phi_bar = 0.0;  // sway amplitude equivalent
  double u_bar = 0.0;    // mean wind speed, m/s
  double i_u = 0.0;      // turbulence intensity, stored only
};

/// Area of the convex hull of 2-D points (monotone chain); 0 for < 3 points.
double convex_hull_area(std::vector<std::array<double, 2>> points);

/// Population std over frames of the keypoints' convex-hull area.
double sway_amplitude(const TrackTensor& tracks);

struct WindFit {
  double c0 = 0.0;
  double r2 = 0.0;
  double exponent = 0.5;
};

/// Least squares through the origin of u_bar = C0 * phi_bar^exponent.
WindFit fit_wind_model(const std::vector<WindSample>& samples, double exponent = 0.5);

std::vector<WindSample> read_wind_samples(const std::filesystem::path& path);

}  // namespace kpdisc
