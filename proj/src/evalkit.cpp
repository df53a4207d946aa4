#include "kpdisc/evalkit.hpp"

#include "kpdisc/error.hpp"
#include "kpdisc/io.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

namespace kpdisc {

namespace {

torch::Tensor rows(const torch::Tensor& t, const std::vector<std::int64_t>& idx) {
  return t.index_select(0, torch::tensor(idx, torch::kLong));
}

}  // namespace

double percent_mse(const torch::Tensor& predicted, const torch::Tensor& annotated) {
  if (predicted.sizes() != annotated.sizes() || predicted.size(-1) != 2)
    throw ShapeError("predicted and annotated coordinates must share a [..., 2] shape");
  return (predicted.to(torch::kFloat64) - annotated.to(torch::kFloat64)).norm(2, -1).mean().item<double>() * 100.0;
}

double pck(const torch::Tensor& predicted, const torch::Tensor& annotated, double threshold) {
  if (predicted.sizes() != annotated.sizes() || predicted.size(-1) != 2)
    throw ShapeError("predicted and annotated coordinates must share a [..., 2] shape");
  auto d = (predicted.to(torch::kFloat64) - annotated.to(torch::kFloat64)).norm(2, -1);
  return (d <= threshold).to(torch::kFloat64).mean().item<double>();
}

RegressionResult fit_keypoint_regression(const torch::Tensor& discovered, const torch::Tensor& annotated,
                                         const std::vector<std::int64_t>& train,
                                         const std::vector<std::int64_t>& test,
                                         const std::vector<std::string>& activity, double ridge) {
  if (discovered.dim() != 3 || annotated.dim() != 3 || discovered.size(-1) != 2 || annotated.size(-1) != 2 ||
      discovered.size(0) != annotated.size(0))
    throw ShapeError("expected discovered [N, K, 2] and annotated [N, M, 2]");
  const auto n = discovered.size(0), k = discovered.size(1), m = annotated.size(1);
  if (static_cast<std::int64_t>(train.size()) < 2 * k)
    throw InvalidArgument("need at least 2K training images for the regression");
  if (!activity.empty() && static_cast<std::int64_t>(activity.size()) != n)
    throw InvalidArgument("one activity label per image is required");

  auto x = discovered.to(torch::kFloat64).reshape({n, 2 * k});
  auto y = annotated.to(torch::kFloat64).reshape({n, 2 * m});
  auto xt = rows(x, train), yt = rows(y, train);

  RegressionResult r;
  auto gram = xt.t().mm(xt);
  const auto rank = torch::linalg_matrix_rank(xt).item<std::int64_t>();
  if (rank < 2 * k) {
    std::cerr << "warning: keypoint regression design has rank " << rank << " < " << 2 * k
              << ", using a ridge solve\n";
    r.regularized = true;
    gram = gram + ridge * torch::eye(2 * k, gram.options());
    r.weights = torch::linalg_solve(gram, xt.t().mm(yt));
  } else {
    r.weights = std::get<0>(torch::linalg_lstsq(xt, yt));
  }

  r.train_error = percent_mse(xt.mm(r.weights).view({-1, m, 2}), yt.view({-1, m, 2}));
  if (!test.empty()) {
    auto pred = rows(x, test).mm(r.weights).view({-1, m, 2});
    auto truth = rows(y, test).view({-1, m, 2});
    r.test_error = percent_mse(pred, truth);
    if (!activity.empty()) {
      std::map<std::string, std::vector<std::int64_t>> groups;
      for (std::size_t i = 0; i < test.size(); ++i)
        groups[activity[static_cast<std::size_t>(test[i])]].push_back(static_cast<std::int64_t>(i));
      for (const auto& [name, idx] : groups) r.per_activity[name] = percent_mse(rows(pred, idx), rows(truth, idx));
    }
  }
  return r;
}

torch::Tensor apply_regression(const RegressionResult& r, const torch::Tensor& discovered) {
  const auto n = discovered.size(0);
  return discovered.to(torch::kFloat64).reshape({n, -1}).mm(r.weights).view({n, -1, 2});
}

std::vector<PartMatch> match_keypoints_to_parts(const torch::Tensor& calib_keypoints, const torch::Tensor& calib_parts,
                                                const torch::Tensor& test_keypoints, const torch::Tensor& test_parts,
                                                std::int64_t image_size) {
  if (calib_keypoints.dim() != 3 || test_keypoints.dim() != 3 || calib_parts.dim() != 4 || test_parts.dim() != 4)
    throw ShapeError("expected keypoints [N, K, 2] and parts [N, A, P, 2]");
  if (calib_keypoints.size(0) != calib_parts.size(0) || test_keypoints.size(0) != test_parts.size(0))
    throw ShapeError("keypoint and part frame counts differ");
  if (calib_keypoints.size(0) == 0 || test_keypoints.size(0) == 0) throw EmptyResult("no frames to evaluate");
  if (image_size < 2) throw InvalidArgument("image_size must be >= 2");
  const double scale = static_cast<double>(image_size - 1);
  auto ck = calib_keypoints.to(torch::kFloat64), tk = test_keypoints.to(torch::kFloat64);
  auto cp = calib_parts.to(torch::kFloat64) / scale, tp = test_parts.to(torch::kFloat64) / scale;
  std::vector<PartMatch> out;
  for (std::int64_t k = 0; k < ck.size(1); ++k) {
    PartMatch best;
    best.calib_error = std::numeric_limits<double>::infinity();
    for (std::int64_t a = 0; a < cp.size(1); ++a)
      for (std::int64_t p = 0; p < cp.size(2); ++p) {
        auto off = (ck.select(1, k) - cp.select(1, a).select(1, p)).mean(0);
        const double ce = (ck.select(1, k) - cp.select(1, a).select(1, p) - off).norm(2, -1).mean().item<double>() * scale;
        if (ce < best.calib_error) {
          best.keypoint = static_cast<int>(k);
          best.agent = static_cast<int>(a);
          best.part = static_cast<int>(p);
          best.offset_u = off[0].item<double>();
          best.offset_v = off[1].item<double>();
          best.calib_error = ce;
          best.test_error =
              (tk.select(1, k) - tp.select(1, a).select(1, p) - off).norm(2, -1).mean().item<double>() * scale;
        }
      }
    out.push_back(best);
  }
  return out;
}

std::vector<BodyMatch> match_keypoints_to_bodies(const torch::Tensor& calib_keypoints, const torch::Tensor& calib_parts,
                                                 const torch::Tensor& test_keypoints, const torch::Tensor& test_parts,
                                                 std::int64_t image_size, int origin, int axis, int side) {
  if (calib_keypoints.dim() != 3 || test_keypoints.dim() != 3 || calib_parts.dim() != 4 || test_parts.dim() != 4)
    throw ShapeError("expected keypoints [N, K, 2] and parts [N, A, P, 2]");
  if (calib_keypoints.size(0) != calib_parts.size(0) || test_keypoints.size(0) != test_parts.size(0))
    throw ShapeError("keypoint and part frame counts differ");
  if (calib_keypoints.size(0) == 0 || test_keypoints.size(0) == 0) throw EmptyResult("no frames to evaluate");
  if (image_size < 2) throw InvalidArgument("image_size must be >= 2");
  const auto parts = calib_parts.size(2);
  for (int p : {origin, axis, side})
    if (p < 0 || p >= parts) throw InvalidArgument("reference part index out of range");
  if (origin == axis || origin == side || axis == side) throw InvalidArgument("reference parts must differ");
  const double scale = static_cast<double>(image_size - 1);
  auto ck = calib_keypoints.to(torch::kFloat64), tk = test_keypoints.to(torch::kFloat64);
  auto cp = calib_parts.to(torch::kFloat64) / scale, tp = test_parts.to(torch::kFloat64) / scale;

  // Point predicted by body coordinates `coef` [2] for every frame of `p` [N, P, 2].
  auto predict = [&](const torch::Tensor& p, const torch::Tensor& coef) {
    auto c = p.select(1, origin);
    return c + coef[0] * (p.select(1, axis) - c) + coef[1] * (p.select(1, side) - c);
  };
  std::vector<BodyMatch> out;
  for (std::int64_t k = 0; k < ck.size(1); ++k) {
    BodyMatch best;
    best.calib_error = std::numeric_limits<double>::infinity();
    for (std::int64_t a = 0; a < cp.size(1); ++a) {
      auto p = cp.select(1, a);
      auto c = p.select(1, origin);
      auto basis = torch::stack({p.select(1, axis) - c, p.select(1, side) - c}, -1).reshape({-1, 2});
      auto rhs = (ck.select(1, k) - c).reshape({-1, 1});
      auto gram = basis.t().mm(basis);
      if (std::abs(torch::det(gram).item<double>()) < 1e-18) continue;
      auto coef = torch::linalg_solve(gram, basis.t().mm(rhs)).view({2});
      const double ce = (ck.select(1, k) - predict(p, coef)).norm(2, -1).mean().item<double>() * scale;
      if (ce < best.calib_error) {
        best.keypoint = static_cast<int>(k);
        best.agent = static_cast<int>(a);
        best.along = coef[0].item<double>();
        best.across = coef[1].item<double>();
        best.calib_error = ce;
        best.test_error = (tk.select(1, k) - predict(tp.select(1, a), coef)).norm(2, -1).mean().item<double>() * scale;
      }
    }
    if (!std::isfinite(best.calib_error)) throw NumericalError("degenerate body frames for every agent");
    out.push_back(best);
  }
  return out;
}

Spectrogram spectrogram(const std::vector<double>& series, double fps, double window_s, double overlap,
                        double noise_floor) {
  if (!(fps > 0.0)) throw InvalidArgument("fps must be positive");
  if (!(window_s > 0.0)) throw InvalidArgument("window length must be positive");
  if (overlap < 0.0 || overlap >= 1.0) throw InvalidArgument("overlap must be in [0, 1)");
  const auto win = static_cast<std::int64_t>(std::lround(window_s * fps));
  if (win < 2 || static_cast<std::int64_t>(series.size()) < win)
    throw EmptyResult("series is shorter than one spectrogram window");
  const auto hop = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::lround(win * (1.0 - overlap))));

  auto x = torch::tensor(series, torch::kFloat64);
  auto frames = x.unfold(0, win, hop);  // [W, win]
  frames = frames - frames.mean(1, true);
  auto taper = torch::hann_window(win, /*periodic=*/false, torch::kFloat64);
  auto mag = torch::fft::rfft(frames * taper, c10::nullopt, 1).abs() / taper.sum();

  Spectrogram s;
  s.magnitude = mag;
  s.bin_width = fps / static_cast<double>(win);
  for (std::int64_t b = 0; b < mag.size(1); ++b) s.frequencies.push_back(b * s.bin_width);
  for (std::int64_t w = 0; w < mag.size(0); ++w) s.times.push_back((w * hop + win / 2.0) / fps);

  // Bin 0 is left out: it only carries the residual of the removed mean.
  auto body = mag.slice(1, 1);
  auto a = body.contiguous();
  for (std::int64_t w = 0; w < a.size(0); ++w) {
    auto row = a[w];
    const auto best = row.argmax().item<std::int64_t>();
    const double peak = row[best].item<double>();
    if (peak > noise_floor)
      s.dominant.emplace_back(s.frequencies[static_cast<std::size_t>(best + 1)]);
    else
      s.dominant.emplace_back(std::nullopt);
  }
  auto avg = body.mean(0);
  const auto best = avg.argmax().item<std::int64_t>();
  if (avg[best].item<double>() > noise_floor) s.dominant_band = s.frequencies[static_cast<std::size_t>(best + 1)];
  return s;
}

std::vector<double> mean_pairwise_distance(const TrackTensor& tracks, double min_confidence) {
  auto mean_conf = tracks.confidence.mean(0);
  std::vector<std::int64_t> keep;
  for (std::int64_t k = 0; k < tracks.k(); ++k)
    if (mean_conf[k].item<double>() >= min_confidence) keep.push_back(k);
  if (keep.size() < 2) throw EmptyResult("fewer than two keypoints pass the confidence threshold");
  auto p = tracks.coords.index_select(1, torch::tensor(keep, torch::kLong)).to(torch::kFloat64);
  auto d = (p.unsqueeze(2) - p.unsqueeze(1)).norm(2, -1);  // [F, k, k]
  const auto n = static_cast<double>(keep.size());
  auto mean = d.sum({1, 2}) / (n * (n - 1));
  return {mean.data_ptr<double>(), mean.data_ptr<double>() + mean.numel()};
}

Spectrogram pulse_spectrogram(const TrackTensor& tracks, double fps, double window_s, double overlap,
                              double min_confidence, double noise_floor) {
  return spectrogram(mean_pairwise_distance(tracks, min_confidence), fps, window_s, overlap, noise_floor);
}

double convex_hull_area(std::vector<std::array<double, 2>> pts) {
  if (pts.size() < 3) return 0.0;
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return 0.0;
  auto cross = [](const auto& o, const auto& a, const auto& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  };
  std::vector<std::array<double, 2>> hull(2 * pts.size());
  std::size_t n = 0;
  for (const auto& p : pts) {
    while (n >= 2 && cross(hull[n - 2], hull[n - 1], p) <= 0) --n;
    hull[n++] = p;
  }
  for (auto i = pts.size() - 1, lower = n + 1; i-- > 0;) {
    while (n >= lower && cross(hull[n - 2], hull[n - 1], pts[i]) <= 0) --n;
    hull[n++] = pts[i];
  }
  hull.resize(n - 1);
  double area = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    area += a[0] * b[1] - a[1] * b[0];
  }
  return std::abs(area) / 2.0;
}

double sway_amplitude(const TrackTensor& tracks) {
  auto c = tracks.coords.to(torch::kFloat64).contiguous();
  auto a = c.accessor<double, 3>();
  std::vector<double> areas;
  for (std::int64_t f = 0; f < c.size(0); ++f) {
    std::vector<std::array<double, 2>> pts;
    for (std::int64_t k = 0; k < c.size(1); ++k) pts.push_back({a[f][k][0], a[f][k][1]});
    areas.push_back(convex_hull_area(pts));
  }
  if (areas.empty()) throw EmptyResult("no frames");
  double mean = 0.0;
  for (double x : areas) mean += x;
  mean /= static_cast<double>(areas.size());
  double var = 0.0;
  for (double x : areas) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(areas.size()));
}

WindFit fit_wind_model(const std::vector<WindSample>& samples, double exponent) {
  if (samples.size() < 2) throw InvalidArgument("need at least two wind samples");
  if (!(exponent > 0.0)) throw InvalidArgument("exponent must be positive");
  double sxy = 0.0, sxx = 0.0, ymean = 0.0;
  for (const auto& s : samples) {
    if (s.phi_bar < 0.0 || s.u_bar < 0.0) throw InvalidArgument("wind samples must be nonnegative");
    const double x = std::pow(s.phi_bar, exponent);
    sxy += x * s.u_bar;
    sxx += x * x;
    ymean += s.u_bar;
  }
  if (sxx == 0.0) throw InvalidArgument("all sway amplitudes are zero");
  ymean /= static_cast<double>(samples.size());
  WindFit fit;
  fit.exponent = exponent;
  fit.c0 = sxy / sxx;
  double ss_res = 0.0, ss_tot = 0.0;
  for (const auto& s : samples) {
    const double r = s.u_bar - fit.c0 * std::pow(s.phi_bar, exponent);
    ss_res += r * r;
    ss_tot += (s.u_bar - ymean) * (s.u_bar - ymean);
  }
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return fit;
}

std::vector<WindSample> read_wind_samples(const std::filesystem::path& path) {
  auto t = io::read_csv(path);
  if (!t.has_column("phi_bar") || !t.has_column("u_bar"))
    throw FormatError(path.string() + " needs phi_bar and u_bar columns");
  const auto cp = t.column("phi_bar"), cu = t.column("u_bar");
  const bool has_i = t.has_column("i_u");
  std::vector<WindSample> out;
  for (const auto& row : t.rows) {
    try {
      out.push_back({std::stod(row.at(cp)), std::stod(row.at(cu)), has_i ? std::stod(row.at(t.column("i_u"))) : 0.0});
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": malformed wind sample row");
    }
  }
  return out;
}

}  // namespace kpdisc
