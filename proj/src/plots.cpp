#include "kpdisc/plots.hpp"

#include "kpdisc/error.hpp"
#include "kpdisc/io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>

namespace kpdisc {

namespace {

void save_png(const cv::Mat& img, const std::filesystem::path& path) {
  std::vector<uchar> buf;
  if (!cv::imencode(".png", img, buf)) throw Error("PNG encoding failed for " + path.string());
  io::atomic_write(
      path, [&](std::ostream& os) { os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size())); },
      /*binary=*/true);
}

constexpr int kW = 640, kH = 480, kMargin = 50;

cv::Mat canvas() {
  cv::Mat img(kH, kW, CV_8UC3, cv::Scalar(255, 255, 255));
  cv::rectangle(img, {kMargin, kMargin}, {kW - kMargin, kH - kMargin}, cv::Scalar(0, 0, 0));
  return img;
}

void label(cv::Mat& img, const std::string& text, cv::Point at) {
  cv::putText(img, text, at, cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
}

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

}  // namespace

void write_spectrogram_png(const Spectrogram& s, const std::filesystem::path& path) {
  auto mag = s.magnitude.to(torch::kFloat64).contiguous();
  const auto nw = mag.size(0), nb = mag.size(1);
  if (nw == 0 || nb == 0) throw EmptyResult("empty spectrogram");
  cv::Mat grid(static_cast<int>(nb), static_cast<int>(nw), CV_64F);
  auto a = mag.accessor<double, 2>();
  for (std::int64_t b = 0; b < nb; ++b)
    for (std::int64_t w = 0; w < nw; ++w) grid.at<double>(static_cast<int>(nb - 1 - b), static_cast<int>(w)) = a[w][b];
  cv::Mat u8;
  cv::normalize(grid, grid, 0, 255, cv::NORM_MINMAX);
  grid.convertTo(u8, CV_8U);
  cv::Mat color;
  cv::applyColorMap(u8, color, cv::COLORMAP_VIRIDIS);
  cv::Mat img = canvas();
  cv::resize(color, img(cv::Rect(kMargin + 1, kMargin + 1, kW - 2 * kMargin - 1, kH - 2 * kMargin - 1)),
             {kW - 2 * kMargin - 1, kH - 2 * kMargin - 1}, 0, 0, cv::INTER_NEAREST);
  label(img, "time (s): 0 - " + fmt(s.times.back()), {kMargin, kH - 15});
  label(img, "freq (Hz): 0 - " + fmt(s.frequencies.back()), {kMargin, 30});
  if (s.dominant_band) label(img, "dominant " + fmt(*s.dominant_band) + " Hz", {kW - 220, 30});
  save_png(img, path);
}

void write_wind_plot_png(const std::vector<WindSample>& samples, const WindFit& fit,
                         const std::filesystem::path& path) {
  if (samples.empty()) throw EmptyResult("no wind samples");
  double xmax = 0.0, ymax = 0.0;
  for (const auto& s : samples) {
    xmax = std::max(xmax, std::pow(s.phi_bar, fit.exponent));
    ymax = std::max(ymax, s.u_bar);
  }
  xmax = xmax > 0 ? xmax * 1.05 : 1.0;
  ymax = std::max(ymax, fit.c0 * xmax) * 1.05;
  if (ymax <= 0) ymax = 1.0;
  auto to_px = [&](double x, double y) {
    return cv::Point(static_cast<int>(kMargin + x / xmax * (kW - 2 * kMargin)),
                     static_cast<int>(kH - kMargin - y / ymax * (kH - 2 * kMargin)));
  };
  cv::Mat img = canvas();
  cv::line(img, to_px(0, 0), to_px(xmax, fit.c0 * xmax), cv::Scalar(40, 40, 220), 2, cv::LINE_AA);
  for (const auto& s : samples)
    cv::circle(img, to_px(std::pow(s.phi_bar, fit.exponent), s.u_bar), 4, cv::Scalar(180, 90, 20), -1, cv::LINE_AA);
  label(img, "phi^" + fmt(fit.exponent) + " (max " + fmt(xmax) + ")", {kMargin, kH - 15});
  label(img, "U (max " + fmt(ymax) + " m/s)", {kMargin, 30});
  label(img, "C0 = " + fmt(fit.c0) + "  R2 = " + fmt(fit.r2), {kW - 250, 30});
  save_png(img, path);
}

void write_line_plot_png(const std::vector<double>& x, const std::vector<double>& y, const std::string& x_label,
                         const std::string& y_label, bool log_y, const std::filesystem::path& path) {
  if (x.size() != y.size() || x.empty()) throw InvalidArgument("line plot needs matching, non-empty series");
  auto ty = [&](double v) { return log_y ? (v > 0 ? std::log10(v) : std::nan("")) : v; };
  double xlo = *std::min_element(x.begin(), x.end()), xhi = *std::max_element(x.begin(), x.end());
  double lo = 1e300, hi = -1e300;
  for (double v : y)
    if (std::isfinite(ty(v))) {
      lo = std::min(lo, ty(v));
      hi = std::max(hi, ty(v));
    }
  if (lo > hi) lo = hi = 0;
  if (hi - lo < 1e-12) hi = lo + 1;
  if (xhi - xlo < 1e-12) xhi = xlo + 1;
  cv::Mat img = canvas();
  std::vector<cv::Point> pts;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = std::isfinite(ty(y[i])) ? ty(y[i]) : lo;
    pts.emplace_back(static_cast<int>(kMargin + (x[i] - xlo) / (xhi - xlo) * (kW - 2 * kMargin)),
                     static_cast<int>(kH - kMargin - (v - lo) / (hi - lo) * (kH - 2 * kMargin)));
  }
  cv::polylines(img, pts, false, cv::Scalar(180, 90, 20), 1, cv::LINE_AA);
  label(img, x_label + ": " + fmt(xlo) + " .. " + fmt(xhi), {kMargin, kH - 15});
  label(img, (log_y ? "log10 " : "") + y_label + ": " + fmt(lo) + " .. " + fmt(hi), {kMargin, 30});
  save_png(img, path);
}

}  // namespace kpdisc
