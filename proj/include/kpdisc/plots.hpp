#pragma once

#include "kpdisc/evalkit.hpp"

#include <filesystem>
#include <string>

namespace kpdisc {

/// Spectrogram as a PNG heat image: time runs left to right, frequency bottom to top.
void write_spectrogram_png(const Spectrogram& s, const std::filesystem::path& path);

/// Scatter of (phi_bar^exponent, u_bar) with the fitted line through the origin.
void write_wind_plot_png(const std::vector<WindSample>& samples, const WindFit& fit,
                         const std::filesystem::path& path);

/// Line plot of y against x, optionally with a log10 y axis.
void write_line_plot_png(const std::vector<double>& x, const std::vector<double>& y, const std::string& x_label,
                         const std::string& y_label, bool log_y, const std::filesystem::path& path);

}  // namespace kpdisc
