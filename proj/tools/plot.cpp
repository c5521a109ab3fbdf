#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "psvae/eval.hpp"
#include "psvae/types.hpp"

namespace psvae::plot {

namespace {

constexpr int kWidth = 900;
constexpr int kHeight = 600;
constexpr int kMargin = 70;

const std::vector<cv::Scalar>& palette() {
  static const std::vector<cv::Scalar> p = {
      {180, 119, 31}, {14, 127, 255}, {44, 160, 44},  {40, 39, 214},
      {189, 103, 148}, {75, 86, 140}, {194, 119, 227}, {127, 127, 127},
  };
  return p;
}

struct Axes {
  double x_min, x_max, y_min, y_max;

  cv::Point map(double x, double y) const {
    const double fx = (x - x_min) / std::max(1e-12, x_max - x_min);
    const double fy = (y - y_min) / std::max(1e-12, y_max - y_min);
    return {kMargin + static_cast<int>(fx * (kWidth - 2 * kMargin)),
            kHeight - kMargin - static_cast<int>(fy * (kHeight - 2 * kMargin))};
  }
};

void draw_frame(cv::Mat& img, const Axes& ax, const std::string& x_label,
                const std::string& y_label) {
  img.setTo(cv::Scalar(255, 255, 255));
  cv::rectangle(img, ax.map(ax.x_min, ax.y_min), ax.map(ax.x_max, ax.y_max),
                cv::Scalar(0, 0, 0));
  for (int i = 0; i <= 5; ++i) {
    const double x = ax.x_min + (ax.x_max - ax.x_min) * i / 5.0;
    const double y = ax.y_min + (ax.y_max - ax.y_min) * i / 5.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", x);
    cv::putText(img, buf, ax.map(x, ax.y_min) + cv::Point(-15, 20),
                cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(60, 60, 60));
    std::snprintf(buf, sizeof(buf), "%.3g", y);
    cv::putText(img, buf, ax.map(ax.x_min, y) + cv::Point(-55, 5),
                cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(60, 60, 60));
  }
  cv::putText(img, x_label, {kWidth / 2 - 40, kHeight - 20}, cv::FONT_HERSHEY_SIMPLEX,
              0.5, cv::Scalar(0, 0, 0));
  cv::putText(img, y_label, {10, 30}, cv::FONT_HERSHEY_SIMPLEX, 0.5,
              cv::Scalar(0, 0, 0));
}

void draw_series(cv::Mat& img, const Axes& ax, const std::vector<double>& xs,
                 const std::vector<double>& ys, const cv::Scalar& color) {
  for (size_t i = 1; i < xs.size(); ++i) {
    cv::line(img, ax.map(xs[i - 1], ys[i - 1]), ax.map(xs[i], ys[i]), color, 2,
             cv::LINE_AA);
  }
}

void draw_legend(cv::Mat& img, const std::vector<std::string>& names) {
  for (size_t i = 0; i < names.size(); ++i) {
    const cv::Point p(kWidth - kMargin - 200, kMargin + 10 + 22 * static_cast<int>(i));
    cv::line(img, p, p + cv::Point(30, 0), palette()[i % palette().size()], 3);
    cv::putText(img, names[i], p + cv::Point(38, 5), cv::FONT_HERSHEY_SIMPLEX, 0.45,
                cv::Scalar(0, 0, 0));
  }
}

void save(const cv::Mat& img, const std::filesystem::path& out_png) {
  if (out_png.has_parent_path()) std::filesystem::create_directories(out_png.parent_path());
  if (!cv::imwrite(out_png.string(), img)) {
    throw DataError("cannot write plot: " + out_png.string());
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void loss_curves(const std::filesystem::path& metrics_csv,
                 const std::filesystem::path& out_png) {
  std::ifstream in(metrics_csv);
  if (!in) throw DataError("cannot open metrics file: " + metrics_csv.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty metrics file");
  auto header = split_csv_line(line);
  if (header.empty() || header.front() != "iteration") {
    throw DataError("malformed metrics header in " + metrics_csv.string());
  }
  // every column between iteration and wall_time_s is a loss series
  const size_t n_series = header.size() - (header.back() == "wall_time_s" ? 2 : 1);
  std::vector<double> iters;
  std::vector<std::vector<double>> series(n_series);
  while (std::getline(in, line)) {
    auto cells = split_csv_line(line);
    if (cells.size() < n_series + 1) throw DataError("short metrics row");
    iters.push_back(std::stod(cells[0]));
    for (size_t i = 0; i < n_series; ++i) series[i].push_back(std::stod(cells[i + 1]));
  }
  if (iters.empty()) throw DataError("metrics file has no rows");

  double y_min = 0.0, y_max = 1e-9;
  for (const auto& s : series) {
    for (double v : s) {
      y_min = std::min(y_min, v);
      y_max = std::max(y_max, v);
    }
  }
  cv::Mat img(kHeight, kWidth, CV_8UC3);
  Axes ax{iters.front(), std::max(iters.back(), iters.front() + 1), y_min, y_max};
  draw_frame(img, ax, "iteration", "loss");
  std::vector<std::string> names;
  for (size_t i = 0; i < n_series; ++i) {
    draw_series(img, ax, iters, series[i], palette()[i % palette().size()]);
    names.push_back(header[i + 1]);
  }
  draw_legend(img, names);
  save(img, out_png);
}

void pck_curves(const std::vector<std::filesystem::path>& report_jsons,
                const std::filesystem::path& out_png) {
  if (report_jsons.empty()) throw ConfigError("no reports given");
  cv::Mat img(kHeight, kWidth, CV_8UC3);
  std::vector<std::string> names;
  std::vector<PckCurve> curves;
  double x_max = 1.0;
  for (const auto& path : report_jsons) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open report: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    auto report = EvalReport::from_json(buf.str());
    if (!report.curve.has_value() || report.curve->thresholds.empty()) {
      throw DataError("report has no PCK curve: " + path.string());
    }
    x_max = std::max(x_max, report.curve->thresholds.back());
    curves.push_back(*report.curve);
    names.push_back(to_string(report.variant) + (report.baseline ? " (source-only)" : ""));
  }
  Axes ax{0.0, x_max, 0.0, 1.0};
  draw_frame(img, ax, "threshold [px]", "PCK");
  for (size_t i = 0; i < curves.size(); ++i) {
    draw_series(img, ax, curves[i].thresholds, curves[i].average_rates,
                palette()[i % palette().size()]);
  }
  draw_legend(img, names);
  save(img, out_png);
}

void feature_scatter(const std::filesystem::path& features_csv,
                     const std::filesystem::path& out_png) {
  std::ifstream in(features_csv);
  if (!in) throw DataError("cannot open feature dump: " + features_csv.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty feature dump");
  auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "domain") {
    throw DataError("feature dump needs (domain, dim_0, dim_1, ...) columns");
  }
  std::vector<std::array<double, 2>> pts;
  std::vector<int> domains;
  double x_min = 0, x_max = 1e-9, y_min = 0, y_max = 1e-9;
  while (std::getline(in, line)) {
    auto cells = split_csv_line(line);
    if (cells.size() < 3) throw DataError("short feature row");
    const double x = std::stod(cells[1]), y = std::stod(cells[2]);
    pts.push_back({x, y});
    domains.push_back(cells[0] == "source" ? 0 : 1);
    x_min = std::min(x_min, x);
    x_max = std::max(x_max, x);
    y_min = std::min(y_min, y);
    y_max = std::max(y_max, y);
  }
  if (pts.empty()) throw DataError("feature dump has no rows");
  cv::Mat img(kHeight, kWidth, CV_8UC3);
  Axes ax{x_min, x_max, y_min, y_max};
  draw_frame(img, ax, "dim 0", "dim 1");
  for (size_t i = 0; i < pts.size(); ++i) {
    cv::circle(img, ax.map(pts[i][0], pts[i][1]), 2, palette()[domains[i]], -1,
               cv::LINE_AA);
  }
  draw_legend(img, {"source", "target"});
  save(img, out_png);
}

}  // namespace psvae::plot
