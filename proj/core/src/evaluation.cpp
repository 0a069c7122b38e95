// SPDX-License-Identifier: Apache-2.0
#include "hava/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace hava::eval {

std::vector<double> per_vertex_error(const Matrix& y, const Matrix& y_hat) {
  if (y.rows() != y_hat.rows() || y.cols() != 3 || y_hat.cols() != 3) {
    throw std::invalid_argument("per_vertex_error: shapes " + std::to_string(y.rows()) + "x" +
                                std::to_string(y.cols()) + " and " + std::to_string(y_hat.rows()) + "x" +
                                std::to_string(y_hat.cols()) + " differ or are not N x 3");
  }
  std::vector<double> out(y.rows());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const double dx = y(i, 0) - y_hat(i, 0), dy = y(i, 1) - y_hat(i, 1), dz = y(i, 2) - y_hat(i, 2);
    out[i] = std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return out;
}

RegionalResult regional_metric(std::span<const Matrix> gt, std::span<const Matrix> pred, const mesh::RegionMask& mask,
                               bool squared) {
  require(!mask.indices.empty(), "regional_metric: mask '" + mask.name + "' is empty");
  require(!gt.empty(), "regional_metric: no frames");
  if (gt.size() != pred.size()) {
    throw std::invalid_argument("regional_metric: " + std::to_string(gt.size()) + " ground-truth frames vs " +
                                std::to_string(pred.size()) + " predicted");
  }
  RegionalResult r;
  r.per_frame.reserve(gt.size());
  for (std::size_t f = 0; f < gt.size(); ++f) {
    const auto err = per_vertex_error(gt[f], pred[f]);
    double worst = 0.0;
    for (auto v : mask.indices) {
      if (v >= err.size()) {
        throw std::invalid_argument("regional_metric: mask index " + std::to_string(v) + " out of range for " +
                                    std::to_string(err.size()) + " vertices");
      }
      worst = std::max(worst, squared ? err[v] * err[v] : err[v]);
    }
    r.per_frame.push_back(worst);
  }
  double sum = 0.0;
  for (double e : r.per_frame) sum += e;
  r.value = sum / static_cast<double>(r.per_frame.size());
  return r;
}

// Adding 0.0 turns -0.0 into 0.0 so tiny negatives do not print as "-0.000".
double round3(double v) { return std::round(v * 1000.0) / 1000.0 + 0.0; }

std::string format3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", round3(v));
  return buf;
}

std::filesystem::path series_path(const std::filesystem::path& report) {
  auto p = report;
  p.replace_filename(report.stem().string() + "_series.csv");
  return p;
}

void emit_report(std::span<const ReportRow> rows, const std::filesystem::path& path) {
  require(!rows.empty(), "emit_report: no rows");
  {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report " + path.string());
    out << "method,dataset,E_vl,E_ve\n";
    for (const auto& r : rows) out << r.method << ',' << r.dataset << ',' << format3(r.e_vl) << ',' << format3(r.e_ve) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
  }
  std::ofstream out(series_path(path));
  if (!out) throw std::runtime_error("cannot write " + series_path(path).string());
  out << "method,frame,e_lip,e_eye\n";
  char buf[96];
  for (const auto& r : rows) {
    const std::size_t n = std::max(r.lip_series.size(), r.eye_series.size());
    for (std::size_t i = 0; i < n; ++i) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      std::snprintf(buf, sizeof buf, "%.6f,%.6f", i < r.lip_series.size() ? r.lip_series[i] : nan,
                    i < r.eye_series.size() ? r.eye_series[i] : nan);
      out << r.method << ',' << i << ',' << buf << '\n';
    }
  }
}

}  // namespace hava::eval
