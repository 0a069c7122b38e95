// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hava/mesh.hpp"

namespace hava::eval {

/// Euclidean distance per vertex (mm).
std::vector<double> per_vertex_error(const Matrix& y, const Matrix& y_hat);

struct RegionalResult {
  double value = 0.0;             // mean over frames of per_frame
  std::vector<double> per_frame;  // max over masked vertices
};

/// Mean over frames of the largest masked per-vertex error. `squared` uses
/// squared distances instead.
RegionalResult regional_metric(std::span<const Matrix> gt, std::span<const Matrix> pred, const mesh::RegionMask& mask,
                               bool squared = false);

struct ReportRow {
  std::string method;
  std::string dataset;
  double e_vl = 0.0;
  double e_ve = 0.0;
  std::vector<double> lip_series;
  std::vector<double> eye_series;
};

/// Rounds half away from zero to three decimals.
double round3(double v);
std::string format3(double v);

/// Writes `method,dataset,E_vl,E_ve` to `path` and a per-frame series file
/// `<stem>_series.csv` (method,frame,e_lip,e_eye) next to it.
void emit_report(std::span<const ReportRow> rows, const std::filesystem::path& path);
std::filesystem::path series_path(const std::filesystem::path& report);

}  // namespace hava::eval
