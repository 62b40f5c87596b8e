#pragma once

#include <string>

#include "panodepth/image.hpp"

namespace pano {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct MetricsReport {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double acc_1 = 0.0;  // max(p/g, g/p) < 1.25
  double acc_2 = 0.0;  // < 1.25^2
  double acc_3 = 0.0;  // < 1.25^3
  long valid_pixel_count = 0;

  std::string table() const;    // header + one row, aligned
  std::string table_row(const std::string& label) const;
  static std::string table_header();
  std::string to_text() const;  // key=value lines
};

// gt and pred both in (0, cap].
Mask valid_mask(const Image& gt, const Image& pred, double cap = 20.0);

// Throws DataError when no pixel is valid.
MetricsReport compute_metrics(const Image& pred, const Image& gt, double cap = 20.0);
MetricsReport compute_metrics(const Panorama& pred, const Panorama& gt, double cap = 20.0);

}  // namespace pano
