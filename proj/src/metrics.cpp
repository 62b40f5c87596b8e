#include "panodepth/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "panodepth/errors.hpp"

namespace pano {

Mask valid_mask(const Image& gt, const Image& pred, double cap) {
  if (gt.rows() != pred.rows() || gt.cols() != pred.cols())
    throw DataError("valid_mask: prediction and ground truth differ in size");
  const float c = static_cast<float>(cap);
  return (gt > 0.0f) && (gt <= c) && (pred > 0.0f) && (pred <= c);
}

MetricsReport compute_metrics(const Image& pred, const Image& gt, double cap) {
  const Mask mask = valid_mask(gt, pred, cap);
  MetricsReport r;
  double abs_rel = 0, sq_rel = 0, sq = 0, sq_log = 0;
  long a1 = 0, a2 = 0, a3 = 0;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    if (!mask.data()[i]) continue;
    const double p = pred.data()[i], g = gt.data()[i];
    const double e = p - g;
    abs_rel += std::abs(e) / g;
    sq_rel += e * e / g;
    sq += e * e;
    const double l = std::log(p) - std::log(g);
    sq_log += l * l;
    const double ratio = std::max(p / g, g / p);
    a1 += ratio < 1.25;
    a2 += ratio < 1.25 * 1.25;
    a3 += ratio < 1.25 * 1.25 * 1.25;
    ++r.valid_pixel_count;
  }
  if (r.valid_pixel_count == 0) throw DataError("compute_metrics: no valid pixels");
  const double n = static_cast<double>(r.valid_pixel_count);
  r.abs_rel = abs_rel / n;
  r.sq_rel = sq_rel / n;
  r.rmse = std::sqrt(sq / n);
  r.rmse_log = std::sqrt(sq_log / n);
  r.acc_1 = a1 / n;
  r.acc_2 = a2 / n;
  r.acc_3 = a3 / n;
  return r;
}

MetricsReport compute_metrics(const Panorama& pred, const Panorama& gt, double cap) {
  if (pred.channels() != 1 || gt.channels() != 1)
    throw DataError("compute_metrics: expected single-channel depth maps");
  return compute_metrics(pred.plane(), gt.plane(), cap);
}

std::string MetricsReport::table_header() {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s %9s %9s %9s %9s %9s %9s %9s\n", "", "abs_rel", "sq_rel",
                "rmse", "rmse_log", "d<1.25", "d<1.25^2", "d<1.25^3");
  return buf;
}

std::string MetricsReport::table_row(const std::string& label) const {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-14s %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f\n",
                label.c_str(), abs_rel, sq_rel, rmse, rmse_log, acc_1, acc_2, acc_3);
  return buf;
}

std::string MetricsReport::table() const { return table_header() + table_row("result"); }

std::string MetricsReport::to_text() const {
  char buf[400];
  std::snprintf(buf, sizeof buf,
                "abs_rel=%.9g\nsq_rel=%.9g\nrmse=%.9g\nrmse_log=%.9g\nacc_1=%.9g\nacc_2=%.9g\n"
                "acc_3=%.9g\nvalid_pixel_count=%ld\n",
                abs_rel, sq_rel, rmse, rmse_log, acc_1, acc_2, acc_3, valid_pixel_count);
  return buf;
}

}  // namespace pano
