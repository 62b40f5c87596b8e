#include "panodepth/fusion.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "panodepth/errors.hpp"

namespace pano {

std::string to_string(FusionMode mode) {
  return mode == FusionMode::anchor_to_sgm ? "anchor_to_sgm" : "ratio_literal";
}

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "anchor" || s == "anchor_to_sgm") return FusionMode::anchor_to_sgm;
  if (s == "ratio" || s == "ratio_literal") return FusionMode::ratio_literal;
  throw std::invalid_argument("unknown fusion mode '" + s + "'");
}

std::string FusionReport::to_text() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "mode=%s\nmedian_network=%.9g\nmedian_sgm=%.9g\nscale=%.9g\n"
                "valid_network=%ld\nvalid_sgm=%ld\n",
                to_string(mode).c_str(), median_network, median_sgm, scale, valid_network,
                valid_sgm);
  return buf;
}

double median_valid(const Image& depth, double cap, long* count) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(depth.size()));
  for (Eigen::Index i = 0; i < depth.size(); ++i) {
    const double d = depth.data()[i];
    if (d > 0 && d <= cap) v.push_back(d);
  }
  if (v.empty()) throw DataError("median_valid: no valid depth pixels");
  if (count) *count = static_cast<long>(v.size());
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

double median_valid(const Panorama& depth, double cap, long* count) {
  if (depth.channels() != 1) throw DataError("median_valid: expected a single-channel map");
  return median_valid(depth.plane(), cap, count);
}

std::pair<Panorama, FusionReport> fuse(const Panorama& network_depth, const Panorama& sgm_depth,
                                       double cap, FusionMode mode) {
  if (!network_depth.same_shape(sgm_depth))
    throw DataError("fuse: network and SGM maps differ in size");
  FusionReport r;
  r.mode = mode;
  r.median_network = median_valid(network_depth, cap, &r.valid_network);
  r.median_sgm = median_valid(sgm_depth, cap, &r.valid_sgm);
  r.scale = mode == FusionMode::anchor_to_sgm ? r.median_sgm / r.median_network
                                              : r.median_network / r.median_sgm;
  Panorama out = network_depth;
  out.kind = PanoramaKind::depth;
  Image& p = out.plane();
  for (Eigen::Index i = 0; i < p.size(); ++i)
    p.data()[i] = p.data()[i] > 0 ? static_cast<float>(p.data()[i] * r.scale) : 0.0f;
  return {std::move(out), r};
}

}  // namespace pano
