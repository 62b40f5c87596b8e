#pragma once

// Global median anchoring of network depth to SGM depth.

#include <string>
#include <utility>

#include "panodepth/image.hpp"

namespace pano {

enum class FusionMode {
  anchor_to_sgm,  // depth * median_sgm / median_network
  ratio_literal,  // depth * median_network / median_sgm
};

std::string to_string(FusionMode mode);
// Accepts "anchor", "anchor_to_sgm", "ratio", "ratio_literal".
FusionMode fusion_mode_from_string(const std::string& s);

struct FusionReport {
  double median_network = 0.0;
  double median_sgm = 0.0;
  double scale = 1.0;
  long valid_network = 0;
  long valid_sgm = 0;
  FusionMode mode = FusionMode::anchor_to_sgm;

  // One key=value pair per line.
  std::string to_text() const;
};

// Lower median of the pixels with 0 < depth <= cap. Throws DataError when
// there are none.
double median_valid(const Image& depth, double cap = 20.0, long* count = nullptr);
double median_valid(const Panorama& depth, double cap = 20.0, long* count = nullptr);

// Invalid network pixels stay 0; SGM only contributes its median.
std::pair<Panorama, FusionReport> fuse(const Panorama& network_depth, const Panorama& sgm_depth,
                                       double cap = 20.0,
                                       FusionMode mode = FusionMode::anchor_to_sgm);

}  // namespace pano
