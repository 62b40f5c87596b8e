#pragma once

// File formats:
//   PPM  binary P6, maxval 255, RGB.
//   PFM  "Pf" grayscale float map, rows stored bottom to top. Written
//        little-endian (scale -1.0); big-endian files are readable.
//   PGM  P5 tone-mapped depth visualization (export only).
//   Checkpoint  ASCII manifest terminated by a blank line, followed by the
//        raw little-endian float32 payload in manifest order:
//
//          PANODEPTH-CHECKPOINT
//          version 1
//          phase fused
//          meta <key> <value>        (zero or more)
//          tensor <name> <dim>...    (one per tensor)
//          <blank line>
//          <payload>
//   Run config  `key = value` lines, `#` starts a comment.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "panodepth/image.hpp"

namespace pano {

Panorama read_ppm(const std::filesystem::path& path);
void write_ppm(const Panorama& pano, const std::filesystem::path& path);

Panorama read_pfm(const std::filesystem::path& path,
                  PanoramaKind kind = PanoramaKind::depth);
void write_pfm(const Panorama& pano, const std::filesystem::path& path);

// Grayscale rendering of a depth map: near is dark, far is light. Invalid
// pixels are written as 0. `max_depth <= 0` scales to the largest valid depth.
void write_depth_pgm(const Panorama& depth, const std::filesystem::path& path,
                     double max_depth = 0.0);

// Byte-level codecs behind the file functions.
std::vector<std::uint8_t> encode_ppm(const Panorama& pano);
Panorama decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_pfm(const Panorama& pano);
Panorama decode_pfm(const std::vector<std::uint8_t>& bytes,
                    PanoramaKind kind = PanoramaKind::depth);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::vector<std::uint8_t>& bytes,
                 const std::filesystem::path& path);

enum class TrainingPhase { untrained, unsupervised, supervised, fused };
std::string to_string(TrainingPhase phase);
TrainingPhase phase_from_string(const std::string& s);

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

struct Checkpoint {
  static constexpr int kVersion = 1;
  int version = kVersion;
  TrainingPhase phase = TrainingPhase::untrained;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<NamedTensor> tensors;

  const std::string* find_meta(const std::string& key) const;
  const NamedTensor* find_tensor(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct RunConfig {
  double learning_rate = 1e-4;
  int batch_size = 2;
  int epochs = 20;
  double lambda_smooth = 1.0;
  double depth_cap = 20.0;  // meters
  std::uint64_t seed = 0;
  // Plateau rule: relative epoch-loss improvement below `plateau_tolerance`
  // for `plateau_patience` consecutive epochs.
  double plateau_tolerance = 0.01;
  int plateau_patience = 3;
  // Network shape.
  std::vector<int> encoder_channels = {16, 32, 64, 128};
  int su_channels = 128;
  double d_max = 0.5;  // radians
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::filesystem::path& path);

}  // namespace pano
