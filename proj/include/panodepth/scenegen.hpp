#pragma once

// Procedural indoor scenes rendered as equirectangular stereo pairs with
// analytic depth. World axes: +x right, +y down, +z forward; the room floor
// is the plane y = room.max().y(). A rig's second (bottom) camera sits at
// camera + (0, baseline, 0).

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "panodepth/geometry.hpp"
#include "panodepth/image.hpp"

namespace pano {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SceneObject {
  enum class Shape { box, sphere };
  Shape shape = Shape::box;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_extent = Eigen::Vector3d::Constant(0.25);  // box only
  double radius = 0.25;                                           // sphere only
  Eigen::Vector3d albedo = Eigen::Vector3d::Constant(0.5);

  Eigen::AlignedBox3d bounds() const;
  bool contains(const Eigen::Vector3d& p, double margin = 0.0) const;
};

struct WallTexture {
  enum class Pattern { checker, stripes };
  Pattern pattern = Pattern::checker;
  double period = 0.5;  // meters
  Eigen::Vector3d albedo_a{0.85, 0.80, 0.72};
  Eigen::Vector3d albedo_b{0.35, 0.38, 0.45};
  // Multiplicative value noise applied to every surface so matching has
  // texture inside the pattern cells.
  double noise_period = 0.09;
  double noise_amplitude = 0.35;
};

struct PointLight {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double intensity = 1.0;
};

struct SceneSpec {
  Eigen::AlignedBox3d room;
  std::vector<SceneObject> objects;
  PointLight light;
  WallTexture texture;
  Eigen::Vector3d camera = Eigen::Vector3d::Zero();  // top camera position
  std::uint64_t seed = 0;
};

struct SceneParams {
  Eigen::Vector2d room_width{4.0, 7.0};   // x extent range, meters
  Eigen::Vector2d room_depth{4.0, 7.0};   // z extent range
  Eigen::Vector2d room_height{2.6, 3.2};  // y extent range
  Eigen::Vector2d camera_height{1.3, 1.7};  // top camera above the floor
  int min_objects = 2;
  int max_objects = 5;
  double min_object_size = 0.3;  // full edge length / diameter
  double max_object_size = 1.0;
  double camera_clearance = 0.5;  // object distance to either camera
  double baseline = 0.26;         // bottom camera must be valid too
  int max_retries = 1000;
};

struct RenderOptions {
  int supersample = 3;  // per axis; depth always comes from the pixel center
};

struct RenderResult {
  Panorama rgb;
  Panorama depth;
};

struct StereoSample {
  Panorama top_rgb;
  Panorama bottom_rgb;
  Panorama top_depth;
  Panorama gt_disparity;
  RigConfig rig;
};

SceneSpec generate_scene(std::uint64_t seed, const SceneParams& params = {});

// Checks the scene invariants for a rig with the given baseline; throws
// GenerationError naming the violated one.
void validate_scene(const SceneSpec& scene, double baseline);

// Nearest hit distance along a unit direction, or +inf when nothing is hit.
double cast_ray(const SceneSpec& scene, const Eigen::Vector3d& origin,
                const Eigen::Vector3d& dir);

// Unit view direction for continuous pixel coordinates.
Eigen::Vector3d pixel_direction(double x, double y, const RigConfig& rig);

RenderResult render_equirect(const SceneSpec& scene, const Eigen::Vector3d& camera,
                             const RigConfig& rig, const RenderOptions& options = {});

StereoSample render_stereo_sample(const SceneSpec& scene, const RigConfig& rig,
                                  const RenderOptions& options = {});

struct ManifestEntry {
  std::string id;  // zero-padded index
  std::uint64_t seed = 0;
  std::string top, bottom, depth, disparity;  // file names
  RigConfig rig;
};

// Writes NNNN_top.ppm, NNNN_bottom.ppm, NNNN_depth.pfm, NNNN_disp.pfm and
// manifest.txt (one line per sample) into out_dir.
std::vector<ManifestEntry> make_dataset(std::uint64_t seed, int count,
                                        const RigConfig& rig, const SceneParams& params,
                                        const std::filesystem::path& out_dir,
                                        const RenderOptions& options = {});

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);
std::string format_manifest_line(const ManifestEntry& e);

}  // namespace pano
