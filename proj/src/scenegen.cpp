#include "panodepth/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "panodepth/errors.hpp"
#include "panodepth/io.hpp"
#include "panodepth/random.hpp"

namespace pano {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kHitEpsilon = 1e-9;

struct Hit {
  double t = kInf;
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  Eigen::Vector3d albedo = Eigen::Vector3d::Zero();
  bool wall = false;
};

// Slab test from outside the box.
double intersect_box(const Eigen::AlignedBox3d& box, const Eigen::Vector3d& o,
                     const Eigen::Vector3d& d, Eigen::Vector3d* normal) {
  double t_near = -kInf, t_far = kInf;
  int axis = -1;
  double sign = 0.0;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-300) {
      if (o[i] < box.min()[i] || o[i] > box.max()[i]) return kInf;
      continue;
    }
    double t0 = (box.min()[i] - o[i]) / d[i];
    double t1 = (box.max()[i] - o[i]) / d[i];
    double s = -1.0;
    if (t0 > t1) {
      std::swap(t0, t1);
      s = 1.0;
    }
    if (t0 > t_near) {
      t_near = t0;
      axis = i;
      sign = s;
    }
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || t_near <= kHitEpsilon || axis < 0) return kInf;
  if (normal) {
    normal->setZero();
    (*normal)[axis] = sign;
  }
  return t_near;
}

double intersect_sphere(const Eigen::Vector3d& c, double r, const Eigen::Vector3d& o,
                        const Eigen::Vector3d& d) {
  const Eigen::Vector3d oc = o - c;
  const double b = oc.dot(d);
  const double disc = b * b - (oc.squaredNorm() - r * r);
  if (disc < 0) return kInf;
  const double sq = std::sqrt(disc);
  const double t = -b - sq;
  if (t > kHitEpsilon) return t;
  return kInf;
}

// Exit distance from inside the room box.
double intersect_room(const Eigen::AlignedBox3d& room, const Eigen::Vector3d& o,
                      const Eigen::Vector3d& d, Eigen::Vector3d* normal) {
  double best = kInf;
  int axis = 0;
  double sign = 0.0;
  for (int i = 0; i < 3; ++i) {
    if (d[i] > 0) {
      const double t = (room.max()[i] - o[i]) / d[i];
      if (t < best) {
        best = t;
        axis = i;
        sign = -1.0;
      }
    } else if (d[i] < 0) {
      const double t = (room.min()[i] - o[i]) / d[i];
      if (t < best) {
        best = t;
        axis = i;
        sign = 1.0;
      }
    }
  }
  if (normal) {
    normal->setZero();
    (*normal)[axis] = sign;
  }
  return best;
}

double lattice_value(std::int64_t x, std::int64_t y, std::int64_t z, std::uint64_t seed) {
  std::uint64_t h = mix_seed(seed ^ static_cast<std::uint64_t>(x) * 0x9e3779b97f4a7c15ull);
  h = mix_seed(h ^ static_cast<std::uint64_t>(y) * 0xc2b2ae3d27d4eb4full);
  h = mix_seed(h ^ static_cast<std::uint64_t>(z) * 0x165667b19e3779f9ull);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Trilinear value noise in [0, 1] with smoothstep weights.
double value_noise(const Eigen::Vector3d& p, std::uint64_t seed) {
  const Eigen::Vector3d f = p.array().floor();
  const Eigen::Vector3d u = p - f;
  const Eigen::Vector3d s = u.array() * u.array() * (3.0 - 2.0 * u.array());
  const auto ix = static_cast<std::int64_t>(f.x());
  const auto iy = static_cast<std::int64_t>(f.y());
  const auto iz = static_cast<std::int64_t>(f.z());
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? s.x() : 1 - s.x()) * (dy ? s.y() : 1 - s.y()) *
                         (dz ? s.z() : 1 - s.z());
        acc += w * lattice_value(ix + dx, iy + dy, iz + dz, seed);
      }
  return acc;
}

Eigen::Vector3d surface_albedo(const SceneSpec& scene, const Hit& hit,
                               const Eigen::Vector3d& p) {
  const WallTexture& tex = scene.texture;
  Eigen::Vector3d base = hit.albedo;
  if (hit.wall) {
    // Pattern coordinates exclude the axis along the wall normal.
    long cells = 0;
    for (int i = 0; i < 3; ++i) {
      if (hit.normal[i] != 0.0) continue;
      if (tex.pattern == WallTexture::Pattern::stripes && i == 1) continue;
      cells += static_cast<long>(std::floor(p[i] / tex.period));
    }
    base = (cells & 1) ? tex.albedo_b : tex.albedo_a;
  }
  const double n = 0.65 * value_noise(p / tex.noise_period, scene.seed) +
                   0.35 * value_noise(p / (0.37 * tex.noise_period), scene.seed + 17);
  return base * (1.0 + tex.noise_amplitude * (2.0 * n - 1.0));
}

Hit trace(const SceneSpec& scene, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  Hit hit;
  Eigen::Vector3d n;
  hit.t = intersect_room(scene.room, o, d, &n);
  hit.normal = n;
  hit.wall = true;
  for (const auto& obj : scene.objects) {
    if (obj.shape == SceneObject::Shape::box) {
      const double t = intersect_box(obj.bounds(), o, d, &n);
      if (t < hit.t) {
        hit = {t, n, obj.albedo, false};
      }
    } else {
      const double t = intersect_sphere(obj.center, obj.radius, o, d);
      if (t < hit.t) {
        hit = {t, (o + t * d - obj.center).normalized(), obj.albedo, false};
      }
    }
  }
  return hit;
}

Eigen::Vector3d shade(const SceneSpec& scene, const Eigen::Vector3d& o,
                      const Eigen::Vector3d& d) {
  const Hit hit = trace(scene, o, d);
  if (!std::isfinite(hit.t)) return Eigen::Vector3d::Zero();
  const Eigen::Vector3d p = o + hit.t * d;
  const Eigen::Vector3d to_light = scene.light.position - p;
  const double dist2 = to_light.squaredNorm();
  const double lambert = std::max(0.0, hit.normal.dot(to_light / std::sqrt(dist2)));
  const double light = 0.35 + 0.65 * scene.light.intensity * lambert / (1.0 + 0.05 * dist2);
  return (surface_albedo(scene, hit, p) * light).cwiseMax(0.0).cwiseMin(1.0);
}

std::string pad_index(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", i);
  return buf;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Eigen::AlignedBox3d SceneObject::bounds() const {
  if (shape == Shape::sphere) {
    const Eigen::Vector3d r = Eigen::Vector3d::Constant(radius);
    return {center - r, center + r};
  }
  return {center - half_extent, center + half_extent};
}

bool SceneObject::contains(const Eigen::Vector3d& p, double margin) const {
  if (shape == Shape::sphere) return (p - center).norm() < radius + margin;
  return ((p - center).cwiseAbs().array() < (half_extent.array() + margin)).all();
}

void validate_scene(const SceneSpec& scene, double baseline) {
  const Eigen::Vector3d bottom = scene.camera + Eigen::Vector3d(0, baseline, 0);
  for (const auto& cam : {scene.camera, bottom}) {
    if (!((cam.array() > scene.room.min().array()).all() &&
          (cam.array() < scene.room.max().array()).all()))
      throw GenerationError("scene: camera position not strictly inside the room");
    for (const auto& obj : scene.objects)
      if (obj.contains(cam)) throw GenerationError("scene: camera inside an object");
  }
  for (const auto& obj : scene.objects)
    if (!scene.room.contains(obj.bounds()))
      throw GenerationError("scene: object extends outside the room");
}

SceneSpec generate_scene(std::uint64_t seed, const SceneParams& params) {
  if (params.min_objects < 0 || params.max_objects < params.min_objects)
    throw std::invalid_argument("scene params: bad object count range");
  if (!(params.min_object_size > 0 && params.max_object_size >= params.min_object_size))
    throw std::invalid_argument("scene params: bad object size range");

  Rng rng(seed);
  SceneSpec s;
  s.seed = seed;
  const double w = rng.uniform(params.room_width[0], params.room_width[1]);
  const double d = rng.uniform(params.room_depth[0], params.room_depth[1]);
  const double h = rng.uniform(params.room_height[0], params.room_height[1]);
  s.room = Eigen::AlignedBox3d(Eigen::Vector3d(-w / 2, -h, -d / 2),
                               Eigen::Vector3d(w / 2, 0.0, d / 2));

  const double cam_h = std::min(rng.uniform(params.camera_height[0], params.camera_height[1]),
                                h - 0.2);
  s.camera = {rng.uniform(-w / 4, w / 4), -cam_h, rng.uniform(-d / 4, d / 4)};
  s.light.position = {rng.uniform(-w / 3, w / 3), -h + 0.3, rng.uniform(-d / 3, d / 3)};
  s.light.intensity = rng.uniform(0.8, 1.2);

  s.texture.pattern = rng.uniform() < 0.5 ? WallTexture::Pattern::checker
                                          : WallTexture::Pattern::stripes;
  s.texture.albedo_a = Eigen::Vector3d(rng.uniform(0.6, 0.9), rng.uniform(0.6, 0.9),
                                       rng.uniform(0.6, 0.9));
  s.texture.albedo_b = Eigen::Vector3d(rng.uniform(0.2, 0.45), rng.uniform(0.2, 0.45),
                                       rng.uniform(0.2, 0.45));

  const int n_objects = rng.uniform_int(params.min_objects, params.max_objects);
  for (int i = 0; i < n_objects; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < params.max_retries && !placed; ++attempt) {
      SceneObject obj;
      obj.albedo = Eigen::Vector3d(rng.uniform(0.15, 0.95), rng.uniform(0.15, 0.95),
                                   rng.uniform(0.15, 0.95));
      if (rng.uniform() < 0.6) {
        obj.shape = SceneObject::Shape::box;
        obj.half_extent = Eigen::Vector3d(
                              rng.uniform(params.min_object_size, params.max_object_size),
                              rng.uniform(params.min_object_size, params.max_object_size),
                              rng.uniform(params.min_object_size, params.max_object_size)) /
                          2;
        // Boxes rest on the floor.
        obj.center = {rng.uniform(-w / 2, w / 2), -obj.half_extent.y(),
                      rng.uniform(-d / 2, d / 2)};
      } else {
        obj.shape = SceneObject::Shape::sphere;
        obj.radius = rng.uniform(params.min_object_size, params.max_object_size) / 2;
        obj.center = {rng.uniform(-w / 2, w / 2), rng.uniform(-h, 0.0),
                      rng.uniform(-d / 2, d / 2)};
      }
      if (!s.room.contains(obj.bounds())) continue;
      const Eigen::Vector3d bottom = s.camera + Eigen::Vector3d(0, params.baseline, 0);
      if (obj.contains(s.camera, params.camera_clearance) ||
          obj.contains(bottom, params.camera_clearance))
        continue;
      bool overlaps = false;
      for (const auto& other : s.objects)
        if (!obj.bounds().intersection(other.bounds()).isEmpty()) overlaps = true;
      if (overlaps) continue;
      s.objects.push_back(obj);
      placed = true;
    }
    if (!placed)
      throw GenerationError("generate_scene: retry budget exhausted placing object " +
                            std::to_string(i));
  }
  validate_scene(s, params.baseline);
  return s;
}

double cast_ray(const SceneSpec& scene, const Eigen::Vector3d& origin,
                const Eigen::Vector3d& dir) {
  return trace(scene, origin, dir).t;
}

Eigen::Vector3d pixel_direction(double x, double y, const RigConfig& rig) {
  const Eigen::Vector2d ll = pixel_to_lonlat(x, y, rig);
  const double cl = std::cos(ll.y());
  return {cl * std::sin(ll.x()), std::sin(ll.y()), cl * std::cos(ll.x())};
}

RenderResult render_equirect(const SceneSpec& scene, const Eigen::Vector3d& camera,
                             const RigConfig& rig, const RenderOptions& options) {
  rig.validate();
  if (options.supersample < 1) throw std::invalid_argument("render: supersample must be >= 1");
  RenderResult out{Panorama(PanoramaKind::rgb, rig.width, rig.height),
                   Panorama(PanoramaKind::depth, rig.width, rig.height)};
  const int ss = options.supersample;
  for (int y = 0; y < rig.height; ++y) {
    for (int x = 0; x < rig.width; ++x) {
      const Eigen::Vector3d center_dir = pixel_direction(x + 0.5, y + 0.5, rig);
      const double t = cast_ray(scene, camera, center_dir);
      out.depth.plane(0)(y, x) = std::isfinite(t) ? static_cast<float>(t) : 0.f;
      Eigen::Vector3d color = Eigen::Vector3d::Zero();
      for (int j = 0; j < ss; ++j)
        for (int i = 0; i < ss; ++i)
          color += shade(scene, camera,
                         pixel_direction(x + (i + 0.5) / ss, y + (j + 0.5) / ss, rig));
      color /= ss * ss;
      for (int c = 0; c < 3; ++c) out.rgb.plane(c)(y, x) = static_cast<float>(color[c]);
    }
  }
  return out;
}

StereoSample render_stereo_sample(const SceneSpec& scene, const RigConfig& rig,
                                  const RenderOptions& options) {
  validate_scene(scene, rig.baseline);
  StereoSample s;
  s.rig = rig;
  auto top = render_equirect(scene, scene.camera, rig, options);
  const Eigen::Vector3d bottom_cam = scene.camera + Eigen::Vector3d(0, rig.baseline, 0);
  s.bottom_rgb = render_equirect(scene, bottom_cam, rig, options).rgb;
  s.top_rgb = std::move(top.rgb);
  s.top_depth = std::move(top.depth);
  const AngleMatrix angles = angle_matrix(rig);
  s.gt_disparity = Panorama::from_image(
      PanoramaKind::disparity, depth_map_to_disparity(s.top_depth.plane(0), angles, rig));
  return s;
}

std::string format_manifest_line(const ManifestEntry& e) {
  return "id=" + e.id + " seed=" + std::to_string(e.seed) + " top=" + e.top +
         " bottom=" + e.bottom + " depth=" + e.depth + " disp=" + e.disparity +
         " baseline=" + fmt_double(e.rig.baseline) + " width=" +
         std::to_string(e.rig.width) + " height=" + std::to_string(e.rig.height) +
         " fov_w=" + fmt_double(e.rig.fov_w) + " fov_h=" + fmt_double(e.rig.fov_h);
}

std::vector<ManifestEntry> make_dataset(std::uint64_t seed, int count, const RigConfig& rig,
                                        const SceneParams& params,
                                        const std::filesystem::path& out_dir,
                                        const RenderOptions& options) {
  if (count < 1) throw std::invalid_argument("make_dataset: count must be >= 1");
  rig.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("make_dataset: cannot create '" + out_dir.string() + "'");

  SceneParams p = params;
  p.baseline = rig.baseline;
  std::vector<ManifestEntry> entries;
  std::string manifest;
  for (int i = 0; i < count; ++i) {
    ManifestEntry e;
    e.id = pad_index(i);
    e.seed = mix_seed(seed * 0x100000001b3ull + static_cast<std::uint64_t>(i));
    e.top = e.id + "_top.ppm";
    e.bottom = e.id + "_bottom.ppm";
    e.depth = e.id + "_depth.pfm";
    e.disparity = e.id + "_disp.pfm";
    e.rig = rig;
    const StereoSample s = render_stereo_sample(generate_scene(e.seed, p), rig, options);
    write_ppm(s.top_rgb, out_dir / e.top);
    write_ppm(s.bottom_rgb, out_dir / e.bottom);
    write_pfm(s.top_depth, out_dir / e.depth);
    write_pfm(s.gt_disparity, out_dir / e.disparity);
    manifest += format_manifest_line(e) + "\n";
    entries.push_back(std::move(e));
  }
  std::ofstream out(out_dir / "manifest.txt", std::ios::binary | std::ios::trunc);
  out << manifest;
  if (!out) throw DataError("make_dataset: cannot write manifest");
  return entries;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw DataError("no manifest.txt in '" + dir.string() + "'");
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ManifestEntry e;
    std::istringstream ls(line);
    std::string field;
    int seen = 0;
    try {
      while (ls >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw ParseError("manifest: expected key=value", line_no);
        const std::string k = field.substr(0, eq), v = field.substr(eq + 1);
        ++seen;
        if (k == "id") e.id = v;
        else if (k == "seed") e.seed = std::stoull(v);
        else if (k == "top") e.top = v;
        else if (k == "bottom") e.bottom = v;
        else if (k == "depth") e.depth = v;
        else if (k == "disp") e.disparity = v;
        else if (k == "baseline") e.rig.baseline = std::stod(v);
        else if (k == "width") e.rig.width = std::stoi(v);
        else if (k == "height") e.rig.height = std::stoi(v);
        else if (k == "fov_w") e.rig.fov_w = std::stod(v);
        else if (k == "fov_h") e.rig.fov_h = std::stod(v);
        else { --seen; throw ParseError("manifest: unknown key '" + k + "'", line_no); }
      }
    } catch (const std::logic_error&) {
      throw ParseError("manifest: bad numeric field", line_no);
    }
    if (seen != 11) throw ParseError("manifest: incomplete entry", line_no);
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace pano
