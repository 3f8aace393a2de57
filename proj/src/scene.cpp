#include "stereovox/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "stereovox/io.hpp"

namespace svx {

using nlohmann::json;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined state
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

namespace {

constexpr double kHitEps = 1e-9;
constexpr int kSuperSample = 3;
constexpr double kObstacleTextureCell = 0.4;
constexpr double kBackdropTextureCell = 1.5;

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal;
  std::uint64_t texture_seed = 0;
  double texture_cell = kObstacleTextureCell;
};

Vec3 add(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 sub(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 scale(const Vec3& a, double s) { return {a.x * s, a.y * s, a.z * s}; }
double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

double hash_unit(std::uint64_t seed, std::int64_t x, std::int64_t y, std::int64_t z) {
  std::uint64_t h = mix_seed(seed, static_cast<std::uint64_t>(x));
  h = mix_seed(h, static_cast<std::uint64_t>(y));
  h = mix_seed(h, static_cast<std::uint64_t>(z));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

// Trilinear value noise on an integer lattice, in [0, 1].
double value_noise(std::uint64_t seed, const Vec3& p) {
  const double fx = std::floor(p.x), fy = std::floor(p.y), fz = std::floor(p.z);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy),
             iz = static_cast<std::int64_t>(fz);
  const double tx = smooth(p.x - fx), ty = smooth(p.y - fy), tz = smooth(p.z - fz);
  double acc = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    const double w = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty) * (dz ? tz : 1 - tz);
    acc += w * hash_unit(seed, ix + dx, iy + dy, iz + dz);
  }
  return acc;
}

double albedo(const Hit& h, const Vec3& p) {
  const Vec3 q = scale(p, 1.0 / h.texture_cell);
  const double n = 0.65 * value_noise(h.texture_seed, q) + 0.35 * value_noise(h.texture_seed ^ 0x5bd1e995ULL, scale(q, 2.0));
  // stretch the noise histogram towards the full range
  return std::clamp(0.5 + 1.8 * (n - 0.5), 0.02, 0.98);
}

const Vec3 kLight = [] {
  const Vec3 l{-0.4, 0.7, -0.6};
  return scale(l, 1.0 / std::sqrt(dot(l, l)));
}();

double shade(const Hit& h, const Vec3& p) {
  const double lambert = std::max(0.0, dot(h.normal, kLight));
  return albedo(h, p) * (0.45 + 0.55 * lambert);
}

void intersect_box(const Obstacle& ob, const Vec3& o, const Vec3& d, Hit& best) {
  const double lo[3] = {ob.center.x - ob.size.x / 2, ob.center.y - ob.size.y / 2, ob.center.z - ob.size.z / 2};
  const double hi[3] = {ob.center.x + ob.size.x / 2, ob.center.y + ob.size.y / 2, ob.center.z + ob.size.z / 2};
  const double org[3] = {o.x, o.y, o.z};
  const double dir[3] = {d.x, d.y, d.z};
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int axis = -1;
  double sign = 0.0;
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (org[a] < lo[a] || org[a] > hi[a]) return;
      continue;
    }
    double t0 = (lo[a] - org[a]) / dir[a];
    double t1 = (hi[a] - org[a]) / dir[a];
    double s = -1.0;  // entering through the low face: outward normal is -axis
    if (t0 > t1) {
      std::swap(t0, t1);
      s = 1.0;
    }
    if (t0 > t_near) {
      t_near = t0;
      axis = a;
      sign = s;
    }
    t_far = std::min(t_far, t1);
  }
  if (axis < 0 || t_near > t_far || t_near <= kHitEps || t_near >= best.t) return;
  best.t = t_near;
  best.normal = {axis == 0 ? sign : 0.0, axis == 1 ? sign : 0.0, axis == 2 ? sign : 0.0};
  best.texture_seed = ob.texture_seed;
  best.texture_cell = kObstacleTextureCell;
}

void intersect_sphere(const Obstacle& ob, const Vec3& o, const Vec3& d, Hit& best) {
  const double r = ob.size.x / 2;
  const Vec3 oc = sub(o, ob.center);
  const double a = dot(d, d);
  const double b = dot(oc, d);
  const double c = dot(oc, oc) - r * r;
  const double disc = b * b - a * c;
  if (disc < 0.0) return;
  const double t = (-b - std::sqrt(disc)) / a;
  if (t <= kHitEps || t >= best.t) return;
  best.t = t;
  best.normal = scale(sub(add(o, scale(d, t)), ob.center), 1.0 / r);
  best.texture_seed = ob.texture_seed;
  best.texture_cell = kObstacleTextureCell;
}

// Rays have d.z == 1, so t is the depth along the optical axis.
Hit cast(const SceneSpec& s, const Vec3& o, const Vec3& d) {
  Hit best;
  for (const auto& ob : s.obstacles) {
    if (ob.kind == ObstacleKind::box)
      intersect_box(ob, o, d, best);
    else
      intersect_sphere(ob, o, d, best);
  }
  if (s.ground_plane && d.y < 0.0) {
    const double t = -o.y / d.y;
    if (t > kHitEps && t < best.t) {
      best.t = t;
      best.normal = {0.0, 1.0, 0.0};
      best.texture_seed = mix_seed(s.seed, 0x67726f756e64ULL);
      best.texture_cell = kObstacleTextureCell;
    }
  }
  const double tb = s.backdrop_depth_m - o.z;
  if (tb > kHitEps && tb < best.t) {
    best.t = tb;
    best.normal = {0.0, 0.0, -1.0};
    best.texture_seed = mix_seed(s.seed, 0x6261636bULL);
    best.texture_cell = kBackdropTextureCell;
  }
  return best;
}

Vec3 ray_dir(const CameraModel& cam, double u, double v) {
  return {(u - cam.cx) / cam.focal_length_px, -(v - cam.cy) / cam.focal_length_px, 1.0};
}

double sub_offset(int i) { return (i - (kSuperSample - 1) / 2.0) / kSuperSample; }

bool visible_from_left(const SceneSpec& s, const Vec3& p) {
  if (p.z <= kHitEps) return false;
  const auto& cam = s.camera;
  const double u = cam.cx + cam.focal_length_px * p.x / p.z;
  const double v = cam.cy - cam.focal_length_px * p.y / p.z;
  if (u < -0.5 || v < -0.5 || u > cam.image_width - 0.5 || v > cam.image_height - 0.5) return false;
  const Hit h = cast(s, {0, 0, 0}, scale(p, 1.0 / p.z));
  return h.t >= p.z * (1.0 - 1e-9);
}

}  // namespace

float render_left_pixel(const SceneSpec& s, double u, double v) {
  double acc = 0.0;
  for (int j = 0; j < kSuperSample; ++j)
    for (int i = 0; i < kSuperSample; ++i) {
      const Vec3 d = ray_dir(s.camera, u + sub_offset(i), v + sub_offset(j));
      const Hit h = cast(s, {0, 0, 0}, d);
      acc += shade(h, scale(d, h.t));
    }
  return static_cast<float>(acc / (kSuperSample * kSuperSample));
}

float render_right_pixel(const SceneSpec& s, double u, double v) {
  const Vec3 origin{s.camera.baseline_m, 0.0, 0.0};
  // one fresh-noise value per right pixel for half-occluded surfaces
  const double fill = hash_unit(mix_seed(s.seed, 0x6f63636cULL), std::llround(u * 16), std::llround(v * 16), 0);
  double acc = 0.0;
  for (int j = 0; j < kSuperSample; ++j)
    for (int i = 0; i < kSuperSample; ++i) {
      const Vec3 d = ray_dir(s.camera, u + sub_offset(i), v + sub_offset(j));
      const Hit h = cast(s, origin, d);
      const Vec3 p = add(origin, scale(d, h.t));
      acc += visible_from_left(s, p) ? shade(h, p) : fill;
    }
  return static_cast<float>(acc / (kSuperSample * kSuperSample));
}

SceneSpec retextured(SceneSpec spec, std::uint64_t salt) {
  spec.seed = mix_seed(spec.seed, salt);
  for (auto& ob : spec.obstacles) ob.texture_seed = mix_seed(ob.texture_seed, salt);
  return spec;
}

StereoSample render_scene(const SceneSpec& s) {
  s.camera.validate();
  s.grid.validate();
  const int W = s.camera.image_width, H = s.camera.image_height;
  StereoSample out;
  out.scene = s;
  out.left = Image<float>(W, H);
  out.right = Image<float>(W, H);
  out.gt_depth = DepthMap(W, H);
  double max_disp = 0.0;
  for (int v = 0; v < H; ++v)
    for (int u = 0; u < W; ++u) {
      const Hit h = cast(s, {0, 0, 0}, ray_dir(s.camera, u, v));
      out.gt_depth(u, v) = static_cast<float>(h.t);
      max_disp = std::max(max_disp, s.camera.disparity_of(h.t));
      out.left(u, v) = render_left_pixel(s, u, v);
      out.right(u, v) = render_right_pixel(s, u, v);
    }
  if (max_disp > W / 4.0)
    throw std::invalid_argument("scene max disparity " + std::to_string(max_disp) + " px exceeds image width / 4");
  out.gt_pyramid = ground_truth_pyramid(out.gt_depth, s.camera, s.grid, s.pyramid_levels);
  return out;
}

namespace {

bool obstacle_ok(const Obstacle& ob, const SceneDistribution& dist) {
  const auto& cam = dist.camera;
  const auto& g = dist.grid;
  const double half_z = ob.kind == ObstacleKind::box ? ob.size.z / 2 : ob.size.x / 2;
  const double half_x = ob.kind == ObstacleKind::box ? ob.size.x / 2 : ob.size.x / 2;
  const double front = ob.center.z - half_z;
  const double back = ob.center.z + half_z;
  const double nearest_allowed = std::max(dist.step_scale * g.voxel_size_m, cam.constant() / (cam.image_width / 4.0));
  if (front <= nearest_allowed * 1.02 || back >= g.z_max()) return false;
  const double sx = g.extents()[0] / 2;
  if (ob.center.x + half_x < -sx || ob.center.x - half_x > sx) return false;
  const double u = cam.cx + cam.focal_length_px * ob.center.x / ob.center.z;
  const double v = cam.cy - cam.focal_length_px * ob.center.y / ob.center.z;
  return u >= 0 && u < cam.image_width && v >= 0 && v < cam.image_height;
}

}  // namespace

SceneSpec sample_scene(const SceneDistribution& dist, std::uint64_t seed) {
  dist.camera.validate();
  dist.grid.validate();
  if (dist.min_obstacles < 0 || dist.max_obstacles < dist.min_obstacles)
    throw std::invalid_argument("bad obstacle count range");
  std::mt19937_64 rng(seed);
  SceneSpec s;
  s.seed = seed;
  s.camera = dist.camera;
  s.grid = dist.grid;
  s.pyramid_levels = dist.pyramid_levels;
  s.ground_plane = dist.ground_plane;
  s.backdrop_depth_m = 4.0 * dist.grid.z_max();

  const int n = dist.min_obstacles +
                static_cast<int>(uniform(rng, 0.0, 1.0) * (dist.max_obstacles - dist.min_obstacles + 1));
  const double half_w = dist.grid.extents()[0] / 2;
  for (int i = 0; i < n; ++i) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Obstacle ob;
      ob.kind = uniform(rng, 0.0, 1.0) < dist.sphere_probability ? ObstacleKind::sphere : ObstacleKind::box;
      if (ob.kind == ObstacleKind::box) {
        ob.size = {uniform(rng, dist.min_size_m, dist.max_size_m), uniform(rng, dist.min_size_m, dist.max_height_m),
                   uniform(rng, dist.min_size_m, dist.max_size_m)};
      } else {
        const double dia = uniform(rng, dist.min_size_m, dist.max_size_m);
        ob.size = {dia, dia, dia};
      }
      ob.center.x = uniform(rng, -dist.lateral_fraction * half_w, dist.lateral_fraction * half_w);
      ob.center.y = ob.size.y / 2;
      ob.center.z = uniform(rng, dist.min_center_depth_m, dist.max_depth_fraction * dist.grid.z_max());
      ob.texture_seed = rng();
      if (obstacle_ok(ob, dist)) {
        s.obstacles.push_back(ob);
        break;
      }
    }
  }
  return s;
}

namespace {

json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
Vec3 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

json to_json(const SceneSpec& s) {
  json obs = json::array();
  for (const auto& o : s.obstacles)
    obs.push_back({{"kind", o.kind == ObstacleKind::box ? "box" : "sphere"},
                   {"center", vec_json(o.center)},
                   {"size", vec_json(o.size)},
                   {"texture_seed", o.texture_seed}});
  return {{"seed", s.seed},
          {"obstacles", obs},
          {"ground_plane", s.ground_plane},
          {"camera", to_json(s.camera)},
          {"grid", to_json(s.grid)},
          {"pyramid_levels", s.pyramid_levels},
          {"backdrop_depth_m", s.backdrop_depth_m}};
}

SceneSpec scene_from_json(const json& j) {
  SceneSpec s;
  s.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& o : j.at("obstacles")) {
    Obstacle ob;
    const auto kind = o.at("kind").get<std::string>();
    if (kind != "box" && kind != "sphere") throw std::invalid_argument("unknown obstacle kind '" + kind + "'");
    ob.kind = kind == "box" ? ObstacleKind::box : ObstacleKind::sphere;
    ob.center = vec_from(o.at("center"));
    ob.size = vec_from(o.at("size"));
    ob.texture_seed = o.at("texture_seed").get<std::uint64_t>();
    s.obstacles.push_back(ob);
  }
  s.ground_plane = j.at("ground_plane").get<bool>();
  s.camera = camera_from_json(j.at("camera"));
  s.grid = grid_from_spec_json(j.at("grid"));
  s.pyramid_levels = j.at("pyramid_levels").get<int>();
  s.backdrop_depth_m = j.at("backdrop_depth_m").get<double>();
  return s;
}

json to_json(const SceneDistribution& d) {
  return {{"camera", to_json(d.camera)},
          {"grid", to_json(d.grid)},
          {"pyramid_levels", d.pyramid_levels},
          {"step_scale", d.step_scale},
          {"min_obstacles", d.min_obstacles},
          {"max_obstacles", d.max_obstacles},
          {"sphere_probability", d.sphere_probability},
          {"min_size_m", d.min_size_m},
          {"max_size_m", d.max_size_m},
          {"max_height_m", d.max_height_m},
          {"min_center_depth_m", d.min_center_depth_m},
          {"max_depth_fraction", d.max_depth_fraction},
          {"lateral_fraction", d.lateral_fraction},
          {"ground_plane", d.ground_plane}};
}

}  // namespace svx
