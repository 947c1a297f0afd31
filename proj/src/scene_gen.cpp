#include <algorithm>
#include <cmath>

#include "textloc/palette.hpp"
#include "textloc/rng.hpp"
#include "textloc/scene.hpp"

namespace textloc::scene {

namespace {

struct Frame {
  Vec2 pos;      // station position on the trajectory
  Vec2 tangent;  // unit tangent
  Vec2 normal;   // unit left normal
};

double polyline_length(const std::vector<Vec2>& poly) {
  double total = 0.0;
  for (std::size_t i = 1; i < poly.size(); ++i)
    total += dist2d(poly[i - 1], poly[i]);
  return total;
}

// Point and frame at arc length s along the polyline (clamped to the end).
Frame frame_at(const std::vector<Vec2>& poly, double s) {
  double walked = 0.0;
  for (std::size_t i = 1; i < poly.size(); ++i) {
    const double seg = dist2d(poly[i - 1], poly[i]);
    if (walked + seg >= s || i + 1 == poly.size()) {
      const double t = seg > 0.0 ? std::min(1.0, (s - walked) / seg) : 0.0;
      Vec2 d = (poly[i] - poly[i - 1]) * (seg > 0.0 ? 1.0 / seg : 0.0);
      return {poly[i - 1] + d * (t * seg), d, Vec2{-d.y, d.x}};
    }
    walked += seg;
  }
  return {poly.front(), {1.0, 0.0}, {0.0, 1.0}};
}

class Builder {
 public:
  Builder(const SceneConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), rng_(derive_seed(seed, "scene-gen")) {
    scene_.seed = seed;
    scene_.id = "scene-" + std::to_string(seed);
    scene_.extent = Rect{{0.0, 0.0}, {cfg.extent, cfg.extent}};
    scene_.registry = ClassRegistry::standard();
  }

  Scene build() {
    make_trajectory();
    for (std::size_t i = 1; i < scene_.trajectory.size(); ++i)
      paint_road_segment(scene_.trajectory[i - 1], scene_.trajectory[i]);
    place_stations();
    scatter_vegetation();
    paint_terrain();
    self_check();
    return std::move(scene_);
  }

 private:
  double jitter(double lo, double hi) {
    return cfg_.repetitive ? 0.5 * (lo + hi) : rng_.uniform(lo, hi);
  }

  int scaled(double base_count) {
    const int n = static_cast<int>(base_count * cfg_.density_factor + 0.5);
    return n < 8 ? 8 : n;
  }

  bool class_enabled(const std::string& name) const {
    const auto& v = cfg_.instance_classes;
    return std::find(v.begin(), v.end(), name) != v.end();
  }

  bool stuff_enabled(const std::string& name) const {
    const auto& v = cfg_.stuff_classes;
    return std::find(v.begin(), v.end(), name) != v.end();
  }

  Point colored_point(Vec3 p, const PaletteColor& c) {
    auto ch = [&](double v) {
      const double x = v + (cfg_.repetitive ? 0.0 : rng_.uniform(-0.04, 0.04));
      return std::max(0.0, std::min(1.0, x));
    };
    return {p.x, p.y, p.z, ch(c.r), ch(c.g), ch(c.b)};
  }

  bool inside(Vec2 p, double pad = 0.5) const {
    return p.x >= pad && p.y >= pad && p.x <= cfg_.extent - pad &&
           p.y <= cfg_.extent - pad;
  }

  void make_trajectory() {
    const double m = cfg_.margin;
    const double usable = cfg_.extent - 2.0 * m;
    require(usable > 0.0, "generate_scene: margin leaves no usable area");
    const int rows = std::max(2, cfg_.trajectory_rows);
    const double gap = usable / (rows - 1);
    for (int i = 0; i < rows; ++i) {
      const double y = m + i * gap;
      if (i % 2 == 0) {
        scene_.trajectory.push_back({m, y});
        scene_.trajectory.push_back({cfg_.extent - m, y});
      } else {
        scene_.trajectory.push_back({cfg_.extent - m, y});
        scene_.trajectory.push_back({m, y});
      }
    }
  }

  // --- primitive shapes -----------------------------------------------

  std::vector<Point> box_points(Vec2 center, Vec2 tangent, double w, double d,
                                double h, int count, const PaletteColor& color) {
    const Vec2 u = tangent;
    const Vec2 v{-tangent.y, tangent.x};
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(count));
    // Sample the four side walls and the roof, weighted by area.
    const double areas[5] = {w * h, w * h, d * h, d * h, w * d};
    double total = 0.0;
    for (double a : areas) total += a;
    for (int i = 0; i < count; ++i) {
      double pick = rng_.uniform(0.0, total);
      int face = 0;
      while (face < 4 && pick > areas[face]) {
        pick -= areas[face];
        ++face;
      }
      const double a = rng_.uniform(-0.5, 0.5);
      const double b = rng_.uniform(0.0, 1.0);
      Vec2 xy;
      double z;
      switch (face) {
        case 0: xy = center + u * (a * w) + v * (0.5 * d); z = b * h; break;
        case 1: xy = center + u * (a * w) + v * (-0.5 * d); z = b * h; break;
        case 2: xy = center + u * (0.5 * w) + v * (a * d); z = b * h; break;
        case 3: xy = center + u * (-0.5 * w) + v * (a * d); z = b * h; break;
        default:
          xy = center + u * (a * w) + v * ((b - 0.5) * d);
          z = h;
          break;
      }
      pts.push_back(colored_point({xy.x, xy.y, z}, color));
    }
    return pts;
  }

  std::vector<Point> cylinder_points(Vec2 center, double radius, double height,
                                     int count, const PaletteColor& color) {
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      const double ang = rng_.uniform(0.0, 2.0 * M_PI);
      const double z = rng_.uniform(0.0, height);
      pts.push_back(colored_point(
          {center.x + radius * std::cos(ang), center.y + radius * std::sin(ang), z},
          color));
    }
    return pts;
  }

  std::vector<Point> blob_points(Vec2 center, double radius, int count,
                                 const PaletteColor& color) {
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      const double u = std::cbrt(rng_.uniform());
      const double ang = rng_.uniform(0.0, 2.0 * M_PI);
      const double ct = rng_.uniform(-1.0, 1.0);
      const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
      const Vec3 dir{st * std::cos(ang), st * std::sin(ang), std::fabs(ct)};
      pts.push_back(colored_point(
          {center.x + radius * u * dir.x, center.y + radius * u * dir.y,
           0.3 + radius * u * dir.z},
          color));
    }
    return pts;
  }

  std::vector<Point> strip_points(Vec2 a, Vec2 b, double width, double z,
                                  double pts_per_m2, const PaletteColor& color) {
    const double len = dist2d(a, b);
    const int count = std::max(4, static_cast<int>(len * width * pts_per_m2));
    const Vec2 dir = len > 0.0 ? (b - a) * (1.0 / len) : Vec2{1.0, 0.0};
    const Vec2 nrm{-dir.y, dir.x};
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      const Vec2 p = a + dir * rng_.uniform(0.0, len) +
                     nrm * rng_.uniform(-0.5 * width, 0.5 * width);
      if (!inside(p)) continue;
      pts.push_back(colored_point({p.x, p.y, z}, color));
    }
    return pts;
  }

  std::vector<Point> line_points(Vec2 a, Vec2 b, double height, int count,
                                 const PaletteColor& color) {
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      const double t = rng_.uniform();
      const Vec2 p = a + (b - a) * t;
      if (!inside(p)) continue;
      pts.push_back(colored_point({p.x, p.y, rng_.uniform(0.0, height)}, color));
    }
    return pts;
  }

  void add_instance(const std::string& cls, std::vector<Point> pts) {
    if (pts.empty()) return;
    for (const Point& p : pts)
      if (!inside({p.x, p.y}, 0.0)) return;  // drop shapes leaking outside
    scene_.instances.push_back(Instance::make(
        next_id_++, scene_.registry.id_of(cls), Provenance::Labeled, std::move(pts)));
  }

  void add_stuff(const std::string& cls, std::vector<Point> pts) {
    if (!stuff_enabled(cls)) return;
    auto& bucket = scene_.stuff[scene_.registry.id_of(cls)];
    bucket.insert(bucket.end(), pts.begin(), pts.end());
  }

  const PaletteColor& pal(const char* name) {
    return kPalette[static_cast<std::size_t>(palette_index(name))];
  }

  const PaletteColor& pick_color(std::initializer_list<const char*> names) {
    const int i = cfg_.repetitive ? 0 : rng_.uniform_int(static_cast<int>(names.size()));
    return pal(*(names.begin() + i));
  }

  // --- layout ------------------------------------------------------------

  void paint_road_segment(Vec2 a, Vec2 b) {
    add_stuff("road", strip_points(a, b, 5.5, 0.0, 4.0 * cfg_.density_factor,
                                   pal("black")));
    const double len = dist2d(a, b);
    if (len <= 0.0) return;
    const Vec2 dir = (b - a) * (1.0 / len);
    const Vec2 nrm{-dir.y, dir.x};
    for (double side : {-1.0, 1.0}) {
      const Vec2 off = nrm * (side * 4.0);
      add_stuff("sidewalk", strip_points(a + off, b + off, 1.6, 0.05,
                                         3.0 * cfg_.density_factor, pal("gray")));
    }
  }

  void station_object(int kind, const Frame& f, double side) {
    const Vec2 nrm = f.normal * side;
    switch (kind) {
      case 0: {  // building
        if (!class_enabled("building")) return;
        const double w = jitter(6.0, 10.0), d = jitter(5.0, 8.0), h = jitter(5.0, 9.0);
        const Vec2 c = f.pos + nrm * (jitter(9.0, 13.0) + 0.5 * d);
        add_instance("building",
                     box_points(c, f.tangent, w, d, h, scaled(1200),
                                pick_color({"brown", "gray", "white", "red"})));
        break;
      }
      case 1: {  // pole
        if (!class_enabled("pole")) return;
        const Vec2 c = f.pos + nrm * jitter(2.6, 3.4);
        add_instance("pole", cylinder_points(c, 0.15, jitter(3.5, 5.0), scaled(300),
                                             pick_color({"gray", "black"})));
        break;
      }
      case 2: {  // traffic light: pole plus a head box
        if (!class_enabled("traffic light")) return;
        const Vec2 c = f.pos + nrm * jitter(2.8, 3.6);
        auto pts = cylinder_points(c, 0.12, 4.2, scaled(220), pal("black"));
        auto head = box_points(c, f.tangent, 0.4, 0.4, 0.9, scaled(130), pal("yellow"));
        for (Point& p : head) p.z += 4.2;
        pts.insert(pts.end(), head.begin(), head.end());
        add_instance("traffic light", std::move(pts));
        break;
      }
      case 3: {  // trash bin
        if (!class_enabled("trash bin")) return;
        const Vec2 c = f.pos + nrm * jitter(2.2, 3.0);
        add_instance("trash bin",
                     cylinder_points(c, 0.4, jitter(0.9, 1.2), scaled(250),
                                     pick_color({"green", "blue", "gray"})));
        break;
      }
      case 4: {  // bus stop
        if (!class_enabled("bus stop")) return;
        const Vec2 c = f.pos + nrm * jitter(3.6, 4.6);
        add_instance("bus stop",
                     box_points(c, f.tangent, 3.0, 1.5, 2.5, scaled(400),
                                pick_color({"blue", "white"})));
        break;
      }
      case 5: {  // garage
        if (!class_enabled("garage")) return;
        const Vec2 c = f.pos + nrm * jitter(7.0, 10.0);
        add_instance("garage",
                     box_points(c, f.tangent, 4.0, 3.0, 2.5, scaled(500),
                                pick_color({"gray", "brown"})));
        break;
      }
      case 6: {  // vegetation blob (stuff)
        const Vec2 c = f.pos + nrm * jitter(5.0, 8.0);
        if (inside(c, 4.0))
          add_stuff("vegetation",
                    blob_points(c, jitter(1.8, 3.0), scaled(700), pal("green")));
        break;
      }
      case 7: {  // fence run along the road
        const Vec2 c = f.pos + nrm * jitter(5.5, 6.5);
        const Vec2 half = f.tangent * jitter(3.0, 4.5);
        add_stuff("fence", line_points(c - half, c + half, 1.2, scaled(450),
                                       pick_color({"brown", "gray"})));
        break;
      }
      default: {  // wall run
        const Vec2 c = f.pos + nrm * jitter(6.0, 7.5);
        const Vec2 half = f.tangent * jitter(2.5, 4.0);
        add_stuff("wall", line_points(c - half, c + half, 2.0, scaled(500),
                                      pick_color({"gray", "white"})));
        break;
      }
    }
  }

  void place_stations() {
    require(!cfg_.instance_classes.empty(),
            "generate_scene: config with zero instance classes");
    const double total = polyline_length(scene_.trajectory);
    // Near-road instances go on both sides of every station; their lateral
    // offsets stay under ~5 m so trajectory endpoints still see at least
    // min_neighbors of them inside the check radius. Buildings and garages
    // sit further out and are placed every other station, stuff features
    // every second station on alternating sides.
    static constexpr int kNearCycle[] = {1, 2, 3, 4, 1, 3, 2, 4};
    static constexpr int kFarCycle[] = {0, 0, 5, 0, 5};
    static constexpr int kStuffCycle[] = {6, 7, 6, 8, 6, 7, 8, 6};
    const int near_len = static_cast<int>(std::size(kNearCycle));
    const int far_len = static_cast<int>(std::size(kFarCycle));
    const int stuff_len = static_cast<int>(std::size(kStuffCycle));
    int idx = 0;
    for (double s = 0.0; s <= total; s += cfg_.station_spacing) {
      const Frame f = frame_at(scene_.trajectory, s);
      station_object(kNearCycle[idx % near_len], f, +1.0);
      station_object(kNearCycle[(idx + 3) % near_len], f, -1.0);
      if (idx % 2 == 0)
        station_object(kFarCycle[(idx / 2) % far_len], f,
                       (idx / 2) % 2 == 0 ? +1.0 : -1.0);
      if (idx % 2 == 1)
        station_object(kStuffCycle[(idx / 2) % stuff_len], f,
                       (idx / 2) % 2 == 0 ? -1.0 : +1.0);
      ++idx;
    }
  }

  void scatter_vegetation() {
    const int blobs = static_cast<int>(cfg_.extent / 12.0);
    for (int i = 0; i < blobs; ++i) {
      const Vec2 c{rng_.uniform(cfg_.margin, cfg_.extent - cfg_.margin),
                   rng_.uniform(cfg_.margin, cfg_.extent - cfg_.margin)};
      add_stuff("vegetation", blob_points(c, jitter(1.5, 2.6), scaled(550), pal("green")));
    }
  }

  void paint_terrain() {
    const int count = scaled(cfg_.extent * cfg_.extent * 0.06);
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      const Vec2 p{rng_.uniform(0.0, cfg_.extent), rng_.uniform(0.0, cfg_.extent)};
      pts.push_back(colored_point({p.x, p.y, 0.0}, pal("brown")));
    }
    add_stuff("terrain", std::move(pts));
  }

  void self_check() const {
    for (double s = 0.0;; s += 1.0) {
      const double total = polyline_length(scene_.trajectory);
      const Vec2 p = frame_at(scene_.trajectory, std::min(s, total)).pos;
      int near = 0;
      for (const Instance& inst : scene_.instances)
        if (dist2d(inst.center.xy(), p) <= cfg_.check_radius) ++near;
      require(near >= cfg_.min_neighbors, "generate_scene: self-check failed at (",
              p.x, ",", p.y, "): only ", near, " instances within ",
              cfg_.check_radius, " m (need ", cfg_.min_neighbors, ")");
      if (s >= total) break;
    }
  }

  SceneConfig cfg_;
  Rng rng_;
  Scene scene_;
  long long next_id_ = 1;
};

}  // namespace

Scene generate_scene(const SceneConfig& config, std::uint64_t seed) {
  require(config.extent >= 2.0 * config.cell_size_hint,
          "generate_scene: extent ", config.extent, " is below twice the cell size ",
          config.cell_size_hint);
  require(!config.instance_classes.empty(),
          "generate_scene: config with zero instance classes");
  return Builder(config, seed).build();
}

}  // namespace textloc::scene
