#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "textloc/common.hpp"

namespace textloc::scene {

/// One colored point; color channels live in [0,1].
struct Point {
  double x = 0.0, y = 0.0, z = 0.0;
  double r = 0.0, g = 0.0, b = 0.0;
  Vec3 pos() const { return {x, y, z}; }
  bool operator==(const Point&) const = default;
};

enum class ClassKind { Instance, Stuff };

struct SemanticClass {
  std::string name;
  ClassKind kind = ClassKind::Instance;
};

/// Fixed per-dataset class registry; class ids are indices into it.
class ClassRegistry {
 public:
  ClassRegistry() = default;
  explicit ClassRegistry(std::vector<SemanticClass> classes)
      : classes_(std::move(classes)) {}

  static ClassRegistry standard();

  int id_of(const std::string& name) const;
  const SemanticClass& at(int id) const;
  int size() const { return static_cast<int>(classes_.size()); }
  const std::vector<SemanticClass>& all() const { return classes_; }
  std::vector<int> stuff_ids() const;
  std::vector<int> instance_ids() const;

 private:
  std::vector<SemanticClass> classes_;
};

enum class Provenance { Labeled, Clustered };

struct Instance {
  long long id = 0;
  int class_id = -1;
  Provenance provenance = Provenance::Labeled;
  std::vector<Point> points;
  Vec3 center;      // arithmetic mean of the point coordinates
  Vec3 mean_color;  // arithmetic mean of the point colors (r,g,b in xyz)

  static Instance make(long long id, int class_id, Provenance prov,
                       std::vector<Point> points);
};

/// Recompute the coordinate mean; Instance::center must equal this.
Vec3 mean_position(const std::vector<Point>& points);
Vec3 mean_color_of(const std::vector<Point>& points);

struct Scene {
  std::string id;
  Rect extent;
  std::uint64_t seed = 0;
  ClassRegistry registry;
  std::vector<Instance> instances;          // labeled object instances
  std::map<int, std::vector<Point>> stuff;  // stuff class id -> raw points
  std::vector<Vec2> trajectory;             // ordered polyline
};

struct SceneConfig {
  double extent = 200.0;          // square side, meters
  double margin = 22.0;           // keep geometry this far from the boundary
  int trajectory_rows = 4;        // serpentine passes across the scene
  double station_spacing = 4.5;   // distance between roadside object groups
  double density_factor = 0.2;    // scales synthetic point counts relative to
                                  // the LiDAR-scale counts the defaults assume
  double cell_size_hint = 30.0;   // retrieval cell size the scene must support
  bool repetitive = false;        // disable size/position jitter (test knob)
  std::vector<std::string> instance_classes = {
      "building", "pole", "traffic light", "trash bin", "bus stop", "garage"};
  std::vector<std::string> stuff_classes = {
      "vegetation", "fence", "wall", "sidewalk", "road", "terrain"};
  // Self-check: every trajectory point needs at least this many instances
  // within check_radius.
  int min_neighbors = 6;
  double check_radius = 15.0;
};

/// Deterministic procedural scene: primitive-shaped instances and stuff
/// strips laid out along a serpentine trajectory.
Scene generate_scene(const SceneConfig& config, std::uint64_t seed);

/// DBSCAN over 3D point positions. Returns one label per point:
/// cluster id >= 0 or -1 for noise. A point's eps-neighborhood includes the
/// point itself. Cluster ids are ordered by the lowest core-point index they
/// contain; border points joining several clusters take the lowest id.
std::vector<int> dbscan(const std::vector<Point>& points, double eps, int min_pts);

struct ClusterConfig {
  double eps = 2.0;
  int min_pts = 4;
  int min_cluster_points = 250;  // at full LiDAR-scale density
  double density_factor = 0.2;
  int effective_min_cluster_points() const {
    const int scaled = static_cast<int>(min_cluster_points * density_factor + 0.5);
    return scaled < 1 ? 1 : scaled;
  }
};

/// Deterministic id for a clustered instance: container_key identifies the
/// cell (or query position) the clustering ran in. Always negative so it can
/// never collide with labeled instance ids.
long long clustered_instance_id(long long container_key, int class_id, int cluster_index);

/// Cluster one stuff class inside a cell and keep clusters with at least
/// min_cluster_points points as Instances (provenance Clustered).
std::vector<Instance> cluster_stuff(const std::vector<Point>& cell_points,
                                    int class_id, double eps, int min_pts,
                                    int min_cluster_points, long long container_key);

void save_scene(const Scene& s, const std::string& path);
Scene load_scene(const std::string& path);

}  // namespace textloc::scene
