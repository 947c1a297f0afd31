#include "textloc/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace textloc::scene {

ClassRegistry ClassRegistry::standard() {
  return ClassRegistry({
      {"building", ClassKind::Instance},
      {"pole", ClassKind::Instance},
      {"traffic light", ClassKind::Instance},
      {"trash bin", ClassKind::Instance},
      {"bus stop", ClassKind::Instance},
      {"garage", ClassKind::Instance},
      {"vegetation", ClassKind::Stuff},
      {"fence", ClassKind::Stuff},
      {"wall", ClassKind::Stuff},
      {"sidewalk", ClassKind::Stuff},
      {"road", ClassKind::Stuff},
      {"terrain", ClassKind::Stuff},
  });
}

int ClassRegistry::id_of(const std::string& name) const {
  for (std::size_t i = 0; i < classes_.size(); ++i)
    if (classes_[i].name == name) return static_cast<int>(i);
  fail("ClassRegistry: unknown class '", name, "'");
}

const SemanticClass& ClassRegistry::at(int id) const {
  require(id >= 0 && id < size(), "ClassRegistry: class id ", id, " out of range");
  return classes_[static_cast<std::size_t>(id)];
}

std::vector<int> ClassRegistry::stuff_ids() const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (classes_[static_cast<std::size_t>(i)].kind == ClassKind::Stuff)
      out.push_back(i);
  return out;
}

std::vector<int> ClassRegistry::instance_ids() const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (classes_[static_cast<std::size_t>(i)].kind == ClassKind::Instance)
      out.push_back(i);
  return out;
}

Vec3 mean_position(const std::vector<Point>& points) {
  require(!points.empty(), "mean_position: empty point set");
  Vec3 acc;
  for (const Point& p : points) acc = acc + Vec3{p.x, p.y, p.z};
  return acc * (1.0 / static_cast<double>(points.size()));
}

Vec3 mean_color_of(const std::vector<Point>& points) {
  require(!points.empty(), "mean_color_of: empty point set");
  Vec3 acc;
  for (const Point& p : points) acc = acc + Vec3{p.r, p.g, p.b};
  return acc * (1.0 / static_cast<double>(points.size()));
}

Instance Instance::make(long long id, int class_id, Provenance prov,
                        std::vector<Point> points) {
  require(!points.empty(), "Instance: needs at least one point (id ", id, ")");
  Instance inst;
  inst.id = id;
  inst.class_id = class_id;
  inst.provenance = prov;
  inst.center = mean_position(points);
  inst.mean_color = mean_color_of(points);
  inst.points = std::move(points);
  return inst;
}

// ---------------------------------------------------------------------------
// DBSCAN
// ---------------------------------------------------------------------------

namespace {

// Uniform grid over 3D positions with cell edge = eps; neighbor queries scan
// the 27 surrounding grid cells.
class EpsGrid {
 public:
  EpsGrid(const std::vector<Point>& pts, double eps) : pts_(pts), eps_(eps) {
    for (std::size_t i = 0; i < pts.size(); ++i)
      cells_[key(pts[i])].push_back(static_cast<int>(i));
  }

  // Indices within eps of pts_[i], sorted ascending; includes i itself.
  std::vector<int> neighbors(int i) const {
    const Point& p = pts_[static_cast<std::size_t>(i)];
    const double e2 = eps_ * eps_;
    std::vector<int> out;
    const long long cx = coord(p.x), cy = coord(p.y), cz = coord(p.z);
    for (long long dx = -1; dx <= 1; ++dx)
      for (long long dy = -1; dy <= 1; ++dy)
        for (long long dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find(pack(cx + dx, cy + dy, cz + dz));
          if (it == cells_.end()) continue;
          for (int j : it->second) {
            const Point& q = pts_[static_cast<std::size_t>(j)];
            const double d2 = (p.x - q.x) * (p.x - q.x) +
                              (p.y - q.y) * (p.y - q.y) +
                              (p.z - q.z) * (p.z - q.z);
            if (d2 <= e2) out.push_back(j);
          }
        }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  long long coord(double v) const { return static_cast<long long>(std::floor(v / eps_)); }
  std::uint64_t key(const Point& p) const {
    return pack(coord(p.x), coord(p.y), coord(p.z));
  }
  static std::uint64_t pack(long long x, long long y, long long z) {
    const std::uint64_t m = (1ull << 21) - 1;
    return ((static_cast<std::uint64_t>(x) & m) << 42) |
           ((static_cast<std::uint64_t>(y) & m) << 21) |
           (static_cast<std::uint64_t>(z) & m);
  }

  const std::vector<Point>& pts_;
  double eps_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

}  // namespace

std::vector<int> dbscan(const std::vector<Point>& points, double eps, int min_pts) {
  require(eps > 0.0, "dbscan: eps must be positive, got ", eps);
  require(min_pts >= 1, "dbscan: min_pts must be >= 1, got ", min_pts);
  const int n = static_cast<int>(points.size());
  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  if (n == 0) return labels;

  EpsGrid grid(points, eps);
  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(n));
  std::vector<char> core(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    nbrs[static_cast<std::size_t>(i)] = grid.neighbors(i);
    core[static_cast<std::size_t>(i)] =
        static_cast<int>(nbrs[static_cast<std::size_t>(i)].size()) >= min_pts;
  }

  // Clusters are connected components of core points under the eps relation.
  UnionFind uf(n);
  for (int i = 0; i < n; ++i) {
    if (!core[static_cast<std::size_t>(i)]) continue;
    for (int j : nbrs[static_cast<std::size_t>(i)])
      if (core[static_cast<std::size_t>(j)]) uf.unite(i, j);
  }

  // Canonical cluster ids ordered by the lowest core index in the component.
  std::unordered_map<int, int> root_to_id;
  int next_id = 0;
  for (int i = 0; i < n; ++i) {
    if (!core[static_cast<std::size_t>(i)]) continue;
    const int root = uf.find(i);
    auto it = root_to_id.find(root);
    if (it == root_to_id.end()) it = root_to_id.emplace(root, next_id++).first;
    labels[static_cast<std::size_t>(i)] = it->second;
  }

  // Border points take the lowest cluster id among in-range cores.
  for (int i = 0; i < n; ++i) {
    if (core[static_cast<std::size_t>(i)]) continue;
    int best = -1;
    for (int j : nbrs[static_cast<std::size_t>(i)]) {
      if (!core[static_cast<std::size_t>(j)]) continue;
      const int cid = labels[static_cast<std::size_t>(j)];
      if (best == -1 || cid < best) best = cid;
    }
    labels[static_cast<std::size_t>(i)] = best;
  }
  return labels;
}

long long clustered_instance_id(long long container_key, int class_id,
                                int cluster_index) {
  return -(((container_key + 1) * 64 + class_id) * 1024 + cluster_index + 1);
}

std::vector<Instance> cluster_stuff(const std::vector<Point>& cell_points,
                                    int class_id, double eps, int min_pts,
                                    int min_cluster_points, long long container_key) {
  std::vector<Instance> out;
  if (cell_points.empty()) return out;
  const std::vector<int> labels = dbscan(cell_points, eps, min_pts);
  int max_label = -1;
  for (int l : labels) max_label = std::max(max_label, l);
  int kept = 0;
  for (int c = 0; c <= max_label; ++c) {
    std::vector<Point> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) members.push_back(cell_points[i]);
    if (static_cast<int>(members.size()) < min_cluster_points) continue;
    out.push_back(Instance::make(clustered_instance_id(container_key, class_id, kept),
                                 class_id, Provenance::Clustered, std::move(members)));
    ++kept;
  }
  return out;
}

}  // namespace textloc::scene
