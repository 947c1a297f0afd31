#include <cstring>
#include <fstream>

#include "textloc/celldb.hpp"

namespace textloc::cells {

namespace {

constexpr char kMagic[4] = {'T', 'L', 'D', 'B'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, const T& x) {
  os.write(reinterpret_cast<const char*>(&x), sizeof x);
}

template <class T>
T get(std::istream& is) {
  T x{};
  is.read(reinterpret_cast<char*>(&x), sizeof x);
  return x;
}

void put_str(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

void put_point(std::ostream& os, const scene::Point& p) {
  put(os, p.x);
  put(os, p.y);
  put(os, p.z);
  put(os, p.r);
  put(os, p.g);
  put(os, p.b);
}

scene::Point get_point(std::istream& is) {
  scene::Point p;
  p.x = get<double>(is);
  p.y = get<double>(is);
  p.z = get<double>(is);
  p.r = get<double>(is);
  p.g = get<double>(is);
  p.b = get<double>(is);
  return p;
}

void put_vec3(std::ostream& os, const Vec3& v) {
  put(os, v.x);
  put(os, v.y);
  put(os, v.z);
}

Vec3 get_vec3(std::istream& is) {
  Vec3 v;
  v.x = get<double>(is);
  v.y = get<double>(is);
  v.z = get<double>(is);
  return v;
}

}  // namespace

void save_celldb(const CellDatabase& db, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "save_celldb: cannot open '", path, "'");
  os.write(kMagic, 4);
  put(os, kVersion);
  put_str(os, db.scene_id);
  const CellGridConfig& c = db.config;
  put(os, c.cell_size);
  put(os, c.stride);
  put(os, c.third_rule);
  put<std::int32_t>(os, c.min_overlap_points);
  put(os, c.density_factor);
  put<std::int32_t>(os, c.padded_instances);
  put<std::int32_t>(os, c.min_instances);
  put<std::int32_t>(os, c.dummy_points);
  put(os, c.cluster.eps);
  put<std::int32_t>(os, c.cluster.min_pts);
  put<std::int32_t>(os, c.cluster.min_cluster_points);
  put(os, c.cluster.density_factor);

  put<std::uint32_t>(os, static_cast<std::uint32_t>(db.cells.size()));
  for (const Cell& cell : db.cells) {
    put<std::int32_t>(os, cell.id);
    put(os, cell.origin.x);
    put(os, cell.origin.y);
    put(os, cell.cell_size);
    put<std::uint8_t>(os, cell.normalized ? 1 : 0);
    put_str(os, cell.street);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(cell.instances.size()));
    for (const CellInstance& inst : cell.instances) {
      put<std::int64_t>(os, inst.id);
      put<std::int32_t>(os, inst.class_id);
      put<std::uint8_t>(os, inst.provenance == scene::Provenance::Labeled ? 0 : 1);
      put<std::uint8_t>(os, inst.is_dummy ? 1 : 0);
      put_vec3(os, inst.center);
      put_vec3(os, inst.mean_color);
      put_vec3(os, inst.world_center);
      put<std::uint32_t>(os, static_cast<std::uint32_t>(inst.points.size()));
      for (const scene::Point& p : inst.points) put_point(os, p);
    }
  }
  require(os.good(), "save_celldb: write failed for '", path, "'");
}

CellDatabase load_celldb(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "load_celldb: cannot open '", path, "'");
  char magic[4];
  is.read(magic, 4);
  require(is.good() && std::memcmp(magic, kMagic, 4) == 0, "load_celldb: '", path,
          "' is not a cell database");
  require(get<std::uint32_t>(is) == kVersion, "load_celldb: unsupported version");

  CellDatabase db;
  db.scene_id = get_str(is);
  CellGridConfig& c = db.config;
  c.cell_size = get<double>(is);
  c.stride = get<double>(is);
  c.third_rule = get<double>(is);
  c.min_overlap_points = get<std::int32_t>(is);
  c.density_factor = get<double>(is);
  c.padded_instances = get<std::int32_t>(is);
  c.min_instances = get<std::int32_t>(is);
  c.dummy_points = get<std::int32_t>(is);
  c.cluster.eps = get<double>(is);
  c.cluster.min_pts = get<std::int32_t>(is);
  c.cluster.min_cluster_points = get<std::int32_t>(is);
  c.cluster.density_factor = get<double>(is);

  const auto n_cells = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_cells; ++i) {
    Cell cell;
    cell.id = get<std::int32_t>(is);
    cell.origin.x = get<double>(is);
    cell.origin.y = get<double>(is);
    cell.cell_size = get<double>(is);
    cell.normalized = get<std::uint8_t>(is) != 0;
    cell.street = get_str(is);
    const auto n_inst = get<std::uint32_t>(is);
    for (std::uint32_t k = 0; k < n_inst; ++k) {
      CellInstance inst;
      inst.id = get<std::int64_t>(is);
      inst.class_id = get<std::int32_t>(is);
      inst.provenance = get<std::uint8_t>(is) == 0 ? scene::Provenance::Labeled
                                                   : scene::Provenance::Clustered;
      inst.is_dummy = get<std::uint8_t>(is) != 0;
      inst.center = get_vec3(is);
      inst.mean_color = get_vec3(is);
      inst.world_center = get_vec3(is);
      const auto n_pts = get<std::uint32_t>(is);
      inst.points.reserve(n_pts);
      for (std::uint32_t p = 0; p < n_pts; ++p) inst.points.push_back(get_point(is));
      cell.instances.push_back(std::move(inst));
    }
    require(is.good(), "load_celldb: truncated file '", path, "'");
    db.cells.push_back(std::move(cell));
  }
  return db;
}

}  // namespace textloc::cells
