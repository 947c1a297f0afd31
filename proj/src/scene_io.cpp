#include <cstdio>
#include <fstream>
#include <sstream>

#include "textloc/scene.hpp"

namespace textloc::scene {

namespace {

constexpr const char* kHeader = "textloc-scene v1";

void write_point(std::string& buf, const Point& p) {
  char line[160];
  std::snprintf(line, sizeof line, "%.17g %.17g %.17g %.17g %.17g %.17g\n",
                p.x, p.y, p.z, p.r, p.g, p.b);
  buf += line;
}

Point read_point(std::istream& is) {
  Point p;
  is >> p.x >> p.y >> p.z >> p.r >> p.g >> p.b;
  require(is.good(), "load_scene: malformed point record");
  require(p.r >= 0.0 && p.r <= 1.0 && p.g >= 0.0 && p.g <= 1.0 && p.b >= 0.0 &&
              p.b <= 1.0,
          "load_scene: color channel out of [0,1]");
  return p;
}

}  // namespace

void save_scene(const Scene& s, const std::string& path) {
  std::string buf;
  buf.reserve(1 << 20);
  char line[256];
  buf += kHeader;
  buf += "\n";
  buf += "id " + s.id + "\n";
  buf += "seed " + std::to_string(s.seed) + "\n";
  std::snprintf(line, sizeof line, "extent %.17g %.17g %.17g %.17g\n", s.extent.lo.x,
                s.extent.lo.y, s.extent.hi.x, s.extent.hi.y);
  buf += line;
  buf += "classes " + std::to_string(s.registry.size()) + "\n";
  for (const auto& c : s.registry.all()) {
    buf += "class ";
    buf += (c.kind == ClassKind::Instance ? "instance " : "stuff ");
    buf += c.name + "\n";
  }
  buf += "trajectory " + std::to_string(s.trajectory.size()) + "\n";
  for (const Vec2& p : s.trajectory) {
    std::snprintf(line, sizeof line, "%.17g %.17g\n", p.x, p.y);
    buf += line;
  }
  buf += "instances " + std::to_string(s.instances.size()) + "\n";
  for (const Instance& inst : s.instances) {
    std::snprintf(line, sizeof line, "instance %lld %d %s %zu\n", inst.id,
                  inst.class_id,
                  inst.provenance == Provenance::Labeled ? "labeled" : "clustered",
                  inst.points.size());
    buf += line;
    for (const Point& p : inst.points) write_point(buf, p);
  }
  buf += "stuff-blocks " + std::to_string(s.stuff.size()) + "\n";
  for (const auto& [class_id, pts] : s.stuff) {
    buf += "stuff " + std::to_string(class_id) + " " + std::to_string(pts.size()) + "\n";
    for (const Point& p : pts) write_point(buf, p);
  }
  buf += "end\n";

  std::ofstream os(path, std::ios::binary);
  require(os.good(), "save_scene: cannot open '", path, "'");
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  require(os.good(), "save_scene: write failed for '", path, "'");
}

Scene load_scene(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "load_scene: cannot open '", path, "'");
  std::string word;
  std::string header;
  std::getline(is, header);
  require(header == kHeader, "load_scene: '", path, "' is not a scene file");

  Scene s;
  is >> word;
  require(word == "id", "load_scene: expected 'id'");
  is >> s.id;
  is >> word >> s.seed;
  require(word == "seed", "load_scene: expected 'seed'");
  is >> word >> s.extent.lo.x >> s.extent.lo.y >> s.extent.hi.x >> s.extent.hi.y;
  require(word == "extent", "load_scene: expected 'extent'");

  int n_classes = 0;
  is >> word >> n_classes;
  require(word == "classes", "load_scene: expected 'classes'");
  std::vector<SemanticClass> classes;
  for (int i = 0; i < n_classes; ++i) {
    std::string kind;
    is >> word >> kind;
    require(word == "class", "load_scene: expected 'class'");
    std::string name;
    std::getline(is, name);
    const auto start = name.find_first_not_of(' ');
    name = start == std::string::npos ? "" : name.substr(start);
    require(!name.empty(), "load_scene: empty class name");
    classes.push_back(
        {name, kind == "instance" ? ClassKind::Instance : ClassKind::Stuff});
  }
  s.registry = ClassRegistry(std::move(classes));

  std::size_t n_traj = 0;
  is >> word >> n_traj;
  require(word == "trajectory", "load_scene: expected 'trajectory'");
  for (std::size_t i = 0; i < n_traj; ++i) {
    Vec2 p;
    is >> p.x >> p.y;
    require(s.extent.contains(p), "load_scene: trajectory point outside extent");
    s.trajectory.push_back(p);
  }

  std::size_t n_inst = 0;
  is >> word >> n_inst;
  require(word == "instances", "load_scene: expected 'instances'");
  for (std::size_t i = 0; i < n_inst; ++i) {
    long long id = 0;
    int class_id = 0;
    std::string prov;
    std::size_t n_pts = 0;
    is >> word >> id >> class_id >> prov >> n_pts;
    require(word == "instance" && n_pts >= 1, "load_scene: malformed instance");
    std::vector<Point> pts;
    pts.reserve(n_pts);
    for (std::size_t k = 0; k < n_pts; ++k) {
      Point p = read_point(is);
      require(s.extent.contains({p.x, p.y}), "load_scene: instance point outside extent");
      pts.push_back(p);
    }
    s.instances.push_back(Instance::make(
        id, class_id,
        prov == "labeled" ? Provenance::Labeled : Provenance::Clustered,
        std::move(pts)));
  }

  std::size_t n_blocks = 0;
  is >> word >> n_blocks;
  require(word == "stuff-blocks", "load_scene: expected 'stuff-blocks'");
  for (std::size_t i = 0; i < n_blocks; ++i) {
    int class_id = 0;
    std::size_t n_pts = 0;
    is >> word >> class_id >> n_pts;
    require(word == "stuff", "load_scene: expected 'stuff'");
    auto& bucket = s.stuff[class_id];
    bucket.reserve(n_pts);
    for (std::size_t k = 0; k < n_pts; ++k) bucket.push_back(read_point(is));
  }
  is >> word;
  require(word == "end", "load_scene: missing trailer");
  return s;
}

}  // namespace textloc::scene
