#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "support/oracles.hpp"
#include "textloc/celldb.hpp"
#include "textloc/rng.hpp"

using namespace textloc;
using namespace textloc::cells;
using scene::Instance;
using scene::Point;
using scene::Provenance;

namespace {

Instance blob_instance(long long id, int class_id, Vec2 at, int count, Rng& rng,
                       double spread = 1.0) {
  std::vector<Point> pts;
  for (int i = 0; i < count; ++i)
    pts.push_back({at.x + rng.uniform(-spread, spread),
                   at.y + rng.uniform(-spread, spread), rng.uniform(0.0, 2.0),
                   0.4, 0.4, 0.4});
  return Instance::make(id, class_id, Provenance::Labeled, std::move(pts));
}

// Synthetic normalized cell with single-point instances at given world
// positions, for matching tests.
Cell synthetic_cell(Vec2 origin, double w,
                    const std::vector<std::tuple<long long, int, Vec2>>& spec) {
  Cell cell;
  cell.id = 0;
  cell.origin = origin;
  cell.cell_size = w;
  cell.normalized = true;
  for (const auto& [id, class_id, world] : spec) {
    CellInstance inst;
    inst.id = id;
    inst.class_id = class_id;
    inst.provenance = id < 0 ? Provenance::Clustered : Provenance::Labeled;
    const Vec2 local = (world - origin) * (1.0 / w);
    inst.points.push_back({local.x, local.y, 0.0, 0.5, 0.5, 0.5});
    inst.center = {local.x, local.y, 0.0};
    inst.mean_color = {0.5, 0.5, 0.5};
    inst.world_center = {world.x, world.y, 0.0};
    cell.instances.push_back(std::move(inst));
  }
  return cell;
}

query::QueryDescription make_desc(Vec2 position, const std::vector<query::Hint>& hints) {
  query::QueryDescription d;
  d.id = "test";
  d.scene_id = "test";
  d.position = position;
  d.strategy = "closest";
  d.hints = hints;
  return d;
}

query::Hint hint_for(long long target_id, int class_id, Vec2 position, Vec2 target_center) {
  query::Hint h;
  h.target_id = target_id;
  h.target_class_id = class_id;
  h.offset = position - target_center;
  return h;
}

scene::Scene test_scene(double extent = 120.0, std::uint64_t seed = 31) {
  scene::SceneConfig cfg;
  cfg.extent = extent;
  return scene::generate_scene(cfg, seed);
}

}  // namespace

TEST_CASE("axis anchors: 90 m extent, W=30, S=10 gives 7 anchors per axis") {
  const auto xs = axis_anchors(0.0, 90.0, 30.0, 10.0);
  CHECK(xs.size() == 7);
  CHECK(xs.front() == 0.0);
  CHECK(xs.back() == doctest::Approx(60.0));
}

TEST_CASE("axis anchors add a flush anchor for non-divisible extents") {
  const auto xs = axis_anchors(0.0, 95.0, 30.0, 10.0);
  CHECK(xs.size() == 8);
  CHECK(xs.back() == doctest::Approx(65.0));
}

TEST_CASE("stride = W tiles the extent without overlap") {
  const auto xs = axis_anchors(0.0, 90.0, 30.0, 30.0);
  CHECK(xs == std::vector<double>{0.0, 30.0, 60.0});
}

TEST_CASE("grid coverage: every extent point lies in at least one anchor window") {
  Rng rng(66);
  const auto xs = axis_anchors(0.0, 97.0, 30.0, 12.5);
  for (int trial = 0; trial < 500; ++trial) {
    const double p = rng.uniform(0.0, 97.0);
    bool covered = false;
    for (double a : xs) covered = covered || (p >= a && p <= a + 30.0);
    CHECK(covered);
  }
}

TEST_CASE("interior points are within (sqrt2/2)*S of some anchor center") {
  Rng rng(67);
  const double w = 30.0, s = 10.0, extent = 140.0;
  const auto xs = axis_anchors(0.0, extent, w, s);
  for (int trial = 0; trial < 500; ++trial) {
    const Vec2 p{rng.uniform(w / 2, extent - w / 2), rng.uniform(w / 2, extent - w / 2)};
    double best = 1e18;
    for (double ax : xs)
      for (double ay : xs) {
        const Vec2 center{ax + w / 2, ay + w / 2};
        if (p.x >= ax && p.x <= ax + w && p.y >= ay && p.y <= ay + w)
          best = std::min(best, dist2d(p, center));
      }
    CHECK(best <= s * std::sqrt(2.0) / 2.0 + 1e-9);
  }
}

TEST_CASE("assign_in_cell applies the third rule and the absolute overlap rule") {
  CellGridConfig cfg;
  cfg.density_factor = 1.0;  // thresholds at their LiDAR-scale values
  const Rect bounds{{0.0, 0.0}, {30.0, 30.0}};
  Rng rng(5);

  // 900 points, 300 inside: the third rule fires.
  std::vector<Point> pts;
  for (int i = 0; i < 300; ++i)
    pts.push_back({rng.uniform(0.0, 30.0), rng.uniform(0.0, 30.0), 0, 0, 0, 0});
  for (int i = 0; i < 600; ++i)
    pts.push_back({rng.uniform(31.0, 60.0), rng.uniform(0.0, 30.0), 0, 0, 0, 0});
  CHECK(assign_in_cell(Instance::make(1, 0, Provenance::Labeled, pts), bounds, cfg));

  // 10000-point building with exactly 250 inside: absolute rule.
  pts.clear();
  for (int i = 0; i < 250; ++i)
    pts.push_back({rng.uniform(0.0, 30.0), rng.uniform(0.0, 30.0), 0, 0, 0, 0});
  for (int i = 0; i < 9750; ++i)
    pts.push_back({rng.uniform(31.0, 90.0), rng.uniform(0.0, 30.0), 0, 0, 0, 0});
  CHECK(assign_in_cell(Instance::make(2, 0, Provenance::Labeled, pts), bounds, cfg));

  // 100-point pole with 33 inside: 33/100 < 1/3 and 33 < 250.
  pts.clear();
  for (int i = 0; i < 33; ++i)
    pts.push_back({rng.uniform(0.0, 30.0), rng.uniform(0.0, 30.0), 0, 0, 0, 0});
  for (int i = 0; i < 67; ++i)
    pts.push_back({rng.uniform(31.0, 60.0), rng.uniform(0.0, 30.0), 0, 0, 0, 0});
  CHECK_FALSE(assign_in_cell(Instance::make(3, 0, Provenance::Labeled, pts), bounds, cfg));
}

TEST_CASE("pad_and_normalize pads with dummies and cuts to the largest") {
  CellGridConfig cfg;
  Rng rng(8);

  SUBCASE("3 real instances get 13 dummies") {
    Cell cell;
    cell.id = 3;
    cell.origin = {10.0, 10.0};
    cell.cell_size = 30.0;
    for (int i = 0; i < 3; ++i) {
      const Instance inst = blob_instance(i + 1, 0, {20.0 + i, 20.0}, 40, rng);
      CellInstance ci;
      ci.id = inst.id;
      ci.class_id = inst.class_id;
      ci.points = inst.points;
      ci.center = inst.center;
      ci.mean_color = inst.mean_color;
      ci.world_center = inst.center;
      cell.instances.push_back(ci);
    }
    pad_and_normalize(cell, cfg);
    CHECK(cell.instances.size() == 16);
    CHECK(cell.real_instance_count() == 3);
    int dummies = 0;
    for (const auto& inst : cell.instances)
      if (inst.is_dummy) {
        ++dummies;
        CHECK(inst.points.size() == 10);
        for (const Point& p : inst.points) {
          CHECK(p.x >= 0.0);
          CHECK(p.x <= 1e-3);
          CHECK(p.r == 0.0);
        }
      }
    CHECK(dummies == 13);
    // Idempotent: running again changes nothing.
    Cell again = cell;
    pad_and_normalize(again, cfg);
    CHECK(again.instances.size() == cell.instances.size());
    CHECK(again.instances.back().points == cell.instances.back().points);
  }

  SUBCASE("20 real instances keep the 16 with most points") {
    Cell cell;
    cell.id = 4;
    cell.origin = {0.0, 0.0};
    cell.cell_size = 30.0;
    for (int i = 0; i < 20; ++i) {
      const Instance inst = blob_instance(i + 1, 0, {15.0, 15.0}, 21 + i, rng);
      CellInstance ci;
      ci.id = inst.id;
      ci.points = inst.points;
      ci.center = inst.center;
      ci.mean_color = inst.mean_color;
      ci.world_center = inst.center;
      cell.instances.push_back(ci);
    }
    pad_and_normalize(cell, cfg);
    CHECK(cell.instances.size() == 16);
    std::set<long long> kept;
    for (const auto& inst : cell.instances) kept.insert(inst.id);
    // Instances 5..20 have the most points (25..40).
    for (long long id = 5; id <= 20; ++id) CHECK(kept.count(id) == 1);
  }

  SUBCASE("far corner point normalizes to (1,1)") {
    Cell cell;
    cell.id = 5;
    cell.origin = {10.0, 20.0};
    cell.cell_size = 30.0;
    CellInstance ci;
    ci.id = 1;
    ci.class_id = 0;
    ci.points.push_back({40.0, 50.0, 3.0, 0.5, 0.5, 0.5});
    ci.center = {40.0, 50.0, 3.0};
    ci.mean_color = {0.5, 0.5, 0.5};
    ci.world_center = ci.center;
    cell.instances.push_back(ci);
    pad_and_normalize(cell, cfg);
    CHECK(cell.instances[0].points[0].x == doctest::Approx(1.0));
    CHECK(cell.instances[0].points[0].y == doctest::Approx(1.0));
    CHECK(cell.instances[0].points[0].z == doctest::Approx(0.1));
  }
}

TEST_CASE("sample_cells builds a normalized, rejected-filtered database") {
  const scene::Scene s = test_scene();
  CellGridConfig cfg;
  const CellDatabase db = sample_cells(s, cfg);
  REQUIRE(!db.cells.empty());
  const auto xs = axis_anchors(0.0, 120.0, 30.0, 10.0);
  CHECK(db.cells.size() < xs.size() * xs.size());  // some cells rejected
  for (const Cell& c : db.cells) {
    CHECK(c.normalized);
    CHECK(c.instances.size() == 16);
    CHECK(c.real_instance_count() >= cfg.min_instances);
    for (const auto& inst : c.instances)
      for (const Point& p : inst.points) {
        CHECK(p.x >= -1e-9);
        CHECK(p.x <= 1.0 + 1e-9);
        CHECK(p.y >= -1e-9);
        CHECK(p.y <= 1.0 + 1e-9);
      }
  }
}

TEST_CASE("ground_truth_cell picks the containing cell with the closest center") {
  const scene::Scene s = test_scene();
  CellGridConfig cfg;
  const CellDatabase db = sample_cells(s, cfg);

  SUBCASE("a position at a cell center maps to that cell") {
    const Cell& c = db.cells[db.cells.size() / 2];
    CHECK(ground_truth_cell(c.center(), db) == c.id);
  }

  SUBCASE("random positions agree with a brute-force scan") {
    Rng rng(71);
    int tested = 0;
    while (tested < 200) {
      const Vec2 p{rng.uniform(0.0, 120.0), rng.uniform(0.0, 120.0)};
      int best = -1;
      double best_d = 1e18;
      for (const Cell& c : db.cells) {
        if (!c.bounds().contains(p)) continue;
        const double d = dist2d(c.center(), p);
        if (d < best_d) {
          best_d = d;
          best = c.id;
        }
      }
      if (best < 0) {
        CHECK_THROWS_AS(ground_truth_cell(p, db), Error);
      } else {
        CHECK(ground_truth_cell(p, db) == best);
      }
      ++tested;
    }
  }
}

TEST_CASE("gt_matches: labeled hints match by id, stale ids stay unmatched") {
  const Cell cell = synthetic_cell({0.0, 0.0}, 30.0,
                                   {{7, 1, {10.0, 10.0}}, {9, 0, {20.0, 20.0}}});
  const Vec2 pos{12.0, 12.0};
  const auto desc = make_desc(pos, {hint_for(7, 1, pos, {10.0, 10.0}),
                                    hint_for(8, 0, pos, {20.0, 20.0})});
  const auto gt = gt_matches(desc, cell);
  CHECK(gt.matched_count == 1);
  CHECK(gt.hint_to_instance[0] == 0);
  CHECK(gt.hint_to_instance[1] == -1);
  // t_gt reproduces the position from the matched instance center.
  const Vec2 y = cell.instances[0].world_center.xy() + gt.t_gt[0] * 30.0;
  CHECK(dist2d(y, pos) < 1e-12);
}

TEST_CASE("gt_matches: clustered hints need class and direction agreement") {
  // Query-side cluster center west of the position; cell-side clusters at
  // slightly different spots.
  const Vec2 pos{15.0, 15.0};
  const Cell cell = synthetic_cell(
      {0.0, 0.0}, 30.0,
      {{scene::clustered_instance_id(1, 6, 0), 6, {5.0, 16.0}},     // ~west, ok
       {scene::clustered_instance_id(1, 6, 1), 6, {25.0, 14.0}},    // east: 170+ deg off
       {scene::clustered_instance_id(1, 7, 0), 7, {5.0, 14.0}}});   // wrong class
  const auto desc =
      make_desc(pos, {hint_for(scene::clustered_instance_id(99, 6, 0), 6, pos,
                               {5.5, 15.0})});
  const auto gt = gt_matches(desc, cell);
  CHECK(gt.matched_count == 1);
  CHECK(gt.hint_to_instance[0] == 0);

  // A hint pointing the opposite way stays unmatched (170 deg disagreement).
  const auto desc2 =
      make_desc(pos, {hint_for(scene::clustered_instance_id(99, 6, 0), 6, pos,
                               {24.0, 16.0})});
  const auto gt2 = gt_matches(desc2, synthetic_cell({0.0, 0.0}, 30.0,
                                                    {{scene::clustered_instance_id(1, 6, 0),
                                                      6,
                                                      {5.0, 14.0}}}));
  CHECK(gt2.matched_count == 0);
}

TEST_CASE("gt_matches equals the exhaustive assignment oracle on random layouts") {
  Rng rng(81);
  for (int trial = 0; trial < 60; ++trial) {
    const Vec2 pos{15.0, 15.0};
    std::vector<std::tuple<long long, int, Vec2>> layout;
    const int n_inst = 6 + rng.uniform_int(8);
    for (int i = 0; i < n_inst; ++i) {
      const int cls = 6 + rng.uniform_int(2);  // two stuff classes
      layout.push_back({scene::clustered_instance_id(1, cls, i), cls,
                        Vec2{rng.uniform(2.0, 28.0), rng.uniform(2.0, 28.0)}});
    }
    const Cell cell = synthetic_cell({0.0, 0.0}, 30.0, layout);

    std::vector<query::Hint> hints;
    const int n_h = 3 + rng.uniform_int(4);
    for (int j = 0; j < n_h; ++j) {
      const int cls = 6 + rng.uniform_int(2);
      hints.push_back(hint_for(scene::clustered_instance_id(99, cls, j), cls, pos,
                               {rng.uniform(2.0, 28.0), rng.uniform(2.0, 28.0)}));
    }
    const auto desc = make_desc(pos, hints);
    const auto gt = gt_matches(desc, cell);

    // Build the same feasibility structure for the oracle.
    oracle::AssignmentOracle orc;
    orc.feasible.resize(hints.size());
    for (std::size_t j = 0; j < hints.size(); ++j) {
      const Vec2 hint_dir = hints[j].offset * -1.0;
      for (int i = 0; i < static_cast<int>(cell.instances.size()); ++i) {
        const auto& inst = cell.instances[static_cast<std::size_t>(i)];
        if (inst.class_id != hints[j].target_class_id) continue;
        const double ang = angle_between(hint_dir, inst.world_center.xy() - pos);
        if (ang < 45.0 * M_PI / 180.0)
          orc.feasible[j].push_back({i, match_cost(hints[j], inst, pos)});
      }
    }
    orc.solve();

    CHECK(gt.matched_count == orc.best_card);
    double got_cost = 0.0;
    for (std::size_t j = 0; j < hints.size(); ++j) {
      const int i = gt.hint_to_instance[j];
      if (i < 0) continue;
      got_cost += match_cost(hints[j], cell.instances[static_cast<std::size_t>(i)], pos);
    }
    CHECK(got_cost == doctest::Approx(orc.best_cost).epsilon(1e-9));
    // The perturbed cost makes the optimum unique: pair sets must agree.
    CHECK(gt.hint_to_instance == orc.best_assign);
  }
}

TEST_CASE("gt_matches is injective and stable under hint reordering") {
  Rng rng(82);
  const Vec2 pos{15.0, 15.0};
  std::vector<std::tuple<long long, int, Vec2>> layout;
  for (int i = 0; i < 10; ++i)
    layout.push_back({scene::clustered_instance_id(1, 6, i), 6,
                      Vec2{rng.uniform(2.0, 28.0), rng.uniform(2.0, 28.0)}});
  const Cell cell = synthetic_cell({0.0, 0.0}, 30.0, layout);
  std::vector<query::Hint> hints;
  for (int j = 0; j < 5; ++j)
    hints.push_back(hint_for(scene::clustered_instance_id(99, 6, j), 6, pos,
                             {rng.uniform(2.0, 28.0), rng.uniform(2.0, 28.0)}));
  const auto gt = gt_matches(make_desc(pos, hints), cell);

  // Injectivity.
  std::set<int> used;
  for (int i : gt.hint_to_instance) {
    if (i < 0) continue;
    CHECK(used.insert(i).second);
  }

  // Reversing the hints permutes the assignment identically.
  std::vector<query::Hint> rev(hints.rbegin(), hints.rend());
  const auto gt_rev = gt_matches(make_desc(pos, rev), cell);
  for (std::size_t j = 0; j < hints.size(); ++j)
    CHECK(gt.hint_to_instance[j] == gt_rev.hint_to_instance[hints.size() - 1 - j]);
}

TEST_CASE("cell database round trips through its binary file") {
  const scene::Scene s = test_scene();
  CellGridConfig cfg;
  const CellDatabase db = sample_cells(s, cfg);
  save_celldb(db, "test_celldb.bin");
  const CellDatabase loaded = load_celldb("test_celldb.bin");
  CHECK(loaded.scene_id == db.scene_id);
  REQUIRE(loaded.cells.size() == db.cells.size());
  for (std::size_t i = 0; i < db.cells.size(); ++i) {
    CHECK(loaded.cells[i].id == db.cells[i].id);
    CHECK(loaded.cells[i].origin == db.cells[i].origin);
    REQUIRE(loaded.cells[i].instances.size() == db.cells[i].instances.size());
    for (std::size_t k = 0; k < db.cells[i].instances.size(); ++k) {
      CHECK(loaded.cells[i].instances[k].id == db.cells[i].instances[k].id);
      CHECK(loaded.cells[i].instances[k].points == db.cells[i].instances[k].points);
      CHECK(loaded.cells[i].instances[k].world_center ==
            db.cells[i].instances[k].world_center);
    }
  }
  // Re-saving the loaded database is byte-identical.
  save_celldb(loaded, "test_celldb2.bin");
  std::ifstream a("test_celldb.bin", std::ios::binary);
  std::ifstream b("test_celldb2.bin", std::ios::binary);
  const std::string ba((std::istreambuf_iterator<char>(a)), {});
  const std::string bb((std::istreambuf_iterator<char>(b)), {});
  CHECK(ba == bb);
  std::remove("test_celldb.bin");
  std::remove("test_celldb2.bin");
}
