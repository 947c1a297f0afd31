#include "textloc/celldb.hpp"

#include <algorithm>
#include <cmath>

#include "textloc/rng.hpp"

namespace textloc::cells {

using scene::Instance;
using scene::Point;
using scene::Provenance;

int Cell::real_instance_count() const {
  int n = 0;
  for (const auto& inst : instances)
    if (!inst.is_dummy) ++n;
  return n;
}

const Cell& CellDatabase::cell(int id) const {
  for (const Cell& c : cells)
    if (c.id == id) return c;
  fail("CellDatabase: unknown cell id ", id);
}

std::vector<double> axis_anchors(double lo, double hi, double window, double stride) {
  require(hi - lo >= window, "axis_anchors: extent ", hi - lo,
          " smaller than the window ", window);
  require(stride > 0.0 && stride <= window,
          "axis_anchors: stride must be in (0, window], got ", stride);
  std::vector<double> anchors;
  const double eps = 1e-9;
  for (double a = lo; a + window <= hi + eps; a += stride) anchors.push_back(a);
  const double last = hi - window;
  if (anchors.empty() || last - anchors.back() > eps) anchors.push_back(last);
  return anchors;
}

bool assign_in_cell(const Instance& inst, const Rect& cell_bounds,
                    const CellGridConfig& cfg) {
  if (inst.points.empty()) return false;
  int inside = 0;
  for (const Point& p : inst.points)
    if (cell_bounds.contains({p.x, p.y})) ++inside;
  const double frac = static_cast<double>(inside) / static_cast<double>(inst.points.size());
  return frac >= cfg.third_rule || inside >= cfg.effective_min_overlap();
}

namespace {

CellInstance clipped_copy(const Instance& inst, const Rect& bounds) {
  CellInstance out;
  out.id = inst.id;
  out.class_id = inst.class_id;
  out.provenance = inst.provenance;
  for (const Point& p : inst.points)
    if (bounds.contains({p.x, p.y})) out.points.push_back(p);
  require(!out.points.empty(), "clipped_copy: instance ", inst.id,
          " has no points inside the cell");
  out.center = scene::mean_position(out.points);
  out.mean_color = scene::mean_color_of(out.points);
  out.world_center = out.center;
  return out;
}

}  // namespace

void pad_and_normalize(Cell& cell, const CellGridConfig& cfg) {
  if (cell.normalized) return;  // idempotent
  require(cell.real_instance_count() >= 1,
          "pad_and_normalize: cell ", cell.id, " has no real instances");
  const int n_p = cfg.padded_instances;

  // Cut-off rule: keep the N_p instances with the most (in-cell) points.
  if (static_cast<int>(cell.instances.size()) > n_p) {
    std::stable_sort(cell.instances.begin(), cell.instances.end(),
                     [](const CellInstance& a, const CellInstance& b) {
                       return a.points.size() > b.points.size();
                     });
    cell.instances.resize(static_cast<std::size_t>(n_p));
  }

  const double w = cell.cell_size;
  for (CellInstance& inst : cell.instances) {
    inst.world_center = inst.center;
    for (Point& p : inst.points) {
      p.x = (p.x - cell.origin.x) / w;
      p.y = (p.y - cell.origin.y) / w;
      p.z = p.z / w;
    }
    inst.center = scene::mean_position(inst.points);
  }

  // Dummy padding: 10 black points with coordinates near zero, deterministic
  // per cell so databases are byte-stable.
  Rng rng(derive_seed(static_cast<std::uint64_t>(cell.id), "cell-dummies"));
  while (static_cast<int>(cell.instances.size()) < n_p) {
    CellInstance dummy;
    dummy.id = -(1ll << 40) - static_cast<long long>(cell.instances.size());
    dummy.class_id = -1;
    dummy.is_dummy = true;
    for (int i = 0; i < cfg.dummy_points; ++i)
      dummy.points.push_back(
          {rng.uniform(0.0, 1e-3), rng.uniform(0.0, 1e-3), rng.uniform(0.0, 1e-3),
           0.0, 0.0, 0.0});
    dummy.center = scene::mean_position(dummy.points);
    dummy.mean_color = {0.0, 0.0, 0.0};
    dummy.world_center = {cell.origin.x + dummy.center.x * w,
                          cell.origin.y + dummy.center.y * w, dummy.center.z * w};
    cell.instances.push_back(std::move(dummy));
  }
  cell.normalized = true;
}

CellDatabase sample_cells(const scene::Scene& s, const CellGridConfig& cfg) {
  require(s.extent.width() >= cfg.cell_size && s.extent.height() >= cfg.cell_size,
          "sample_cells: scene extent ", s.extent.width(), "x", s.extent.height(),
          " smaller than the cell size ", cfg.cell_size);
  CellDatabase db;
  db.scene_id = s.id;
  db.config = cfg;

  const auto xs = axis_anchors(s.extent.lo.x, s.extent.hi.x, cfg.cell_size, cfg.stride);
  const auto ys = axis_anchors(s.extent.lo.y, s.extent.hi.y, cfg.cell_size, cfg.stride);

  long long anchor_index = 0;
  int next_id = 0;
  for (double y : ys) {
    for (double x : xs) {
      const long long key = anchor_index++;
      Cell cell;
      cell.id = next_id;
      cell.origin = {x, y};
      cell.cell_size = cfg.cell_size;
      const Rect bounds = cell.bounds();

      for (const Instance& inst : s.instances)
        if (assign_in_cell(inst, bounds, cfg))
          cell.instances.push_back(clipped_copy(inst, bounds));

      for (const auto& [class_id, points] : s.stuff) {
        std::vector<Point> local;
        for (const Point& p : points)
          if (bounds.contains({p.x, p.y})) local.push_back(p);
        auto clusters = scene::cluster_stuff(
            local, class_id, cfg.cluster.eps, cfg.cluster.min_pts,
            cfg.cluster.effective_min_cluster_points(), key);
        for (Instance& inst : clusters) {
          CellInstance ci;
          ci.id = inst.id;
          ci.class_id = inst.class_id;
          ci.provenance = Provenance::Clustered;
          ci.center = inst.center;
          ci.mean_color = inst.mean_color;
          ci.world_center = inst.center;
          ci.points = std::move(inst.points);
          cell.instances.push_back(std::move(ci));
        }
      }

      if (static_cast<int>(cell.instances.size()) < cfg.min_instances) continue;
      pad_and_normalize(cell, cfg);
      cell.id = next_id++;
      db.cells.push_back(std::move(cell));
    }
  }
  return db;
}

int ground_truth_cell(Vec2 position, const CellDatabase& db) {
  int best = -1;
  double best_dist = 0.0;
  for (const Cell& c : db.cells) {
    if (!c.bounds().contains(position)) continue;
    const double d = dist2d(c.center(), position);
    if (best == -1 || d < best_dist - 1e-12 ||
        (std::fabs(d - best_dist) <= 1e-12 && c.id < best)) {
      best = c.id;
      best_dist = d;
    }
  }
  require(best >= 0, "ground_truth_cell: no database cell contains (", position.x,
          ",", position.y, ")");
  return best;
}

// ---------------------------------------------------------------------------
// Ground-truth hint-to-instance matching
// ---------------------------------------------------------------------------

double match_cost(const query::Hint& hint, const CellInstance& inst, Vec2 position) {
  const Vec2 hint_dir = hint.offset * -1.0;  // query position -> target center
  const double angle = hint.target_is_clustered()
                           ? angle_between(hint_dir, inst.world_center.xy() - position)
                           : 0.0;
  std::uint64_t h = fnv1a(&hint.target_id, sizeof hint.target_id);
  h = fnv1a(&inst.id, sizeof inst.id, h);
  return angle + static_cast<double>(h % (1u << 20)) * 1e-15;
}

GroundTruthMatch gt_matches(const query::QueryDescription& desc, const Cell& cell,
                            double direction_threshold_deg) {
  const int n_h = static_cast<int>(desc.hints.size());
  require(n_h <= 20, "gt_matches: too many hints (", n_h, ")");
  const double threshold = direction_threshold_deg * M_PI / 180.0;

  // Feasible pairs with costs. Labeled hints pair only with the id-equal
  // instance; clustered hints pair with same-class instances whose direction
  // agrees within the threshold.
  std::vector<std::vector<std::pair<int, double>>> feasible(
      static_cast<std::size_t>(n_h));
  for (int j = 0; j < n_h; ++j) {
    const query::Hint& h = desc.hints[static_cast<std::size_t>(j)];
    const Vec2 hint_dir = h.offset * -1.0;
    for (int i = 0; i < static_cast<int>(cell.instances.size()); ++i) {
      const CellInstance& inst = cell.instances[static_cast<std::size_t>(i)];
      if (inst.is_dummy) continue;
      if (!h.target_is_clustered()) {
        if (inst.id == h.target_id)
          feasible[static_cast<std::size_t>(j)].push_back(
              {i, match_cost(h, inst, desc.position)});
        continue;
      }
      if (inst.class_id != h.target_class_id) continue;
      const Vec2 inst_dir = inst.world_center.xy() - desc.position;
      if (angle_between(hint_dir, inst_dir) < threshold)
        feasible[static_cast<std::size_t>(j)].push_back(
            {i, match_cost(h, inst, desc.position)});
    }
  }

  // Exact assignment: maximize cardinality, then minimize total cost.
  // DP over instances with a bitmask of matched hints.
  const int n_i = static_cast<int>(cell.instances.size());
  const int masks = 1 << n_h;
  struct State {
    int card = -1;  // -1 marks unreachable
    double cost = 0.0;
  };
  std::vector<std::vector<State>> dp(
      static_cast<std::size_t>(n_i + 1),
      std::vector<State>(static_cast<std::size_t>(masks)));
  // choice[i][mask]: hint assigned to instance i-1 on the best path, or -1.
  std::vector<std::vector<signed char>> choice(
      static_cast<std::size_t>(n_i + 1),
      std::vector<signed char>(static_cast<std::size_t>(masks), -2));
  dp[0][0] = {0, 0.0};

  auto better = [](const State& a, const State& b) {
    if (a.card != b.card) return a.card > b.card;
    return a.cost < b.cost;
  };

  for (int i = 0; i < n_i; ++i) {
    for (int mask = 0; mask < masks; ++mask) {
      const State cur = dp[static_cast<std::size_t>(i)][static_cast<std::size_t>(mask)];
      if (cur.card < 0) continue;
      // Leave instance i unmatched.
      State& skip = dp[static_cast<std::size_t>(i + 1)][static_cast<std::size_t>(mask)];
      if (skip.card < 0 || better(cur, skip)) {
        skip = cur;
        choice[static_cast<std::size_t>(i + 1)][static_cast<std::size_t>(mask)] = -1;
      }
      // Assign instance i to a feasible, still-unmatched hint.
      for (int j = 0; j < n_h; ++j) {
        if (mask & (1 << j)) continue;
        for (const auto& [inst_idx, cost] : feasible[static_cast<std::size_t>(j)]) {
          if (inst_idx != i) continue;
          const State cand{cur.card + 1, cur.cost + cost};
          State& slot =
              dp[static_cast<std::size_t>(i + 1)][static_cast<std::size_t>(mask | (1 << j))];
          if (slot.card < 0 || better(cand, slot)) {
            slot = cand;
            choice[static_cast<std::size_t>(i + 1)]
                  [static_cast<std::size_t>(mask | (1 << j))] =
                      static_cast<signed char>(j);
          }
        }
      }
    }
  }

  int best_mask = 0;
  for (int mask = 1; mask < masks; ++mask) {
    const State& s = dp[static_cast<std::size_t>(n_i)][static_cast<std::size_t>(mask)];
    if (s.card < 0) continue;
    if (better(s, dp[static_cast<std::size_t>(n_i)][static_cast<std::size_t>(best_mask)]))
      best_mask = mask;
  }

  GroundTruthMatch out;
  out.hint_to_instance.assign(static_cast<std::size_t>(n_h), -1);
  out.t_gt.assign(static_cast<std::size_t>(n_h), Vec2{});
  int mask = best_mask;
  for (int i = n_i; i >= 1; --i) {
    const signed char c =
        choice[static_cast<std::size_t>(i)][static_cast<std::size_t>(mask)];
    if (c >= 0) {
      out.hint_to_instance[static_cast<std::size_t>(c)] = i - 1;
      mask &= ~(1 << c);
    }
  }
  for (int j = 0; j < n_h; ++j) {
    const int i = out.hint_to_instance[static_cast<std::size_t>(j)];
    if (i < 0) continue;
    ++out.matched_count;
    const CellInstance& inst = cell.instances[static_cast<std::size_t>(i)];
    out.t_gt[static_cast<std::size_t>(j)] =
        (desc.position - inst.world_center.xy()) * (1.0 / cell.cell_size);
  }
  return out;
}

GroundedDataset ground_dataset(const std::vector<query::QueryDescription>& descs,
                               const CellDatabase& db, bool require_match) {
  GroundedDataset out;
  for (std::size_t d = 0; d < descs.size(); ++d) {
    int cell_id = -1;
    try {
      cell_id = ground_truth_cell(descs[d].position, db);
    } catch (const Error&) {
      ++out.dropped_no_cell;
      continue;
    }
    GroundedExample ex;
    ex.desc_index = static_cast<int>(d);
    ex.cell_id = cell_id;
    ex.gt = gt_matches(descs[d], db.cell(cell_id));
    if (require_match && ex.gt.matched_count == 0) {
      ++out.dropped_no_match;
      continue;
    }
    out.examples.push_back(std::move(ex));
  }
  return out;
}

}  // namespace textloc::cells
