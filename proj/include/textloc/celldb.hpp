#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "textloc/querygen.hpp"
#include "textloc/scene.hpp"

namespace textloc::cells {

struct CellGridConfig {
  double cell_size = 30.0;        // W
  double stride = 10.0;           // S
  double third_rule = 1.0 / 3.0;  // fraction of points inside for assignment
  int min_overlap_points = 250;   // absolute assignment rule at LiDAR density
  double density_factor = 0.2;    // scales the point-count thresholds
  int padded_instances = 16;      // N_p
  int min_instances = 6;          // cells with fewer in-cell instances are rejected
  int dummy_points = 10;
  scene::ClusterConfig cluster;

  int effective_min_overlap() const {
    const int scaled = static_cast<int>(min_overlap_points * density_factor + 0.5);
    return scaled < 1 ? 1 : scaled;
  }
};

/// Cell-local view of an instance: points clipped to the cell and divided by
/// the cell size after pad_and_normalize ran.
struct CellInstance {
  long long id = 0;
  int class_id = -1;
  scene::Provenance provenance = scene::Provenance::Labeled;
  bool is_dummy = false;
  std::vector<scene::Point> points;
  Vec3 center;        // mean of the stored points (normalized after padding)
  Vec3 mean_color;
  Vec3 world_center;  // meters, world frame; kept through normalization
};

struct Cell {
  int id = 0;
  Vec2 origin;  // southwest corner
  double cell_size = 30.0;
  bool normalized = false;
  std::vector<CellInstance> instances;
  std::string street;  // region tag, empty until assigned

  Vec2 center() const { return {origin.x + cell_size * 0.5, origin.y + cell_size * 0.5}; }
  Rect bounds() const {
    return {origin, {origin.x + cell_size, origin.y + cell_size}};
  }
  int real_instance_count() const;
};

struct CellDatabase {
  std::string scene_id;
  CellGridConfig config;
  std::vector<Cell> cells;

  const Cell& cell(int id) const;
};

/// Anchor coordinates along one axis: lo + k*stride while the window fits,
/// plus a final anchor flush with the far boundary.
std::vector<double> axis_anchors(double lo, double hi, double window, double stride);

/// True iff the instance belongs to the cell: at least third_rule of its
/// points inside, or at least the (density-scaled) absolute overlap count.
bool assign_in_cell(const scene::Instance& inst, const Rect& cell_bounds,
                    const CellGridConfig& cfg);

/// Cut to N_p largest-by-point-count, pad with near-zero black dummies, and
/// map coordinates into the cell-local [0,1] frame. Idempotent.
void pad_and_normalize(Cell& cell, const CellGridConfig& cfg);

/// Slide the W x W window at stride S over the scene, assign instances,
/// cluster stuff per cell, reject under-filled cells, and normalize.
CellDatabase sample_cells(const scene::Scene& s, const CellGridConfig& cfg);

/// Among cells containing the position, the one with the closest center;
/// ties break to the lowest cell id. Throws when no cell contains it.
int ground_truth_cell(Vec2 position, const CellDatabase& db);

struct GroundTruthMatch {
  std::vector<int> hint_to_instance;  // per hint: instance index in the cell, or -1
  std::vector<Vec2> t_gt;             // per hint: (position - world center) / W
  int matched_count = 0;

  bool instance_matched(int instance_index) const {
    for (int m : hint_to_instance)
      if (m == instance_index) return true;
    return false;
  }
};

/// Cost of matching a hint to an instance: the direction disagreement angle
/// plus a sub-nanoradian perturbation keyed on (target id, instance id).
/// Angle costs are 1D differences, so crossing assignments tie exactly; the
/// perturbation makes the optimum unique independent of hint order.
double match_cost(const query::Hint& hint, const CellInstance& inst, Vec2 position);

/// Ground-truth grounding of a description inside one cell. Labeled hints
/// match by instance id; clustered hints match instances of the same class
/// whose direction from the query position agrees within
/// direction_threshold_deg. The assignment maximizes the number of matches
/// and, among those, minimizes the summed match_cost.
GroundTruthMatch gt_matches(const query::QueryDescription& desc, const Cell& cell,
                            double direction_threshold_deg = 45.0);

void save_celldb(const CellDatabase& db, const std::string& path);
CellDatabase load_celldb(const std::string& path);

struct GroundedExample {
  int desc_index = -1;
  int cell_id = -1;
  GroundTruthMatch gt;  // grounding against the GT cell
};

struct GroundedDataset {
  std::vector<GroundedExample> examples;
  int dropped_no_cell = 0;    // no database cell contains the position
  int dropped_no_match = 0;   // grounding found no hint-to-instance match
};

/// Ground every description to its GT cell. Ungroundable descriptions are
/// dropped and counted; with require_match set, descriptions whose GT-cell
/// grounding is empty are dropped too (they cannot supervise or be scored by
/// the refinement stage).
GroundedDataset ground_dataset(const std::vector<query::QueryDescription>& descs,
                               const CellDatabase& db, bool require_match);

}  // namespace textloc::cells
