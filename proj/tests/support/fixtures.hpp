#pragma once

// Small deterministic fixtures shared by the unit and acceptance suites.

#include <tuple>
#include <vector>

#include "textloc/celldb.hpp"
#include "textloc/encoders.hpp"
#include "textloc/querygen.hpp"
#include "textloc/rng.hpp"

namespace textloc::fixtures {

/// Normalized cell-local instance with `count` points around a normalized
/// center; colors jittered around the given anchor.
inline cells::CellInstance cell_instance(long long id, int class_id, Vec2 norm_center,
                                         Vec2 cell_origin, double w, int count,
                                         Vec3 color, Rng& rng) {
  cells::CellInstance inst;
  inst.id = id;
  inst.class_id = class_id;
  for (int i = 0; i < count; ++i) {
    const double dx = rng.uniform(-0.03, 0.03);
    const double dy = rng.uniform(-0.03, 0.03);
    auto ch = [&](double v) {
      return std::max(0.0, std::min(1.0, v + rng.uniform(-0.03, 0.03)));
    };
    inst.points.push_back({norm_center.x + dx, norm_center.y + dy,
                           rng.uniform(0.0, 0.15), ch(color.x), ch(color.y),
                           ch(color.z)});
  }
  inst.center = scene::mean_position(inst.points);
  inst.mean_color = scene::mean_color_of(inst.points);
  inst.world_center = {cell_origin.x + inst.center.x * w,
                       cell_origin.y + inst.center.y * w, inst.center.z * w};
  return inst;
}

struct ToyWorld {
  cells::CellDatabase db;
  std::vector<query::QueryDescription> descriptions;  // grounded to cells by index
  std::vector<int> gt_cell_ids;                       // parallel to descriptions
  enc::Vocabulary vocab;
};

/// num_cells cells in a row (non-overlapping, W = 30), each holding
/// `instances_per_cell` labeled instances with a cell-unique class multiset,
/// plus `queries_per_cell` descriptions per cell referencing its instances.
inline ToyWorld toy_world(int num_cells, int instances_per_cell, int queries_per_cell,
                          int num_hints, int points_per_instance, std::uint64_t seed) {
  ToyWorld world;
  const double w = 30.0;
  Rng rng(derive_seed(seed, "toy-world"));
  const auto registry = scene::ClassRegistry::standard();
  world.vocab = enc::Vocabulary::build(registry);
  world.db.scene_id = "toy";
  world.db.config.cell_size = w;
  world.db.config.stride = w;
  world.db.config.padded_instances = 16;

  // Per-instance colors come from distinct palette-anchor-like points so the
  // rendered color words vary within a class, as the scene generator does.
  static const Vec3 kColors[6] = {{0.55, 0.35, 0.15}, {0.5, 0.5, 0.5},
                                  {1.0, 0.9, 0.1},    {0.1, 0.6, 0.1},
                                  {0.1, 0.2, 0.9},    {1.0, 0.1, 0.1}};

  // n-th size-`size` multiset over {0..classes-1} as a non-decreasing
  // sequence in lexicographic order; distinct n give distinct multisets.
  auto nth_multiset = [](int n, int size, int classes) {
    std::vector<int> seq(static_cast<std::size_t>(size), 0);
    for (int step = 0; step < n; ++step) {
      int pos = size - 1;
      while (pos >= 0 && seq[static_cast<std::size_t>(pos)] == classes - 1) --pos;
      if (pos < 0) break;  // wrapped; enough cells for every caller here
      const int v = seq[static_cast<std::size_t>(pos)] + 1;
      for (int k = pos; k < size; ++k) seq[static_cast<std::size_t>(k)] = v;
    }
    return seq;
  };

  long long next_instance_id = 1;
  for (int c = 0; c < num_cells; ++c) {
    cells::Cell cell;
    cell.id = c;
    cell.origin = {c * w, 0.0};
    cell.cell_size = w;
    const auto classes = nth_multiset(c, instances_per_cell, 6);
    for (int k = 0; k < instances_per_cell; ++k) {
      const int cls = classes[static_cast<std::size_t>(k)];
      const Vec2 norm_center{0.15 + 0.7 * rng.uniform(), 0.15 + 0.7 * rng.uniform()};
      const Vec3 color = kColors[static_cast<std::size_t>(rng.uniform_int(6))];
      cell.instances.push_back(cell_instance(next_instance_id++, cls, norm_center,
                                             cell.origin, w, points_per_instance,
                                             color, rng));
    }
    cells::pad_and_normalize(cell, world.db.config);
    world.db.cells.push_back(std::move(cell));
  }

  for (int c = 0; c < num_cells; ++c) {
    const cells::Cell& cell = world.db.cells[static_cast<std::size_t>(c)];
    for (int q = 0; q < queries_per_cell; ++q) {
      query::QueryDescription desc;
      desc.id = "toy-c" + std::to_string(c) + "-q" + std::to_string(q);
      desc.scene_id = "toy";
      desc.position = cell.center() +
                      Vec2{rng.uniform(-0.25, 0.25) * w, rng.uniform(-0.25, 0.25) * w};
      desc.strategy = "closest";
      for (int h = 0; h < num_hints; ++h) {
        const auto& inst =
            cell.instances[static_cast<std::size_t>(h % cell.real_instance_count())];
        scene::Instance view;
        view.id = inst.id;
        view.class_id = inst.class_id;
        view.center = inst.world_center;
        view.mean_color = inst.mean_color;
        view.points.push_back({0, 0, 0, 0, 0, 0});
        desc.hints.push_back(query::describe(desc.position, view, registry));
      }
      world.descriptions.push_back(std::move(desc));
      world.gt_cell_ids.push_back(c);
    }
  }
  return world;
}

}  // namespace textloc::fixtures
