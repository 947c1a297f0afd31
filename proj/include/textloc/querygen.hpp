#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textloc/scene.hpp"

namespace textloc::query {

/// One template sentence describing a single instance relative to a position.
struct Hint {
  std::string text;
  long long target_id = 0;
  int target_class_id = -1;
  std::string class_word;
  std::string direction_word;
  std::string color_word;
  Vec2 offset;  // position - target center, 2D; the translation target

  bool target_is_clustered() const { return target_id < 0; }
};

struct QueryDescription {
  std::string id;
  std::string scene_id;
  Vec2 position;
  std::string strategy;
  std::vector<Hint> hints;  // exactly num_hints entries
};

struct QueryConfig {
  double spacing = 10.0;           // trajectory anchor spacing, meters
  int positions_per_location = 4;  // jittered positions per anchor
  double cell_size = 30.0;         // max jitter = cell_size / 2
  double radius = 15.0;            // description radius, meters
  int num_hints = 6;               // N_h
  std::vector<std::string> strategies = {"closest", "direction", "class"};
  scene::ClusterConfig cluster;    // query-side stuff clustering
};

enum class Strategy { Closest, DirectionCoverage, ClassDiversity };

Strategy strategy_from_name(const std::string& name);
const char* strategy_name(Strategy s);

/// 8-way compass word for a 2D offset (position - target center), sector
/// boundaries at odd multiples of 22.5 degrees, boundaries belonging to the
/// counterclockwise sector. A zero offset reads "on top of".
std::string direction_word(Vec2 offset);

/// Exact sentence template; re-rendering a hint's fields must reproduce its
/// text byte-for-byte.
std::string render_hint_text(const std::string& direction, const std::string& color,
                             const std::string& class_word);

Hint describe(Vec2 position, const scene::Instance& target,
              const scene::ClassRegistry& registry);

/// Instances eligible to describe `position`: labeled instances plus stuff
/// clusters from a synthetic cell centered on the position, all with centers
/// inside the description radius. pool_key seeds the clustered instance ids.
std::vector<scene::Instance> candidate_pool(Vec2 position, const scene::Scene& s,
                                            const QueryConfig& cfg,
                                            long long pool_key);

/// Pick num_hints instances from the pool. Throws if the pool is too small.
std::vector<int> select_instances(Vec2 position,
                                  const std::vector<scene::Instance>& pool,
                                  Strategy strategy, int num_hints);

/// Jittered positions along the trajectory whose candidate pools hold at
/// least num_hints instances.
std::vector<Vec2> sample_positions(const scene::Scene& s, const QueryConfig& cfg,
                                   std::uint64_t seed);

struct DatasetStats {
  int positions = 0;
  int descriptions = 0;
  int unique_descriptions = 0;
  double unique_ratio = 0.0;
};

struct Dataset {
  std::vector<QueryDescription> descriptions;
  DatasetStats stats;
};

/// Position sampling + per-strategy selection + hint rendering, with
/// identical instance sets deduplicated at the description level.
Dataset generate_dataset(const scene::Scene& s, const QueryConfig& cfg,
                         std::uint64_t seed);

/// Line-delimited JSON, one record per description.
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace textloc::query
