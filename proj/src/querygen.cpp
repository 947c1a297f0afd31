#include "textloc/querygen.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "textloc/palette.hpp"
#include "textloc/rng.hpp"

namespace textloc::query {

using scene::Instance;
using scene::Scene;

Strategy strategy_from_name(const std::string& name) {
  if (name == "closest") return Strategy::Closest;
  if (name == "direction") return Strategy::DirectionCoverage;
  if (name == "class") return Strategy::ClassDiversity;
  fail("querygen: unknown strategy '", name, "'");
}

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Closest: return "closest";
    case Strategy::DirectionCoverage: return "direction";
    default: return "class";
  }
}

std::string direction_word(Vec2 offset) {
  static const char* kWords[8] = {"east", "northeast", "north", "northwest",
                                  "west", "southwest", "south", "southeast"};
  if (offset.norm() < 1e-12) return "on top of";
  double deg = std::atan2(offset.y, offset.x) * 180.0 / M_PI;
  if (deg < 0.0) deg += 360.0;
  const int sector = static_cast<int>(std::floor((deg + 22.5) / 45.0)) % 8;
  return kWords[sector];
}

std::string render_hint_text(const std::string& direction, const std::string& color,
                             const std::string& class_word) {
  // "on top of" carries its own "of"; every compass word needs one.
  if (direction == "on top of")
    return "The pose is on top of a " + color + " " + class_word + ".";
  return "The pose is " + direction + " of a " + color + " " + class_word + ".";
}

Hint describe(Vec2 position, const Instance& target,
              const scene::ClassRegistry& registry) {
  Hint h;
  h.target_id = target.id;
  h.target_class_id = target.class_id;
  h.class_word = registry.at(target.class_id).name;
  h.offset = position - target.center.xy();
  h.direction_word = direction_word(h.offset);
  h.color_word =
      nearest_palette_name(target.mean_color.x, target.mean_color.y, target.mean_color.z);
  h.text = render_hint_text(h.direction_word, h.color_word, h.class_word);
  return h;
}

std::vector<Instance> candidate_pool(Vec2 position, const Scene& s,
                                     const QueryConfig& cfg, long long pool_key) {
  std::vector<Instance> pool;
  for (const Instance& inst : s.instances)
    if (dist2d(inst.center.xy(), position) <= cfg.radius) pool.push_back(inst);

  // Stuff classes cluster inside a synthetic cell centered on the position.
  const double half = cfg.cell_size * 0.5;
  const Rect cell{{position.x - half, position.y - half},
                  {position.x + half, position.y + half}};
  for (const auto& [class_id, points] : s.stuff) {
    std::vector<scene::Point> local;
    for (const scene::Point& p : points)
      if (cell.contains({p.x, p.y})) local.push_back(p);
    auto clusters = scene::cluster_stuff(
        local, class_id, cfg.cluster.eps, cfg.cluster.min_pts,
        cfg.cluster.effective_min_cluster_points(), pool_key);
    for (Instance& inst : clusters)
      if (dist2d(inst.center.xy(), position) <= cfg.radius)
        pool.push_back(std::move(inst));
  }
  return pool;
}

namespace {

std::vector<int> closest_order(Vec2 position, const std::vector<Instance>& pool) {
  std::vector<int> order(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double da = dist2d(pool[static_cast<std::size_t>(a)].center.xy(), position);
    const double db = dist2d(pool[static_cast<std::size_t>(b)].center.xy(), position);
    if (da != db) return da < db;
    return pool[static_cast<std::size_t>(a)].id < pool[static_cast<std::size_t>(b)].id;
  });
  return order;
}

std::vector<int> pick_direction_coverage(Vec2 position,
                                         const std::vector<Instance>& pool,
                                         int num_hints) {
  // Greedy max-min-angle over the direction vectors instance -> position.
  std::vector<Vec2> dirs(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i)
    dirs[i] = position - pool[i].center.xy();
  const std::vector<int> order = closest_order(position, pool);

  std::vector<int> picked{order[0]};
  std::vector<char> used(pool.size(), 0);
  used[static_cast<std::size_t>(order[0])] = 1;
  while (static_cast<int>(picked.size()) < num_hints) {
    int best = -1;
    double best_angle = -1.0;
    for (int cand : order) {
      if (used[static_cast<std::size_t>(cand)]) continue;
      double min_angle = M_PI * 2.0;
      for (int sel : picked)
        min_angle = std::min(min_angle,
                             angle_between(dirs[static_cast<std::size_t>(cand)],
                                           dirs[static_cast<std::size_t>(sel)]));
      // Strictly greater keeps the closest candidate on ties (order is by
      // distance).
      if (min_angle > best_angle) {
        best_angle = min_angle;
        best = cand;
      }
    }
    picked.push_back(best);
    used[static_cast<std::size_t>(best)] = 1;
  }
  return picked;
}

std::vector<int> pick_class_diversity(Vec2 position,
                                      const std::vector<Instance>& pool,
                                      int num_hints) {
  const std::vector<int> order = closest_order(position, pool);
  std::map<int, int> class_count;
  std::vector<int> picked;
  std::vector<char> used(pool.size(), 0);
  while (static_cast<int>(picked.size()) < num_hints) {
    int best = -1;
    int best_count = INT_MAX;
    for (int cand : order) {
      if (used[static_cast<std::size_t>(cand)]) continue;
      const int cls = pool[static_cast<std::size_t>(cand)].class_id;
      auto it = class_count.find(cls);
      const int count = it == class_count.end() ? 0 : it->second;
      if (count < best_count) {
        best_count = count;
        best = cand;
      }
    }
    picked.push_back(best);
    used[static_cast<std::size_t>(best)] = 1;
    class_count[pool[static_cast<std::size_t>(best)].class_id] += 1;
  }
  return picked;
}

}  // namespace

std::vector<int> select_instances(Vec2 position, const std::vector<Instance>& pool,
                                  Strategy strategy, int num_hints) {
  require(static_cast<int>(pool.size()) >= num_hints,
          "select_instances: pool of ", pool.size(), " instances cannot supply ",
          num_hints, " hints");
  switch (strategy) {
    case Strategy::Closest: {
      auto order = closest_order(position, pool);
      order.resize(static_cast<std::size_t>(num_hints));
      return order;
    }
    case Strategy::DirectionCoverage:
      return pick_direction_coverage(position, pool, num_hints);
    default:
      return pick_class_diversity(position, pool, num_hints);
  }
}

namespace {

struct PositionRecord {
  Vec2 position;
  std::vector<Instance> pool;
};

std::vector<PositionRecord> sample_position_records(const Scene& s,
                                                    const QueryConfig& cfg,
                                                    std::uint64_t seed) {
  require(!s.trajectory.empty(), "sample_positions: scene has no trajectory");
  require(cfg.spacing > 0.0, "sample_positions: spacing must be positive");
  Rng rng(derive_seed(seed, "query-positions"));

  // Equidistant anchors along the polyline, always including the start.
  std::vector<Vec2> anchors;
  double total = 0.0;
  for (std::size_t i = 1; i < s.trajectory.size(); ++i)
    total += dist2d(s.trajectory[i - 1], s.trajectory[i]);
  for (double at = 0.0; at <= total || anchors.empty(); at += cfg.spacing) {
    double walked = 0.0;
    Vec2 p = s.trajectory.back();
    for (std::size_t i = 1; i < s.trajectory.size(); ++i) {
      const double seg = dist2d(s.trajectory[i - 1], s.trajectory[i]);
      if (walked + seg >= at && seg > 0.0) {
        const double t = (at - walked) / seg;
        p = s.trajectory[i - 1] + (s.trajectory[i] - s.trajectory[i - 1]) * t;
        break;
      }
      walked += seg;
    }
    anchors.push_back(p);
  }

  std::vector<PositionRecord> records;
  long long pool_key = 1 << 20;  // keeps query-side cluster ids off cell ids
  for (const Vec2& anchor : anchors) {
    for (int k = 0; k < cfg.positions_per_location; ++k) {
      const Vec2 pos = anchor + rng.in_disk(cfg.cell_size * 0.5);
      ++pool_key;
      if (!s.extent.contains(pos)) continue;
      auto pool = candidate_pool(pos, s, cfg, pool_key);
      if (static_cast<int>(pool.size()) < cfg.num_hints) continue;
      records.push_back({pos, std::move(pool)});
    }
  }
  return records;
}

}  // namespace

std::vector<Vec2> sample_positions(const Scene& s, const QueryConfig& cfg,
                                   std::uint64_t seed) {
  std::vector<Vec2> out;
  for (const auto& rec : sample_position_records(s, cfg, seed))
    out.push_back(rec.position);
  return out;
}

Dataset generate_dataset(const Scene& s, const QueryConfig& cfg, std::uint64_t seed) {
  require(cfg.num_hints >= 1, "generate_dataset: num_hints must be >= 1");
  require(cfg.radius > 0.0, "generate_dataset: radius must be positive");
  Dataset out;
  const auto records = sample_position_records(s, cfg, seed);
  std::set<std::string> unique_texts;
  int pos_index = 0;
  for (const auto& rec : records) {
    std::set<std::vector<long long>> seen_sets;
    for (const std::string& sname : cfg.strategies) {
      const Strategy strat = strategy_from_name(sname);
      const auto picked = select_instances(rec.position, rec.pool, strat, cfg.num_hints);
      std::vector<long long> id_set;
      for (int i : picked) id_set.push_back(rec.pool[static_cast<std::size_t>(i)].id);
      std::sort(id_set.begin(), id_set.end());
      if (!seen_sets.insert(id_set).second) continue;  // duplicate set, omitted

      QueryDescription desc;
      desc.id = "p" + std::to_string(pos_index) + "-" + sname;
      desc.scene_id = s.id;
      desc.position = rec.position;
      desc.strategy = sname;
      for (int i : picked)
        desc.hints.push_back(
            describe(rec.position, rec.pool[static_cast<std::size_t>(i)], s.registry));

      std::vector<std::string> texts;
      for (const Hint& h : desc.hints) texts.push_back(h.text);
      std::sort(texts.begin(), texts.end());
      std::string joined;
      for (const auto& t : texts) joined += t + "|";
      unique_texts.insert(joined);

      out.descriptions.push_back(std::move(desc));
    }
    ++pos_index;
  }
  out.stats.positions = pos_index;
  out.stats.descriptions = static_cast<int>(out.descriptions.size());
  out.stats.unique_descriptions = static_cast<int>(unique_texts.size());
  out.stats.unique_ratio =
      out.stats.descriptions == 0
          ? 0.0
          : static_cast<double>(out.stats.unique_descriptions) / out.stats.descriptions;
  return out;
}

// ---------------------------------------------------------------------------
// JSONL dataset io
// ---------------------------------------------------------------------------

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "save_dataset: cannot open '", path, "'");
  for (const QueryDescription& desc : d.descriptions) {
    nlohmann::ordered_json rec;
    rec["id"] = desc.id;
    rec["scene"] = desc.scene_id;
    rec["position"] = {desc.position.x, desc.position.y};
    rec["strategy"] = desc.strategy;
    auto& hints = rec["hints"] = nlohmann::ordered_json::array();
    for (const Hint& h : desc.hints) {
      nlohmann::ordered_json hj;
      hj["text"] = h.text;
      hj["target_id"] = h.target_id;
      hj["class_id"] = h.target_class_id;
      hj["class"] = h.class_word;
      hj["direction"] = h.direction_word;
      hj["color"] = h.color_word;
      hj["offset"] = {h.offset.x, h.offset.y};
      hints.push_back(std::move(hj));
    }
    os << rec.dump() << "\n";
  }
  require(os.good(), "save_dataset: write failed for '", path, "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "load_dataset: cannot open '", path, "'");
  Dataset out;
  std::set<std::string> unique_texts;
  std::set<std::string> positions;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    QueryDescription desc;
    desc.id = rec.at("id").get<std::string>();
    desc.scene_id = rec.at("scene").get<std::string>();
    desc.position = {rec.at("position").at(0).get<double>(),
                     rec.at("position").at(1).get<double>()};
    desc.strategy = rec.at("strategy").get<std::string>();
    for (const auto& hj : rec.at("hints")) {
      Hint h;
      h.text = hj.at("text").get<std::string>();
      h.target_id = hj.at("target_id").get<long long>();
      h.target_class_id = hj.at("class_id").get<int>();
      h.class_word = hj.at("class").get<std::string>();
      h.direction_word = hj.at("direction").get<std::string>();
      h.color_word = hj.at("color").get<std::string>();
      h.offset = {hj.at("offset").at(0).get<double>(),
                  hj.at("offset").at(1).get<double>()};
      desc.hints.push_back(std::move(h));
    }
    require(!desc.hints.empty(), "load_dataset: description '", desc.id,
            "' has no hints");

    std::vector<std::string> texts;
    for (const Hint& h : desc.hints) texts.push_back(h.text);
    std::sort(texts.begin(), texts.end());
    std::string joined;
    for (const auto& t : texts) joined += t + "|";
    unique_texts.insert(joined);
    positions.insert(std::to_string(desc.position.x) + "," +
                     std::to_string(desc.position.y));
    out.descriptions.push_back(std::move(desc));
  }
  out.stats.positions = static_cast<int>(positions.size());
  out.stats.descriptions = static_cast<int>(out.descriptions.size());
  out.stats.unique_descriptions = static_cast<int>(unique_texts.size());
  out.stats.unique_ratio =
      out.stats.descriptions == 0
          ? 0.0
          : static_cast<double>(out.stats.unique_descriptions) / out.stats.descriptions;
  return out;
}

}  // namespace textloc::query
