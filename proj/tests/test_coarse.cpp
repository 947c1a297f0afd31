#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "support/fixtures.hpp"
#include "textloc/coarse.hpp"
#include "textloc/gradcheck.hpp"

using namespace textloc;
using namespace textloc::coarse;
using ad::BoundParams;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

std::vector<Var> leaf_rows(Tape& t, const std::vector<std::vector<double>>& rows) {
  std::vector<Var> out;
  for (const auto& r : rows) out.push_back(t.leaf(Tensor::vec(r)));
  return out;
}

}  // namespace

TEST_CASE("ranking loss is zero when every pair satisfies the margin") {
  Tape t;
  // Diagonal similarity 1, off-diagonal 0: orthonormal matched pairs.
  auto c = leaf_rows(t, {{1.0, 0.0}, {0.0, 1.0}});
  auto x = leaf_rows(t, {{1.0, 0.0}, {0.0, 1.0}});
  Var loss = ranking_loss(t, c, x, 0.35);
  CHECK(t.val(loss).item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ranking loss on a batch of one is zero and warns") {
  Tape t;
  auto c = leaf_rows(t, {{1.0, 0.0}});
  auto x = leaf_rows(t, {{1.0, 0.0}});
  bool warned = false;
  Var loss = ranking_loss(t, c, x, 0.35, &warned);
  CHECK(t.val(loss).item() == 0.0);
  CHECK(warned);
}

TEST_CASE("2x2 ranking loss with 0.9 cross similarities is exactly 1.0") {
  // C1 = T1, C2 = T2, unit norm, <C1,T2> = <C2,T1> = 0.9:
  // four active hinges of [0.35 - 1 + 0.9] = 0.25 each.
  const double s = std::sqrt(1.0 - 0.81);
  Tape t;
  auto c = leaf_rows(t, {{1.0, 0.0}, {0.9, s}});
  auto x = leaf_rows(t, {{1.0, 0.0}, {0.9, s}});
  Var loss = ranking_loss(t, c, x, 0.35);
  CHECK(t.val(loss).item() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ranking loss is nonnegative and symmetric under batch permutation") {
  Rng rng(19);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::vector<double>> cv, tv;
    const int n = 3 + rng.uniform_int(4);
    for (int i = 0; i < n; ++i) {
      std::vector<double> a(4), b(4);
      for (auto& x : a) x = rng.uniform(-1.0, 1.0);
      for (auto& x : b) x = rng.uniform(-1.0, 1.0);
      cv.push_back(a);
      tv.push_back(b);
    }
    Tape t;
    const double base = t.val(ranking_loss(t, leaf_rows(t, cv), leaf_rows(t, tv), 0.35)).item();
    CHECK(base >= 0.0);

    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    rng.shuffle(perm);
    std::vector<std::vector<double>> cp, tp;
    for (int i : perm) {
      cp.push_back(cv[static_cast<std::size_t>(i)]);
      tp.push_back(tv[static_cast<std::size_t>(i)]);
    }
    Tape t2;
    const double permuted =
        t2.val(ranking_loss(t2, leaf_rows(t2, cp), leaf_rows(t2, tp), 0.35)).item();
    CHECK(permuted == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("ranking loss gradient matches finite differences") {
  Rng rng(23);
  for (int seed = 0; seed < 5; ++seed) {
    const int n = 4, d = 3;
    Tensor flat({n * d});
    for (double& x : flat.v) x = rng.uniform(-1.0, 1.0);
    Tensor other({n, d});
    for (double& x : other.v) x = rng.uniform(-1.0, 1.0);

    auto build = [&](Tape& t, Var x) {
      std::vector<Var> cs, ts;
      Var m = t.reshape(x, {n, d});
      Var o = t.leaf(other);
      for (int i = 0; i < n; ++i) {
        cs.push_back(t.reshape(t.gather_rows(m, {i}), {d}));
        ts.push_back(t.reshape(t.gather_rows(o, {i}), {d}));
      }
      return ranking_loss(t, cs, ts, 0.35);
    };
    Tape t;
    Var x = t.leaf(flat);
    Var loss = build(t, x);
    t.backward(loss);
    auto f = [&](const Tensor& probe) {
      Tape t2;
      Var p = t2.leaf(probe);
      return t2.val(build(t2, p)).item();
    };
    const auto res = ad::finite_diff_check(f, flat, t.grad(x), 1e-4);
    CAPTURE(res.max_rel_err);
    CHECK(res.pass);
  }
}

TEST_CASE("retrieve_topk: exact search with deterministic ties") {
  RetrievalIndex index;
  index.cell_ids = {10, 20, 30, 40};
  index.embeddings = Tensor::matrix(4, 2, {1.0, 0.0,   // id 10
                                           0.0, 1.0,   // id 20
                                           -1.0, 0.0,  // id 30
                                           0.0, 1.0}); // id 40, tie with 20

  SUBCASE("zero distance ranks first") {
    const auto top = retrieve_topk(Tensor::vec({1.0, 0.0}), index, 1);
    CHECK(top == std::vector<int>{10});
  }
  SUBCASE("ties break to the lowest cell id") {
    const auto top = retrieve_topk(Tensor::vec({0.0, 1.0}), index, 2);
    CHECK(top[0] == 20);
    CHECK(top[1] == 40);
  }
  SUBCASE("k beyond the database returns a flagged full permutation") {
    bool truncated = false;
    const auto top = retrieve_topk(Tensor::vec({1.0, 1.0}), index, 9, &truncated);
    CHECK(truncated);
    CHECK(top.size() == 4);
    std::vector<int> sorted = top;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{10, 20, 30, 40});
  }
}

TEST_CASE("retrieve_topk matches a brute-force sort and survives rigid transforms") {
  Rng rng(29);
  const int n = 40, d = 8;
  RetrievalIndex index;
  index.embeddings = Tensor({n, d});
  for (int i = 0; i < n; ++i) {
    std::vector<double> row(d);
    double norm = 0.0;
    for (auto& x : row) {
      x = rng.uniform(-1.0, 1.0);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (int j = 0; j < d; ++j) index.embeddings.at(i, j) = row[static_cast<std::size_t>(j)] / norm;
    index.cell_ids.push_back(i);
  }

  Tensor q({d});
  for (double& x : q.v) x = rng.uniform(-1.0, 1.0);
  const auto got = retrieve_topk(q, index, 10);

  // Brute force on normalized query.
  double qn = 0.0;
  for (double x : q.v) qn += x * x;
  qn = std::sqrt(qn);
  std::vector<std::pair<double, int>> ranked;
  for (int i = 0; i < n; ++i) {
    double d2 = 0.0;
    for (int j = 0; j < d; ++j) {
      const double diff = index.embeddings.at(i, j) - q.at(j) / qn;
      d2 += diff * diff;
    }
    ranked.push_back({d2, i});
  }
  std::sort(ranked.begin(), ranked.end());
  for (int i = 0; i < 10; ++i)
    CHECK(got[static_cast<std::size_t>(i)] == ranked[static_cast<std::size_t>(i)].second);

  // A common rotation of database and query preserves the ranking.
  RetrievalIndex rotated = index;
  Tensor qr = q;
  Rng rot_rng(31);
  for (int g = 0; g < 20; ++g) {
    const int a = rot_rng.uniform_int(d);
    int b = rot_rng.uniform_int(d);
    if (a == b) b = (b + 1) % d;
    const double ang = rot_rng.uniform(0.0, 2.0 * M_PI);
    const double ca = std::cos(ang), sa = std::sin(ang);
    for (int i = 0; i < n; ++i) {
      const double xa = rotated.embeddings.at(i, a), xb = rotated.embeddings.at(i, b);
      rotated.embeddings.at(i, a) = ca * xa - sa * xb;
      rotated.embeddings.at(i, b) = sa * xa + ca * xb;
    }
    const double ya = qr.at(a), yb = qr.at(b);
    qr.at(a) = ca * ya - sa * yb;
    qr.at(b) = sa * ya + ca * yb;
  }
  CHECK(retrieve_topk(qr, rotated, 10) == got);
}

TEST_CASE("index round trips through its file") {
  Rng rng(37);
  RetrievalIndex index;
  index.cell_ids = {3, 1, 7};
  index.embeddings = Tensor({3, 4});
  for (double& x : index.embeddings.v) x = rng.uniform(-1.0, 1.0);
  save_index(index, "test_index.bin");
  const RetrievalIndex loaded = load_index("test_index.bin");
  CHECK(loaded.cell_ids == index.cell_ids);
  CHECK(loaded.embeddings == index.embeddings);
  std::remove("test_index.bin");
}

TEST_CASE("cell flips keep descriptions consistent with geometry") {
  Rng rng(41);
  auto world = fixtures::toy_world(4, 6, 2, 6, 10, 3);
  const auto& desc = world.descriptions[0];
  const auto& cell = world.db.cells[0];

  for (const bool fx : {false, true}) {
    for (const bool fy : {false, true}) {
      const cells::Cell fc = flip_cell(cell, fx, fy);
      const query::QueryDescription fd = flip_description(desc, fx, fy);
      // Flipped position inside the cell frame.
      Vec2 pos = desc.position;
      if (fx) pos.x = cell.origin.x + (cell.cell_size - (pos.x - cell.origin.x));
      if (fy) pos.y = cell.origin.y + (cell.cell_size - (pos.y - cell.origin.y));
      for (std::size_t j = 0; j < fd.hints.size(); ++j) {
        const auto& h = fd.hints[j];
        // The flipped hint's target sits at flipped world center; offset and
        // direction word must match the flipped geometry.
        bool found = false;
        for (const auto& inst : fc.instances) {
          if (inst.id != h.target_id) continue;
          found = true;
          const Vec2 off = pos - inst.world_center.xy();
          CHECK(off.x == doctest::Approx(h.offset.x).epsilon(1e-9));
          CHECK(off.y == doctest::Approx(h.offset.y).epsilon(1e-9));
          CHECK(query::direction_word(h.offset) == h.direction_word);
          CHECK(query::render_hint_text(h.direction_word, h.color_word, h.class_word) ==
                h.text);
        }
        CHECK(found);
      }
    }
  }
}

TEST_CASE("overfit: 8 unique-class-multiset cells reach top-1 recall 1.0") {
  auto world = fixtures::toy_world(8, 6, 3, 6, 10, 11);
  query::Dataset dataset;
  dataset.descriptions = world.descriptions;

  enc::EncoderConfig enc_cfg;
  enc_cfg.dim = 16;
  TrainConfigCoarse cfg;
  cfg.batch_size = 24;
  cfg.epochs = 48;
  cfg.val_fraction = 0.0;
  cfg.augment_hint_shuffle = false;
  cfg.augment_cell_flips = false;
  cfg.augment_z_rotation = false;
  cfg.seed = 7;

  const CoarseModel model = train_coarse(dataset, world.db, world.vocab, enc_cfg, cfg);
  const RetrievalIndex index = build_index(model, world.db);
  int hits = 0;
  for (std::size_t i = 0; i < world.descriptions.size(); ++i) {
    const Tensor f_t = embed_description(model, world.descriptions[i]);
    const auto top = retrieve_topk(f_t, index, 1);
    if (top[0] == world.gt_cell_ids[i]) ++hits;
  }
  CHECK(hits == static_cast<int>(world.descriptions.size()));
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  auto world = fixtures::toy_world(4, 6, 2, 6, 10, 13);
  query::Dataset dataset;
  dataset.descriptions = world.descriptions;
  enc::EncoderConfig enc_cfg;
  enc_cfg.dim = 8;
  TrainConfigCoarse cfg;
  cfg.batch_size = 8;
  cfg.epochs = 2;
  cfg.lr = 0.0;
  cfg.val_fraction = 0.0;
  cfg.seed = 3;

  const CoarseModel model = train_coarse(dataset, world.db, world.vocab, enc_cfg, cfg);
  ad::ParamStore fresh;
  Rng rng(derive_seed(3, "coarse-init"));
  enc::init_coarse_params(fresh, enc_cfg, world.vocab.size(), rng);
  for (const auto& name : fresh.names()) CHECK(model.params.at(name) == fresh.at(name));
}

TEST_CASE("augmentation changes the training trajectory") {
  auto world = fixtures::toy_world(4, 6, 2, 6, 10, 17);
  query::Dataset dataset;
  dataset.descriptions = world.descriptions;
  enc::EncoderConfig enc_cfg;
  enc_cfg.dim = 8;
  TrainConfigCoarse base;
  base.batch_size = 8;
  base.epochs = 2;
  base.val_fraction = 0.0;
  base.seed = 5;
  base.augment_cell_flips = false;
  base.augment_z_rotation = false;
  base.augment_hint_shuffle = false;

  TrainConfigCoarse aug = base;
  aug.augment_cell_flips = true;
  aug.augment_z_rotation = true;

  const CoarseModel a = train_coarse(dataset, world.db, world.vocab, enc_cfg, base);
  const CoarseModel b = train_coarse(dataset, world.db, world.vocab, enc_cfg, aug);
  bool any_diff = false;
  for (const auto& name : a.params.names())
    if (!(a.params.at(name) == b.params.at(name))) any_diff = true;
  CHECK(any_diff);

  // Same seed and settings reproduce identical parameters.
  const CoarseModel c = train_coarse(dataset, world.db, world.vocab, enc_cfg, base);
  for (const auto& name : a.params.names())
    CHECK(a.params.at(name) == c.params.at(name));
}
