#include "textloc/coarse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>

namespace textloc::coarse {

using ad::BoundParams;
using ad::ParamStore;
using ad::Tape;
using ad::Tensor;
using ad::Var;

Var ranking_loss(Tape& t, const std::vector<Var>& cell_embeddings,
                 const std::vector<Var>& text_embeddings, double margin,
                 bool* warned) {
  require(cell_embeddings.size() == text_embeddings.size(),
          "ranking_loss: batch sides differ (", cell_embeddings.size(), " vs ",
          text_embeddings.size(), ")");
  require(margin >= 0.0, "ranking_loss: margin must be >= 0, got ", margin);
  const int n = static_cast<int>(cell_embeddings.size());
  if (warned != nullptr) *warned = n < 2;
  if (n < 2) return t.leaf(Tensor::scalar(0.0));

  Var c = t.l2normalize_rows(t.stack_rows(cell_embeddings));
  Var txt = t.l2normalize_rows(t.stack_rows(text_embeddings));
  Var sims = t.matmul(c, t.transpose(txt));  // sims[i][j] = <C_i, T_j>

  std::vector<std::pair<int, int>> diag_idx;
  for (int i = 0; i < n; ++i) diag_idx.push_back({i, i});
  Var diag = t.gather_elems(sims, diag_idx);
  Var row_shift = t.add_scalar(t.neg(diag), margin);  // margin - <C_i, T_i>

  // Hinge over the full matrix; the diagonal contributes exactly relu(margin)
  // = margin per row with zero net gradient, removed as a constant.
  Var side1 = t.sum(t.relu(t.add_colvec(sims, row_shift)));
  Var side2 = t.sum(t.relu(t.add_colvec(t.transpose(sims), row_shift)));
  return t.add_scalar(t.add(side1, side2), -2.0 * n * margin);
}

// ---------------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------------

cells::Cell flip_cell(const cells::Cell& cell, bool flip_x, bool flip_y) {
  cells::Cell out = cell;
  if (!flip_x && !flip_y) return out;
  for (cells::CellInstance& inst : out.instances) {
    for (scene::Point& p : inst.points) {
      if (flip_x) p.x = 1.0 - p.x;
      if (flip_y) p.y = 1.0 - p.y;
    }
    inst.center = scene::mean_position(inst.points);
    inst.world_center = {out.origin.x + inst.center.x * out.cell_size,
                         out.origin.y + inst.center.y * out.cell_size,
                         inst.center.z * out.cell_size};
  }
  return out;
}

query::QueryDescription flip_description(const query::QueryDescription& desc,
                                         bool flip_x, bool flip_y) {
  query::QueryDescription out = desc;
  if (!flip_x && !flip_y) return out;
  for (query::Hint& h : out.hints) {
    if (flip_x) h.offset.x = -h.offset.x;
    if (flip_y) h.offset.y = -h.offset.y;
    h.direction_word = query::direction_word(h.offset);
    h.text = query::render_hint_text(h.direction_word, h.color_word, h.class_word);
  }
  return out;
}

cells::Cell rotate_instances_z(const cells::Cell& cell, Rng& rng) {
  cells::Cell out = cell;
  for (cells::CellInstance& inst : out.instances) {
    if (inst.is_dummy) continue;
    const double ang = rng.uniform(0.0, 2.0 * M_PI);
    const double ca = std::cos(ang), sa = std::sin(ang);
    const Vec2 c = inst.center.xy();
    for (scene::Point& p : inst.points) {
      const double dx = p.x - c.x, dy = p.y - c.y;
      p.x = c.x + ca * dx - sa * dy;
      p.y = c.y + sa * dx + ca * dy;
    }
    inst.center = scene::mean_position(inst.points);
  }
  return out;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

namespace {

bool is_validation_position(Vec2 position, double val_fraction) {
  if (val_fraction <= 0.0) return false;
  double coords[2] = {position.x, position.y};
  const std::uint64_t h = fnv1a(coords, sizeof coords);
  return static_cast<double>(h % 10000) < val_fraction * 10000.0;
}

double coarse_validation_recall(const CoarseModel& model,
                                const std::vector<query::QueryDescription>& descs,
                                const std::vector<int>& val_indices,
                                const cells::CellDatabase& db,
                                const RetrievalIndex& index) {
  if (val_indices.empty()) return 0.0;
  int hits = 0;
  for (int di : val_indices) {
    const auto& desc = descs[static_cast<std::size_t>(di)];
    const Tensor f_t = embed_description(model, desc);
    const auto top = retrieve_topk(f_t, index, 1);
    if (top.empty()) continue;
    const cells::Cell& c = db.cell(top[0]);
    if (dist2d(c.center(), desc.position) < 15.0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(val_indices.size());
}

}  // namespace

CoarseModel train_coarse(const query::Dataset& dataset,
                         const cells::CellDatabase& db,
                         const enc::Vocabulary& vocab,
                         const enc::EncoderConfig& enc_cfg,
                         const TrainConfigCoarse& cfg) {
  require(cfg.batch_size >= 2, "train_coarse: batch size must be >= 2 (in-batch "
          "negatives), got ", cfg.batch_size);
  CoarseModel model;
  model.cfg = enc_cfg;
  model.vocab = vocab;
  Rng init_rng(derive_seed(cfg.seed, "coarse-init"));
  enc::init_coarse_params(model.params, enc_cfg, vocab.size(), init_rng);
  if (!cfg.init_checkpoint.empty()) {
    const ParamStore pre = ad::load_checkpoint(cfg.init_checkpoint);
    for (const auto& name : pre.names())
      if (model.params.has(name)) model.params.at(name) = pre.at(name);
  }

  const auto grounded = cells::ground_dataset(dataset.descriptions, db, false);
  if (grounded.dropped_no_cell > 0)
    std::cerr << "train_coarse: excluded " << grounded.dropped_no_cell
              << " ungroundable descriptions\n";
  require(!grounded.examples.empty(), "train_coarse: no groundable descriptions");

  std::vector<int> train_ids, val_ids;
  std::vector<int> train_cells;
  std::vector<int> val_desc_indices;
  for (const auto& ex : grounded.examples) {
    const auto& desc = dataset.descriptions[static_cast<std::size_t>(ex.desc_index)];
    if (is_validation_position(desc.position, cfg.val_fraction)) {
      val_ids.push_back(ex.desc_index);
    } else {
      train_ids.push_back(ex.desc_index);
      train_cells.push_back(ex.cell_id);
    }
  }
  val_desc_indices = val_ids;
  require(!train_ids.empty(), "train_coarse: empty training split");

  std::ofstream metrics;
  if (!cfg.metrics_csv.empty()) {
    metrics.open(cfg.metrics_csv, std::ios::binary);
    require(metrics.good(), "train_coarse: cannot open metrics csv '",
            cfg.metrics_csv, "'");
    metrics << "epoch,loss,val_recall_top1_15m\n";
  }

  ad::AdamState adam;
  Rng epoch_rng(derive_seed(cfg.seed, "coarse-epochs"));
  ParamStore best_params;
  double best_recall = -1.0;

  std::vector<int> order(train_ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    epoch_rng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      if (end - start < 2) continue;  // the loss needs in-batch negatives

      Tape tape;
      BoundParams bound(tape, model.params);
      std::vector<Var> cell_vars, text_vars;
      std::map<int, Var> plain_cell_cache;  // only valid without geometric aug
      for (std::size_t b = start; b < end; ++b) {
        const int idx = order[b];
        const auto& desc =
            dataset.descriptions[static_cast<std::size_t>(
                train_ids[static_cast<std::size_t>(idx)])];
        const cells::Cell& gt_cell =
            db.cell(train_cells[static_cast<std::size_t>(idx)]);

        query::QueryDescription d = desc;
        if (cfg.augment_hint_shuffle) epoch_rng.shuffle(d.hints);
        const bool fx = cfg.augment_cell_flips && epoch_rng.uniform() < 0.5;
        const bool fy = cfg.augment_cell_flips && epoch_rng.uniform() < 0.5;
        d = flip_description(d, fx, fy);

        const bool geometric = fx || fy || cfg.augment_z_rotation;
        if (!geometric) {
          auto it = plain_cell_cache.find(gt_cell.id);
          if (it == plain_cell_cache.end()) {
            it = plain_cell_cache
                     .emplace(gt_cell.id,
                              enc::encode_cell(tape, bound, gt_cell, enc_cfg))
                     .first;
          }
          cell_vars.push_back(it->second);
        } else {
          cells::Cell c = flip_cell(gt_cell, fx, fy);
          if (cfg.augment_z_rotation) c = rotate_instances_z(c, epoch_rng);
          cell_vars.push_back(enc::encode_cell(tape, bound, c, enc_cfg));
        }
        text_vars.push_back(enc::encode_description(tape, bound, d, vocab, enc_cfg));
      }

      Var loss = ranking_loss(tape, cell_vars, text_vars, cfg.margin);
      tape.backward(loss);
      epoch_loss += tape.val(loss).item();
      ++batches;
      if (cfg.lr > 0.0) adam_step(model.params, bound.grads(), adam, cfg.lr);
    }

    const RetrievalIndex index = build_index(model, db);
    const double recall = coarse_validation_recall(model, dataset.descriptions,
                                                   val_desc_indices, db, index);
    if (metrics.is_open()) {
      char line[128];
      std::snprintf(line, sizeof line, "%d,%.17g,%.17g\n", epoch,
                    batches ? epoch_loss / batches : 0.0, recall);
      metrics << line;
    }
    if (!val_desc_indices.empty() && recall > best_recall) {
      best_recall = recall;
      best_params = model.params;
    }
  }

  if (best_recall >= 0.0 && best_params.size() > 0) model.params = best_params;
  return model;
}

// ---------------------------------------------------------------------------
// retrieval
// ---------------------------------------------------------------------------

namespace {

Tensor l2_normalized(const Tensor& v) {
  double norm = 0.0;
  for (double x : v.v) norm += x * x;
  norm = std::sqrt(norm);
  require(norm > 1e-12, "retrieval: zero-norm embedding");
  Tensor out = v;
  for (double& x : out.v) x /= norm;
  return out;
}

}  // namespace

Tensor embed_description(const CoarseModel& model, const query::QueryDescription& desc) {
  Tape tape;
  BoundParams bound(tape, model.params);
  return tape.val(enc::encode_description(tape, bound, desc, model.vocab, model.cfg));
}

RetrievalIndex build_index(const CoarseModel& model, const cells::CellDatabase& db) {
  require(!db.cells.empty(), "build_index: empty cell database");
  RetrievalIndex index;
  index.embeddings = Tensor({static_cast<int>(db.cells.size()), model.cfg.dim});
  for (std::size_t i = 0; i < db.cells.size(); ++i) {
    Tape tape;
    BoundParams bound(tape, model.params);
    const Tensor f_c = l2_normalized(
        tape.val(enc::encode_cell(tape, bound, db.cells[i], model.cfg)));
    require(f_c.all_finite(), "build_index: non-finite cell embedding");
    for (int j = 0; j < model.cfg.dim; ++j)
      index.embeddings.at(static_cast<int>(i), j) = f_c.at(j);
    index.cell_ids.push_back(db.cells[i].id);
  }
  return index;
}

std::vector<int> retrieve_topk(const Tensor& text_embedding, const RetrievalIndex& index,
                               int k, bool* truncated) {
  require(k >= 1, "retrieve_topk: k must be >= 1, got ", k);
  require(text_embedding.numel() == index.embeddings.cols(),
          "retrieve_topk: embedding dim ", text_embedding.numel(),
          " != index dim ", index.embeddings.cols());
  const Tensor q = l2_normalized(text_embedding);
  const int n = index.embeddings.rows();
  if (truncated != nullptr) *truncated = k > n;

  std::vector<std::pair<double, int>> ranked;
  ranked.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double d2 = 0.0;
    for (int j = 0; j < index.embeddings.cols(); ++j) {
      const double diff = index.embeddings.at(i, j) - q.at(j);
      d2 += diff * diff;
    }
    ranked.push_back({d2, index.cell_ids[static_cast<std::size_t>(i)]});
  }
  std::sort(ranked.begin(), ranked.end());
  std::vector<int> out;
  for (int i = 0; i < std::min(k, n); ++i)
    out.push_back(ranked[static_cast<std::size_t>(i)].second);
  return out;
}

void save_index(const RetrievalIndex& index, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "save_index: cannot open '", path, "'");
  const char magic[4] = {'T', 'L', 'I', 'X'};
  os.write(magic, 4);
  const std::uint32_t n = static_cast<std::uint32_t>(index.cell_ids.size());
  const std::uint32_t d = static_cast<std::uint32_t>(index.embeddings.cols());
  os.write(reinterpret_cast<const char*>(&n), sizeof n);
  os.write(reinterpret_cast<const char*>(&d), sizeof d);
  os.write(reinterpret_cast<const char*>(index.cell_ids.data()),
           static_cast<std::streamsize>(n * sizeof(int)));
  os.write(reinterpret_cast<const char*>(index.embeddings.v.data()),
           static_cast<std::streamsize>(index.embeddings.v.size() * sizeof(double)));
  require(os.good(), "save_index: write failed");
}

RetrievalIndex load_index(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "load_index: cannot open '", path, "'");
  char magic[4];
  is.read(magic, 4);
  require(is.good() && magic[0] == 'T' && magic[1] == 'L' && magic[2] == 'I' &&
              magic[3] == 'X',
          "load_index: '", path, "' is not an index file");
  std::uint32_t n = 0, d = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  is.read(reinterpret_cast<char*>(&d), sizeof d);
  RetrievalIndex index;
  index.cell_ids.resize(n);
  is.read(reinterpret_cast<char*>(index.cell_ids.data()),
          static_cast<std::streamsize>(n * sizeof(int)));
  index.embeddings = Tensor({static_cast<int>(n), static_cast<int>(d)});
  is.read(reinterpret_cast<char*>(index.embeddings.v.data()),
          static_cast<std::streamsize>(index.embeddings.v.size() * sizeof(double)));
  require(is.good(), "load_index: truncated file '", path, "'");
  return index;
}

}  // namespace textloc::coarse
