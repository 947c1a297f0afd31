#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textloc/adam.hpp"
#include "textloc/encoders.hpp"

namespace textloc::coarse {

struct TrainConfigCoarse {
  int batch_size = 64;  // N_b
  double lr = 0.001;
  int epochs = 64;
  double margin = 0.35;  // alpha
  bool augment_hint_shuffle = true;
  bool augment_cell_flips = true;
  bool augment_z_rotation = true;
  double val_fraction = 0.1;
  std::uint64_t seed = 1;
  std::string metrics_csv;       // per-epoch CSV when non-empty
  std::string init_checkpoint;   // pretrained point-branch weights, optional
};

/// Pairwise ranking loss over matched (cell, text) batches, both embedding
/// sides L2-normalized first. Batches under 2 give a constant zero loss and
/// set *warned.
ad::Var ranking_loss(ad::Tape& t, const std::vector<ad::Var>& cell_embeddings,
                     const std::vector<ad::Var>& text_embeddings, double margin,
                     bool* warned = nullptr);

struct CoarseModel {
  enc::EncoderConfig cfg;
  enc::Vocabulary vocab;
  ad::ParamStore params;
};

/// Geometric cell flips with the matching description word flips; exposed for
/// the consistency tests.
cells::Cell flip_cell(const cells::Cell& cell, bool flip_x, bool flip_y);
query::QueryDescription flip_description(const query::QueryDescription& desc,
                                         bool flip_x, bool flip_y);
cells::Cell rotate_instances_z(const cells::Cell& cell, Rng& rng);

/// Mini-batch training with the ranking loss against GT cells. Returns the
/// checkpoint with the best validation recall@top-1 at 15 m (final params if
/// there is no validation split). Deterministic per config.seed.
CoarseModel train_coarse(const query::Dataset& dataset,
                         const cells::CellDatabase& db,
                         const enc::Vocabulary& vocab,
                         const enc::EncoderConfig& enc_cfg,
                         const TrainConfigCoarse& cfg);

struct RetrievalIndex {
  std::vector<int> cell_ids;
  ad::Tensor embeddings;  // [n_cells, dim], rows L2-normalized
};

RetrievalIndex build_index(const CoarseModel& model, const cells::CellDatabase& db);
void save_index(const RetrievalIndex& index, const std::string& path);
RetrievalIndex load_index(const std::string& path);

/// Exhaustive top-k by Euclidean distance; ties by lowest cell id. Queries
/// are normalized internally. k beyond the database returns everything and
/// sets *truncated.
std::vector<int> retrieve_topk(const ad::Tensor& text_embedding,
                               const RetrievalIndex& index, int k,
                               bool* truncated = nullptr);

/// Embed one description with frozen parameters.
ad::Tensor embed_description(const CoarseModel& model,
                             const query::QueryDescription& desc);

}  // namespace textloc::coarse
