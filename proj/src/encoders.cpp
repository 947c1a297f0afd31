#include "textloc/encoders.hpp"

namespace textloc::enc {

using ad::BoundParams;
using ad::ParamStore;
using ad::Tape;
using ad::Tensor;
using ad::Var;

Var mlp3(Tape& t, BoundParams& p, Var x, const std::string& prefix) {
  Var h = t.relu(t.linear(x, p(prefix + ".w0"), p(prefix + ".b0")));
  h = t.relu(t.linear(h, p(prefix + ".w1"), p(prefix + ".b1")));
  return t.linear(h, p(prefix + ".w2"), p(prefix + ".b2"));
}

void init_mlp3(ParamStore& store, const std::string& prefix, int in, int hidden,
               int out, Rng& rng) {
  store.add_glorot(prefix + ".w0", in, hidden, rng);
  store.add_zeros(prefix + ".b0", {hidden});
  store.add_glorot(prefix + ".w1", hidden, hidden, rng);
  store.add_zeros(prefix + ".b1", {hidden});
  store.add_glorot(prefix + ".w2", hidden, out, rng);
  store.add_zeros(prefix + ".b2", {out});
}

void init_instance_encoder(ParamStore& store, const EncoderConfig& cfg,
                           const std::string& prefix, Rng& rng) {
  const int d = cfg.dim;
  init_mlp3(store, prefix + ".sem", 6, d, d, rng);
  init_mlp3(store, prefix + ".color", 3, d, d, rng);
  init_mlp3(store, prefix + ".pos", 3, d, d, rng);
  init_mlp3(store, prefix + ".proj", 3 * d, d, d, rng);
}

void init_coarse_params(ParamStore& store, const EncoderConfig& cfg, int vocab_size,
                        Rng& rng) {
  const int d = cfg.dim;
  init_instance_encoder(store, cfg, "inst", rng);
  store.add_glorot("cell.edge.w0", 2 * d, d, rng);
  store.add_zeros("cell.edge.b0", {d});
  store.add_glorot("cell.edge.w1", d, d, rng);
  store.add_zeros("cell.edge.b1", {d});
  store.add_glorot("cell.out.w", d, d, rng);
  store.add_zeros("cell.out.b", {d});
  store.add_glorot("hint.tok", vocab_size, d, rng);
  store.add_glorot("hint.mlp.w0", d, d, rng);
  store.add_zeros("hint.mlp.b0", {d});
  store.add_glorot("hint.mlp.w1", d, d, rng);
  store.add_zeros("hint.mlp.b1", {d});
  store.add_glorot("desc.out.w", d, d, rng);
  store.add_zeros("desc.out.b", {d});
}

void init_pretrain_params(ParamStore& store, const EncoderConfig& cfg,
                          int num_classes, Rng& rng) {
  store.add_glorot("pretrain.head.w", cfg.dim, num_classes, rng);
  store.add_zeros("pretrain.head.b", {num_classes});
}

namespace {

Tensor points_tensor(const cells::CellInstance& inst) {
  Tensor pts({static_cast<int>(inst.points.size()), 6});
  for (std::size_t i = 0; i < inst.points.size(); ++i) {
    const scene::Point& p = inst.points[i];
    pts.at(static_cast<int>(i), 0) = p.x;
    pts.at(static_cast<int>(i), 1) = p.y;
    pts.at(static_cast<int>(i), 2) = p.z;
    pts.at(static_cast<int>(i), 3) = p.r;
    pts.at(static_cast<int>(i), 4) = p.g;
    pts.at(static_cast<int>(i), 5) = p.b;
  }
  return pts;
}

Var semantic_branch(Tape& t, BoundParams& p, const cells::CellInstance& inst,
                    const std::string& prefix) {
  require(!inst.points.empty(), "encode_instance: instance ", inst.id,
          " has no points");
  Var pts = t.leaf(points_tensor(inst));
  Var h = t.relu(t.linear(pts, p(prefix + ".sem.w0"), p(prefix + ".sem.b0")));
  h = t.relu(t.linear(h, p(prefix + ".sem.w1"), p(prefix + ".sem.b1")));
  h = t.linear(h, p(prefix + ".sem.w2"), p(prefix + ".sem.b2"));
  return t.max_rows(h);
}

}  // namespace

Var encode_instance(Tape& t, BoundParams& p, const cells::CellInstance& inst,
                    const EncoderConfig& cfg, const std::string& prefix) {
  (void)cfg;
  Var sem = semantic_branch(t, p, inst, prefix);
  Var color = mlp3(t, p,
                   t.leaf(Tensor::vec({inst.mean_color.x, inst.mean_color.y,
                                       inst.mean_color.z})),
                   prefix + ".color");
  Var pos = mlp3(t, p,
                 t.leaf(Tensor::vec({inst.center.x, inst.center.y, inst.center.z})),
                 prefix + ".pos");
  Var fused = t.concat(t.concat(sem, color), pos);
  return mlp3(t, p, fused, prefix + ".proj");
}

Var encode_cell(Tape& t, BoundParams& p, const cells::Cell& cell,
                const EncoderConfig& cfg) {
  const int n = static_cast<int>(cell.instances.size());
  require(n >= 2, "encode_cell: cell ", cell.id, " has fewer than 2 instances");
  std::vector<Var> embeds;
  embeds.reserve(static_cast<std::size_t>(n));
  for (const auto& inst : cell.instances)
    embeds.push_back(encode_instance(t, p, inst, cfg, "inst"));
  Var f = t.stack_rows(embeds);  // [n, d]

  std::vector<Var> node_features;
  node_features.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<int> others;
    others.reserve(static_cast<std::size_t>(n - 1));
    for (int j = 0; j < n; ++j)
      if (j != i) others.push_back(j);
    Var other_rows = t.gather_rows(f, others);          // [n-1, d]
    Var self_rep = t.repeat_row(embeds[static_cast<std::size_t>(i)], n - 1);
    Var edges = t.concat_cols(self_rep, t.sub(other_rows, self_rep));  // [n-1, 2d]
    Var h = t.relu(t.linear(edges, p("cell.edge.w0"), p("cell.edge.b0")));
    h = t.linear(h, p("cell.edge.w1"), p("cell.edge.b1"));
    node_features.push_back(t.max_rows(h));  // max over neighbors
  }
  Var pooled = t.max_rows(t.stack_rows(node_features));  // max over instances
  return t.linear(pooled, p("cell.out.w"), p("cell.out.b"));
}

Var encode_hint_text(Tape& t, BoundParams& p, const std::string& text,
                     const Vocabulary& vocab, const EncoderConfig& cfg) {
  (void)cfg;
  const std::vector<int> tokens = vocab.tokenize(text);
  Var table = p("hint.tok");
  Var rows = t.gather_rows(table, tokens);
  Var pooled = t.mean_rows(rows);
  Var h = t.relu(t.linear(pooled, p("hint.mlp.w0"), p("hint.mlp.b0")));
  return t.linear(h, p("hint.mlp.w1"), p("hint.mlp.b1"));
}

Var encode_hint(Tape& t, BoundParams& p, const query::Hint& hint,
                const Vocabulary& vocab, const EncoderConfig& cfg) {
  return encode_hint_text(t, p, hint.text, vocab, cfg);
}

Var encode_description(Tape& t, BoundParams& p, const query::QueryDescription& desc,
                       const Vocabulary& vocab, const EncoderConfig& cfg) {
  require(!desc.hints.empty(), "encode_description: description '", desc.id,
          "' has no hints");
  std::vector<Var> hints;
  hints.reserve(desc.hints.size());
  for (const query::Hint& h : desc.hints)
    hints.push_back(encode_hint(t, p, h, vocab, cfg));
  Var pooled = t.max_rows(t.stack_rows(hints));
  return t.linear(pooled, p("desc.out.w"), p("desc.out.b"));
}

Var classify_points(Tape& t, BoundParams& p, const cells::CellInstance& inst,
                    const EncoderConfig& cfg) {
  (void)cfg;
  Var sem = semantic_branch(t, p, inst, "inst");
  return t.linear(sem, p("pretrain.head.w"), p("pretrain.head.b"));
}

}  // namespace textloc::enc
