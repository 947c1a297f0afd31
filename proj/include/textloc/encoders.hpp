#pragma once

#include <string>

#include "textloc/celldb.hpp"
#include "textloc/params.hpp"
#include "textloc/vocab.hpp"

namespace textloc::enc {

struct EncoderConfig {
  int dim = 128;  // D_p, shared by all descriptors
  // Matcher settings (used by the fine stage).
  int heads = 4;
  int blocks = 2;
};

/// 3-layer perceptron with ReLU after the first two layers. Parameters are
/// prefix.w0/b0, prefix.w1/b1, prefix.w2/b2.
ad::Var mlp3(ad::Tape& t, ad::BoundParams& p, ad::Var x, const std::string& prefix);
void init_mlp3(ad::ParamStore& store, const std::string& prefix, int in, int hidden,
               int out, Rng& rng);

/// Instance encoder parameters under "<prefix>.": shared per-point layers,
/// color MLP, positional MLP, projection MLP. All branches emit dim values.
void init_instance_encoder(ad::ParamStore& store, const EncoderConfig& cfg,
                           const std::string& prefix, Rng& rng);
/// EdgeConv + output map ("cell.*"), token table + hint MLP ("hint.*"),
/// description output map ("desc.*") on top of the instance encoder.
void init_coarse_params(ad::ParamStore& store, const EncoderConfig& cfg,
                        int vocab_size, Rng& rng);

/// Point-classification pretraining head ("pretrain.head.*").
void init_pretrain_params(ad::ParamStore& store, const EncoderConfig& cfg,
                          int num_classes, Rng& rng);

/// F_p: per-point layers + max pool over points (semantic branch), color and
/// positional MLPs, fused by concatenation into the projection MLP.
ad::Var encode_instance(ad::Tape& t, ad::BoundParams& p,
                        const cells::CellInstance& inst, const EncoderConfig& cfg,
                        const std::string& prefix = "inst");

/// F_C: edge features [F_i, F_j - F_i] over the complete instance graph, max
/// over neighbors, max pool over instances, linear output map.
ad::Var encode_cell(ad::Tape& t, ad::BoundParams& p, const cells::Cell& cell,
                    const EncoderConfig& cfg);

/// F_h: mean-pooled token embeddings through a 2-layer perceptron.
ad::Var encode_hint(ad::Tape& t, ad::BoundParams& p, const query::Hint& hint,
                    const Vocabulary& vocab, const EncoderConfig& cfg);
ad::Var encode_hint_text(ad::Tape& t, ad::BoundParams& p, const std::string& text,
                         const Vocabulary& vocab, const EncoderConfig& cfg);

/// F_T: element-wise max over the hint embeddings, then a linear map.
ad::Var encode_description(ad::Tape& t, ad::BoundParams& p,
                           const query::QueryDescription& desc,
                           const Vocabulary& vocab, const EncoderConfig& cfg);

/// Class logits for pretraining: semantic branch + linear head.
ad::Var classify_points(ad::Tape& t, ad::BoundParams& p,
                        const cells::CellInstance& inst, const EncoderConfig& cfg);

}  // namespace textloc::enc
