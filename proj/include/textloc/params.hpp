#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "textloc/rng.hpp"
#include "textloc/tape.hpp"

namespace textloc::ad {

/// Named parameter tensors in a stable insertion order. The order defines the
/// checkpoint layout, so identical construction yields byte-identical files.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return by_name_.count(name) > 0; }
  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }

  /// Glorot-uniform matrix [fan_in, fan_out].
  Tensor& add_glorot(const std::string& name, int fan_in, int fan_out, Rng& rng);
  Tensor& add_zeros(const std::string& name, Shape shape);

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> by_name_;
};

/// Versioned binary checkpoint of named tensors.
void save_checkpoint(const ParamStore& params, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

/// Per-tape view over a ParamStore: creates one leaf per referenced
/// parameter and collects gradients by name after backward().
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamStore& store) : tape_(&tape), store_(&store) {}

  /// Leaf Var for the named parameter (created on first use).
  Var operator()(const std::string& name);

  /// Gradients for every parameter touched on this tape. Untouched
  /// parameters are absent (their gradient is zero).
  std::map<std::string, Tensor> grads() const;

 private:
  Tape* tape_;
  const ParamStore* store_;
  std::map<std::string, Var> vars_;
};

using GradMap = std::map<std::string, Tensor>;

/// Accumulate `other` into `into` (missing keys are inserted).
void accumulate_grads(GradMap& into, const GradMap& other);
void scale_grads(GradMap& g, double s);

}  // namespace textloc::ad
