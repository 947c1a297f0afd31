#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "textloc/tensor.hpp"

namespace textloc::ad {

/// Handle into a Tape node.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape. Nodes are recorded in topological order by
/// construction (an op can only reference already-existing Vars), so the
/// backward pass is a single reverse sweep that visits each node once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf node (parameter or input); participates in gradients.
  Var leaf(Tensor value);

  const Tensor& val(Var x) const;
  /// Gradient of the last backward() loss w.r.t. x. Zero for nodes the loss
  /// does not reach.
  const Tensor& grad(Var x) const;

  /// Accumulates gradients for every node reachable from `loss`.
  /// loss must be scalar.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // --- elementwise ---
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var neg(Var a);
  Var relu(Var a);
  Var exp(Var a);
  Var log(Var a);

  // --- broadcast ---
  Var add_rowvec(Var m, Var r);  // [n,d] + [d]
  Var add_colvec(Var m, Var c);  // [n,d] + [n] (per-row constant)
  Var repeat_row(Var v, int n);  // [d] -> [n,d]

  // --- linear algebra ---
  Var matmul(Var a, Var b);  // [n,k]x[k,m] -> [n,m]
  Var transpose(Var a);
  Var dot(Var a, Var b);                 // rank-1 x rank-1 -> scalar
  Var linear(Var x, Var w, Var b);       // rank-1 or rank-2 x; w [din,dout], b [dout]
  Var pairwise_sqdist(Var a, Var b);     // [n,d],[m,d] -> [n,m]
  Var l2normalize_rows(Var m);

  // --- shape ---
  Var concat(Var a, Var b);       // rank-1 concat
  Var concat_cols(Var a, Var b);  // [n,da],[n,db] -> [n,da+db]
  Var concat_rows(Var a, Var b);  // [na,d],[nb,d] -> [na+nb,d]
  Var stack_rows(const std::vector<Var>& rows);  // k x [d] -> [k,d]
  Var gather_rows(Var m, std::vector<int> idx);
  Var gather_elems(Var m, std::vector<std::pair<int, int>> idx);  // -> [k]
  Var slice_cols(Var m, int start, int len);
  Var reshape(Var a, Shape s);

  // --- reductions ---
  Var max_rows(Var m);   // [n,d] -> [d], argmax routed in backward
  Var mean_rows(Var m);  // [n,d] -> [d]
  Var sum(Var a);        // -> scalar
  Var mean(Var a);       // -> scalar
  Var logsumexp_rows(Var m);  // [n,d] -> [n]
  Var logsumexp_cols(Var m);  // [n,d] -> [d]
  Var logsumexp_all(Var a);   // -> scalar
  Var softmax_rows(Var m);

  // --- losses / masking ---
  Var mse(Var a, Var b);  // mean squared error -> scalar
  Var masked_fill_cols(Var m, const std::vector<bool>& col_mask, double value);

  /// Scaled dot-product attention: softmax(q k^T / sqrt(d)) v.
  /// key_mask, when given, removes masked keys from the softmax.
  Var attention(Var q, Var k, Var v, const std::vector<bool>* key_mask = nullptr);

 private:
  using BackFn = std::function<void(Tape&, int)>;

  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> parents;
    BackFn back;  // empty for leaves
  };

  Var record(Tensor value, std::vector<int> parents, BackFn back);
  Tensor& grad_mut(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
  const Tensor& v_(Var x) const { return nodes_[static_cast<std::size_t>(x.id)].value; }
  void check(Var x, const char* op) const;

  std::vector<Node> nodes_;
};

}  // namespace textloc::ad
