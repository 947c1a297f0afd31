#include "textloc/tape.hpp"

#include <algorithm>
#include <cmath>

namespace textloc::ad {

namespace {

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  fail(op, ": incompatible shapes ", shape_str(a), " and ", shape_str(b));
}

void expect_rank(const char* op, const Tensor& t, int rank) {
  require(t.rank() == rank, op, ": expected rank-", rank, " tensor, got ",
          shape_str(t.shape));
}

}  // namespace

void Tape::check(Var x, const char* op) const {
  require(x.id >= 0 && x.id < static_cast<int>(nodes_.size()),
          op, ": Var does not belong to this tape (id ", x.id, ")");
}

Var Tape::leaf(Tensor value) {
  require(value.all_finite(), "Tape::leaf: non-finite input values");
  return record(std::move(value), {}, nullptr);
}

Var Tape::record(Tensor value, std::vector<int> parents, BackFn back) {
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::val(Var x) const {
  check(x, "Tape::val");
  return nodes_[static_cast<std::size_t>(x.id)].value;
}

const Tensor& Tape::grad(Var x) const {
  check(x, "Tape::grad");
  const Node& n = nodes_[static_cast<std::size_t>(x.id)];
  require(n.grad.numel() > 0, "Tape::grad: backward() has not been run");
  return n.grad;
}

void Tape::backward(Var loss) {
  check(loss, "Tape::backward");
  require(val(loss).is_scalar(), "Tape::backward: loss must be scalar, got ",
          shape_str(val(loss).shape));

  // Reachability from the loss; unreachable nodes keep zero gradients.
  std::vector<char> reach(nodes_.size(), 0);
  reach[static_cast<std::size_t>(loss.id)] = 1;
  for (int id = loss.id; id >= 0; --id) {
    if (!reach[static_cast<std::size_t>(id)]) continue;
    for (int p : nodes_[static_cast<std::size_t>(id)].parents)
      reach[static_cast<std::size_t>(p)] = 1;
  }

  for (auto& n : nodes_) n.grad = Tensor(n.value.shape, 0.0);
  grad_mut(loss.id).v[0] = 1.0;

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!reach[static_cast<std::size_t>(id)] || !n.back) continue;
    n.back(*this, id);
  }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var Tape::add(Var a, Var b) {
  check(a, "add");
  check(b, "add");
  const Tensor& ta = v_(a);
  const Tensor& tb = v_(b);
  if (!ta.same_shape(tb)) shape_fail("add", ta.shape, tb.shape);
  Tensor out = ta;
  for (int i = 0; i < out.numel(); ++i) out.v[static_cast<std::size_t>(i)] += tb.at(i);
  return record(std::move(out), {a.id, b.id}, [a, b](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    Tensor& ga = t.grad_mut(a.id);
    Tensor& gb = t.grad_mut(b.id);
    for (int i = 0; i < g.numel(); ++i) {
      ga.at(i) += g.at(i);
      gb.at(i) += g.at(i);
    }
  });
}

Var Tape::sub(Var a, Var b) {
  check(a, "sub");
  check(b, "sub");
  const Tensor& ta = v_(a);
  const Tensor& tb = v_(b);
  if (!ta.same_shape(tb)) shape_fail("sub", ta.shape, tb.shape);
  Tensor out = ta;
  for (int i = 0; i < out.numel(); ++i) out.at(i) -= tb.at(i);
  return record(std::move(out), {a.id, b.id}, [a, b](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    Tensor& ga = t.grad_mut(a.id);
    Tensor& gb = t.grad_mut(b.id);
    for (int i = 0; i < g.numel(); ++i) {
      ga.at(i) += g.at(i);
      gb.at(i) -= g.at(i);
    }
  });
}

Var Tape::mul(Var a, Var b) {
  check(a, "mul");
  check(b, "mul");
  const Tensor& ta = v_(a);
  const Tensor& tb = v_(b);
  if (!ta.same_shape(tb)) shape_fail("mul", ta.shape, tb.shape);
  Tensor out = ta;
  for (int i = 0; i < out.numel(); ++i) out.at(i) *= tb.at(i);
  return record(std::move(out), {a.id, b.id}, [a, b](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    const Tensor& ta = t.v_(a);
    const Tensor& tb = t.v_(b);
    Tensor& ga = t.grad_mut(a.id);
    Tensor& gb = t.grad_mut(b.id);
    for (int i = 0; i < g.numel(); ++i) {
      ga.at(i) += g.at(i) * tb.at(i);
      gb.at(i) += g.at(i) * ta.at(i);
    }
  });
}

Var Tape::scale(Var a, double c) {
  check(a, "scale");
  Tensor out = v_(a);
  for (double& x : out.v) x *= c;
  return record(std::move(out), {a.id}, [a, c](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    Tensor& ga = t.grad_mut(a.id);
    for (int i = 0; i < g.numel(); ++i) ga.at(i) += c * g.at(i);
  });
}

Var Tape::add_scalar(Var a, double c) {
  check(a, "add_scalar");
  Tensor out = v_(a);
  for (double& x : out.v) x += c;
  return record(std::move(out), {a.id}, [a](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    Tensor& ga = t.grad_mut(a.id);
    for (int i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i);
  });
}

Var Tape::neg(Var a) { return scale(a, -1.0); }

Var Tape::relu(Var a) {
  check(a, "relu");
  Tensor out = v_(a);
  for (double& x : out.v) x = x > 0.0 ? x : 0.0;
  return record(std::move(out), {a.id}, [a](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    const Tensor& ta = t.v_(a);
    Tensor& ga = t.grad_mut(a.id);
    for (int i = 0; i < g.numel(); ++i) {
      if (ta.at(i) > 0.0) ga.at(i) += g.at(i);
    }
  });
}

Var Tape::exp(Var a) {
  check(a, "exp");
  Tensor out = v_(a);
  for (double& x : out.v) x = std::exp(x);
  return record(std::move(out), {a.id}, [a](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    const Tensor& y = t.nodes_[static_cast<std::size_t>(self)].value;
    Tensor& ga = t.grad_mut(a.id);
    for (int i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i) * y.at(i);
  });
}

Var Tape::log(Var a) {
  check(a, "log");
  Tensor out = v_(a);
  for (double& x : out.v) {
    require(x > 0.0, "log: non-positive input ", x);
    x = std::log(x);
  }
  return record(std::move(out), {a.id}, [a](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    const Tensor& ta = t.v_(a);
    Tensor& ga = t.grad_mut(a.id);
    for (int i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i) / ta.at(i);
  });
}

// ---------------------------------------------------------------------------
// broadcast
// ---------------------------------------------------------------------------

Var Tape::add_rowvec(Var m, Var r) {
  check(m, "add_rowvec");
  check(r, "add_rowvec");
  const Tensor& tm = v_(m);
  const Tensor& tr = v_(r);
  expect_rank("add_rowvec", tm, 2);
  expect_rank("add_rowvec", tr, 1);
  if (tm.cols() != tr.shape[0]) shape_fail("add_rowvec", tm.shape, tr.shape);
  Tensor out = tm;
  for (int i = 0; i < tm.rows(); ++i)
    for (int j = 0; j < tm.cols(); ++j) out.at(i, j) += tr.at(j);
  return record(std::move(out), {m.id, r.id}, [m, r](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    Tensor& gm = t.grad_mut(m.id);
    Tensor& gr = t.grad_mut(r.id);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) {
        gm.at(i, j) += g.at(i, j);
        gr.at(j) += g.at(i, j);
      }
  });
}

Var Tape::add_colvec(Var m, Var c) {
  check(m, "add_colvec");
  check(c, "add_colvec");
  const Tensor& tm = v_(m);
  const Tensor& tc = v_(c);
  expect_rank("add_colvec", tm, 2);
  expect_rank("add_colvec", tc, 1);
  if (tm.rows() != tc.shape[0]) shape_fail("add_colvec", tm.shape, tc.shape);
  Tensor out = tm;
  for (int i = 0; i < tm.rows(); ++i)
    for (int j = 0; j < tm.cols(); ++j) out.at(i, j) += tc.at(i);
  return record(std::move(out), {m.id, c.id}, [m, c](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    Tensor& gm = t.grad_mut(m.id);
    Tensor& gc = t.grad_mut(c.id);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) {
        gm.at(i, j) += g.at(i, j);
        gc.at(i) += g.at(i, j);
      }
  });
}

Var Tape::repeat_row(Var v, int n) {
  check(v, "repeat_row");
  const Tensor& tv = v_(v);
  expect_rank("repeat_row", tv, 1);
  require(n >= 1, "repeat_row: n must be >= 1, got ", n);
  const int d = tv.shape[0];
  Tensor out({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) = tv.at(j);
  return record(std::move(out), {v.id}, [v](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    Tensor& gv = t.grad_mut(v.id);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) gv.at(j) += g.at(i, j);
  });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Var Tape::matmul(Var a, Var b) {
  check(a, "matmul");
  check(b, "matmul");
  const Tensor& ta = v_(a);
  const Tensor& tb = v_(b);
  expect_rank("matmul", ta, 2);
  expect_rank("matmul", tb, 2);
  if (ta.cols() != tb.rows()) shape_fail("matmul", ta.shape, tb.shape);
  const int n = ta.rows(), k = ta.cols(), m = tb.cols();
  Tensor out({n, m});
  for (int i = 0; i < n; ++i) {
    const double* arow = &ta.v[static_cast<std::size_t>(i) * k];
    double* orow = &out.v[static_cast<std::size_t>(i) * m];
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = &tb.v[static_cast<std::size_t>(p) * m];
      for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return record(std::move(out), {a.id, b.id}, [a, b](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    const Tensor& ta = t.v_(a);
    const Tensor& tb = t.v_(b);
    Tensor& ga = t.grad_mut(a.id);
    Tensor& gb = t.grad_mut(b.id);
    const int n = ta.rows(), k = ta.cols(), m = tb.cols();
    // dA = dOut B^T
    for (int i = 0; i < n; ++i)
      for (int p = 0; p < k; ++p) {
        double acc = 0.0;
        const double* grow = &g.v[static_cast<std::size_t>(i) * m];
        const double* brow = &tb.v[static_cast<std::size_t>(p) * m];
        for (int j = 0; j < m; ++j) acc += grow[j] * brow[j];
        ga.at(i, p) += acc;
      }
    // dB = A^T dOut
    for (int p = 0; p < k; ++p)
      for (int i = 0; i < n; ++i) {
        const double av = ta.at(i, p);
        if (av == 0.0) continue;
        const double* grow = &g.v[static_cast<std::size_t>(i) * m];
        double* gbrow = &gb.v[static_cast<std::size_t>(p) * m];
        for (int j = 0; j < m; ++j) gbrow[j] += av * grow[j];
      }
  });
}

Var Tape::transpose(Var a) {
  check(a, "transpose");
  const Tensor& ta = v_(a);
  expect_rank("transpose", ta, 2);
  Tensor out({ta.cols(), ta.rows()});
  for (int i = 0; i < ta.rows(); ++i)
    for (int j = 0; j < ta.cols(); ++j) out.at(j, i) = ta.at(i, j);
  return record(std::move(out), {a.id}, [a](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    Tensor& ga = t.grad_mut(a.id);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) ga.at(j, i) += g.at(i, j);
  });
}

Var Tape::dot(Var a, Var b) {
  check(a, "dot");
  check(b, "dot");
  const Tensor& ta = v_(a);
  const Tensor& tb = v_(b);
  expect_rank("dot", ta, 1);
  if (!ta.same_shape(tb)) shape_fail("dot", ta.shape, tb.shape);
  double acc = 0.0;
  for (int i = 0; i < ta.numel(); ++i) acc += ta.at(i) * tb.at(i);
  return record(Tensor::scalar(acc), {a.id, b.id}, [a, b](Tape& t, int self) {
    const double g = t.grad_mut(self).v[0];
    const Tensor& ta = t.v_(a);
    const Tensor& tb = t.v_(b);
    Tensor& ga = t.grad_mut(a.id);
    Tensor& gb = t.grad_mut(b.id);
    for (int i = 0; i < ta.numel(); ++i) {
      ga.at(i) += g * tb.at(i);
      gb.at(i) += g * ta.at(i);
    }
  });
}

Var Tape::linear(Var x, Var w, Var b) {
  check(x, "linear");
  const bool vector_in = v_(x).rank() == 1;
  Var x2 = vector_in ? reshape(x, {1, v_(x).shape[0]}) : x;
  Var y = add_rowvec(matmul(x2, w), b);
  return vector_in ? reshape(y, {val(y).cols()}) : y;
}

Var Tape::pairwise_sqdist(Var a, Var b) {
  check(a, "pairwise_sqdist");
  check(b, "pairwise_sqdist");
  const Tensor& ta = v_(a);
  const Tensor& tb = v_(b);
  expect_rank("pairwise_sqdist", ta, 2);
  expect_rank("pairwise_sqdist", tb, 2);
  if (ta.cols() != tb.cols()) shape_fail("pairwise_sqdist", ta.shape, tb.shape);
  const int n = ta.rows(), m = tb.rows(), d = ta.cols();
  Tensor out({n, m});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = ta.at(i, k) - tb.at(j, k);
        acc += diff * diff;
      }
      out.at(i, j) = acc;
    }
  return record(std::move(out), {a.id, b.id}, [a, b](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    const Tensor& ta = t.v_(a);
    const Tensor& tb = t.v_(b);
    Tensor& ga = t.grad_mut(a.id);
    Tensor& gb = t.grad_mut(b.id);
    const int n = ta.rows(), m = tb.rows(), d = ta.cols();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        const double gij = g.at(i, j);
        if (gij == 0.0) continue;
        for (int k = 0; k < d; ++k) {
          const double diff = ta.at(i, k) - tb.at(j, k);
          ga.at(i, k) += gij * 2.0 * diff;
          gb.at(j, k) -= gij * 2.0 * diff;
        }
      }
  });
}

Var Tape::l2normalize_rows(Var m) {
  check(m, "l2normalize_rows");
  const Tensor& tm = v_(m);
  expect_rank("l2normalize_rows", tm, 2);
  const int n = tm.rows(), d = tm.cols();
  Tensor out({n, d});
  std::vector<double> norms(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) acc += tm.at(i, j) * tm.at(i, j);
    const double nm = std::sqrt(acc);
    require(nm > 1e-12, "l2normalize_rows: zero-norm row ", i);
    norms[static_cast<std::size_t>(i)] = nm;
    for (int j = 0; j < d; ++j) out.at(i, j) = tm.at(i, j) / nm;
  }
  return record(std::move(out), {m.id},
                [m, norms](Tape& t, int self) {
                  const Tensor& g = t.grad_mut(self);
                  const Tensor& y = t.nodes_[static_cast<std::size_t>(self)].value;
                  Tensor& gm = t.grad_mut(m.id);
                  const int n = g.rows(), d = g.cols();
                  for (int i = 0; i < n; ++i) {
                    double gy = 0.0;
                    for (int j = 0; j < d; ++j) gy += g.at(i, j) * y.at(i, j);
                    const double nm = norms[static_cast<std::size_t>(i)];
                    for (int j = 0; j < d; ++j)
                      gm.at(i, j) += (g.at(i, j) - gy * y.at(i, j)) / nm;
                  }
                });
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

Var Tape::concat(Var a, Var b) {
  check(a, "concat");
  check(b, "concat");
  const Tensor& ta = v_(a);
  const Tensor& tb = v_(b);
  expect_rank("concat", ta, 1);
  expect_rank("concat", tb, 1);
  Tensor out({ta.numel() + tb.numel()});
  for (int i = 0; i < ta.numel(); ++i) out.at(i) = ta.at(i);
  for (int i = 0; i < tb.numel(); ++i) out.at(ta.numel() + i) = tb.at(i);
  return record(std::move(out), {a.id, b.id}, [a, b](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    Tensor& ga = t.grad_mut(a.id);
    Tensor& gb = t.grad_mut(b.id);
    const int na = ga.numel();
    for (int i = 0; i < na; ++i) ga.at(i) += g.at(i);
    for (int i = 0; i < gb.numel(); ++i) gb.at(i) += g.at(na + i);
  });
}

Var Tape::concat_cols(Var a, Var b) {
  check(a, "concat_cols");
  check(b, "concat_cols");
  const Tensor& ta = v_(a);
  const Tensor& tb = v_(b);
  expect_rank("concat_cols", ta, 2);
  expect_rank("concat_cols", tb, 2);
  if (ta.rows() != tb.rows()) shape_fail("concat_cols", ta.shape, tb.shape);
  const int n = ta.rows(), da = ta.cols(), db = tb.cols();
  Tensor out({n, da + db});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < da; ++j) out.at(i, j) = ta.at(i, j);
    for (int j = 0; j < db; ++j) out.at(i, da + j) = tb.at(i, j);
  }
  return record(std::move(out), {a.id, b.id}, [a, b](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    Tensor& ga = t.grad_mut(a.id);
    Tensor& gb = t.grad_mut(b.id);
    const int n = ga.rows(), da = ga.cols(), db = gb.cols();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < da; ++j) ga.at(i, j) += g.at(i, j);
      for (int j = 0; j < db; ++j) gb.at(i, j) += g.at(i, da + j);
    }
  });
}

Var Tape::concat_rows(Var a, Var b) {
  check(a, "concat_rows");
  check(b, "concat_rows");
  const Tensor& ta = v_(a);
  const Tensor& tb = v_(b);
  expect_rank("concat_rows", ta, 2);
  expect_rank("concat_rows", tb, 2);
  if (ta.cols() != tb.cols()) shape_fail("concat_rows", ta.shape, tb.shape);
  const int na = ta.rows(), nb = tb.rows(), d = ta.cols();
  Tensor out({na + nb, d});
  std::copy(ta.v.begin(), ta.v.end(), out.v.begin());
  std::copy(tb.v.begin(), tb.v.end(), out.v.begin() + ta.v.size());
  return record(std::move(out), {a.id, b.id}, [a, b](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    Tensor& ga = t.grad_mut(a.id);
    Tensor& gb = t.grad_mut(b.id);
    for (int i = 0; i < ga.numel(); ++i) ga.at(i) += g.at(i);
    for (int i = 0; i < gb.numel(); ++i) gb.at(i) += g.at(ga.numel() + i);
  });
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
  require(!rows.empty(), "stack_rows: empty input");
  const int d = v_(rows[0]).numel();
  std::vector<int> parents;
  parents.reserve(rows.size());
  Tensor out({static_cast<int>(rows.size()), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    check(rows[r], "stack_rows");
    const Tensor& tr = v_(rows[r]);
    expect_rank("stack_rows", tr, 1);
    if (tr.numel() != d) shape_fail("stack_rows", v_(rows[0]).shape, tr.shape);
    for (int j = 0; j < d; ++j) out.at(static_cast<int>(r), j) = tr.at(j);
    parents.push_back(rows[r].id);
  }
  std::vector<int> ids = parents;
  return record(std::move(out), std::move(parents), [ids](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      Tensor& gr = t.grad_mut(ids[r]);
      for (int j = 0; j < g.cols(); ++j) gr.at(j) += g.at(static_cast<int>(r), j);
    }
  });
}

Var Tape::gather_rows(Var m, std::vector<int> idx) {
  check(m, "gather_rows");
  const Tensor& tm = v_(m);
  expect_rank("gather_rows", tm, 2);
  const int d = tm.cols();
  Tensor out({static_cast<int>(idx.size()), d});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] >= 0 && idx[r] < tm.rows(), "gather_rows: index ", idx[r],
            " out of range for ", shape_str(tm.shape));
    for (int j = 0; j < d; ++j) out.at(static_cast<int>(r), j) = tm.at(idx[r], j);
  }
  return record(std::move(out), {m.id}, [m, idx](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    Tensor& gm = t.grad_mut(m.id);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (int j = 0; j < g.cols(); ++j)
        gm.at(idx[r], j) += g.at(static_cast<int>(r), j);
  });
}

Var Tape::gather_elems(Var m, std::vector<std::pair<int, int>> idx) {
  check(m, "gather_elems");
  const Tensor& tm = v_(m);
  expect_rank("gather_elems", tm, 2);
  Tensor out({static_cast<int>(idx.size())});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto [i, j] = idx[r];
    require(i >= 0 && i < tm.rows() && j >= 0 && j < tm.cols(),
            "gather_elems: index (", i, ",", j, ") out of range for ",
            shape_str(tm.shape));
    out.at(static_cast<int>(r)) = tm.at(i, j);
  }
  return record(std::move(out), {m.id}, [m, idx](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    Tensor& gm = t.grad_mut(m.id);
    for (std::size_t r = 0; r < idx.size(); ++r)
      gm.at(idx[r].first, idx[r].second) += g.at(static_cast<int>(r));
  });
}

Var Tape::slice_cols(Var m, int start, int len) {
  check(m, "slice_cols");
  const Tensor& tm = v_(m);
  expect_rank("slice_cols", tm, 2);
  require(start >= 0 && len >= 1 && start + len <= tm.cols(),
          "slice_cols: range [", start, ",", start + len, ") out of ",
          shape_str(tm.shape));
  const int n = tm.rows();
  Tensor out({n, len});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < len; ++j) out.at(i, j) = tm.at(i, start + j);
  return record(std::move(out), {m.id}, [m, start, len](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    Tensor& gm = t.grad_mut(m.id);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < len; ++j) gm.at(i, start + j) += g.at(i, j);
  });
}

Var Tape::reshape(Var a, Shape s) {
  check(a, "reshape");
  const Tensor& ta = v_(a);
  require(shape_numel(s) == ta.numel(), "reshape: ", shape_str(ta.shape),
          " to ", shape_str(s), " changes element count");
  Tensor out = ta;
  out.shape = s;
  return record(std::move(out), {a.id}, [a](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    Tensor& ga = t.grad_mut(a.id);
    for (int i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i);
  });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Var Tape::max_rows(Var m) {
  check(m, "max_rows");
  const Tensor& tm = v_(m);
  expect_rank("max_rows", tm, 2);
  require(tm.rows() >= 1, "max_rows: empty input");
  const int n = tm.rows(), d = tm.cols();
  Tensor out({d});
  std::vector<int> argmax(static_cast<std::size_t>(d), 0);
  for (int j = 0; j < d; ++j) {
    double best = tm.at(0, j);
    int bi = 0;
    for (int i = 1; i < n; ++i) {
      if (tm.at(i, j) > best) {
        best = tm.at(i, j);
        bi = i;
      }
    }
    out.at(j) = best;
    argmax[static_cast<std::size_t>(j)] = bi;
  }
  // Gradient routes only to the argmax entries (first row on ties).
  return record(std::move(out), {m.id}, [m, argmax](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    Tensor& gm = t.grad_mut(m.id);
    for (int j = 0; j < g.numel(); ++j)
      gm.at(argmax[static_cast<std::size_t>(j)], j) += g.at(j);
  });
}

Var Tape::mean_rows(Var m) {
  check(m, "mean_rows");
  const Tensor& tm = v_(m);
  expect_rank("mean_rows", tm, 2);
  require(tm.rows() >= 1, "mean_rows: empty input");
  const int n = tm.rows(), d = tm.cols();
  Tensor out({d});
  for (int j = 0; j < d; ++j) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += tm.at(i, j);
    out.at(j) = acc / n;
  }
  return record(std::move(out), {m.id}, [m, n](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    Tensor& gm = t.grad_mut(m.id);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < g.numel(); ++j) gm.at(i, j) += g.at(j) / n;
  });
}

Var Tape::sum(Var a) {
  check(a, "sum");
  const Tensor& ta = v_(a);
  double acc = 0.0;
  for (double x : ta.v) acc += x;
  return record(Tensor::scalar(acc), {a.id}, [a](Tape& t, int self) {
    const double g = t.grad_mut(self).v[0];
    Tensor& ga = t.grad_mut(a.id);
    for (int i = 0; i < ga.numel(); ++i) ga.at(i) += g;
  });
}

Var Tape::mean(Var a) {
  check(a, "mean");
  const int n = v_(a).numel();
  return scale(sum(a), 1.0 / n);
}

namespace {
// Stable log-sum-exp over a strided slice.
double lse_slice(const Tensor& t, int begin, int stride, int count) {
  double mx = t.at(begin);
  for (int i = 1; i < count; ++i) mx = std::max(mx, t.at(begin + i * stride));
  double acc = 0.0;
  for (int i = 0; i < count; ++i) acc += std::exp(t.at(begin + i * stride) - mx);
  return mx + std::log(acc);
}
}  // namespace

Var Tape::logsumexp_rows(Var m) {
  check(m, "logsumexp_rows");
  const Tensor& tm = v_(m);
  expect_rank("logsumexp_rows", tm, 2);
  const int n = tm.rows(), d = tm.cols();
  Tensor out({n});
  for (int i = 0; i < n; ++i) out.at(i) = lse_slice(tm, i * d, 1, d);
  return record(std::move(out), {m.id}, [m](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    const Tensor& y = t.nodes_[static_cast<std::size_t>(self)].value;
    const Tensor& tm = t.v_(m);
    Tensor& gm = t.grad_mut(m.id);
    for (int i = 0; i < tm.rows(); ++i)
      for (int j = 0; j < tm.cols(); ++j)
        gm.at(i, j) += g.at(i) * std::exp(tm.at(i, j) - y.at(i));
  });
}

Var Tape::logsumexp_cols(Var m) {
  check(m, "logsumexp_cols");
  const Tensor& tm = v_(m);
  expect_rank("logsumexp_cols", tm, 2);
  const int n = tm.rows(), d = tm.cols();
  Tensor out({d});
  for (int j = 0; j < d; ++j) out.at(j) = lse_slice(tm, j, d, n);
  return record(std::move(out), {m.id}, [m](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    const Tensor& y = t.nodes_[static_cast<std::size_t>(self)].value;
    const Tensor& tm = t.v_(m);
    Tensor& gm = t.grad_mut(m.id);
    for (int i = 0; i < tm.rows(); ++i)
      for (int j = 0; j < tm.cols(); ++j)
        gm.at(i, j) += g.at(j) * std::exp(tm.at(i, j) - y.at(j));
  });
}

Var Tape::logsumexp_all(Var a) {
  check(a, "logsumexp_all");
  const Tensor& ta = v_(a);
  require(ta.numel() >= 1, "logsumexp_all: empty input");
  const double out = lse_slice(ta, 0, 1, ta.numel());
  return record(Tensor::scalar(out), {a.id}, [a, out](Tape& t, int self) {
    const double g = t.grad_mut(self).v[0];
    const Tensor& ta = t.v_(a);
    Tensor& ga = t.grad_mut(a.id);
    for (int i = 0; i < ta.numel(); ++i)
      ga.at(i) += g * std::exp(ta.at(i) - out);
  });
}

Var Tape::softmax_rows(Var m) {
  check(m, "softmax_rows");
  const Tensor& tm = v_(m);
  expect_rank("softmax_rows", tm, 2);
  const int n = tm.rows(), d = tm.cols();
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    const double lse = lse_slice(tm, i * d, 1, d);
    for (int j = 0; j < d; ++j) out.at(i, j) = std::exp(tm.at(i, j) - lse);
  }
  return record(std::move(out), {m.id}, [m](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    const Tensor& y = t.nodes_[static_cast<std::size_t>(self)].value;
    Tensor& gm = t.grad_mut(m.id);
    for (int i = 0; i < g.rows(); ++i) {
      double gy = 0.0;
      for (int j = 0; j < g.cols(); ++j) gy += g.at(i, j) * y.at(i, j);
      for (int j = 0; j < g.cols(); ++j)
        gm.at(i, j) += (g.at(i, j) - gy) * y.at(i, j);
    }
  });
}

// ---------------------------------------------------------------------------
// losses / masking / attention
// ---------------------------------------------------------------------------

Var Tape::mse(Var a, Var b) {
  check(a, "mse");
  check(b, "mse");
  const Tensor& ta = v_(a);
  const Tensor& tb = v_(b);
  if (!ta.same_shape(tb)) shape_fail("mse", ta.shape, tb.shape);
  const int n = ta.numel();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double diff = ta.at(i) - tb.at(i);
    acc += diff * diff;
  }
  return record(Tensor::scalar(acc / n), {a.id, b.id}, [a, b, n](Tape& t, int self) {
    const double g = t.grad_mut(self).v[0];
    const Tensor& ta = t.v_(a);
    const Tensor& tb = t.v_(b);
    Tensor& ga = t.grad_mut(a.id);
    Tensor& gb = t.grad_mut(b.id);
    for (int i = 0; i < n; ++i) {
      const double d = 2.0 * (ta.at(i) - tb.at(i)) / n;
      ga.at(i) += g * d;
      gb.at(i) -= g * d;
    }
  });
}

Var Tape::masked_fill_cols(Var m, const std::vector<bool>& col_mask, double value) {
  check(m, "masked_fill_cols");
  const Tensor& tm = v_(m);
  expect_rank("masked_fill_cols", tm, 2);
  require(static_cast<int>(col_mask.size()) == tm.cols(),
          "masked_fill_cols: mask size ", col_mask.size(), " != cols ", tm.cols());
  Tensor out = tm;
  for (int i = 0; i < tm.rows(); ++i)
    for (int j = 0; j < tm.cols(); ++j)
      if (col_mask[static_cast<std::size_t>(j)]) out.at(i, j) = value;
  return record(std::move(out), {m.id}, [m, col_mask](Tape& t, int self) {
    const Tensor& g = t.grad_mut(self);
    Tensor& gm = t.grad_mut(m.id);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j)
        if (!col_mask[static_cast<std::size_t>(j)]) gm.at(i, j) += g.at(i, j);
  });
}

Var Tape::attention(Var q, Var k, Var v, const std::vector<bool>* key_mask) {
  check(q, "attention");
  check(k, "attention");
  check(v, "attention");
  const int d = val(q).cols();
  require(val(k).cols() == d && val(k).rows() == val(v).rows(),
          "attention: q", shape_str(val(q).shape), " k", shape_str(val(k).shape),
          " v", shape_str(val(v).shape));
  Var scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  if (key_mask != nullptr) scores = masked_fill_cols(scores, *key_mask, -1e9);
  return matmul(softmax_rows(scores), v);
}

}  // namespace textloc::ad
