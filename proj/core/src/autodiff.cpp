#include "wavebank/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "wavebank/error.hpp"
#include "wavebank/parallel.hpp"

namespace wavebank {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace

int Tape::check(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
    throw Error("Var does not belong to this tape");
  }
  return v.id;
}

const Tape::Node& Tape::node(Var v) const { return nodes_[static_cast<size_t>(check(v))]; }
Tape::Node& Tape::node(Var v) { return nodes_[static_cast<size_t>(check(v))]; }

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), {}, nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::make_node(Tensor value, std::vector<int> parents, BackwardFn backward) {
  for (int p : parents) check(Var{p});
  nodes_.push_back(Node{std::move(value), Tensor(), std::move(parents), std::move(backward)});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const {
  if (!grads_valid_) throw Error("gradients not available: backward() has not run");
  return node(v).grad;
}

Tensor& Tape::grad_mut(Var v) { return node(v).grad; }

std::span<const int> Tape::parents(Var v) const { return node(v).parents; }

// ---------------------------------------------------------------------------
// Elementwise and broadcast ops
// ---------------------------------------------------------------------------

Var Tape::add(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.same_shape(tb), "add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += tb[i];
  return make_node(std::move(out), {a.id, b.id}, [](Tape& t, int id) {
    const auto& n = t.nodes_[static_cast<size_t>(id)];
    Tensor& ga = t.nodes_[static_cast<size_t>(n.parents[0])].grad;
    Tensor& gb = t.nodes_[static_cast<size_t>(n.parents[1])].grad;
    for (int64_t i = 0; i < n.grad.size(); ++i) {
      ga[i] += n.grad[i];
      gb[i] += n.grad[i];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.same_shape(tb), "sub: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (int64_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
  return make_node(std::move(out), {a.id, b.id}, [](Tape& t, int id) {
    const auto& n = t.nodes_[static_cast<size_t>(id)];
    Tensor& ga = t.nodes_[static_cast<size_t>(n.parents[0])].grad;
    Tensor& gb = t.nodes_[static_cast<size_t>(n.parents[1])].grad;
    for (int64_t i = 0; i < n.grad.size(); ++i) {
      ga[i] += n.grad[i];
      gb[i] -= n.grad[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.same_shape(tb), "mul: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
  return make_node(std::move(out), {a.id, b.id}, [](Tape& t, int id) {
    const auto& n = t.nodes_[static_cast<size_t>(id)];
    const Tensor& va = t.nodes_[static_cast<size_t>(n.parents[0])].value;
    const Tensor& vb = t.nodes_[static_cast<size_t>(n.parents[1])].value;
    Tensor& ga = t.nodes_[static_cast<size_t>(n.parents[0])].grad;
    Tensor& gb = t.nodes_[static_cast<size_t>(n.parents[1])].grad;
    for (int64_t i = 0; i < n.grad.size(); ++i) {
      ga[i] += n.grad[i] * vb[i];
      gb[i] += n.grad[i] * va[i];
    }
  });
}

Var Tape::scale(Var a, double c) {
  Tensor out = value(a);
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= c;
  return make_node(std::move(out), {a.id}, [c](Tape& t, int id) {
    const auto& n = t.nodes_[static_cast<size_t>(id)];
    Tensor& ga = t.nodes_[static_cast<size_t>(n.parents[0])].grad;
    for (int64_t i = 0; i < n.grad.size(); ++i) ga[i] += c * n.grad[i];
  });
}

Var Tape::add_rowvec(Var m, Var row) {
  const Tensor& tm = value(m);
  const Tensor& tr = value(row);
  require(tm.rank() == 2 && tr.rank() == 1 && tm.dim(1) == tr.dim(0),
          "add_rowvec: want [N,F] + [F], got " + tm.shape_str() + " + " + tr.shape_str());
  const int64_t rows = tm.dim(0), cols = tm.dim(1);
  Tensor out = tm;
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) out.at(i, j) += tr[j];
  return make_node(std::move(out), {m.id, row.id}, [](Tape& t, int id) {
    const auto& n = t.nodes_[static_cast<size_t>(id)];
    Tensor& gm = t.nodes_[static_cast<size_t>(n.parents[0])].grad;
    Tensor& gr = t.nodes_[static_cast<size_t>(n.parents[1])].grad;
    const int64_t rows = n.grad.dim(0), cols = n.grad.dim(1);
    for (int64_t i = 0; i < rows; ++i) {
      for (int64_t j = 0; j < cols; ++j) {
        gm.at(i, j) += n.grad.at(i, j);
        gr[j] += n.grad.at(i, j);
      }
    }
  });
}

Var Tape::mul_rowvec(Var m, Var row) {
  const Tensor& tm = value(m);
  const Tensor& tr = value(row);
  require(tm.rank() == 2 && tr.rank() == 1 && tm.dim(1) == tr.dim(0),
          "mul_rowvec: want [N,F] * [F], got " + tm.shape_str() + " * " + tr.shape_str());
  const int64_t rows = tm.dim(0), cols = tm.dim(1);
  Tensor out = tm;
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) out.at(i, j) *= tr[j];
  return make_node(std::move(out), {m.id, row.id}, [](Tape& t, int id) {
    const auto& n = t.nodes_[static_cast<size_t>(id)];
    const Tensor& vm = t.nodes_[static_cast<size_t>(n.parents[0])].value;
    const Tensor& vr = t.nodes_[static_cast<size_t>(n.parents[1])].value;
    Tensor& gm = t.nodes_[static_cast<size_t>(n.parents[0])].grad;
    Tensor& gr = t.nodes_[static_cast<size_t>(n.parents[1])].grad;
    const int64_t rows = n.grad.dim(0), cols = n.grad.dim(1);
    for (int64_t i = 0; i < rows; ++i) {
      for (int64_t j = 0; j < cols; ++j) {
        gm.at(i, j) += n.grad.at(i, j) * vr[j];
        gr[j] += n.grad.at(i, j) * vm.at(i, j);
      }
    }
  });
}

Var Tape::relu(Var x) {
  Tensor out = value(x);
  for (int64_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return make_node(std::move(out), {x.id}, [](Tape& t, int id) {
    const auto& n = t.nodes_[static_cast<size_t>(id)];
    const Tensor& vx = t.nodes_[static_cast<size_t>(n.parents[0])].value;
    Tensor& gx = t.nodes_[static_cast<size_t>(n.parents[0])].grad;
    for (int64_t i = 0; i < n.grad.size(); ++i) {
      if (vx[i] > 0.0) gx[i] += n.grad[i];
    }
  });
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

namespace {

// C[m,n] += A[m,k] * B[k,n]
void gemm_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = b + p * n;
      double* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// C[m,n] += A^T where A is [k,m], B [k,n]
void gemm_at_b_acc(const double* a, const double* b, double* c, int64_t k, int64_t m, int64_t n) {
  for (int64_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (int64_t i = 0; i < m; ++i) {
      const double aip = arow[i];
      if (aip == 0.0) continue;
      double* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// C[m,k] += A[m,n] * B^T where B is [k,n]
void gemm_a_bt_acc(const double* a, const double* b, double* c, int64_t m, int64_t n, int64_t k) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

}  // namespace

Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.rank() == 2 && tb.rank() == 2, "matmul: both operands must be rank 2");
  require(ta.dim(1) == tb.dim(0),
          "matmul: inner dimensions disagree, " + ta.shape_str() + " x " + tb.shape_str());
  const int64_t m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
  Tensor out({m, n});
  gemm_acc(ta.data(), tb.data(), out.data(), m, k, n);
  return make_node(std::move(out), {a.id, b.id}, [m, k, n](Tape& t, int id) {
    const auto& node = t.nodes_[static_cast<size_t>(id)];
    const Tensor& va = t.nodes_[static_cast<size_t>(node.parents[0])].value;
    const Tensor& vb = t.nodes_[static_cast<size_t>(node.parents[1])].value;
    Tensor& ga = t.nodes_[static_cast<size_t>(node.parents[0])].grad;
    Tensor& gb = t.nodes_[static_cast<size_t>(node.parents[1])].grad;
    // dA = dC * B^T ; dB = A^T * dC  (A has m rows: that is the shared
    // contraction length for the transposed product)
    gemm_a_bt_acc(node.grad.data(), vb.data(), ga.data(), m, n, k);
    gemm_at_b_acc(va.data(), node.grad.data(), gb.data(), m, k, n);
  });
}

// ---------------------------------------------------------------------------
// conv1d
// ---------------------------------------------------------------------------

Var Tape::conv1d(Var input, Var filters, int stride) {
  const Tensor& in = value(input);
  const Tensor& fil = value(filters);
  require(in.rank() == 2, "conv1d: input must be [T,Cin], got " + in.shape_str());
  require(fil.rank() == 3, "conv1d: filters must be [K,Cin,Cout], got " + fil.shape_str());
  if (stride < 1) throw ConfigError("conv1d: stride must be >= 1");
  const int64_t T = in.dim(0), cin = in.dim(1);
  const int64_t K = fil.dim(0), cout = fil.dim(2);
  require(fil.dim(1) == cin, "conv1d: filter channel count " + std::to_string(fil.dim(1)) +
                                 " does not match input channels " + std::to_string(cin));
  if (T < K) {
    throw ShapeError("conv1d: input too short, T=" + std::to_string(T) + " < K=" + std::to_string(K));
  }
  const int64_t t_out = (T - K) / stride + 1;

  Tensor out({t_out, cout});
  {
    const double* pin = in.data();
    const double* pf = fil.data();
    double* po = out.data();
    parallel_for(t_out, 64, [&](int64_t begin, int64_t end) {
      for (int64_t t = begin; t < end; ++t) {
        double* orow = po + t * cout;
        const double* win = pin + t * stride * cin;
        for (int64_t k = 0; k < K; ++k) {
          const double* irow = win + k * cin;
          const double* frow = pf + k * cin * cout;
          for (int64_t ci = 0; ci < cin; ++ci) {
            const double x = irow[ci];
            if (x == 0.0) continue;
            const double* fc = frow + ci * cout;
            for (int64_t co = 0; co < cout; ++co) orow[co] += x * fc[co];
          }
        }
      }
    });
  }

  const int s = stride;
  return make_node(std::move(out), {input.id, filters.id}, [s, T, K, cin, cout, t_out](Tape& t, int id) {
    const auto& node = t.nodes_[static_cast<size_t>(id)];
    const Tensor& in = t.nodes_[static_cast<size_t>(node.parents[0])].value;
    const Tensor& fil = t.nodes_[static_cast<size_t>(node.parents[1])].value;
    Tensor& gin = t.nodes_[static_cast<size_t>(node.parents[0])].grad;
    Tensor& gfil = t.nodes_[static_cast<size_t>(node.parents[1])].grad;
    const double* gout = node.grad.data();

    // Input gradient, gather form: every (row, channel) accumulates its own
    // sum, so chunks write disjoint rows.
    {
      double* pgin = gin.data();
      const double* pf = fil.data();
      parallel_for(T, 256, [&](int64_t begin, int64_t end) {
        for (int64_t ti = begin; ti < end; ++ti) {
          // windows t' with t'*s <= ti < t'*s + K
          int64_t lo = (ti - K + s) >= 0 ? (ti - K + s) / s : 0;  // ceil((ti-K+1)/s)
          int64_t hi = std::min<int64_t>(t_out - 1, ti / s);
          double* grow = pgin + ti * cin;
          for (int64_t tp = lo; tp <= hi; ++tp) {
            const int64_t k = ti - tp * s;
            const double* frow = pf + k * cin * cout;
            const double* grow_out = gout + tp * cout;
            for (int64_t ci = 0; ci < cin; ++ci) {
              const double* fc = frow + ci * cout;
              double acc = 0.0;
              for (int64_t co = 0; co < cout; ++co) acc += grow_out[co] * fc[co];
              grow[ci] += acc;
            }
          }
        }
      });
    }

    // Filter gradient, gather form over (k, ci, co) cells.
    {
      double* pgf = gfil.data();
      const double* pin = in.data();
      parallel_for(K, 4, [&](int64_t kb, int64_t ke) {
        for (int64_t k = kb; k < ke; ++k) {
          double* gk = pgf + k * cin * cout;
          for (int64_t tp = 0; tp < t_out; ++tp) {
            const double* irow = pin + (tp * s + k) * cin;
            const double* grow_out = gout + tp * cout;
            for (int64_t ci = 0; ci < cin; ++ci) {
              const double x = irow[ci];
              if (x == 0.0) continue;
              double* gcell = gk + ci * cout;
              for (int64_t co = 0; co < cout; ++co) gcell[co] += x * grow_out[co];
            }
          }
        }
      });
    }
  });
}

// ---------------------------------------------------------------------------
// max_pool
// ---------------------------------------------------------------------------

MaxPoolResult Tape::max_pool(Var input, int stride) {
  const Tensor& in = value(input);
  require(in.rank() == 2, "max_pool: input must be [T,C], got " + in.shape_str());
  if (stride < 1) throw ConfigError("max_pool: stride must be >= 1");
  const int64_t T = in.dim(0), C = in.dim(1);
  const int64_t windows = T / stride;
  if (windows == 0) {
    throw ShapeError("max_pool: empty output, T=" + std::to_string(T) + " < stride=" +
                     std::to_string(stride));
  }
  Tensor out({windows, C});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(windows * C));
  for (int64_t w = 0; w < windows; ++w) {
    const int64_t r0 = w * stride;
    for (int64_t c = 0; c < C; ++c) {
      double best = in.at(r0, c);
      int64_t best_r = r0;
      for (int64_t r = r0 + 1; r < r0 + stride; ++r) {
        if (in.at(r, c) > best) {  // strict: ties keep the lowest index
          best = in.at(r, c);
          best_r = r;
        }
      }
      out.at(w, c) = best;
      (*argmax)[static_cast<size_t>(w * C + c)] = best_r;
    }
  }
  auto arg = std::shared_ptr<const std::vector<int64_t>>(argmax);
  Var v = make_node(std::move(out), {input.id}, [arg, C](Tape& t, int id) {
    const auto& node = t.nodes_[static_cast<size_t>(id)];
    Tensor& gin = t.nodes_[static_cast<size_t>(node.parents[0])].grad;
    const int64_t windows = node.grad.dim(0);
    for (int64_t w = 0; w < windows; ++w) {
      for (int64_t c = 0; c < C; ++c) {
        gin.at((*arg)[static_cast<size_t>(w * C + c)], c) += node.grad.at(w, c);
      }
    }
  });
  return MaxPoolResult{v, arg};
}

// ---------------------------------------------------------------------------
// Elman RNN pass (fused, BPTT backward)
// ---------------------------------------------------------------------------

Var Tape::rnn_pass(Var input, Var wx, Var wh, Var b, bool reverse) {
  const Tensor& x = value(input);
  const Tensor& twx = value(wx);
  const Tensor& twh = value(wh);
  const Tensor& tb = value(b);
  require(x.rank() == 2, "rnn_pass: input must be [T,C], got " + x.shape_str());
  const int64_t T = x.dim(0), C = x.dim(1);
  require(twx.rank() == 2 && twx.dim(0) == C, "rnn_pass: wx must be [C,H]");
  const int64_t H = twx.dim(1);
  require(twh.rank() == 2 && twh.dim(0) == H && twh.dim(1) == H, "rnn_pass: wh must be [H,H]");
  require(tb.rank() == 1 && tb.dim(0) == H, "rnn_pass: b must be [H]");

  // pre_t = x_t Wx + h_prev Wh + b, h_t = relu(pre_t)
  auto pre = std::make_shared<Tensor>(Shape{T, H});
  Tensor h({T, H});
  // x W_x for all timesteps at once
  gemm_acc(x.data(), twx.data(), pre->data(), T, C, H);
  const int64_t t0 = reverse ? T - 1 : 0;
  const int64_t step = reverse ? -1 : 1;
  for (int64_t i = 0; i < T; ++i) {
    const int64_t t = t0 + i * step;
    double* prow = pre->data() + t * H;
    for (int64_t j = 0; j < H; ++j) prow[j] += tb[j];
    if (i > 0) {
      const double* hprev = h.data() + (t - step) * H;
      gemm_acc(hprev, twh.data(), prow, 1, H, H);
    }
    double* hrow = h.data() + t * H;
    for (int64_t j = 0; j < H; ++j) hrow[j] = prow[j] > 0.0 ? prow[j] : 0.0;
  }

  return make_node(std::move(h), {input.id, wx.id, wh.id, b.id},
                   [pre, T, C, H, reverse](Tape& t, int id) {
    const auto& node = t.nodes_[static_cast<size_t>(id)];
    const Tensor& x = t.nodes_[static_cast<size_t>(node.parents[0])].value;
    const Tensor& twx = t.nodes_[static_cast<size_t>(node.parents[1])].value;
    const Tensor& twh = t.nodes_[static_cast<size_t>(node.parents[2])].value;
    Tensor& gx = t.nodes_[static_cast<size_t>(node.parents[0])].grad;
    Tensor& gwx = t.nodes_[static_cast<size_t>(node.parents[1])].grad;
    Tensor& gwh = t.nodes_[static_cast<size_t>(node.parents[2])].grad;
    Tensor& gb = t.nodes_[static_cast<size_t>(node.parents[3])].grad;
    const Tensor& h = node.value;
    const Tensor& gh = node.grad;

    std::vector<double> carry(static_cast<size_t>(H), 0.0);  // dL/dh_t via h_{t+step}
    std::vector<double> dpre(static_cast<size_t>(H), 0.0);
    const int64_t t_last = reverse ? 0 : T - 1;
    const int64_t step = reverse ? -1 : 1;
    for (int64_t i = 0; i < T; ++i) {
      const int64_t t_cur = t_last - i * step;  // walk opposite to the recurrence
      const double* prow = pre->data() + t_cur * H;
      for (int64_t j = 0; j < H; ++j) {
        const double up = gh.at(t_cur, j) + carry[static_cast<size_t>(j)];
        dpre[static_cast<size_t>(j)] = prow[j] > 0.0 ? up : 0.0;
      }
      for (int64_t j = 0; j < H; ++j) gb[j] += dpre[static_cast<size_t>(j)];
      // dWx += x_t^T dpre ; dx_t = dpre Wx^T
      const double* xrow = x.data() + t_cur * C;
      for (int64_t ci = 0; ci < C; ++ci) {
        const double xv = xrow[ci];
        double* gwxrow = gwx.data() + ci * H;
        for (int64_t j = 0; j < H; ++j) gwxrow[j] += xv * dpre[static_cast<size_t>(j)];
      }
      gemm_a_bt_acc(dpre.data(), twx.data(), gx.data() + t_cur * C, 1, H, C);
      const bool has_prev = (t_cur != (reverse ? T - 1 : 0));
      if (has_prev) {
        const double* hprev = h.data() + (t_cur - step) * H;
        for (int64_t j = 0; j < H; ++j) {
          const double d = dpre[static_cast<size_t>(j)];
          if (d == 0.0) continue;
          double* gwhrow = gwh.data();
          for (int64_t p = 0; p < H; ++p) gwhrow[p * H + j] += hprev[p] * d;
        }
        // carry for the previous step: dpre Wh^T
        std::fill(carry.begin(), carry.end(), 0.0);
        gemm_a_bt_acc(dpre.data(), twh.data(), carry.data(), 1, H, H);
      }
    }
  });
}

Var Tape::bidirectional_rnn(Var input, const BiRnnVars& p) {
  Var fwd = rnn_pass(input, p.wx_fwd, p.wh_fwd, p.b_fwd, false);
  Var bwd = rnn_pass(input, p.wx_bwd, p.wh_bwd, p.b_bwd, true);
  const Var parts[2] = {fwd, bwd};
  return concat_cols(parts);
}

// ---------------------------------------------------------------------------
// batch_norm
// ---------------------------------------------------------------------------

BatchNormResult Tape::batch_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& tx = value(x);
  const Tensor& tg = value(gamma);
  const Tensor& tb = value(beta);
  require(tx.rank() == 2, "batch_norm: input must be [N,F], got " + tx.shape_str());
  const int64_t N = tx.dim(0), F = tx.dim(1);
  require(tg.rank() == 1 && tg.dim(0) == F, "batch_norm: gamma must be [F]");
  require(tb.rank() == 1 && tb.dim(0) == F, "batch_norm: beta must be [F]");
  if (eps <= 0.0) throw ConfigError("batch_norm: eps must be positive");

  Tensor mean({F});
  Tensor var({F});
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = 0; j < F; ++j) mean[j] += tx.at(i, j);
  for (int64_t j = 0; j < F; ++j) mean[j] /= static_cast<double>(N);
  for (int64_t i = 0; i < N; ++i) {
    for (int64_t j = 0; j < F; ++j) {
      const double d = tx.at(i, j) - mean[j];
      var[j] += d * d;
    }
  }
  for (int64_t j = 0; j < F; ++j) var[j] /= static_cast<double>(N);

  auto inv_std = std::make_shared<Tensor>(Shape{F});
  auto xhat = std::make_shared<Tensor>(Shape{N, F});
  for (int64_t j = 0; j < F; ++j) (*inv_std)[j] = 1.0 / std::sqrt(var[j] + eps);
  Tensor out({N, F});
  for (int64_t i = 0; i < N; ++i) {
    for (int64_t j = 0; j < F; ++j) {
      const double xh = (tx.at(i, j) - mean[j]) * (*inv_std)[j];
      xhat->at(i, j) = xh;
      out.at(i, j) = tg[j] * xh + tb[j];
    }
  }

  Var v = make_node(std::move(out), {x.id, gamma.id, beta.id},
                    [inv_std, xhat, N, F](Tape& t, int id) {
    const auto& node = t.nodes_[static_cast<size_t>(id)];
    const Tensor& tg = t.nodes_[static_cast<size_t>(node.parents[1])].value;
    Tensor& gx = t.nodes_[static_cast<size_t>(node.parents[0])].grad;
    Tensor& ggamma = t.nodes_[static_cast<size_t>(node.parents[1])].grad;
    Tensor& gbeta = t.nodes_[static_cast<size_t>(node.parents[2])].grad;
    const Tensor& gy = node.grad;

    // Per feature f:
    //   dxhat = gy * gamma
    //   gx = inv_std/N * (N*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
    std::vector<double> sum_dxh(static_cast<size_t>(F), 0.0);
    std::vector<double> sum_dxh_xh(static_cast<size_t>(F), 0.0);
    for (int64_t i = 0; i < N; ++i) {
      for (int64_t j = 0; j < F; ++j) {
        const double dxh = gy.at(i, j) * tg[j];
        sum_dxh[static_cast<size_t>(j)] += dxh;
        sum_dxh_xh[static_cast<size_t>(j)] += dxh * xhat->at(i, j);
        ggamma[j] += gy.at(i, j) * xhat->at(i, j);
        gbeta[j] += gy.at(i, j);
      }
    }
    const double inv_n = 1.0 / static_cast<double>(N);
    for (int64_t i = 0; i < N; ++i) {
      for (int64_t j = 0; j < F; ++j) {
        const double dxh = gy.at(i, j) * tg[j];
        gx.at(i, j) += (*inv_std)[j] * inv_n *
                       (static_cast<double>(N) * dxh - sum_dxh[static_cast<size_t>(j)] -
                        xhat->at(i, j) * sum_dxh_xh[static_cast<size_t>(j)]);
      }
    }
  });
  return BatchNormResult{v, std::move(mean), std::move(var)};
}

// ---------------------------------------------------------------------------
// Concatenation / slicing / reduction
// ---------------------------------------------------------------------------

Var Tape::concat_rows(std::span<const Var> xs) {
  require(!xs.empty(), "concat_rows: need at least one input");
  const int64_t cols = value(xs[0]).dim(1);
  int64_t rows = 0;
  std::vector<int> parents;
  for (Var v : xs) {
    const Tensor& tv = value(v);
    require(tv.rank() == 2 && tv.dim(1) == cols, "concat_rows: column counts differ");
    rows += tv.dim(0);
    parents.push_back(v.id);
  }
  Tensor out({rows, cols});
  int64_t r = 0;
  for (Var v : xs) {
    const Tensor& tv = value(v);
    std::copy(tv.data(), tv.data() + tv.size(), out.data() + r * cols);
    r += tv.dim(0);
  }
  return make_node(std::move(out), std::move(parents), [cols](Tape& t, int id) {
    const auto& node = t.nodes_[static_cast<size_t>(id)];
    int64_t r = 0;
    for (int pid : node.parents) {
      Tensor& gp = t.nodes_[static_cast<size_t>(pid)].grad;
      const int64_t n = gp.size();
      const double* src = node.grad.data() + r * cols;
      for (int64_t i = 0; i < n; ++i) gp[i] += src[i];
      r += gp.dim(0);
    }
  });
}

Var Tape::concat_cols(std::span<const Var> xs) {
  require(!xs.empty(), "concat_cols: need at least one input");
  const int64_t rows = value(xs[0]).dim(0);
  int64_t cols = 0;
  std::vector<int> parents;
  for (Var v : xs) {
    const Tensor& tv = value(v);
    require(tv.rank() == 2 && tv.dim(0) == rows, "concat_cols: row counts differ");
    cols += tv.dim(1);
    parents.push_back(v.id);
  }
  Tensor out({rows, cols});
  int64_t c = 0;
  for (Var v : xs) {
    const Tensor& tv = value(v);
    const int64_t w = tv.dim(1);
    for (int64_t i = 0; i < rows; ++i) {
      std::copy(tv.data() + i * w, tv.data() + (i + 1) * w, out.data() + i * cols + c);
    }
    c += w;
  }
  return make_node(std::move(out), std::move(parents), [rows, cols](Tape& t, int id) {
    const auto& node = t.nodes_[static_cast<size_t>(id)];
    int64_t c = 0;
    for (int pid : node.parents) {
      Tensor& gp = t.nodes_[static_cast<size_t>(pid)].grad;
      const int64_t w = gp.dim(1);
      for (int64_t i = 0; i < rows; ++i) {
        const double* src = node.grad.data() + i * cols + c;
        double* dst = gp.data() + i * w;
        for (int64_t j = 0; j < w; ++j) dst[j] += src[j];
      }
      c += w;
    }
  });
}

Var Tape::slice_rows(Var x, int64_t begin, int64_t count) {
  const Tensor& tx = value(x);
  require(tx.rank() == 2, "slice_rows: input must be rank 2");
  require(begin >= 0 && count >= 1 && begin + count <= tx.dim(0),
          "slice_rows: range [" + std::to_string(begin) + "," + std::to_string(begin + count) +
              ") out of bounds for " + tx.shape_str());
  const int64_t cols = tx.dim(1);
  Tensor out({count, cols});
  std::copy(tx.data() + begin * cols, tx.data() + (begin + count) * cols, out.data());
  return make_node(std::move(out), {x.id}, [begin, count, cols](Tape& t, int id) {
    const auto& node = t.nodes_[static_cast<size_t>(id)];
    Tensor& gx = t.nodes_[static_cast<size_t>(node.parents[0])].grad;
    const double* src = node.grad.data();
    double* dst = gx.data() + begin * cols;
    for (int64_t i = 0; i < count * cols; ++i) dst[i] += src[i];
  });
}

Var Tape::sum(Var x) {
  Tensor out = Tensor::scalar(value(x).sum());
  return make_node(std::move(out), {x.id}, [](Tape& t, int id) {
    const auto& node = t.nodes_[static_cast<size_t>(id)];
    Tensor& gx = t.nodes_[static_cast<size_t>(node.parents[0])].grad;
    const double g = node.grad[0];
    for (int64_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

// ---------------------------------------------------------------------------
// Backward sweep
// ---------------------------------------------------------------------------

void Tape::backward(Var loss) {
  const int loss_id = check(loss);
  const Tensor& lv = nodes_[static_cast<size_t>(loss_id)].value;
  if (lv.rank() != 0) {
    throw ShapeError("backward: loss must be a scalar, got " + lv.shape_str());
  }
  if (grads_valid_) {
    throw Error("backward: gradients already computed; call reset_gradients() first");
  }

  // Mark ancestors of the loss so unrelated subgraphs are skipped.
  std::vector<char> reachable(nodes_.size(), 0);
  reachable[static_cast<size_t>(loss_id)] = 1;
  for (int id = loss_id; id >= 0; --id) {
    if (!reachable[static_cast<size_t>(id)]) continue;
    for (int p : nodes_[static_cast<size_t>(id)].parents) reachable[static_cast<size_t>(p)] = 1;
  }

  for (auto& n : nodes_) n.grad = Tensor::zeros(n.value.shape());
  nodes_[static_cast<size_t>(loss_id)].grad[0] = 1.0;

  for (int id = loss_id; id >= 0; --id) {
    auto& n = nodes_[static_cast<size_t>(id)];
    if (!reachable[static_cast<size_t>(id)] || !n.backward) continue;
    n.backward(*this, id);
  }
  grads_valid_ = true;
}

void Tape::reset_gradients() {
  for (auto& n : nodes_) n.grad = Tensor();
  grads_valid_ = false;
}

// ---------------------------------------------------------------------------
// Softmax helpers
// ---------------------------------------------------------------------------

Tensor log_softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("log_softmax_rows: input must be rank 2");
  const int64_t rows = logits.dim(0), cols = logits.dim(1);
  Tensor out = logits;
  for (int64_t i = 0; i < rows; ++i) {
    double mx = out.at(i, 0);
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, out.at(i, j));
    double z = 0.0;
    for (int64_t j = 0; j < cols; ++j) z += std::exp(out.at(i, j) - mx);
    const double log_z = mx + std::log(z);
    for (int64_t j = 0; j < cols; ++j) out.at(i, j) -= log_z;
  }
  return out;
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor out = log_softmax_rows(logits);
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
  return out;
}

}  // namespace wavebank
