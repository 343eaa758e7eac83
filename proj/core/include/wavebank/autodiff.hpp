#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "wavebank/tensor.hpp"

namespace wavebank {

class Tape;

// Handle to a node on a Tape. Only meaningful together with the tape that
// produced it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse pass for one node: reads grad(node) and accumulates into the
// gradients of its parents.
using BackwardFn = std::function<void(Tape&, int node_id)>;

struct MaxPoolResult {
  Var out;
  // Absolute input row index of the window maximum, laid out row-major as
  // [window][column], matching the output tensor.
  std::shared_ptr<const std::vector<int64_t>> argmax;
};

struct BatchNormResult {
  Var out;
  Tensor batch_mean;  // [F], statistics over all rows jointly
  Tensor batch_var;   // [F], population variance
};

struct BiRnnVars {
  Var wx_fwd, wh_fwd, b_fwd;
  Var wx_bwd, wh_bwd, b_bwd;
};

// Single-owner record of executed ops. Values are computed eagerly as ops
// are issued; backward() runs the reverse-topological sweep. Creation order
// is the topological order, so parents always precede their consumers.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);

  const Tensor& value(Var v) const;
  // Only valid after backward(); shape matches the node value.
  const Tensor& grad(Var v) const;
  Tensor& grad_mut(Var v);
  std::span<const int> parents(Var v) const;

  // Extension point for ops defined outside this module (e.g. CTC). The
  // backward fn must accumulate (+=) into parent gradients.
  Var make_node(Tensor value, std::vector<int> parents, BackwardFn backward);

  // Elementwise / broadcast arithmetic.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_rowvec(Var m, Var row);  // [N,F] + [F]
  Var mul_rowvec(Var m, Var row);  // [N,F] * [F]
  Var relu(Var x);

  Var matmul(Var a, Var b);  // [m,k] x [k,n] -> [m,n]

  // Valid (no padding) cross-correlation. input [T,Cin], filters
  // [K,Cin,Cout], output [T',Cout] with T' = floor((T-K)/stride)+1.
  Var conv1d(Var input, Var filters, int stride);

  // Non-overlapping window max over rows; incomplete trailing windows are
  // dropped. input [T,C] -> [floor(T/stride),C]. Ties break to the lowest
  // row index. Backward routes gradient only to the argmax positions.
  MaxPoolResult max_pool(Var input, int stride);

  // Elman recurrence h_t = relu(x_t Wx + h_prev Wh + b) with h outside the
  // sequence fixed at zero. reverse=true runs the recurrence from the last
  // row to the first; output rows stay aligned with input rows.
  // input [T,C], wx [C,H], wh [H,H], b [H] -> [T,H].
  Var rnn_pass(Var input, Var wx, Var wh, Var b, bool reverse);

  // Forward and reverse passes concatenated on the feature axis: [T,2H].
  Var bidirectional_rnn(Var input, const BiRnnVars& p);

  // Statistics per feature over all rows jointly (batch and time together,
  // never per timestep). x [N,F], gamma/beta [F].
  BatchNormResult batch_norm(Var x, Var gamma, Var beta, double eps);

  Var concat_rows(std::span<const Var> xs);
  Var concat_cols(std::span<const Var> xs);
  Var slice_rows(Var x, int64_t begin, int64_t count);

  Var sum(Var x);  // -> rank-0 scalar

  // Reverse-topological gradient accumulation from a scalar loss. Calling
  // it again without reset_gradients() is an error.
  void backward(Var loss);
  void reset_gradients();
  bool gradients_valid() const { return grads_valid_; }

  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> parents;
    BackwardFn backward;  // empty for leaves
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  int check(Var v) const;

  std::vector<Node> nodes_;
  bool grads_valid_ = false;
};

// Utilities shared with inference paths (no tape involved).
Tensor softmax_rows(const Tensor& logits);
Tensor log_softmax_rows(const Tensor& logits);

}  // namespace wavebank
