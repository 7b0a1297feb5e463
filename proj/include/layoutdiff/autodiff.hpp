#pragma once

#include <functional>
#include <string>
#include <vector>

#include "layoutdiff/tensor.hpp"

namespace layoutdiff {

// A named trainable tensor. Gradients accumulate across tape backward calls
// until zero_grad().
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

// Reverse-mode tape. One tape per training step; node order is the
// topological order used by backward(). Values are double precision so
// analytic gradients can be validated against central finite differences.
class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Var constant(Tensor t);
  Var param(Parameter& p);

  const Tensor& val(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }
  const Tensor& grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].grad; }

  // Elementwise binaries with numpy-style trailing broadcast.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);

  // x [..., in] * w [out, in]^T + b [out]; pass {} for no bias.
  Var linear(Var x, Var w, Var b);
  // Batched matmul over identical leading dims; trans_b treats b as [..., n, k].
  Var bmm(Var a, Var b, bool trans_b);
  Var reshape(Var a, std::vector<int> shape);
  // [a0,a1,a2,a3] -> [a0,a2,a1,a3]
  Var transpose_0213(Var a);

  Var gelu(Var a);
  Var silu(Var a);
  Var layer_norm(Var a, double eps = 1e-5);
  // Softmax over the last dim. Optional mask (constant, broadcastable to the
  // logits shape, 1 = keep): masked entries get zero probability. Fully
  // masked rows fall back to uniform.
  Var softmax_masked(Var logits, Var mask);
  // table [V, d] gathered by flat indices; output shape = prefix + [d].
  Var row_gather(Var table, const std::vector<int>& idx, const std::vector<int>& prefix_shape);
  Var conv2d(Var x, Var w, Var b, int stride, int pad);
  Var global_avg_pool(Var x);  // [B,C,H,W] -> [B,C]
  Var concat_axis1(Var a, Var b);
  Var slice_axis1(Var a, int start, int len);
  Var slice_lastdim(Var a, int start, int len);
  Var sum_all(Var a);
  Var mean_all(Var a);

  // Soft pairwise-overlap penalty over decoded boxes; see iou.hpp.
  // geom [B, N, 8] rows are (t, s, cos, sin); active [B, N] marks real slots.
  Var iou_penalty(Var geom, const Tensor& active, double sharpness);

  void backward(Var loss);

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&, int)> backprop;
    Parameter* bound = nullptr;
    bool needs_grad = false;
  };

  Var make(Tensor value, bool needs_grad, std::function<void(Tape&, int)> backprop);
  Node& node(Var v) { return nodes_[static_cast<size_t>(v.id)]; }
  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  bool needs(Var v) const { return nodes_[static_cast<size_t>(v.id)].needs_grad; }
  Tensor& grad_buf(int id);

  std::vector<Node> nodes_;

  friend struct TapeOps;
};

using Var = Tape::Var;

}  // namespace layoutdiff
