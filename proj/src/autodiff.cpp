#include "layoutdiff/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <memory>

#include "layoutdiff/iou.hpp"
#include "layoutdiff/kernels.hpp"

namespace layoutdiff {

namespace {

// Trailing-aligned broadcast: pads both shapes to equal rank with 1s and
// visits every output element with the matching source offsets.
struct Bcast {
  std::vector<int> out_shape;
  std::vector<int64_t> sa, sb;  // strides per out dim, 0 where broadcast

  Bcast(const std::vector<int>& a, const std::vector<int>& b) {
    const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
    const int r = std::max(ra, rb);
    out_shape.resize(static_cast<size_t>(r));
    sa.resize(static_cast<size_t>(r));
    sb.resize(static_cast<size_t>(r));
    std::vector<int> pa(static_cast<size_t>(r), 1), pb(static_cast<size_t>(r), 1);
    for (int i = 0; i < ra; ++i) pa[static_cast<size_t>(r - ra + i)] = a[static_cast<size_t>(i)];
    for (int i = 0; i < rb; ++i) pb[static_cast<size_t>(r - rb + i)] = b[static_cast<size_t>(i)];
    for (int i = 0; i < r; ++i) {
      assert(pa[i] == pb[i] || pa[i] == 1 || pb[i] == 1);
      out_shape[static_cast<size_t>(i)] = std::max(pa[static_cast<size_t>(i)], pb[static_cast<size_t>(i)]);
    }
    int64_t st = 1;
    for (int i = r - 1; i >= 0; --i) {
      sa[static_cast<size_t>(i)] = (pa[static_cast<size_t>(i)] == 1) ? 0 : st;
      st *= pa[static_cast<size_t>(i)];
    }
    st = 1;
    for (int i = r - 1; i >= 0; --i) {
      sb[static_cast<size_t>(i)] = (pb[static_cast<size_t>(i)] == 1) ? 0 : st;
      st *= pb[static_cast<size_t>(i)];
    }
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    const int r = static_cast<int>(out_shape.size());
    std::vector<int> idx(static_cast<size_t>(r), 0);
    const int64_t total = Tensor::count(out_shape);
    int64_t oa = 0, ob = 0;
    for (int64_t lin = 0; lin < total; ++lin) {
      fn(lin, oa, ob);
      for (int d = r - 1; d >= 0; --d) {
        idx[static_cast<size_t>(d)]++;
        oa += sa[static_cast<size_t>(d)];
        ob += sb[static_cast<size_t>(d)];
        if (idx[static_cast<size_t>(d)] < out_shape[static_cast<size_t>(d)]) break;
        oa -= sa[static_cast<size_t>(d)] * out_shape[static_cast<size_t>(d)];
        ob -= sb[static_cast<size_t>(d)] * out_shape[static_cast<size_t>(d)];
        idx[static_cast<size_t>(d)] = 0;
      }
    }
  }
};

std::vector<int> flatten_to_2d(const std::vector<int>& shape) {
  int64_t rows = 1;
  for (size_t i = 0; i + 1 < shape.size(); ++i) rows *= shape[i];
  return {static_cast<int>(rows), shape.back()};
}

double erf_cdf(double x) { return 0.5 * (1.0 + std::erf(x * 0.7071067811865475)); }
double gauss_pdf(double x) { return 0.3989422804014327 * std::exp(-0.5 * x * x); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tape::Var Tape::make(Tensor value, bool needs_grad, std::function<void(Tape&, int)> backprop) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buf(int id) {
  Node& n = node(id);
  if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

Var Tape::constant(Tensor t) { return make(std::move(t), false, nullptr); }

Var Tape::param(Parameter& p) {
  Var v = make(p.value, p.trainable, nullptr);
  Node& n = node(v);
  n.bound = &p;
  if (p.trainable) {
    n.backprop = [](Tape& tape, int id) {
      Node& self = tape.node(id);
      const Tensor& g = self.grad;
      for (size_t i = 0; i < g.data.size(); ++i) self.bound->grad.data[i] += g.data[i];
    };
  }
  return v;
}

// ---------------------------------------------------------------------------
// Elementwise

Var Tape::add(Var a, Var b) {
  Bcast bc(val(a).shape, val(b).shape);
  Tensor out(bc.out_shape);
  const Tensor &ta = val(a), &tb = val(b);
  bc.for_each([&](int64_t o, int64_t oa, int64_t ob) { out[o] = ta[oa] + tb[ob]; });
  const bool ng = needs(a) || needs(b);
  return make(std::move(out), ng, [a, b, bc](Tape& t, int id) {
    const Tensor& g = t.node(id).grad;
    Tensor* ga = t.needs(a) ? &t.grad_buf(a.id) : nullptr;
    Tensor* gb = t.needs(b) ? &t.grad_buf(b.id) : nullptr;
    bc.for_each([&](int64_t o, int64_t oa, int64_t ob) {
      if (ga) (*ga)[oa] += g[o];
      if (gb) (*gb)[ob] += g[o];
    });
  });
}

Var Tape::sub(Var a, Var b) {
  Bcast bc(val(a).shape, val(b).shape);
  Tensor out(bc.out_shape);
  const Tensor &ta = val(a), &tb = val(b);
  bc.for_each([&](int64_t o, int64_t oa, int64_t ob) { out[o] = ta[oa] - tb[ob]; });
  const bool ng = needs(a) || needs(b);
  return make(std::move(out), ng, [a, b, bc](Tape& t, int id) {
    const Tensor& g = t.node(id).grad;
    Tensor* ga = t.needs(a) ? &t.grad_buf(a.id) : nullptr;
    Tensor* gb = t.needs(b) ? &t.grad_buf(b.id) : nullptr;
    bc.for_each([&](int64_t o, int64_t oa, int64_t ob) {
      if (ga) (*ga)[oa] += g[o];
      if (gb) (*gb)[ob] -= g[o];
    });
  });
}

Var Tape::mul(Var a, Var b) {
  Bcast bc(val(a).shape, val(b).shape);
  Tensor out(bc.out_shape);
  const Tensor &ta = val(a), &tb = val(b);
  bc.for_each([&](int64_t o, int64_t oa, int64_t ob) { out[o] = ta[oa] * tb[ob]; });
  const bool ng = needs(a) || needs(b);
  return make(std::move(out), ng, [a, b, bc](Tape& t, int id) {
    const Tensor& g = t.node(id).grad;
    const Tensor &va = t.val(a), &vb = t.val(b);
    Tensor* ga = t.needs(a) ? &t.grad_buf(a.id) : nullptr;
    Tensor* gb = t.needs(b) ? &t.grad_buf(b.id) : nullptr;
    bc.for_each([&](int64_t o, int64_t oa, int64_t ob) {
      if (ga) (*ga)[oa] += g[o] * vb[ob];
      if (gb) (*gb)[ob] += g[o] * va[oa];
    });
  });
}

Var Tape::scale(Var a, double s) {
  Tensor out = val(a);
  for (auto& x : out.data) x *= s;
  return make(std::move(out), needs(a), [a, s](Tape& t, int id) {
    if (!t.needs(a)) return;
    const Tensor& g = t.node(id).grad;
    Tensor& ga = t.grad_buf(a.id);
    for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += s * g.data[i];
  });
}

Var Tape::add_scalar(Var a, double s) {
  Tensor out = val(a);
  for (auto& x : out.data) x += s;
  return make(std::move(out), needs(a), [a](Tape& t, int id) {
    if (!t.needs(a)) return;
    const Tensor& g = t.node(id).grad;
    Tensor& ga = t.grad_buf(a.id);
    for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

Var Tape::linear(Var x, Var w, Var b) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  assert(tw.rank() == 2);
  const auto xv = flatten_to_2d(tx.shape);
  const int rows = xv[0], in = xv[1], out_dim = tw.dim(0);
  assert(in == tw.dim(1));
  std::vector<int> out_shape = tx.shape;
  out_shape.back() = out_dim;
  Tensor out(out_shape);
  kernels::mm_nt(tx.data.data(), tw.data.data(), out.data.data(), rows, in, out_dim, false);
  if (b.valid()) {
    const Tensor& tb = val(b);
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < out_dim; ++j) out.data[static_cast<size_t>(r) * out_dim + j] += tb[j];
  }
  const bool ng = needs(x) || needs(w) || (b.valid() && needs(b));
  return make(std::move(out), ng, [x, w, b, rows, in, out_dim](Tape& t, int id) {
    const Tensor& g = t.node(id).grad;
    if (t.needs(x)) {
      Tensor& gx = t.grad_buf(x.id);
      kernels::mm_nn(g.data.data(), t.val(w).data.data(), gx.data.data(), rows, out_dim, in, true);
    }
    if (t.needs(w)) {
      Tensor& gw = t.grad_buf(w.id);
      kernels::mm_tn(g.data.data(), t.val(x).data.data(), gw.data.data(), out_dim, rows, in, true);
    }
    if (b.valid() && t.needs(b)) {
      Tensor& gb = t.grad_buf(b.id);
      for (int r = 0; r < rows; ++r)
        for (int j = 0; j < out_dim; ++j) gb[j] += g.data[static_cast<size_t>(r) * out_dim + j];
    }
  });
}

Var Tape::bmm(Var a, Var b, bool trans_b) {
  const Tensor &ta = val(a), &tb = val(b);
  assert(ta.rank() == tb.rank() && ta.rank() >= 2);
  int64_t batches = 1;
  for (int i = 0; i + 2 < ta.rank(); ++i) {
    assert(ta.shape[i] == tb.shape[i]);
    batches *= ta.shape[static_cast<size_t>(i)];
  }
  const int m = ta.shape[ta.shape.size() - 2];
  const int k = ta.shape.back();
  const int n = trans_b ? tb.shape[tb.shape.size() - 2] : tb.shape.back();
  assert(k == (trans_b ? tb.shape.back() : tb.shape[tb.shape.size() - 2]));
  std::vector<int> out_shape(ta.shape.begin(), ta.shape.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out(out_shape);
  const int64_t sa = static_cast<int64_t>(m) * k, sb = static_cast<int64_t>(k) * n, so = static_cast<int64_t>(m) * n;
  for (int64_t q = 0; q < batches; ++q) {
    const double* pa = ta.data.data() + q * sa;
    const double* pb = tb.data.data() + q * sb;
    double* po = out.data.data() + q * so;
    trans_b ? kernels::mm_nt(pa, pb, po, m, k, n, false)
            : kernels::mm_nn(pa, pb, po, m, k, n, false);
  }
  const bool ng = needs(a) || needs(b);
  return make(std::move(out), ng, [a, b, trans_b, batches, m, k, n, sa, sb, so](Tape& t, int id) {
    const Tensor& g = t.node(id).grad;
    const Tensor &va = t.val(a), &vb = t.val(b);
    for (int64_t q = 0; q < batches; ++q) {
      const double* pg = g.data.data() + q * so;
      const double* pa = va.data.data() + q * sa;
      const double* pb = vb.data.data() + q * sb;
      if (t.needs(a)) {
        double* ga = t.grad_buf(a.id).data.data() + q * sa;
        // y = a b   : ga += g b^T;  y = a b^T : ga += g b
        trans_b ? kernels::mm_nn(pg, pb, ga, m, n, k, true)
                : kernels::mm_nt(pg, pb, ga, m, n, k, true);
      }
      if (t.needs(b)) {
        double* gb = t.grad_buf(b.id).data.data() + q * sb;
        // y = a b   : gb += a^T g;  y = a b^T : gb += g^T a
        trans_b ? kernels::mm_tn(pg, pa, gb, n, m, k, true)
                : kernels::mm_tn(pa, pg, gb, k, m, n, true);
      }
    }
  });
}

Var Tape::reshape(Var a, std::vector<int> shape) {
  const Tensor& ta = val(a);
  assert(Tensor::count(shape) == ta.size());
  Tensor out(std::move(shape), ta.data);
  return make(std::move(out), needs(a), [a](Tape& t, int id) {
    if (!t.needs(a)) return;
    const Tensor& g = t.node(id).grad;
    Tensor& ga = t.grad_buf(a.id);
    for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
  });
}

Var Tape::transpose_0213(Var a) {
  const Tensor& ta = val(a);
  assert(ta.rank() == 4);
  const int d0 = ta.dim(0), d1 = ta.dim(1), d2 = ta.dim(2), d3 = ta.dim(3);
  Tensor out({d0, d2, d1, d3});
  for (int i = 0; i < d0; ++i)
    for (int j = 0; j < d1; ++j)
      for (int k2 = 0; k2 < d2; ++k2) {
        const double* src = &ta.data[((static_cast<size_t>(i) * d1 + j) * d2 + k2) * d3];
        double* dst = &out.data[((static_cast<size_t>(i) * d2 + k2) * d1 + j) * d3];
        std::copy(src, src + d3, dst);
      }
  return make(std::move(out), needs(a), [a, d0, d1, d2, d3](Tape& t, int id) {
    if (!t.needs(a)) return;
    const Tensor& g = t.node(id).grad;
    Tensor& ga = t.grad_buf(a.id);
    for (int i = 0; i < d0; ++i)
      for (int k2 = 0; k2 < d2; ++k2)
        for (int j = 0; j < d1; ++j) {
          const double* src = &g.data[((static_cast<size_t>(i) * d2 + k2) * d1 + j) * d3];
          double* dst = &ga.data[((static_cast<size_t>(i) * d1 + j) * d2 + k2) * d3];
          for (int l = 0; l < d3; ++l) dst[l] += src[l];
        }
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities and norms

Var Tape::gelu(Var a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (size_t i = 0; i < ta.data.size(); ++i) out.data[i] = ta.data[i] * erf_cdf(ta.data[i]);
  return make(std::move(out), needs(a), [a](Tape& t, int id) {
    if (!t.needs(a)) return;
    const Tensor& g = t.node(id).grad;
    const Tensor& va = t.val(a);
    Tensor& ga = t.grad_buf(a.id);
    for (size_t i = 0; i < g.data.size(); ++i) {
      const double x = va.data[i];
      ga.data[i] += g.data[i] * (erf_cdf(x) + x * gauss_pdf(x));
    }
  });
}

Var Tape::silu(Var a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (size_t i = 0; i < ta.data.size(); ++i) out.data[i] = ta.data[i] * sigmoid(ta.data[i]);
  return make(std::move(out), needs(a), [a](Tape& t, int id) {
    if (!t.needs(a)) return;
    const Tensor& g = t.node(id).grad;
    const Tensor& va = t.val(a);
    Tensor& ga = t.grad_buf(a.id);
    for (size_t i = 0; i < g.data.size(); ++i) {
      const double s = sigmoid(va.data[i]);
      ga.data[i] += g.data[i] * s * (1.0 + va.data[i] * (1.0 - s));
    }
  });
}

Var Tape::layer_norm(Var a, double eps) {
  const Tensor& ta = val(a);
  const int n = ta.shape.back();
  const int64_t rows = ta.size() / n;
  Tensor out(ta.shape);
  Tensor inv_std({static_cast<int>(rows)});
  for (int64_t r = 0; r < rows; ++r) {
    const double* x = ta.data.data() + r * n;
    double* y = out.data.data() + r * n;
    double mu = 0.0;
    for (int i = 0; i < n; ++i) mu += x[i];
    mu /= n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) var += (x[i] - mu) * (x[i] - mu);
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int i = 0; i < n; ++i) y[i] = (x[i] - mu) * is;
  }
  auto inv_std_holder = std::make_shared<Tensor>(std::move(inv_std));
  return make(std::move(out), needs(a), [a, n, rows, inv_std_holder](Tape& t, int id) {
    if (!t.needs(a)) return;
    const Tensor& g = t.node(id).grad;
    const Tensor& y = t.node(id).value;
    Tensor& ga = t.grad_buf(a.id);
    for (int64_t r = 0; r < rows; ++r) {
      const double* gr = g.data.data() + r * n;
      const double* yr = y.data.data() + r * n;
      double* gar = ga.data.data() + r * n;
      double gmean = 0.0, gymean = 0.0;
      for (int i = 0; i < n; ++i) {
        gmean += gr[i];
        gymean += gr[i] * yr[i];
      }
      gmean /= n;
      gymean /= n;
      const double is = (*inv_std_holder)[r];
      for (int i = 0; i < n; ++i) gar[i] += is * (gr[i] - gmean - yr[i] * gymean);
    }
  });
}

Var Tape::softmax_masked(Var logits, Var mask) {
  const Tensor& tl = val(logits);
  const int n = tl.shape.back();
  const int64_t rows = tl.size() / n;
  Tensor out(tl.shape);
  const Tensor* tm = mask.valid() ? &val(mask) : nullptr;
  std::unique_ptr<Bcast> bc;
  if (tm) bc = std::make_unique<Bcast>(tl.shape, tm->shape);
  // Per-row mask offsets are recomputed by walking the broadcast once.
  std::vector<double> mflat;
  if (tm) {
    mflat.resize(static_cast<size_t>(tl.size()));
    bc->for_each([&](int64_t o, int64_t, int64_t ob) { mflat[static_cast<size_t>(o)] = (*tm)[ob]; });
  }
  for (int64_t r = 0; r < rows; ++r) {
    const double* x = tl.data.data() + r * n;
    const double* mrow = tm ? mflat.data() + r * n : nullptr;
    double* y = out.data.data() + r * n;
    double mx = -1e300;
    int valid = 0;
    for (int i = 0; i < n; ++i) {
      if (mrow && mrow[i] < 0.5) continue;
      ++valid;
      if (x[i] > mx) mx = x[i];
    }
    if (valid == 0) {
      for (int i = 0; i < n; ++i) y[i] = 1.0 / n;
      continue;
    }
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
      if (mrow && mrow[i] < 0.5) {
        y[i] = 0.0;
      } else {
        y[i] = std::exp(x[i] - mx);
        z += y[i];
      }
    }
    for (int i = 0; i < n; ++i) y[i] /= z;
  }
  auto mask_holder = std::make_shared<std::vector<double>>(std::move(mflat));
  return make(std::move(out), needs(logits), [logits, n, rows, mask_holder](Tape& t, int id) {
    if (!t.needs(logits)) return;
    const Tensor& g = t.node(id).grad;
    const Tensor& y = t.node(id).value;
    Tensor& gl = t.grad_buf(logits.id);
    const bool has_mask = !mask_holder->empty();
    for (int64_t r = 0; r < rows; ++r) {
      const double* gr = g.data.data() + r * n;
      const double* yr = y.data.data() + r * n;
      double* glr = gl.data.data() + r * n;
      if (has_mask) {
        bool any = false;
        for (int i = 0; i < n; ++i)
          if ((*mask_holder)[static_cast<size_t>(r * n + i)] >= 0.5) {
            any = true;
            break;
          }
        if (!any) continue;  // uniform fallback row: treated as constant
      }
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += gr[i] * yr[i];
      for (int i = 0; i < n; ++i) glr[i] += yr[i] * (gr[i] - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// Gather / conv / pooling / slicing

Var Tape::row_gather(Var table, const std::vector<int>& idx, const std::vector<int>& prefix_shape) {
  const Tensor& tt = val(table);
  assert(tt.rank() == 2);
  const int d = tt.dim(1);
  assert(Tensor::count(prefix_shape) == static_cast<int64_t>(idx.size()));
  std::vector<int> out_shape = prefix_shape;
  out_shape.push_back(d);
  Tensor out(out_shape);
  for (size_t i = 0; i < idx.size(); ++i) {
    assert(idx[i] >= 0 && idx[i] < tt.dim(0));
    std::copy(tt.data.begin() + static_cast<int64_t>(idx[i]) * d,
              tt.data.begin() + (static_cast<int64_t>(idx[i]) + 1) * d,
              out.data.begin() + static_cast<int64_t>(i) * d);
  }
  auto idx_holder = std::make_shared<std::vector<int>>(idx);
  return make(std::move(out), needs(table), [table, d, idx_holder](Tape& t, int id) {
    if (!t.needs(table)) return;
    const Tensor& g = t.node(id).grad;
    Tensor& gt = t.grad_buf(table.id);
    for (size_t i = 0; i < idx_holder->size(); ++i) {
      const double* src = g.data.data() + static_cast<int64_t>(i) * d;
      double* dst = gt.data.data() + static_cast<int64_t>((*idx_holder)[i]) * d;
      for (int j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

Var Tape::conv2d(Var x, Var w, Var b, int stride, int pad) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  assert(tx.rank() == 4 && tw.rank() == 4);
  const int batch = tx.dim(0), cin = tx.dim(1), h = tx.dim(2), wd = tx.dim(3);
  const int cout = tw.dim(0), ksz = tw.dim(2);
  assert(tw.dim(1) == cin && tw.dim(3) == ksz);
  const int ho = kernels::conv_out_dim(h, ksz, stride, pad);
  const int wo = kernels::conv_out_dim(wd, ksz, stride, pad);
  Tensor out({batch, cout, ho, wo});
  const double* bias = b.valid() ? val(b).data.data() : nullptr;
  kernels::conv2d_fwd(tx.data.data(), tw.data.data(), bias, out.data.data(), batch, cin, h, wd,
                      cout, ksz, stride, pad);
  const bool ng = needs(x) || needs(w) || (b.valid() && needs(b));
  return make(std::move(out), ng,
              [x, w, b, batch, cin, h, wd, cout, ksz, stride, pad, ho, wo](Tape& t, int id) {
                const Tensor& g = t.node(id).grad;
                if (t.needs(x)) {
                  Tensor tmp({batch, cin, h, wd});
                  kernels::conv2d_bwd_input(g.data.data(), t.val(w).data.data(), tmp.data.data(),
                                            batch, cin, h, wd, cout, ksz, stride, pad);
                  Tensor& gx = t.grad_buf(x.id);
                  for (size_t i = 0; i < tmp.data.size(); ++i) gx.data[i] += tmp.data[i];
                }
                if (t.needs(w) || (b.valid() && t.needs(b))) {
                  Tensor& gw = t.grad_buf(w.id);
                  double* gbias = (b.valid() && t.needs(b)) ? t.grad_buf(b.id).data.data() : nullptr;
                  kernels::conv2d_bwd_weight(g.data.data(), t.val(x).data.data(), gw.data.data(),
                                             gbias, batch, cin, h, wd, cout, ksz, stride, pad);
                }
                (void)ho;
                (void)wo;
              });
}

Var Tape::global_avg_pool(Var x) {
  const Tensor& tx = val(x);
  assert(tx.rank() == 4);
  const int batch = tx.dim(0), c = tx.dim(1), hw = tx.dim(2) * tx.dim(3);
  Tensor out({batch, c});
  for (int bi = 0; bi < batch; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      const double* p = tx.data.data() + (static_cast<size_t>(bi) * c + ci) * hw;
      double s = 0.0;
      for (int i = 0; i < hw; ++i) s += p[i];
      out.at2(bi, ci) = s / hw;
    }
  return make(std::move(out), needs(x), [x, batch, c, hw](Tape& t, int id) {
    if (!t.needs(x)) return;
    const Tensor& g = t.node(id).grad;
    Tensor& gx = t.grad_buf(x.id);
    for (int bi = 0; bi < batch; ++bi)
      for (int ci = 0; ci < c; ++ci) {
        const double gv = g.at2(bi, ci) / hw;
        double* p = gx.data.data() + (static_cast<size_t>(bi) * c + ci) * hw;
        for (int i = 0; i < hw; ++i) p[i] += gv;
      }
  });
}

Var Tape::concat_axis1(Var a, Var b) {
  const Tensor &ta = val(a), &tb = val(b);
  assert(ta.rank() == 3 && tb.rank() == 3);
  assert(ta.dim(0) == tb.dim(0) && ta.dim(2) == tb.dim(2));
  const int batch = ta.dim(0), na = ta.dim(1), nb = tb.dim(1), d = ta.dim(2);
  Tensor out({batch, na + nb, d});
  for (int bi = 0; bi < batch; ++bi) {
    std::copy(ta.data.begin() + static_cast<size_t>(bi) * na * d,
              ta.data.begin() + static_cast<size_t>(bi + 1) * na * d,
              out.data.begin() + static_cast<size_t>(bi) * (na + nb) * d);
    std::copy(tb.data.begin() + static_cast<size_t>(bi) * nb * d,
              tb.data.begin() + static_cast<size_t>(bi + 1) * nb * d,
              out.data.begin() + static_cast<size_t>(bi) * (na + nb) * d + static_cast<size_t>(na) * d);
  }
  const bool ng = needs(a) || needs(b);
  return make(std::move(out), ng, [a, b, batch, na, nb, d](Tape& t, int id) {
    const Tensor& g = t.node(id).grad;
    for (int bi = 0; bi < batch; ++bi) {
      if (t.needs(a)) {
        Tensor& ga = t.grad_buf(a.id);
        const double* src = g.data.data() + static_cast<size_t>(bi) * (na + nb) * d;
        double* dst = ga.data.data() + static_cast<size_t>(bi) * na * d;
        for (int i = 0; i < na * d; ++i) dst[i] += src[i];
      }
      if (t.needs(b)) {
        Tensor& gb = t.grad_buf(b.id);
        const double* src = g.data.data() + static_cast<size_t>(bi) * (na + nb) * d + static_cast<size_t>(na) * d;
        double* dst = gb.data.data() + static_cast<size_t>(bi) * nb * d;
        for (int i = 0; i < nb * d; ++i) dst[i] += src[i];
      }
    }
  });
}

Var Tape::slice_axis1(Var a, int start, int len) {
  const Tensor& ta = val(a);
  assert(ta.rank() == 3);
  const int batch = ta.dim(0), n = ta.dim(1), d = ta.dim(2);
  assert(start >= 0 && start + len <= n);
  Tensor out({batch, len, d});
  for (int bi = 0; bi < batch; ++bi)
    std::copy(ta.data.begin() + (static_cast<size_t>(bi) * n + start) * d,
              ta.data.begin() + (static_cast<size_t>(bi) * n + start + len) * d,
              out.data.begin() + static_cast<size_t>(bi) * len * d);
  return make(std::move(out), needs(a), [a, batch, n, d, start, len](Tape& t, int id) {
    if (!t.needs(a)) return;
    const Tensor& g = t.node(id).grad;
    Tensor& ga = t.grad_buf(a.id);
    for (int bi = 0; bi < batch; ++bi) {
      const double* src = g.data.data() + static_cast<size_t>(bi) * len * d;
      double* dst = ga.data.data() + (static_cast<size_t>(bi) * n + start) * d;
      for (int i = 0; i < len * d; ++i) dst[i] += src[i];
    }
  });
}

Var Tape::slice_lastdim(Var a, int start, int len) {
  const Tensor& ta = val(a);
  const int d = ta.shape.back();
  assert(start >= 0 && start + len <= d);
  const int64_t rows = ta.size() / d;
  std::vector<int> out_shape = ta.shape;
  out_shape.back() = len;
  Tensor out(out_shape);
  for (int64_t r = 0; r < rows; ++r)
    std::copy(ta.data.begin() + r * d + start, ta.data.begin() + r * d + start + len,
              out.data.begin() + r * len);
  return make(std::move(out), needs(a), [a, d, start, len, rows](Tape& t, int id) {
    if (!t.needs(a)) return;
    const Tensor& g = t.node(id).grad;
    Tensor& ga = t.grad_buf(a.id);
    for (int64_t r = 0; r < rows; ++r)
      for (int i = 0; i < len; ++i) ga.data[static_cast<size_t>(r * d + start + i)] += g.data[static_cast<size_t>(r * len + i)];
  });
}

Var Tape::sum_all(Var a) {
  const Tensor& ta = val(a);
  double s = 0.0;
  for (double x : ta.data) s += x;
  return make(Tensor::scalar(s), needs(a), [a](Tape& t, int id) {
    if (!t.needs(a)) return;
    const double g = t.node(id).grad[0];
    Tensor& ga = t.grad_buf(a.id);
    for (auto& x : ga.data) x += g;
  });
}

Var Tape::mean_all(Var a) {
  const Tensor& ta = val(a);
  const double inv = 1.0 / static_cast<double>(ta.size());
  double s = 0.0;
  for (double x : ta.data) s += x;
  return make(Tensor::scalar(s * inv), needs(a), [a, inv](Tape& t, int id) {
    if (!t.needs(a)) return;
    const double g = t.node(id).grad[0] * inv;
    Tensor& ga = t.grad_buf(a.id);
    for (auto& x : ga.data) x += g;
  });
}

Var Tape::iou_penalty(Var geom, const Tensor& active, double sharpness) {
  const Tensor& tg = val(geom);
  assert(tg.rank() == 3 && tg.shape.back() == 8);
  const int batch = tg.dim(0), n = tg.dim(1);
  assert(active.dim(0) == batch && active.dim(1) == n);
  std::vector<uint8_t> act(static_cast<size_t>(batch) * n);
  for (size_t i = 0; i < act.size(); ++i) act[i] = active.data[i] > 0.5 ? 1 : 0;
  double total = 0.0;
  auto grads = std::make_shared<Tensor>(Tensor::zeros(tg.shape));
  for (int bi = 0; bi < batch; ++bi) {
    total += pairwise_iou_loss(tg.data.data() + static_cast<size_t>(bi) * n * 8, n,
                               act.data() + static_cast<size_t>(bi) * n, sharpness,
                               grads->data.data() + static_cast<size_t>(bi) * n * 8);
  }
  const double inv_b = 1.0 / batch;
  return make(Tensor::scalar(total * inv_b), needs(geom), [geom, grads, inv_b](Tape& t, int id) {
    if (!t.needs(geom)) return;
    const double g = t.node(id).grad[0] * inv_b;
    Tensor& gg = t.grad_buf(geom.id);
    for (size_t i = 0; i < gg.data.size(); ++i) gg.data[i] += g * grads->data[i];
  });
}

void Tape::backward(Var loss) {
  assert(loss.valid() && val(loss).size() == 1);
  grad_buf(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = node(id);
    if (!n.needs_grad || !n.backprop) continue;
    if (n.grad.data.empty()) continue;  // never received gradient
    n.backprop(*this, id);
  }
}

}  // namespace layoutdiff
