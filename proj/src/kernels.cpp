#include "layoutdiff/kernels.hpp"

#include <atomic>
#include <cstring>

namespace layoutdiff::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel_enabled(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

// ============================================================================
// Matmul
// ============================================================================
// Row i of C depends only on row/col i of the inputs, so the OpenMP variants
// split over i and stay bit-identical to the serial ones.

#define LD_MM_NN_ROW(i)                                    \
  {                                                        \
    double* crow = c + static_cast<size_t>(i) * n;         \
    if (!accumulate)                                       \
      for (int j = 0; j < n; ++j) crow[j] = 0.0;           \
    const double* arow = a + static_cast<size_t>(i) * k;   \
    for (int p = 0; p < k; ++p) {                          \
      const double av = arow[p];                           \
      const double* brow = b + static_cast<size_t>(p) * n; \
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j]; \
    }                                                      \
  }

#define LD_MM_NT_ROW(i)                                     \
  {                                                         \
    double* crow = c + static_cast<size_t>(i) * n;          \
    const double* arow = a + static_cast<size_t>(i) * k;    \
    for (int j = 0; j < n; ++j) {                           \
      const double* brow = b + static_cast<size_t>(j) * k;  \
      double s = 0.0;                                       \
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];   \
      crow[j] = accumulate ? crow[j] + s : s;               \
    }                                                       \
  }

#define LD_MM_TN_ROW(i)                                       \
  {                                                           \
    double* crow = c + static_cast<size_t>(i) * n;            \
    if (!accumulate)                                          \
      for (int j = 0; j < n; ++j) crow[j] = 0.0;              \
    for (int p = 0; p < k; ++p) {                             \
      const double av = a[static_cast<size_t>(p) * m + i];    \
      const double* brow = b + static_cast<size_t>(p) * n;    \
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];    \
    }                                                         \
  }

namespace serial {

void mm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) LD_MM_NN_ROW(i)
}

void mm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) LD_MM_NT_ROW(i)
}

void mm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) LD_MM_TN_ROW(i)
}

}  // namespace serial

namespace omp {

void mm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) LD_MM_NN_ROW(i)
}

void mm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) LD_MM_NT_ROW(i)
}

void mm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) LD_MM_TN_ROW(i)
}

}  // namespace omp

// ============================================================================
// Conv2d (NCHW, square kernel)
// ============================================================================

#define LD_CONV_FWD_BODY(idx)                                                              \
  {                                                                                        \
    const int b_idx = idx / (cout * ho * wo);                                              \
    const int rem = idx % (cout * ho * wo);                                                \
    const int o = rem / (ho * wo);                                                         \
    const int oy = (rem % (ho * wo)) / wo;                                                 \
    const int ox = rem % wo;                                                               \
    double s = bias ? bias[o] : 0.0;                                                       \
    const double* xb = x + static_cast<size_t>(b_idx) * cin * h * wdt;                     \
    const double* wp = w + static_cast<size_t>(o) * cin * ksz * ksz;                       \
    for (int c = 0; c < cin; ++c) {                                                        \
      const double* xc = xb + static_cast<size_t>(c) * h * wdt;                            \
      const double* wc = wp + static_cast<size_t>(c) * ksz * ksz;                          \
      for (int ky = 0; ky < ksz; ++ky) {                                                   \
        const int iy = oy * stride + ky - pad;                                             \
        if (iy < 0 || iy >= h) continue;                                                   \
        for (int kx = 0; kx < ksz; ++kx) {                                                 \
          const int ix = ox * stride + kx - pad;                                           \
          if (ix < 0 || ix >= wdt) continue;                                               \
          s += xc[static_cast<size_t>(iy) * wdt + ix] * wc[ky * ksz + kx];                 \
        }                                                                                  \
      }                                                                                    \
    }                                                                                      \
    y[idx] = s;                                                                            \
  }

#define LD_CONV_BWD_INPUT_BODY(idx)                                                        \
  {                                                                                        \
    const int b_idx = idx / (cin * h * wdt);                                               \
    const int rem = idx % (cin * h * wdt);                                                 \
    const int c = rem / (h * wdt);                                                         \
    const int iy = (rem % (h * wdt)) / wdt;                                                \
    const int ix = rem % wdt;                                                              \
    double s = 0.0;                                                                        \
    for (int o = 0; o < cout; ++o) {                                                       \
      const double* gb = gy + (static_cast<size_t>(b_idx) * cout + o) * ho * wo;           \
      const double* wc = w + (static_cast<size_t>(o) * cin + c) * ksz * ksz;               \
      for (int ky = 0; ky < ksz; ++ky) {                                                   \
        const int ny = iy + pad - ky;                                                      \
        if (ny < 0 || ny % stride != 0) continue;                                          \
        const int oy = ny / stride;                                                        \
        if (oy >= ho) continue;                                                            \
        for (int kx = 0; kx < ksz; ++kx) {                                                 \
          const int nx = ix + pad - kx;                                                    \
          if (nx < 0 || nx % stride != 0) continue;                                        \
          const int ox = nx / stride;                                                      \
          if (ox >= wo) continue;                                                          \
          s += gb[static_cast<size_t>(oy) * wo + ox] * wc[ky * ksz + kx];                  \
        }                                                                                  \
      }                                                                                    \
    }                                                                                      \
    gx[idx] = s;                                                                           \
  }

#define LD_CONV_BWD_WEIGHT_BODY(idx)                                                       \
  {                                                                                        \
    const int o = idx / (cin * ksz * ksz);                                                 \
    const int rem = idx % (cin * ksz * ksz);                                               \
    const int c = rem / (ksz * ksz);                                                       \
    const int ky = (rem % (ksz * ksz)) / ksz;                                              \
    const int kx = rem % ksz;                                                              \
    double s = 0.0;                                                                        \
    for (int b_idx = 0; b_idx < batch; ++b_idx) {                                          \
      const double* gb = gy + (static_cast<size_t>(b_idx) * cout + o) * ho * wo;           \
      const double* xc = x + (static_cast<size_t>(b_idx) * cin + c) * h * wdt;             \
      for (int oy = 0; oy < ho; ++oy) {                                                    \
        const int iy = oy * stride + ky - pad;                                             \
        if (iy < 0 || iy >= h) continue;                                                   \
        for (int ox = 0; ox < wo; ++ox) {                                                  \
          const int ix = ox * stride + kx - pad;                                           \
          if (ix < 0 || ix >= wdt) continue;                                               \
          s += gb[static_cast<size_t>(oy) * wo + ox] * xc[static_cast<size_t>(iy) * wdt + ix]; \
        }                                                                                  \
      }                                                                                    \
    }                                                                                      \
    gw[idx] += s;                                                                          \
  }

namespace serial {

void conv2d_fwd(const double* x, const double* w, const double* bias, double* y, int batch,
                int cin, int h, int wdt, int cout, int ksz, int stride, int pad) {
  const int ho = conv_out_dim(h, ksz, stride, pad);
  const int wo = conv_out_dim(wdt, ksz, stride, pad);
  const int total = batch * cout * ho * wo;
  for (int idx = 0; idx < total; ++idx) LD_CONV_FWD_BODY(idx)
}

void conv2d_bwd_input(const double* gy, const double* w, double* gx, int batch, int cin, int h,
                      int wdt, int cout, int ksz, int stride, int pad) {
  const int ho = conv_out_dim(h, ksz, stride, pad);
  const int wo = conv_out_dim(wdt, ksz, stride, pad);
  const int total = batch * cin * h * wdt;
  for (int idx = 0; idx < total; ++idx) LD_CONV_BWD_INPUT_BODY(idx)
}

void conv2d_bwd_weight(const double* gy, const double* x, double* gw, double* gbias, int batch,
                       int cin, int h, int wdt, int cout, int ksz, int stride, int pad) {
  const int ho = conv_out_dim(h, ksz, stride, pad);
  const int wo = conv_out_dim(wdt, ksz, stride, pad);
  const int total = cout * cin * ksz * ksz;
  for (int idx = 0; idx < total; ++idx) LD_CONV_BWD_WEIGHT_BODY(idx)
  if (gbias) {
    for (int o = 0; o < cout; ++o) {
      double s = 0.0;
      for (int b_idx = 0; b_idx < batch; ++b_idx) {
        const double* gb = gy + (static_cast<size_t>(b_idx) * cout + o) * ho * wo;
        for (int i = 0; i < ho * wo; ++i) s += gb[i];
      }
      gbias[o] += s;
    }
  }
}

}  // namespace serial

namespace omp {

void conv2d_fwd(const double* x, const double* w, const double* bias, double* y, int batch,
                int cin, int h, int wdt, int cout, int ksz, int stride, int pad) {
  const int ho = conv_out_dim(h, ksz, stride, pad);
  const int wo = conv_out_dim(wdt, ksz, stride, pad);
  const int total = batch * cout * ho * wo;
#pragma omp parallel for schedule(static)
  for (int idx = 0; idx < total; ++idx) LD_CONV_FWD_BODY(idx)
}

void conv2d_bwd_input(const double* gy, const double* w, double* gx, int batch, int cin, int h,
                      int wdt, int cout, int ksz, int stride, int pad) {
  const int ho = conv_out_dim(h, ksz, stride, pad);
  const int wo = conv_out_dim(wdt, ksz, stride, pad);
  const int total = batch * cin * h * wdt;
#pragma omp parallel for schedule(static)
  for (int idx = 0; idx < total; ++idx) LD_CONV_BWD_INPUT_BODY(idx)
}

void conv2d_bwd_weight(const double* gy, const double* x, double* gw, double* gbias, int batch,
                       int cin, int h, int wdt, int cout, int ksz, int stride, int pad) {
  const int ho = conv_out_dim(h, ksz, stride, pad);
  const int wo = conv_out_dim(wdt, ksz, stride, pad);
  const int total = cout * cin * ksz * ksz;
#pragma omp parallel for schedule(static)
  for (int idx = 0; idx < total; ++idx) LD_CONV_BWD_WEIGHT_BODY(idx)
  if (gbias) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < cout; ++o) {
      double s = 0.0;
      for (int b_idx = 0; b_idx < batch; ++b_idx) {
        const double* gb = gy + (static_cast<size_t>(b_idx) * cout + o) * ho * wo;
        for (int i = 0; i < ho * wo; ++i) s += gb[i];
      }
      gbias[o] += s;
    }
  }
}

}  // namespace omp

// ============================================================================
// Dispatch
// ============================================================================

void mm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  parallel_enabled() ? omp::mm_nn(a, b, c, m, k, n, accumulate)
                     : serial::mm_nn(a, b, c, m, k, n, accumulate);
}
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  parallel_enabled() ? omp::mm_nt(a, b, c, m, k, n, accumulate)
                     : serial::mm_nt(a, b, c, m, k, n, accumulate);
}
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  parallel_enabled() ? omp::mm_tn(a, b, c, m, k, n, accumulate)
                     : serial::mm_tn(a, b, c, m, k, n, accumulate);
}
void conv2d_fwd(const double* x, const double* w, const double* bias, double* y, int batch,
                int cin, int h, int wdt, int cout, int ksz, int stride, int pad) {
  parallel_enabled() ? omp::conv2d_fwd(x, w, bias, y, batch, cin, h, wdt, cout, ksz, stride, pad)
                     : serial::conv2d_fwd(x, w, bias, y, batch, cin, h, wdt, cout, ksz, stride, pad);
}
void conv2d_bwd_input(const double* gy, const double* w, double* gx, int batch, int cin, int h,
                      int wdt, int cout, int ksz, int stride, int pad) {
  parallel_enabled()
      ? omp::conv2d_bwd_input(gy, w, gx, batch, cin, h, wdt, cout, ksz, stride, pad)
      : serial::conv2d_bwd_input(gy, w, gx, batch, cin, h, wdt, cout, ksz, stride, pad);
}
void conv2d_bwd_weight(const double* gy, const double* x, double* gw, double* gbias, int batch,
                       int cin, int h, int wdt, int cout, int ksz, int stride, int pad) {
  parallel_enabled()
      ? omp::conv2d_bwd_weight(gy, x, gw, gbias, batch, cin, h, wdt, cout, ksz, stride, pad)
      : serial::conv2d_bwd_weight(gy, x, gw, gbias, batch, cin, h, wdt, cout, ksz, stride, pad);
}

}  // namespace layoutdiff::kernels
