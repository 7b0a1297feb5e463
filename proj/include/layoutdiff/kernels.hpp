#pragma once

#include <cstdint>

namespace layoutdiff::kernels {

// Every kernel ships in two variants: a plain serial reference and an
// OpenMP version. Both compute each output element independently, so
// results are bitwise identical regardless of thread count; the tests
// assert exact parity. The dispatcher picks the variant at runtime.
bool parallel_enabled();
void set_parallel_enabled(bool on);

namespace serial {

// C[m,n] (+)= A[m,k] * B[k,n]
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
// C[m,n] (+)= A[m,k] * B[n,k]^T
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
// C[m,n] (+)= A[k,m]^T * B[k,n]
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);

void conv2d_fwd(const double* x, const double* w, const double* bias, double* y, int batch,
                int cin, int h, int wdt, int cout, int ksz, int stride, int pad);
void conv2d_bwd_input(const double* gy, const double* w, double* gx, int batch, int cin, int h,
                      int wdt, int cout, int ksz, int stride, int pad);
void conv2d_bwd_weight(const double* gy, const double* x, double* gw, double* gbias, int batch,
                       int cin, int h, int wdt, int cout, int ksz, int stride, int pad);

}  // namespace serial

namespace omp {

void mm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);

void conv2d_fwd(const double* x, const double* w, const double* bias, double* y, int batch,
                int cin, int h, int wdt, int cout, int ksz, int stride, int pad);
void conv2d_bwd_input(const double* gy, const double* w, double* gx, int batch, int cin, int h,
                      int wdt, int cout, int ksz, int stride, int pad);
void conv2d_bwd_weight(const double* gy, const double* x, double* gw, double* gbias, int batch,
                       int cin, int h, int wdt, int cout, int ksz, int stride, int pad);

}  // namespace omp

// Dispatchers.
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void conv2d_fwd(const double* x, const double* w, const double* bias, double* y, int batch,
                int cin, int h, int wdt, int cout, int ksz, int stride, int pad);
void conv2d_bwd_input(const double* gy, const double* w, double* gx, int batch, int cin, int h,
                      int wdt, int cout, int ksz, int stride, int pad);
void conv2d_bwd_weight(const double* gy, const double* x, double* gw, double* gbias, int batch,
                       int cin, int h, int wdt, int cout, int ksz, int stride, int pad);

inline int conv_out_dim(int in, int ksz, int stride, int pad) {
  return (in + 2 * pad - ksz) / stride + 1;
}

}  // namespace layoutdiff::kernels
