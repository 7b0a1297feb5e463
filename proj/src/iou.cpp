#include "layoutdiff/iou.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace layoutdiff {

namespace {

struct BoxDerived {
  // Clamped half-sizes and world-AABB extents plus partials.
  double sc[3];       // clamped (sx, sy, sz)
  double smask[3];    // 1 where s > 0
  double ext[3];      // world AABB half extents (x, y, z)
  double lo[3], hi[3];
  double vol;
  double absc, abss, sgnc, sgns;
};

void derive(const double* g, BoxDerived& d) {
  const double c = g[6], s = g[7];
  d.sgnc = c >= 0.0 ? 1.0 : -1.0;
  d.sgns = s >= 0.0 ? 1.0 : -1.0;
  d.absc = std::abs(c);
  d.abss = std::abs(s);
  for (int i = 0; i < 3; ++i) {
    d.sc[i] = std::max(g[3 + i], 0.0);
    d.smask[i] = g[3 + i] > 0.0 ? 1.0 : 0.0;
  }
  d.ext[0] = d.absc * d.sc[0] + d.abss * d.sc[2];
  d.ext[1] = d.sc[1];
  d.ext[2] = d.abss * d.sc[0] + d.absc * d.sc[2];
  for (int i = 0; i < 3; ++i) {
    d.lo[i] = g[i] - d.ext[i];
    d.hi[i] = g[i] + d.ext[i];
  }
  d.vol = 8.0 * d.sc[0] * d.sc[1] * d.sc[2];
}

// d ext / d (geom fields): per axis, returns gradient contribution into the
// 8-vector given upstream de.
void scatter_ext_grad(const BoxDerived& d, int axis, double de, double* gg) {
  if (axis == 0) {
    gg[3 + 0] += de * d.absc * d.smask[0];
    gg[3 + 2] += de * d.abss * d.smask[2];
    gg[6] += de * d.sgnc * d.sc[0];
    gg[7] += de * d.sgns * d.sc[2];
  } else if (axis == 1) {
    gg[3 + 1] += de * d.smask[1];
  } else {
    gg[3 + 0] += de * d.abss * d.smask[0];
    gg[3 + 2] += de * d.absc * d.smask[2];
    gg[6] += de * d.sgnc * d.sc[2];
    gg[7] += de * d.sgns * d.sc[0];
  }
}

void scatter_vol_grad(const BoxDerived& d, double dv, double* gg) {
  gg[3 + 0] += dv * 8.0 * d.sc[1] * d.sc[2] * d.smask[0];
  gg[3 + 1] += dv * 8.0 * d.sc[0] * d.sc[2] * d.smask[1];
  gg[3 + 2] += dv * 8.0 * d.sc[0] * d.sc[1] * d.smask[2];
}

double softplus_scaled(double x, double k, double* dsig) {
  const double kx = k * x;
  double w, sig;
  if (kx > 0.0) {
    const double e = std::exp(-kx);
    w = x + std::log1p(e) / k;
    sig = 1.0 / (1.0 + e);
  } else {
    const double e = std::exp(kx);
    w = std::log1p(e) / k;
    sig = e / (1.0 + e);
  }
  if (dsig) *dsig = sig;
  return w;
}

constexpr double kUnionFloor = 1e-9;

}  // namespace

double pairwise_iou_loss(const double* geom, int n, const uint8_t* active, double sharpness,
                         double* grad) {
  // Collect active boxes first so the pair count is exact.
  std::vector<int> act;
  act.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    if (!active || active[i]) act.push_back(i);
  const int m = static_cast<int>(act.size());
  if (m < 2) return 0.0;
  const double pair_count = 0.5 * m * (m - 1);

  std::vector<BoxDerived> der(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) derive(geom + static_cast<size_t>(act[i]) * 8, der[i]);

  double loss = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      const BoxDerived& a = der[i];
      const BoxDerived& b = der[j];
      double w[3], sig[3];
      bool lo_from_a[3], hi_from_a[3];
      for (int d = 0; d < 3; ++d) {
        lo_from_a[d] = a.lo[d] >= b.lo[d];
        hi_from_a[d] = a.hi[d] <= b.hi[d];
        const double lo = lo_from_a[d] ? a.lo[d] : b.lo[d];
        const double hi = hi_from_a[d] ? a.hi[d] : b.hi[d];
        w[d] = softplus_scaled(hi - lo, sharpness, &sig[d]);
      }
      const double inter = w[0] * w[1] * w[2];
      const double uni = a.vol + b.vol - inter;
      const bool clamped = uni < kUnionFloor;
      const double u = clamped ? kUnionFloor : uni;
      loss += inter / u / pair_count;

      if (!grad) continue;
      double* ga = grad + static_cast<size_t>(act[i]) * 8;
      double* gb = grad + static_cast<size_t>(act[j]) * 8;
      const double dl_dinter = (1.0 / u + (clamped ? 0.0 : inter / (u * u))) / pair_count;
      const double dl_dvol = (clamped ? 0.0 : -inter / (u * u)) / pair_count;
      for (int d = 0; d < 3; ++d) {
        const double dinter_dw = (d == 0 ? w[1] * w[2] : (d == 1 ? w[0] * w[2] : w[0] * w[1]));
        const double dw = dl_dinter * dinter_dw * sig[d];
        // hi = t + ext, lo = t - ext, span = hi - lo. The lo owner picks up
        // -dw on t and +dw on ext (two sign flips cancel).
        if (hi_from_a[d]) {
          ga[d] += dw;
          scatter_ext_grad(a, d, dw, ga);
        } else {
          gb[d] += dw;
          scatter_ext_grad(b, d, dw, gb);
        }
        if (lo_from_a[d]) {
          ga[d] -= dw;
          scatter_ext_grad(a, d, dw, ga);
        } else {
          gb[d] -= dw;
          scatter_ext_grad(b, d, dw, gb);
        }
      }
      scatter_vol_grad(a, dl_dvol, ga);
      scatter_vol_grad(b, dl_dvol, gb);
    }
  }
  return loss;
}

double hard_aabb_iou(const double* ba, const double* bb) {
  BoxDerived a, b;
  derive(ba, a);
  derive(bb, b);
  double inter = 1.0;
  for (int d = 0; d < 3; ++d) {
    const double lo = std::max(a.lo[d], b.lo[d]);
    const double hi = std::min(a.hi[d], b.hi[d]);
    if (hi <= lo) return 0.0;
    inter *= hi - lo;
  }
  const double uni = a.vol + b.vol - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace layoutdiff
