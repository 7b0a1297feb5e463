#include "layoutdiff/relations.hpp"

#include <algorithm>
#include <cmath>

namespace layoutdiff {

Aabb record_aabb(const ObjectRecord& o) {
  const double c = std::abs(o.cos_theta());
  const double s = std::abs(o.sin_theta());
  const double ex = c * o.half_size[0] + s * o.half_size[2];
  const double ez = s * o.half_size[0] + c * o.half_size[2];
  Aabb box;
  box.lo = {o.translation[0] - ex, o.translation[1] - o.half_size[1], o.translation[2] - ez};
  box.hi = {o.translation[0] + ex, o.translation[1] + o.half_size[1], o.translation[2] + ez};
  return box;
}

bool aabb_overlap_volume(const Aabb& a, const Aabb& b, double* volume) {
  double v = 1.0;
  for (int d = 0; d < 3; ++d) {
    const double lo = std::max(a.lo[static_cast<size_t>(d)], b.lo[static_cast<size_t>(d)]);
    const double hi = std::min(a.hi[static_cast<size_t>(d)], b.hi[static_cast<size_t>(d)]);
    if (hi <= lo) {
      if (volume) *volume = 0.0;
      return false;
    }
    v *= hi - lo;
  }
  if (volume) *volume = v;
  return true;
}

namespace {

// Signed center offset test along one horizontal axis: src strictly clear of
// dst on the negative side, within reach.
bool axis_before(double src_c, double src_e, double dst_c, double dst_e, double max_gap) {
  const double off = dst_c - src_c;
  return off > src_e + dst_e && off <= max_gap;
}

double surface_gap(const Aabb& a, const Aabb& b) {
  double sq = 0.0;
  for (int d = 0; d < 3; ++d) {
    const double g = std::max(
        {0.0, a.lo[static_cast<size_t>(d)] - b.hi[static_cast<size_t>(d)],
         b.lo[static_cast<size_t>(d)] - a.hi[static_cast<size_t>(d)]});
    sq += g * g;
  }
  return std::sqrt(sq);
}

bool ray_hits_footprint(double ox, double oz, double dx, double dz, const Aabb& box,
                        double max_range) {
  // 2D slab test over (x, z); hit if [tmin, tmax] meets [0, max_range].
  double tmin = 0.0, tmax = max_range;
  const double o[2] = {ox, oz};
  const double dir[2] = {dx, dz};
  const double lo[2] = {box.lo[0], box.lo[2]};
  const double hi[2] = {box.hi[0], box.hi[2]};
  for (int d = 0; d < 2; ++d) {
    if (std::abs(dir[d]) < 1e-12) {
      if (o[d] < lo[d] || o[d] > hi[d]) return false;
      continue;
    }
    double t0 = (lo[d] - o[d]) / dir[d];
    double t1 = (hi[d] - o[d]) / dir[d];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return false;
  }
  return true;
}

}  // namespace

bool relation_holds(int relation, const ObjectRecord& src, const ObjectRecord& dst,
                    const RelationConfig& cfg) {
  const Aabb a = record_aabb(src);
  const Aabb b = record_aabb(dst);
  const double aex = 0.5 * (a.hi[0] - a.lo[0]), aez = 0.5 * (a.hi[2] - a.lo[2]);
  const double bex = 0.5 * (b.hi[0] - b.lo[0]), bez = 0.5 * (b.hi[2] - b.lo[2]);
  switch (relation) {
    case 0:  // src left_of dst: src on the -x side
      return axis_before(src.translation[0], aex, dst.translation[0], bex, cfg.axis_max_center_gap);
    case 1:  // right_of
      return axis_before(dst.translation[0], bex, src.translation[0], aex, cfg.axis_max_center_gap);
    case 2:  // in_front_of: src at larger z
      return axis_before(dst.translation[2], bez, src.translation[2], aez, cfg.axis_max_center_gap);
    case 3:  // behind
      return axis_before(src.translation[2], aez, dst.translation[2], bez, cfg.axis_max_center_gap);
    case 4:
      return surface_gap(a, b) < cfg.close_surface_gap;
    case 5: {  // src on_top_of dst
      const double bottom = a.lo[1];
      const double top = b.hi[1];
      if (std::abs(bottom - top) > cfg.on_top_face_tol) return false;
      return src.translation[0] >= b.lo[0] && src.translation[0] <= b.hi[0] &&
             src.translation[2] >= b.lo[2] && src.translation[2] <= b.hi[2];
    }
    case 6: {  // facing: forward ray (sin, cos) in (x, z)
      return ray_hits_footprint(src.translation[0], src.translation[2], src.sin_theta(),
                                src.cos_theta(), b, cfg.facing_max_range);
    }
    default:
      throw std::invalid_argument("relation id out of range: " + std::to_string(relation));
  }
}

SceneGraph extract_graph(const std::vector<ObjectRecord>& primary, const CategoryTaxonomy& taxonomy,
                         const RelationConfig& cfg) {
  SceneGraph g;
  std::vector<int> per_class(static_cast<size_t>(taxonomy.num_classes()), 0);
  for (const auto& o : primary) {
    g.vertex_class.push_back(o.class_index);
    g.vertex_instance.push_back(per_class[static_cast<size_t>(o.class_index)]++);
  }
  const int n = static_cast<int>(primary.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      for (int r = 0; r < kNumRelationTypes; ++r)
        if (relation_holds(r, primary[static_cast<size_t>(i)], primary[static_cast<size_t>(j)], cfg))
          g.edges.push_back({i, j, r});
    }
  return g;
}

std::vector<GraphEdge> cap_edges(const std::vector<GraphEdge>& edges,
                                 const std::vector<ObjectRecord>& primary, int max_edges) {
  std::vector<GraphEdge> sorted = edges;
  auto dist = [&](const GraphEdge& e) {
    const auto& a = primary[static_cast<size_t>(e.src)].translation;
    const auto& b = primary[static_cast<size_t>(e.dst)].translation;
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
  };
  std::stable_sort(sorted.begin(), sorted.end(), [&](const GraphEdge& x, const GraphEdge& y) {
    const double dx = dist(x), dy = dist(y);
    if (dx != dy) return dx < dy;
    if (x.src != y.src) return x.src < y.src;
    if (x.dst != y.dst) return x.dst < y.dst;
    return x.relation < y.relation;
  });
  if (static_cast<int>(sorted.size()) > max_edges) sorted.resize(static_cast<size_t>(max_edges));
  return sorted;
}

}  // namespace layoutdiff
