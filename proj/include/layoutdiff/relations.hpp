#pragma once

#include "layoutdiff/scene.hpp"

namespace layoutdiff {

struct Aabb {
  std::array<double, 3> lo{0, 0, 0};
  std::array<double, 3> hi{0, 0, 0};
};

// World-frame AABB of the yawed box.
Aabb record_aabb(const ObjectRecord& o);

bool aabb_overlap_volume(const Aabb& a, const Aabb& b, double* volume = nullptr);

// Geometric thresholds for the seven relation predicates. All tolerances in
// meters (predicates are evaluated in the metric frame).
struct RelationConfig {
  double axis_max_center_gap = 3.0;   // left/right/front/behind reach
  double close_surface_gap = 0.5;     // close_to
  double on_top_face_tol = 1e-2;      // on_top_of vertical face match
  double facing_max_range = 4.0;      // facing ray length
};

// relation ids follow relation_names(): 0 left_of, 1 right_of, 2 in_front_of,
// 3 behind, 4 close_to, 5 on_top_of, 6 facing. Each predicate is a
// deterministic boolean over two records; src is the first argument.
bool relation_holds(int relation, const ObjectRecord& src, const ObjectRecord& dst,
                    const RelationConfig& cfg);

// Exhaustive predicate sweep over ordered pairs of the primary objects;
// vertices (category, intra-class index) are index-aligned with the slot
// order. Empty edge sets are valid.
SceneGraph extract_graph(const std::vector<ObjectRecord>& primary, const CategoryTaxonomy& taxonomy,
                         const RelationConfig& cfg = {});

// Deterministic subset selection for emission: edges sorted by pair distance
// (then src, dst, relation) and truncated.
std::vector<GraphEdge> cap_edges(const std::vector<GraphEdge>& edges,
                                 const std::vector<ObjectRecord>& primary, int max_edges);

}  // namespace layoutdiff
