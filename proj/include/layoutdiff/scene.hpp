#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "layoutdiff/rng.hpp"

namespace layoutdiff {

// ============================================================================
// Taxonomy
// ============================================================================

enum class Tier { kPrimary, kSecondary };

// Ordered category list with a primary/secondary split and a reserved empty
// token for padded slots. The split drives the two-stage pipeline: primary
// classes are the large structural furniture, secondary classes the small
// supported items.
class CategoryTaxonomy {
 public:
  CategoryTaxonomy(std::vector<std::string> primary, std::vector<std::string> secondary);

  static CategoryTaxonomy desk_scale_default();

  int num_classes() const { return static_cast<int>(names_.size()); }  // includes empty
  int empty_index() const { return num_classes() - 1; }
  int num_primary() const { return num_primary_; }
  int num_secondary() const { return num_classes() - 1 - num_primary_; }

  const std::string& name(int idx) const { return names_.at(static_cast<size_t>(idx)); }
  int index_of(const std::string& name) const;  // throws on unknown
  bool is_primary(int idx) const { return idx >= 0 && idx < num_primary_; }
  bool is_secondary(int idx) const { return idx >= num_primary_ && idx < empty_index(); }
  Tier tier_of(int idx) const;

  // Stable hash over names and split; embedded in checkpoints so a model is
  // never loaded against a different taxonomy.
  uint64_t hash() const;

 private:
  std::vector<std::string> names_;  // primary..., secondary..., "<empty>"
  int num_primary_ = 0;
};

// ============================================================================
// Objects and layouts
// ============================================================================

// One object's attribute tuple. Geometry is kept in whatever frame the
// containing scene is in (meters until normalize_scene). The yaw angle is
// the stored field so corpus round-trips are bit-exact; slot matrices carry
// the (cos, sin) encoding.
struct ObjectRecord {
  int class_index = -1;
  std::array<double, 3> translation{0, 0, 0};
  std::array<double, 3> half_size{0, 0, 0};
  double theta = 0.0;

  double cos_theta() const { return std::cos(theta); }
  double sin_theta() const { return std::sin(theta); }
};

// (cos, sin) codec for orientation angles.
std::array<double, 2> encode_angle(double theta);
// Near-zero vectors are renormalized from (1, 0); *degenerate reports it.
double decode_angle(double cos_theta, double sin_theta, bool* degenerate = nullptr);

// Fixed-slot matrix of padded object records for one tier.
// Row layout: [class one-hot (C)] [t (3)] [s (3)] [cos, sin].
struct LayoutTensor {
  Tier tier = Tier::kPrimary;
  int capacity = 0;
  int occupancy = 0;
  int num_classes = 0;
  std::vector<double> slots;  // capacity x row_dim, row-major

  int row_dim() const { return num_classes + 8; }
  double* row(int i) { return slots.data() + static_cast<size_t>(i) * row_dim(); }
  const double* row(int i) const { return slots.data() + static_cast<size_t>(i) * row_dim(); }
};

LayoutTensor encode_layout(const std::vector<ObjectRecord>& objects, Tier tier, int capacity,
                           const CategoryTaxonomy& taxonomy);
// Returns the occupied rows as records (argmax class; orientation renormalized).
std::vector<ObjectRecord> decode_layout(const LayoutTensor& layout, const CategoryTaxonomy& taxonomy);
// Decode a raw slot matrix produced by the sampler: a row is an object iff
// its class argmax is not the empty token.
std::vector<ObjectRecord> decode_slots(const double* slots, int n, const CategoryTaxonomy& taxonomy);

// ============================================================================
// Scene graph
// ============================================================================

inline constexpr int kNumRelationTypes = 7;
const std::array<std::string, kNumRelationTypes>& relation_names();

struct GraphEdge {
  int src = 0;
  int dst = 0;
  int relation = 0;
};

// Vertices are index-aligned with the primary layout's slots; intra-class
// index k distinguishes same-category instances by slot order.
struct SceneGraph {
  std::vector<int> vertex_class;
  std::vector<int> vertex_instance;  // k_i
  std::vector<GraphEdge> edges;
};

// ============================================================================
// Scene
// ============================================================================

struct NormalizationFrame {
  std::array<double, 3> center{0, 0, 0};
  double scale = 1.0;
};

struct RoomMask {
  int h = 0;
  int w = 0;
  std::vector<uint8_t> pixels;  // row-major, 0/1
};

struct Scene {
  std::vector<ObjectRecord> primary;
  std::vector<ObjectRecord> secondary;
  SceneGraph graph;  // over primary objects
  RoomMask room_mask;
  std::string text;
  std::string source_tag;
  NormalizationFrame frame;
  bool normalized = false;
};

// Splits by taxonomy membership, preserving order. Throws on class indices
// outside the taxonomy.
void split_objects(const std::vector<ObjectRecord>& objects, const CategoryTaxonomy& taxonomy,
                   std::vector<ObjectRecord>* primary, std::vector<ObjectRecord>* secondary);

// Affine map into the unified frame: t -> (t - center)/scale, s -> s/scale.
// Orientation untouched. Throws if frame.scale <= 0.
Scene normalize_scene(const Scene& scene, const NormalizationFrame& frame);
Scene denormalize_scene(const Scene& scene);

void normalize_records(std::vector<ObjectRecord>& records, const NormalizationFrame& frame);
void denormalize_records(std::vector<ObjectRecord>& records, const NormalizationFrame& frame);

// Scene caps from the filtering rule: keep iff |primary| < 20 and |secondary| < 100.
inline constexpr int kMaxPrimaryObjects = 20;
inline constexpr int kMaxSecondaryObjects = 100;

struct SlotCaps {
  int primary = 12;
  int secondary = 32;
};

}  // namespace layoutdiff
