#pragma once

#include "layoutdiff/relations.hpp"
#include "layoutdiff/scene.hpp"

namespace layoutdiff {

// Axis-aligned rectangular or L-shaped footprint, centred on the origin.
// The L cut is taken out of the (+x, +z) corner.
struct RoomSpec {
  enum class Shape { kRect, kLShape };
  Shape shape = Shape::kRect;
  std::string room_type = "bedroom";  // bedroom | living | office
  double width = 4.0;
  double depth = 4.0;
  double cut_w = 0.0;
  double cut_d = 0.0;
  int target_primary = 6;
  int target_secondary = 16;
};

struct GeneratorConfig {
  SlotCaps caps;
  int max_graph_edges = 64;
  double wall_margin = 0.15;  // keeps footprints clear of the rasterized wall band
  int mask_resolution = 64;
  RelationConfig relations;
};

struct GeneratorStats {
  int primary_shortfall = 0;    // objects dropped after exhausting retries
  int secondary_shortfall = 0;
};

const std::vector<std::string>& room_type_names();

RoomSpec sample_room_spec(const std::string& room_type, Rng& rng);

// Deterministic function of (spec, seed): primary objects are placed inside
// the footprint without pairwise AABB overlap, every secondary object rests
// on the floor or on a primary top face, the emitted graph is the (capped)
// predicate extraction, and the text is a fixed template over the room type
// and object counts.
Scene generate_scene(const RoomSpec& spec, uint64_t seed, const CategoryTaxonomy& taxonomy,
                     const GeneratorConfig& config, GeneratorStats* stats = nullptr);

std::vector<Scene> generate_corpus(int count, uint64_t seed,
                                   const std::vector<std::string>& room_types,
                                   const CategoryTaxonomy& taxonomy, const GeneratorConfig& config,
                                   GeneratorStats* stats = nullptr);

// Closed token set for the text templates; shipped as the prompt vocabulary.
std::vector<std::string> template_vocabulary(const CategoryTaxonomy& taxonomy);

std::string scene_text(const std::string& room_type, const std::vector<ObjectRecord>& primary,
                       int secondary_count, const CategoryTaxonomy& taxonomy);

// Room polygon helpers (also used by the mask rasterizer and eval).
std::vector<std::array<double, 2>> footprint_polygon(const RoomSpec& spec);
bool point_in_polygon(double x, double z, const std::vector<std::array<double, 2>>& poly);
RoomMask rasterize_footprint(const RoomSpec& spec, int resolution, const NormalizationFrame& frame);
NormalizationFrame footprint_frame(const RoomSpec& spec);

}  // namespace layoutdiff
