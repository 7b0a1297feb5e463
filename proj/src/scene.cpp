#include "layoutdiff/scene.hpp"

#include <algorithm>
#include <cmath>

namespace layoutdiff {

CategoryTaxonomy::CategoryTaxonomy(std::vector<std::string> primary,
                                   std::vector<std::string> secondary)
    : num_primary_(static_cast<int>(primary.size())) {
  names_ = std::move(primary);
  names_.insert(names_.end(), secondary.begin(), secondary.end());
  names_.emplace_back("<empty>");
  for (size_t i = 0; i < names_.size(); ++i)
    for (size_t j = i + 1; j < names_.size(); ++j)
      if (names_[i] == names_[j]) throw std::invalid_argument("duplicate category name: " + names_[i]);
}

CategoryTaxonomy CategoryTaxonomy::desk_scale_default() {
  return CategoryTaxonomy(
      {"bed", "wardrobe", "nightstand", "desk", "office_chair", "sofa", "coffee_table",
       "dining_table", "bookshelf", "dresser", "tv_stand", "cabinet"},
      {"lamp", "book", "pillow", "monitor", "plant", "vase", "laptop", "alarm_clock", "tray",
       "cup"});
}

int CategoryTaxonomy::index_of(const std::string& name) const {
  for (size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  throw std::invalid_argument("unknown category name: " + name);
}

Tier CategoryTaxonomy::tier_of(int idx) const {
  if (is_primary(idx)) return Tier::kPrimary;
  if (is_secondary(idx)) return Tier::kSecondary;
  throw std::invalid_argument("class index " + std::to_string(idx) + " has no tier");
}

uint64_t CategoryTaxonomy::hash() const {
  uint64_t h = fnv1a64("taxonomy-v1");
  for (const auto& n : names_) {
    h = fnv1a64(n, h);
    h = fnv1a64("|", h);
  }
  h = fnv1a64(&num_primary_, sizeof(num_primary_), h);
  return h;
}

std::array<double, 2> encode_angle(double theta) { return {std::cos(theta), std::sin(theta)}; }

double decode_angle(double cos_theta, double sin_theta, bool* degenerate) {
  const double norm = std::hypot(cos_theta, sin_theta);
  if (degenerate) *degenerate = norm < 1e-3;
  if (norm < 1e-3) return std::atan2(0.0, 1.0);
  return std::atan2(sin_theta / norm, cos_theta / norm);
}

LayoutTensor encode_layout(const std::vector<ObjectRecord>& objects, Tier tier, int capacity,
                           const CategoryTaxonomy& taxonomy) {
  if (static_cast<int>(objects.size()) > capacity)
    throw std::invalid_argument("layout overflow: " + std::to_string(objects.size()) +
                                " objects for capacity " + std::to_string(capacity));
  LayoutTensor out;
  out.tier = tier;
  out.capacity = capacity;
  out.occupancy = static_cast<int>(objects.size());
  out.num_classes = taxonomy.num_classes();
  out.slots.assign(static_cast<size_t>(capacity) * out.row_dim(), 0.0);
  const int c = taxonomy.num_classes();
  for (int i = 0; i < capacity; ++i) {
    double* row = out.row(i);
    if (i < out.occupancy) {
      const ObjectRecord& o = objects[static_cast<size_t>(i)];
      if (o.class_index < 0 || o.class_index >= c)
        throw std::invalid_argument("object class index out of range: " + std::to_string(o.class_index));
      row[o.class_index] = 1.0;
      for (int d = 0; d < 3; ++d) row[c + d] = o.translation[static_cast<size_t>(d)];
      for (int d = 0; d < 3; ++d) row[c + 3 + d] = o.half_size[static_cast<size_t>(d)];
      row[c + 6] = o.cos_theta();
      row[c + 7] = o.sin_theta();
    } else {
      // Empty slot: empty class token, zeroed geometry (orientation included).
      row[taxonomy.empty_index()] = 1.0;
    }
  }
  return out;
}

std::vector<ObjectRecord> decode_layout(const LayoutTensor& layout, const CategoryTaxonomy& taxonomy) {
  return decode_slots(layout.slots.data(), layout.capacity, taxonomy);
}

std::vector<ObjectRecord> decode_slots(const double* slots, int n, const CategoryTaxonomy& taxonomy) {
  const int c = taxonomy.num_classes();
  const int row_dim = c + 8;
  std::vector<ObjectRecord> out;
  for (int i = 0; i < n; ++i) {
    const double* row = slots + static_cast<size_t>(i) * row_dim;
    int best = taxonomy.empty_index();
    double best_v = row[taxonomy.empty_index()];  // ties favor the empty token
    for (int k = 0; k < c; ++k)
      if (row[k] > best_v) {
        best_v = row[k];
        best = k;
      }
    if (best == taxonomy.empty_index()) continue;
    ObjectRecord o;
    o.class_index = best;
    for (int d = 0; d < 3; ++d) o.translation[static_cast<size_t>(d)] = row[c + d];
    for (int d = 0; d < 3; ++d) o.half_size[static_cast<size_t>(d)] = std::abs(row[c + 3 + d]);
    o.theta = decode_angle(row[c + 6], row[c + 7]);
    out.push_back(o);
  }
  return out;
}

const std::array<std::string, kNumRelationTypes>& relation_names() {
  static const std::array<std::string, kNumRelationTypes> kNames = {
      "left_of", "right_of", "in_front_of", "behind", "close_to", "on_top_of", "facing"};
  return kNames;
}

void split_objects(const std::vector<ObjectRecord>& objects, const CategoryTaxonomy& taxonomy,
                   std::vector<ObjectRecord>* primary, std::vector<ObjectRecord>* secondary) {
  for (const auto& o : objects) {
    if (o.class_index < 0 || o.class_index >= taxonomy.num_classes() ||
        o.class_index == taxonomy.empty_index())
      throw std::invalid_argument("split: class index " + std::to_string(o.class_index) +
                                  " is not a real category");
    if (taxonomy.is_primary(o.class_index))
      primary->push_back(o);
    else
      secondary->push_back(o);
  }
}

namespace {

void apply_frame(std::vector<ObjectRecord>& records, const NormalizationFrame& frame, bool forward) {
  for (auto& o : records) {
    for (int d = 0; d < 3; ++d) {
      if (forward) {
        o.translation[static_cast<size_t>(d)] =
            (o.translation[static_cast<size_t>(d)] - frame.center[static_cast<size_t>(d)]) / frame.scale;
        o.half_size[static_cast<size_t>(d)] /= frame.scale;
      } else {
        o.translation[static_cast<size_t>(d)] =
            o.translation[static_cast<size_t>(d)] * frame.scale + frame.center[static_cast<size_t>(d)];
        o.half_size[static_cast<size_t>(d)] *= frame.scale;
      }
    }
  }
}

}  // namespace

void normalize_records(std::vector<ObjectRecord>& records, const NormalizationFrame& frame) {
  if (frame.scale <= 0.0) throw std::invalid_argument("normalization frame scale must be > 0");
  apply_frame(records, frame, true);
}

void denormalize_records(std::vector<ObjectRecord>& records, const NormalizationFrame& frame) {
  if (frame.scale <= 0.0) throw std::invalid_argument("normalization frame scale must be > 0");
  apply_frame(records, frame, false);
}

Scene normalize_scene(const Scene& scene, const NormalizationFrame& frame) {
  if (frame.scale <= 0.0) throw std::invalid_argument("normalization frame scale must be > 0");
  Scene out = scene;
  out.frame = frame;
  normalize_records(out.primary, frame);
  normalize_records(out.secondary, frame);
  out.normalized = true;
  return out;
}

Scene denormalize_scene(const Scene& scene) {
  Scene out = scene;
  denormalize_records(out.primary, scene.frame);
  denormalize_records(out.secondary, scene.frame);
  out.normalized = false;
  return out;
}

}  // namespace layoutdiff
