#include "layoutdiff/scene_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace layoutdiff {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json object_to_json(const ObjectRecord& o, const CategoryTaxonomy& taxonomy) {
  ordered_json j;
  j["class"] = taxonomy.name(o.class_index);
  j["tier"] = taxonomy.tier_of(o.class_index) == Tier::kPrimary ? "primary" : "secondary";
  j["t"] = {o.translation[0], o.translation[1], o.translation[2]};
  j["s"] = {o.half_size[0], o.half_size[1], o.half_size[2]};
  j["theta"] = o.theta;
  return j;
}

ObjectRecord object_from_json(const ordered_json& j, const CategoryTaxonomy& taxonomy) {
  ObjectRecord o;
  o.class_index = taxonomy.index_of(j.at("class").get<std::string>());
  const std::string tier = j.at("tier").get<std::string>();
  const Tier expect = taxonomy.tier_of(o.class_index);
  if ((tier == "primary") != (expect == Tier::kPrimary))
    throw std::invalid_argument("tier label disagrees with taxonomy for class " +
                                j.at("class").get<std::string>());
  for (int d = 0; d < 3; ++d) {
    o.translation[static_cast<size_t>(d)] = j.at("t").at(static_cast<size_t>(d)).get<double>();
    o.half_size[static_cast<size_t>(d)] = j.at("s").at(static_cast<size_t>(d)).get<double>();
  }
  o.theta = j.at("theta").get<double>();
  return o;
}

void validate_scene(const Scene& s) {
  for (const auto& e : s.graph.edges) {
    const int n = static_cast<int>(s.primary.size());
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n)
      throw std::invalid_argument("graph edge endpoint out of range");
    if (e.src == e.dst) throw std::invalid_argument("graph self-edge");
    if (e.relation < 0 || e.relation >= kNumRelationTypes)
      throw std::invalid_argument("relation type out of range");
  }
  if (s.frame.scale <= 0.0) throw std::invalid_argument("frame scale must be positive");
}

}  // namespace

std::string scene_to_json_line(const Scene& scene, const CategoryTaxonomy& taxonomy) {
  ordered_json j;
  auto& objs = j["objects"] = ordered_json::array();
  for (const auto& o : scene.primary) objs.push_back(object_to_json(o, taxonomy));
  for (const auto& o : scene.secondary) objs.push_back(object_to_json(o, taxonomy));
  auto& edges = j["graph"]["edges"] = ordered_json::array();
  for (const auto& e : scene.graph.edges) edges.push_back({e.src, e.dst, e.relation});
  j["room_mask"]["h"] = scene.room_mask.h;
  j["room_mask"]["w"] = scene.room_mask.w;
  j["room_mask"]["rle"] = rle_encode(scene.room_mask.pixels);
  j["text"] = scene.text;
  j["source"] = scene.source_tag;
  j["frame"]["center"] = {scene.frame.center[0], scene.frame.center[1], scene.frame.center[2]};
  j["frame"]["scale"] = scene.frame.scale;
  return j.dump();
}

Scene scene_from_json_line(const std::string& line, const CategoryTaxonomy& taxonomy) {
  const ordered_json j = ordered_json::parse(line);
  Scene s;
  std::vector<ObjectRecord> all;
  for (const auto& jo : j.at("objects")) all.push_back(object_from_json(jo, taxonomy));
  split_objects(all, taxonomy, &s.primary, &s.secondary);
  for (const auto& je : j.at("graph").at("edges")) {
    GraphEdge e;
    e.src = je.at(0).get<int>();
    e.dst = je.at(1).get<int>();
    e.relation = je.at(2).get<int>();
    s.graph.edges.push_back(e);
  }
  // Vertices mirror the primary slot order.
  s.graph.vertex_class.reserve(s.primary.size());
  std::vector<int> per_class_count(static_cast<size_t>(taxonomy.num_classes()), 0);
  for (const auto& o : s.primary) {
    s.graph.vertex_class.push_back(o.class_index);
    s.graph.vertex_instance.push_back(per_class_count[static_cast<size_t>(o.class_index)]++);
  }
  s.room_mask.h = j.at("room_mask").at("h").get<int>();
  s.room_mask.w = j.at("room_mask").at("w").get<int>();
  s.room_mask.pixels =
      rle_decode(j.at("room_mask").at("rle").get<std::vector<int>>(), s.room_mask.h * s.room_mask.w);
  s.text = j.at("text").get<std::string>();
  s.source_tag = j.at("source").get<std::string>();
  for (int d = 0; d < 3; ++d)
    s.frame.center[static_cast<size_t>(d)] = j.at("frame").at("center").at(static_cast<size_t>(d)).get<double>();
  s.frame.scale = j.at("frame").at("scale").get<double>();
  validate_scene(s);
  return s;
}

void save_corpus(const std::string& path, const std::vector<Scene>& scenes,
                 const CategoryTaxonomy& taxonomy) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (const auto& s : scenes) out << scene_to_json_line(s, taxonomy) << "\n";
}

std::vector<Scene> read_corpus(const std::string& path, const CategoryTaxonomy& taxonomy,
                               CorpusLoadStats* stats) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus: " + path);
  std::vector<Scene> out;
  std::string line;
  int line_no = 0;
  CorpusLoadStats local;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Scene s;
    try {
      s = scene_from_json_line(line, taxonomy);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (static_cast<int>(s.primary.size()) >= kMaxPrimaryObjects ||
        static_cast<int>(s.secondary.size()) >= kMaxSecondaryObjects) {
      ++local.dropped_over_cap;
      continue;
    }
    ++local.loaded;
    out.push_back(std::move(s));
  }
  if (stats) *stats = local;
  return out;
}

void split_corpus(std::vector<Scene> scenes, double train_ratio, uint64_t seed,
                  std::vector<Scene>* train, std::vector<Scene>* val) {
  std::vector<size_t> order(scenes.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng::substream(seed, "corpus-split");
  rng.shuffle(order);
  const size_t n_train = static_cast<size_t>(train_ratio * static_cast<double>(scenes.size()) + 0.5);
  for (size_t i = 0; i < order.size(); ++i) {
    auto& dst = i < n_train ? *train : *val;
    dst.push_back(std::move(scenes[order[i]]));
  }
}

void load_corpus(const std::string& path, const CategoryTaxonomy& taxonomy, double train_ratio,
                 uint64_t seed, std::vector<Scene>* train, std::vector<Scene>* val,
                 CorpusLoadStats* stats) {
  split_corpus(read_corpus(path, taxonomy, stats), train_ratio, seed, train, val);
}

std::vector<int> rle_encode(const std::vector<uint8_t>& pixels) {
  std::vector<int> runs;
  uint8_t current = 0;
  int count = 0;
  for (uint8_t p : pixels) {
    const uint8_t v = p ? 1 : 0;
    if (v == current) {
      ++count;
    } else {
      runs.push_back(count);
      current = v;
      count = 1;
    }
  }
  runs.push_back(count);
  return runs;
}

std::vector<uint8_t> rle_decode(const std::vector<int>& runs, int expected_size) {
  std::vector<uint8_t> out;
  out.reserve(static_cast<size_t>(expected_size));
  uint8_t current = 0;
  for (int r : runs) {
    if (r < 0) throw std::invalid_argument("negative RLE run");
    out.insert(out.end(), static_cast<size_t>(r), current);
    current = current ? 0 : 1;
  }
  if (static_cast<int>(out.size()) != expected_size)
    throw std::invalid_argument("RLE runs sum to " + std::to_string(out.size()) + ", expected " +
                                std::to_string(expected_size));
  return out;
}

void save_vocab(const std::string& path, const std::vector<std::string>& tokens) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (const auto& t : tokens) out << t << "\n";
}

std::vector<std::string> load_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocab: " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

}  // namespace layoutdiff
