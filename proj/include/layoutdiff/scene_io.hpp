#pragma once

#include <string>
#include <vector>

#include "layoutdiff/scene.hpp"

namespace layoutdiff {

// Corpus files are JSON-lines, one scene per line, geometry in meters.
// Serialization is canonical (fixed key order, shortest round-trip doubles)
// so load followed by save reproduces the file byte for byte.
//
// Record shape:
//   {"objects":[{"class":name,"tier":"primary|secondary","t":[3],"s":[3],
//     "theta":rad}], "graph":{"edges":[[src,dst,rel],...]},
//    "room_mask":{"h":H,"w":W,"rle":[run,...]}, "text":str, "source":str,
//    "frame":{"center":[3],"scale":s}}
//
// The mask RLE alternates zero/one runs starting with zeros; runs sum to H*W.
//
// Mapping notes for external archives (3D-FRONT / MP3D style exports): their
// per-room JSON carries category label, 3x3 rotation and full size; convert
// by taking yaw = atan2(R[0][2], R[0][0]), half_size = size/2, and assigning
// tiers via the taxonomy. No importer ships here; the synthetic generator is
// the corpus source.
std::string scene_to_json_line(const Scene& scene, const CategoryTaxonomy& taxonomy);
Scene scene_from_json_line(const std::string& line, const CategoryTaxonomy& taxonomy);

void save_corpus(const std::string& path, const std::vector<Scene>& scenes,
                 const CategoryTaxonomy& taxonomy);

struct CorpusLoadStats {
  int loaded = 0;
  int dropped_over_cap = 0;
};

// Parses every line, validates invariants, drops scenes violating the
// primary/secondary caps (counted in stats). Malformed lines throw with the
// 1-based line number in the message.
std::vector<Scene> read_corpus(const std::string& path, const CategoryTaxonomy& taxonomy,
                               CorpusLoadStats* stats = nullptr);

// Deterministic shuffled split of an already-read corpus.
void split_corpus(std::vector<Scene> scenes, double train_ratio, uint64_t seed,
                  std::vector<Scene>* train, std::vector<Scene>* val);

// read_corpus + split_corpus.
void load_corpus(const std::string& path, const CategoryTaxonomy& taxonomy, double train_ratio,
                 uint64_t seed, std::vector<Scene>* train, std::vector<Scene>* val,
                 CorpusLoadStats* stats = nullptr);

std::vector<int> rle_encode(const std::vector<uint8_t>& pixels);
std::vector<uint8_t> rle_decode(const std::vector<int>& runs, int expected_size);

// Newline-separated token vocabulary shipped next to a corpus for the text
// encoder.
void save_vocab(const std::string& path, const std::vector<std::string>& tokens);
std::vector<std::string> load_vocab(const std::string& path);

}  // namespace layoutdiff
