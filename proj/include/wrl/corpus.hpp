#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "wrl/error.hpp"
#include "wrl/rng.hpp"

namespace wrl {

using WordId = std::int32_t;
constexpr int kTrunkDim = 1024;  // trunk feature width, fixed by the upstream extractor

using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Enumeration of the written words with signed equivalents. Ids are dense.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(const std::vector<std::string>& words) {
    for (const auto& w : words) add(w);
  }

  WordId add(const std::string& word) {
    if (word.empty()) throw DataError("vocabulary: empty word");
    for (const char c : word)
      if (c >= 'A' && c <= 'Z') throw DataError("vocabulary: word not lowercase: '" + word + "'");
    if (index_.count(word)) throw DataError("vocabulary: duplicate word '" + word + "'");
    const WordId id = static_cast<WordId>(words_.size());
    words_.push_back(word);
    index_.emplace(word, id);
    return id;
  }

  std::optional<WordId> lookup(const std::string& word) const {
    const auto it = index_.find(word);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& word(WordId id) const { return words_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> index_;
};

// A stack of trunk feature vectors: one row per 16-frame window position for
// continuous footage, one row per subclip for dictionary videos.
struct FeatureSeries {
  FeatureMatrix data;  // rows x dim, f32

  int rows() const { return static_cast<int>(data.rows()); }
  int dim() const { return static_cast<int>(data.cols()); }
};

// Sparse localized label on the 25 fps frame timeline.
struct Annotation {
  WordId word = -1;
  int frame = 0;
  double confidence = 1.0;
};

struct ContinuousSequence {
  std::string id;
  FeatureSeries features;  // row w covers frames [w, w+15]
  std::vector<std::string> subtitle;  // raw, unnormalized tokens
  std::optional<Annotation> annotation;

  int num_windows() const { return features.rows(); }
  int num_frames() const { return features.rows() + 15; }
};

struct DictionaryEntry {
  WordId word = -1;
  std::vector<FeatureSeries> variants;  // each variant: one row per subclip
};

enum class SplitTag { kSeenTrain, kUnseenTest };

struct Corpus {
  Vocabulary vocabulary;
  std::vector<ContinuousSequence> continuous;
  std::vector<DictionaryEntry> dictionary;
  std::vector<SplitTag> split_tags;  // per word; defaults to seen-train

  // word -> index into dictionary, or -1
  std::vector<int> dict_by_word;

  void rebuild_indexes() {
    if (split_tags.size() != static_cast<std::size_t>(vocabulary.size()))
      split_tags.assign(static_cast<std::size_t>(vocabulary.size()), SplitTag::kSeenTrain);
    dict_by_word.assign(static_cast<std::size_t>(vocabulary.size()), -1);
    for (std::size_t i = 0; i < dictionary.size(); ++i) {
      const WordId w = dictionary[i].word;
      if (dict_by_word.at(static_cast<std::size_t>(w)) != -1)
        throw DataError("dictionary: duplicate entry for word '" + vocabulary.word(w) + "'");
      dict_by_word[static_cast<std::size_t>(w)] = static_cast<int>(i);
    }
  }

  const DictionaryEntry* dict_entry(WordId w) const {
    if (w < 0 || w >= static_cast<WordId>(dict_by_word.size())) return nullptr;
    const int idx = dict_by_word[static_cast<std::size_t>(w)];
    return idx < 0 ? nullptr : &dictionary[static_cast<std::size_t>(idx)];
  }

  std::vector<int> annotated_sequence_indices() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < continuous.size(); ++i)
      if (continuous[i].annotation) out.push_back(static_cast<int>(i));
    return out;
  }

  bool is_seen(WordId w) const { return split_tags.at(static_cast<std::size_t>(w)) == SplitTag::kSeenTrain; }
};

// ---------------------------------------------------------------------------
// Feature file, binary, little-endian:
//   magic  'WRLF'   (4 bytes)
//   u32    version  (= 1)
//   u32    rows
//   u32    dim
//   f32[rows*dim]   row-major payload
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32_le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool get_u32_le(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
      static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  return true;
}

inline std::uint32_t f32_bits(float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  return u;
}

inline float bits_f32(std::uint32_t u) {
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace detail

inline void write_feature_file(const std::filesystem::path& path, const FeatureSeries& series) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("feature file: cannot open for write: " + path.string());
  os.write("WRLF", 4);
  detail::put_u32_le(os, 1);
  detail::put_u32_le(os, static_cast<std::uint32_t>(series.rows()));
  detail::put_u32_le(os, static_cast<std::uint32_t>(series.dim()));
  const std::size_t count = static_cast<std::size_t>(series.rows()) * static_cast<std::size_t>(series.dim());
  std::vector<unsigned char> buf(count * 4);
  std::size_t off = 0;
  for (int r = 0; r < series.rows(); ++r) {
    for (int c = 0; c < series.dim(); ++c) {
      const std::uint32_t u = detail::f32_bits(series.data(r, c));
      buf[off++] = static_cast<unsigned char>(u);
      buf[off++] = static_cast<unsigned char>(u >> 8);
      buf[off++] = static_cast<unsigned char>(u >> 16);
      buf[off++] = static_cast<unsigned char>(u >> 24);
    }
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw DataError("feature file: write failed: " + path.string());
}

inline FeatureSeries read_feature_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("feature file: cannot open: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "WRLF", 4) != 0)
    throw DataError("feature file: bad magic: " + path.string());
  std::uint32_t version = 0, rows = 0, dim = 0;
  if (!detail::get_u32_le(is, version) || !detail::get_u32_le(is, rows) || !detail::get_u32_le(is, dim))
    throw DataError("feature file: truncated header: " + path.string());
  if (version != 1)
    throw DataError("feature file: unsupported version " + std::to_string(version) + ": " + path.string());
  if (rows == 0 || dim == 0) throw DataError("feature file: empty shape: " + path.string());

  FeatureSeries series;
  series.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  const std::size_t count = static_cast<std::size_t>(rows) * static_cast<std::size_t>(dim);
  std::vector<unsigned char> buf(count * 4);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(is.gcount()) != buf.size()) {
    const std::size_t row = static_cast<std::size_t>(is.gcount()) / (static_cast<std::size_t>(dim) * 4);
    throw DataError("feature file: truncated payload at row " + std::to_string(row) + ": " + path.string());
  }
  std::size_t off = 0;
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < dim; ++c) {
      const std::uint32_t u = static_cast<std::uint32_t>(buf[off]) |
                              static_cast<std::uint32_t>(buf[off + 1]) << 8 |
                              static_cast<std::uint32_t>(buf[off + 2]) << 16 |
                              static_cast<std::uint32_t>(buf[off + 3]) << 24;
      off += 4;
      const float f = detail::bits_f32(u);
      if (!std::isfinite(f))
        throw DataError("feature file: non-finite value at row " + std::to_string(r) + ", col " +
                        std::to_string(c) + ": " + path.string());
      series.data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = f;
    }
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw DataError("feature file: trailing bytes after payload: " + path.string());
  return series;
}

// ---------------------------------------------------------------------------
// Manifest: one JSON document.
//   vocabulary: [word, ...]
//   continuous: [{id, features_path, subtitle: [...], annotation?: {word, frame, confidence}}]
//   dictionary: [{word, variants: [{subclips_path}]}]
// Feature paths are resolved relative to the manifest's directory.
// ---------------------------------------------------------------------------

inline Corpus load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw DataError("manifest: cannot open: " + manifest_path.string());
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest: malformed JSON: " + manifest_path.string() + ": " + e.what());
  }
  const auto base = manifest_path.parent_path();

  Corpus corpus;
  try {
    if (!doc.contains("vocabulary") || !doc.contains("continuous") || !doc.contains("dictionary"))
      throw DataError("manifest: missing top-level key (need vocabulary/continuous/dictionary)");
    for (const auto& w : doc.at("vocabulary")) corpus.vocabulary.add(w.get<std::string>());

    auto load_series = [&](const std::string& rel, const std::string& record) {
      FeatureSeries s = read_feature_file(base / rel);
      if (s.dim() != kTrunkDim)
        throw DataError("manifest: record '" + record + "': feature file " + rel + " has dim " +
                        std::to_string(s.dim()) + ", expected " + std::to_string(kTrunkDim));
      return s;
    };

    for (const auto& rec : doc.at("continuous")) {
      ContinuousSequence seq;
      seq.id = rec.at("id").get<std::string>();
      seq.features = load_series(rec.at("features_path").get<std::string>(), seq.id);
      seq.subtitle = rec.at("subtitle").get<std::vector<std::string>>();
      if (seq.subtitle.empty()) throw DataError("manifest: record '" + seq.id + "': empty subtitle");
      if (rec.contains("annotation")) {
        const auto& a = rec.at("annotation");
        Annotation ann;
        const auto word = a.at("word").get<std::string>();
        const auto id = corpus.vocabulary.lookup(word);
        if (!id)
          throw DataError("manifest: record '" + seq.id + "': annotation word '" + word +
                          "' not in vocabulary");
        ann.word = *id;
        ann.frame = a.at("frame").get<int>();
        ann.confidence = a.at("confidence").get<double>();
        if (ann.frame < 0 || ann.frame >= seq.num_frames())
          throw DataError("manifest: record '" + seq.id + "': annotation frame " +
                          std::to_string(ann.frame) + " outside sequence");
        if (ann.confidence < 0.5 || ann.confidence > 1.0)
          throw DataError("manifest: record '" + seq.id + "': confidence " +
                          std::to_string(ann.confidence) + " outside [0.5, 1.0]");
        seq.annotation = ann;
      }
      corpus.continuous.push_back(std::move(seq));
    }

    for (const auto& rec : doc.at("dictionary")) {
      DictionaryEntry entry;
      const auto word = rec.at("word").get<std::string>();
      const auto id = corpus.vocabulary.lookup(word);
      if (!id) throw DataError("manifest: dictionary word '" + word + "' not in vocabulary");
      entry.word = *id;
      for (const auto& var : rec.at("variants"))
        entry.variants.push_back(load_series(var.at("subclips_path").get<std::string>(), word));
      if (entry.variants.empty())
        throw DataError("manifest: dictionary word '" + word + "': no variants");
      corpus.dictionary.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest: malformed record in " + manifest_path.string() + ": " + e.what());
  }

  corpus.rebuild_indexes();
  return corpus;
}

// Writes manifest + feature files under dir. Feature files land in
// dir/features/. Returns the manifest path.
inline std::filesystem::path save_corpus(const Corpus& corpus, const std::filesystem::path& dir,
                                         const std::string& manifest_name = "manifest.json") {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "features");
  nlohmann::json doc;
  doc["vocabulary"] = corpus.vocabulary.words();

  doc["continuous"] = nlohmann::json::array();
  for (const auto& seq : corpus.continuous) {
    const std::string rel = "features/" + seq.id + ".wrlf";
    write_feature_file(dir / rel, seq.features);
    nlohmann::json rec{{"id", seq.id}, {"features_path", rel}, {"subtitle", seq.subtitle}};
    if (seq.annotation) {
      rec["annotation"] = {{"word", corpus.vocabulary.word(seq.annotation->word)},
                           {"frame", seq.annotation->frame},
                           {"confidence", seq.annotation->confidence}};
    }
    doc["continuous"].push_back(std::move(rec));
  }

  doc["dictionary"] = nlohmann::json::array();
  for (const auto& entry : corpus.dictionary) {
    const std::string& word = corpus.vocabulary.word(entry.word);
    nlohmann::json variants = nlohmann::json::array();
    for (std::size_t v = 0; v < entry.variants.size(); ++v) {
      const std::string rel = "features/dict_" + word + "_v" + std::to_string(v) + ".wrlf";
      write_feature_file(dir / rel, entry.variants[v]);
      variants.push_back({{"subclips_path", rel}});
    }
    doc["dictionary"].push_back({{"word", word}, {"variants", std::move(variants)}});
  }

  const fs::path manifest_path = dir / manifest_name;
  std::ofstream os(manifest_path);
  if (!os) throw DataError("manifest: cannot open for write: " + manifest_path.string());
  os << doc.dump(2) << "\n";
  return manifest_path;
}

// Demotes annotations below the confidence threshold to background. The
// sequence itself stays: unlabelled subtitled footage is still supervision.
inline Corpus filter_by_confidence(Corpus corpus, double threshold) {
  if (threshold < 0.5 || threshold > 1.0)
    throw DataError("filter_by_confidence: threshold " + std::to_string(threshold) +
                    " outside [0.5, 1.0]");
  for (auto& seq : corpus.continuous)
    if (seq.annotation && seq.annotation->confidence < threshold) seq.annotation.reset();
  return corpus;
}

// Tags exactly train_count words seen-train, the rest unseen-test. The
// partition is a seeded shuffle, so a fixed (seed, train_count) always yields
// the same split. train_count == V is the degenerate all-seen protocol.
inline Corpus split_vocabulary(Corpus corpus, int train_count, std::uint64_t seed) {
  const int v = corpus.vocabulary.size();
  if (train_count > v)
    throw DataError("split_vocabulary: train_count " + std::to_string(train_count) +
                    " exceeds vocabulary size " + std::to_string(v));
  if (train_count < 0) throw DataError("split_vocabulary: negative train_count");
  std::vector<WordId> ids(static_cast<std::size_t>(v));
  for (int i = 0; i < v; ++i) ids[static_cast<std::size_t>(i)] = i;
  Rng rng = Rng(seed).derive("split_vocabulary");
  rng.shuffle(ids);
  corpus.split_tags.assign(static_cast<std::size_t>(v), SplitTag::kUnseenTest);
  for (int i = 0; i < train_count; ++i)
    corpus.split_tags[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])] = SplitTag::kSeenTrain;
  return corpus;
}

// Reads/writes the {"seen": [...], "unseen": [...]} sidecar the generator
// emits next to its manifests.
inline void save_split(const Corpus& corpus, const std::filesystem::path& path) {
  nlohmann::json doc{{"seen", nlohmann::json::array()}, {"unseen", nlohmann::json::array()}};
  for (WordId w = 0; w < corpus.vocabulary.size(); ++w) {
    (corpus.is_seen(w) ? doc["seen"] : doc["unseen"]).push_back(corpus.vocabulary.word(w));
  }
  std::ofstream os(path);
  if (!os) throw DataError("split file: cannot open for write: " + path.string());
  os << doc.dump(2) << "\n";
}

inline Corpus load_split(Corpus corpus, const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("split file: cannot open: " + path.string());
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("split file: malformed JSON: " + path.string() + ": " + e.what());
  }
  corpus.split_tags.assign(static_cast<std::size_t>(corpus.vocabulary.size()), SplitTag::kSeenTrain);
  for (const auto& w : doc.at("unseen")) {
    const auto id = corpus.vocabulary.lookup(w.get<std::string>());
    if (!id) throw DataError("split file: word '" + w.get<std::string>() + "' not in vocabulary");
    corpus.split_tags[static_cast<std::size_t>(*id)] = SplitTag::kUnseenTest;
  }
  for (const auto& w : doc.at("seen")) {
    if (!corpus.vocabulary.lookup(w.get<std::string>()))
      throw DataError("split file: word '" + w.get<std::string>() + "' not in vocabulary");
  }
  return corpus;
}

}  // namespace wrl
