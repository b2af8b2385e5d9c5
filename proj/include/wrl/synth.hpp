#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wrl/corpus.hpp"
#include "wrl/error.hpp"
#include "wrl/rng.hpp"
#include "wrl/sampler.hpp"

namespace wrl {

// Desk-scale corpus with known ground truth. Each word owns a handful of
// variant prototypes in trunk-feature space; dictionary videos and continuous
// sequences render those prototypes through two different fixed linear maps
// plus noise, standing in for the isolated-vs-co-articulated appearance gap.
struct SynthConfig {
  int vocab_size = 50;
  int num_sequences = 500;
  int seq_windows_min = 150;
  int seq_windows_max = 250;
  int variants_min = 1;
  int variants_max = 3;
  int subtitle_words_per_seq = 4;
  int smear_min = 7;   // planted sign duration in windows
  int smear_max = 13;
  double unseen_fraction = 0.25;
  double test_fraction = 0.3;
  // Domain gap: a fixed rank-map_rank linear distortion per domain whose
  // typical relative magnitude is map_scale, plus additive noise sigma on
  // every rendered vector. map_scale = 0 and noise_sigma = 0 reduce to exact
  // prototype planting.
  int map_rank = 128;
  double map_scale = 1.2;
  double noise_sigma = 1.0;
  double variant_spread = 1.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (vocab_size < 2) throw ConfigError("synth: vocab_size must be >= 2");
    if (num_sequences < 2) throw ConfigError("synth: num_sequences must be >= 2");
    if (seq_windows_min < 60 || seq_windows_max < seq_windows_min)
      throw ConfigError("synth: bad seq_windows range");
    if (variants_min < 1 || variants_max < variants_min) throw ConfigError("synth: bad variants range");
    if (subtitle_words_per_seq < 1 || subtitle_words_per_seq > vocab_size)
      throw ConfigError("synth: bad subtitle_words_per_seq");
    if (smear_min < 1 || smear_max < smear_min) throw ConfigError("synth: bad smear range");
    if (seq_windows_min < 46 + 22 * subtitle_words_per_seq)
      throw ConfigError("synth: sequences too short to host " +
                      std::to_string(subtitle_words_per_seq) + " non-overlapping signs");
    if (unseen_fraction < 0.0 || unseen_fraction >= 1.0) throw ConfigError("synth: bad unseen_fraction");
    if (test_fraction <= 0.0 || test_fraction >= 1.0) throw ConfigError("synth: bad test_fraction");
    if (map_rank < 0 || map_scale < 0.0 || noise_sigma < 0.0 || variant_spread < 0.0)
      throw ConfigError("synth: negative gap parameter");
  }
};

struct GroundTruthRecord {
  std::string seq_id;
  std::string word;
  int frame = 0;    // annotation-style frame; the plant is centered near frame-13
  int variant = 0;
};

namespace detail {

inline std::vector<std::string> make_words(int count, Rng& rng) {
  static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
  static const char* kVowels[] = {"a", "e", "i", "o", "u"};
  std::set<std::string> seen;
  std::vector<std::string> words;
  while (static_cast<int>(words.size()) < count) {
    std::string w;
    const int syllables = 2 + static_cast<int>(rng.uniform_int(0, 1));
    for (int s = 0; s < syllables; ++s) {
      w += kOnsets[rng.uniform_int(0, 13)];
      w += kVowels[rng.uniform_int(0, 4)];
    }
    if (seen.insert(w).second) words.push_back(w);
  }
  return words;
}

inline Eigen::VectorXd gaussian_vec(int dim, Rng& rng) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.normal();
  return v;
}

// x -> x + coef * U (V^T x), a fixed low-rank domain transform. coef is
// normalized so that `scale` is the typical perturbation norm relative to
// ||x|| (for random unit columns, E||U V^T x||^2 ~ (rank/dim) ||x||^2).
struct DomainMap {
  Eigen::MatrixXd u, v;
  double coef = 0.0;

  static DomainMap make(int dim, int rank, double scale, Rng& rng) {
    DomainMap m;
    if (rank > 0 && scale > 0.0) {
      m.coef = scale * std::sqrt(static_cast<double>(dim) / rank);
      m.u.resize(dim, rank);
      m.v.resize(dim, rank);
      for (int c = 0; c < rank; ++c) {
        m.u.col(c) = gaussian_vec(dim, rng).normalized();
        m.v.col(c) = gaussian_vec(dim, rng).normalized();
      }
    }
    return m;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    if (coef == 0.0 || u.size() == 0) return x;
    return x + coef * (u * (v.transpose() * x));
  }
};

}  // namespace detail

struct SynthOutput {
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
  std::filesystem::path ground_truth;
  std::filesystem::path split_file;
  int train_sequences = 0;
  int test_sequences = 0;
};

inline SynthOutput generate(const SynthConfig& config, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  config.validate();
  const int dim = kTrunkDim;
  Rng root(config.seed);

  Rng word_rng = root.derive("synth/words");
  const auto words = detail::make_words(config.vocab_size, word_rng);
  Vocabulary vocab(words);

  // Seen/unseen word split.
  const int unseen_count =
      static_cast<int>(std::llround(config.unseen_fraction * config.vocab_size));
  std::vector<WordId> order(static_cast<std::size_t>(config.vocab_size));
  for (int i = 0; i < config.vocab_size; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng split_rng = root.derive("synth/split");
  split_rng.shuffle(order);
  std::vector<SplitTag> tags(static_cast<std::size_t>(config.vocab_size), SplitTag::kSeenTrain);
  for (int i = 0; i < unseen_count; ++i)
    tags[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = SplitTag::kUnseenTest;
  std::vector<WordId> seen_words, unseen_words;
  for (WordId w = 0; w < config.vocab_size; ++w)
    (tags[static_cast<std::size_t>(w)] == SplitTag::kSeenTrain ? seen_words : unseen_words).push_back(w);
  if (seen_words.empty()) throw DataError("synth: no seen words left after split");

  // Variant prototypes.
  std::vector<std::vector<Eigen::VectorXd>> prototypes(static_cast<std::size_t>(config.vocab_size));
  for (WordId w = 0; w < config.vocab_size; ++w) {
    Rng proto_rng = root.derive("synth/proto", static_cast<std::uint64_t>(w));
    const Eigen::VectorXd base = detail::gaussian_vec(dim, proto_rng).normalized();
    const int nv = static_cast<int>(proto_rng.uniform_int(config.variants_min, config.variants_max));
    for (int v = 0; v < nv; ++v) {
      const Eigen::VectorXd bump = detail::gaussian_vec(dim, proto_rng).normalized();
      prototypes[static_cast<std::size_t>(w)].push_back(
          (base + config.variant_spread * bump).normalized());
    }
  }

  Rng map_rng = root.derive("synth/maps");
  const auto cont_map = detail::DomainMap::make(dim, config.map_rank, config.map_scale, map_rng);
  const auto dict_map = detail::DomainMap::make(dim, config.map_rank, config.map_scale, map_rng);

  const double noise_coef = config.noise_sigma / std::sqrt(static_cast<double>(dim));
  auto noisy = [&](Eigen::VectorXd base, Rng& rng) {
    if (config.noise_sigma > 0.0) base += noise_coef * detail::gaussian_vec(dim, rng);
    return base;
  };

  // Dictionary: every word, every variant; subclip count follows the random
  // shift / random frame rate subsampling of a plausible video length.
  std::vector<DictionaryEntry> dictionary;
  for (WordId w = 0; w < config.vocab_size; ++w) {
    DictionaryEntry entry;
    entry.word = w;
    for (std::size_t v = 0; v < prototypes[static_cast<std::size_t>(w)].size(); ++v) {
      Rng dict_rng = root.derive("synth/dict", static_cast<std::uint64_t>(w) * 97 + v);
      const int num_frames = static_cast<int>(dict_rng.uniform_int(24, 88));
      const auto subclips = dictionary_subclip_indices(num_frames, dict_rng);
      FeatureSeries series;
      series.data.resize(static_cast<Eigen::Index>(subclips.size()), dim);
      const Eigen::VectorXd rendered = dict_map.apply(prototypes[static_cast<std::size_t>(w)][v]);
      for (std::size_t s = 0; s < subclips.size(); ++s)
        series.data.row(static_cast<Eigen::Index>(s)) = noisy(rendered, dict_rng).transpose().cast<float>();
      entry.variants.push_back(std::move(series));
    }
    dictionary.push_back(std::move(entry));
  }

  // Continuous sequences.
  const int test_count = std::max(1, static_cast<int>(std::llround(config.test_fraction * config.num_sequences)));
  const int train_count = config.num_sequences - test_count;
  if (train_count < 1) throw DataError("synth: no training sequences left");

  // Foreground assignment: training sequences cover the seen words (each word
  // at least once when possible), test sequences cycle the whole vocabulary.
  Rng assign_rng = root.derive("synth/assign");
  std::vector<WordId> train_fg(static_cast<std::size_t>(train_count));
  {
    std::vector<WordId> pool = seen_words;
    assign_rng.shuffle(pool);
    for (int i = 0; i < train_count; ++i) {
      if (i < static_cast<int>(pool.size())) {
        train_fg[static_cast<std::size_t>(i)] = pool[static_cast<std::size_t>(i)];
      } else {
        train_fg[static_cast<std::size_t>(i)] =
            seen_words[static_cast<std::size_t>(assign_rng.uniform_int(
                0, static_cast<std::int64_t>(seen_words.size()) - 1))];
      }
    }
    assign_rng.shuffle(train_fg);
  }
  std::vector<WordId> test_fg(static_cast<std::size_t>(test_count));
  {
    std::vector<WordId> pool(static_cast<std::size_t>(config.vocab_size));
    for (int i = 0; i < config.vocab_size; ++i) pool[static_cast<std::size_t>(i)] = i;
    assign_rng.shuffle(pool);
    for (int i = 0; i < test_count; ++i)
      test_fg[static_cast<std::size_t>(i)] = pool[static_cast<std::size_t>(i) % pool.size()];
  }

  static const char* kFillers[] = {"the", "is", "to", "we", "of", "and", "you"};
  std::vector<GroundTruthRecord> ground_truth;

  auto make_sequence = [&](const std::string& id, WordId fg, bool is_test, Rng& rng) {
    ContinuousSequence seq;
    seq.id = id;
    const int rows = static_cast<int>(rng.uniform_int(config.seq_windows_min, config.seq_windows_max));
    seq.features.data.setZero(rows, dim);
    if (config.noise_sigma > 0.0) {
      for (int r = 0; r < rows; ++r)
        seq.features.data.row(r) = (noise_coef * detail::gaussian_vec(dim, rng)).transpose().cast<float>();
    }

    // Planted words: the foreground plus distinct background words from the
    // full vocabulary.
    std::vector<WordId> planted{fg};
    {
      std::vector<WordId> pool(static_cast<std::size_t>(config.vocab_size));
      for (int i = 0; i < config.vocab_size; ++i) pool[static_cast<std::size_t>(i)] = i;
      rng.shuffle(pool);
      for (const WordId w : pool) {
        if (static_cast<int>(planted.size()) >= config.subtitle_words_per_seq) break;
        if (w != fg) planted.push_back(w);
      }
    }

    // Positions: one strip per planted word, annotation frame near the strip
    // center. The plant itself sits ~13 windows before its frame so that the
    // whole smear lies inside the correctness interval [t-20, t+5].
    const int k = static_cast<int>(planted.size());
    const int lo = 30, hi = rows - 16;
    const int strip = (hi - lo) / k;
    std::vector<int> slots(static_cast<std::size_t>(k));
    for (int s = 0; s < k; ++s) {
      const int center = lo + strip * s + strip / 2;
      const int jitter = std::min(10, std::max(1, strip / 4));
      slots[static_cast<std::size_t>(s)] =
          std::clamp(center + static_cast<int>(rng.uniform_int(-jitter, jitter)), lo, hi);
    }
    rng.shuffle(planted);

    int fg_frame = -1;
    for (int s = 0; s < k; ++s) {
      const WordId w = planted[static_cast<std::size_t>(s)];
      const auto& protos = prototypes[static_cast<std::size_t>(w)];
      const int variant = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(protos.size()) - 1));
      const int t = slots[static_cast<std::size_t>(s)];
      const int m = static_cast<int>(rng.uniform_int(config.smear_min, config.smear_max));
      const int center = t - 13;
      const int first = center - m / 2;
      const Eigen::VectorXd rendered = cont_map.apply(protos[static_cast<std::size_t>(variant)]);
      for (int r = first; r < first + m; ++r) {
        if (r < 0 || r >= rows) continue;
        const double off = std::abs(r - center) / std::max(1.0, m / 2.0);
        const double weight = 1.0 - 0.65 * off;  // triangular taper, peak at the center
        Eigen::VectorXd row = seq.features.data.row(r).transpose().cast<double>();
        row += weight * rendered;
        seq.features.data.row(r) = row.transpose().cast<float>();
      }
      ground_truth.push_back({id, vocab.word(w), t, variant});
      if (w == fg) fg_frame = t;
    }

    // Subtitle: planted words in random order, filler words and light
    // punctuation sprinkled in.
    std::vector<std::string> subtitle;
    for (const WordId w : planted) subtitle.push_back(vocab.word(w));
    const int fillers = 1 + static_cast<int>(rng.uniform_int(0, 1));
    for (int f = 0; f < fillers; ++f) subtitle.push_back(kFillers[rng.uniform_int(0, 6)]);
    rng.shuffle(subtitle);
    if (!subtitle.empty()) {
      subtitle.front()[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(subtitle.front()[0])));
      subtitle.back() += (rng.uniform_int(0, 1) == 0) ? "?" : ".";
    }
    seq.subtitle = std::move(subtitle);

    Annotation ann;
    ann.word = fg;
    ann.frame = fg_frame;
    ann.confidence = is_test ? rng.uniform_real(0.9, 1.0) : rng.uniform_real(0.5, 1.0);
    seq.annotation = ann;
    return seq;
  };

  Corpus train_corpus, test_corpus;
  train_corpus.vocabulary = vocab;
  test_corpus.vocabulary = vocab;
  train_corpus.split_tags = tags;
  test_corpus.split_tags = tags;
  for (int i = 0; i < train_count; ++i) {
    Rng seq_rng = root.derive("synth/seq/train", static_cast<std::uint64_t>(i));
    char id[32];
    std::snprintf(id, sizeof(id), "train_%04d", i);
    train_corpus.continuous.push_back(
        make_sequence(id, train_fg[static_cast<std::size_t>(i)], false, seq_rng));
  }
  for (int i = 0; i < test_count; ++i) {
    Rng seq_rng = root.derive("synth/seq/test", static_cast<std::uint64_t>(i));
    char id[32];
    std::snprintf(id, sizeof(id), "test_%04d", i);
    test_corpus.continuous.push_back(
        make_sequence(id, test_fg[static_cast<std::size_t>(i)], true, seq_rng));
  }
  train_corpus.dictionary = dictionary;
  test_corpus.dictionary = std::move(dictionary);
  train_corpus.rebuild_indexes();
  test_corpus.rebuild_indexes();

  SynthOutput out;
  out.train_sequences = train_count;
  out.test_sequences = test_count;
  out.train_manifest = save_corpus(train_corpus, out_dir, "train_manifest.json");
  out.test_manifest = save_corpus(test_corpus, out_dir, "test_manifest.json");

  out.split_file = out_dir / "split.json";
  save_split(train_corpus, out.split_file);

  nlohmann::json gt = nlohmann::json::array();
  for (const auto& rec : ground_truth)
    gt.push_back({{"seq_id", rec.seq_id}, {"word", rec.word}, {"frame", rec.frame}, {"variant", rec.variant}});
  out.ground_truth = out_dir / "ground_truth.json";
  std::ofstream os(out.ground_truth);
  if (!os) throw DataError("synth: cannot write " + out.ground_truth.string());
  os << gt.dump(2) << "\n";
  return out;
}

inline std::vector<GroundTruthRecord> load_ground_truth(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("ground truth: cannot open: " + path.string());
  nlohmann::json doc;
  is >> doc;
  std::vector<GroundTruthRecord> out;
  for (const auto& rec : doc)
    out.push_back({rec.at("seq_id").get<std::string>(), rec.at("word").get<std::string>(),
                   rec.at("frame").get<int>(), rec.at("variant").get<int>()});
  return out;
}

}  // namespace wrl
