#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "wrl/corpus.hpp"
#include "wrl/error.hpp"
#include "wrl/rng.hpp"

namespace wrl {

enum class TrainMode { kWatchLookup, kWatchReadLookup, kInfoNce, kClassification };
enum class DictVocab { kTrainingVocab, kFullVocab };

inline const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kWatchLookup: return "watch-lookup";
    case TrainMode::kWatchReadLookup: return "watch-read-lookup";
    case TrainMode::kInfoNce: return "infonce";
    case TrainMode::kClassification: return "classification";
  }
  return "?";
}

// Subtitle word -> vocabulary id set. Lowercases, strips surrounding
// punctuation, and falls back to dropping a possessive 's ("friend's" matches
// "friend"). Duplicates collapse.
inline std::set<WordId> tokenize(const std::vector<std::string>& subtitle, const Vocabulary& vocab) {
  std::set<WordId> out;
  for (const auto& raw : subtitle) {
    std::string t;
    t.reserve(raw.size());
    for (char c : raw) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    const auto is_punct = [](char c) {
      return std::ispunct(static_cast<unsigned char>(c)) != 0;
    };
    std::size_t b = 0, e = t.size();
    while (b < e && is_punct(t[b])) ++b;
    while (e > b && is_punct(t[e - 1])) --e;
    const std::string stripped = t.substr(b, e - b);
    if (stripped.empty()) continue;
    if (auto id = vocab.lookup(stripped)) {
      out.insert(*id);
    } else if (stripped.size() > 2 && stripped.compare(stripped.size() - 2, 2, "'s") == 0) {
      if (auto id2 = vocab.lookup(stripped.substr(0, stripped.size() - 2))) out.insert(*id2);
    }
  }
  return out;
}

// Foreground window start around annotation frame t: uniform over
// [t-20, t-10], clamped to valid window positions, so the whole 16-frame clip
// stays inside the correctness interval [t-20, t+5].
inline int sample_foreground_start(int annotation_frame, int seq_windows, Rng& rng) {
  const int lo = annotation_frame - 20;
  const int hi = annotation_frame - 10;
  int s = static_cast<int>(rng.uniform_int(lo, hi));
  s = std::clamp(s, 0, seq_windows - 1);
  return s;
}

// Background window starts: uniform without replacement over positions whose
// 16-frame span fits in the sequence and does not intersect the foreground
// span. Returns fewer than `count` only when fewer valid positions exist.
inline std::vector<int> sample_background_starts(int num_frames, int fg_start, int count, Rng& rng) {
  std::vector<int> valid;
  const int last_start = num_frames - 16;
  for (int p = 0; p <= last_start; ++p)
    if (p + 15 < fg_start || p > fg_start + 15) valid.push_back(p);
  rng.shuffle(valid);
  if (static_cast<int>(valid.size()) > count) valid.resize(static_cast<std::size_t>(count));
  return valid;
}

// Index lists for subsampling a dictionary video: n = max(1,
// round(num_frames/16)) lists of 16 frame indices each, drawn with a random
// frame-rate factor in [0.5, 1.5] and a random shift. Indices are
// round-spaced, clamped, non-decreasing.
inline std::vector<std::vector<int>> dictionary_subclip_indices(int num_frames, Rng& rng) {
  if (num_frames < 1) throw DataError("dictionary_subclip_indices: num_frames < 1");
  const int n = std::max(1, static_cast<int>(std::llround(num_frames / 16.0)));
  std::vector<std::vector<int>> lists;
  lists.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double rate = rng.uniform_real(0.5, 1.5);
    const double span = 15.0 / rate;  // first-to-last distance at this rate
    const double max_shift = std::max(0.0, (num_frames - 1) - span);
    const double shift = rng.uniform_real(0.0, max_shift);
    std::vector<int> idx(16);
    for (int k = 0; k < 16; ++k) {
      const int frame = static_cast<int>(std::llround(shift + k / rate));
      idx[static_cast<std::size_t>(k)] = std::clamp(frame, 0, num_frames - 1);
    }
    lists.push_back(std::move(idx));
  }
  return lists;
}

// One realized training example: the labelled foreground window, 10
// background windows, and the dictionary material its bags can reference.
struct BatchItem {
  int seq_index = -1;       // into corpus.continuous
  std::string seq_ref;      // sequence id
  int fg_window = -1;
  WordId fg_word = -1;
  std::vector<int> bg_windows;
  std::vector<int> fg_dict;                 // variant indices of fg_word's entry
  std::map<WordId, std::vector<int>> bg_dict;  // background word -> variant indices
  std::set<WordId> subtitle_tokens;         // full tokenize() result, unrestricted
};

struct Minibatch {
  const Corpus* corpus = nullptr;
  TrainMode mode = TrainMode::kWatchLookup;
  std::vector<BatchItem> items;
};

namespace detail {

inline std::vector<int> all_variant_indices(const DictionaryEntry& entry) {
  std::vector<int> v(entry.variants.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<int>(i);
  return v;
}

}  // namespace detail

// Builds the batch items for an explicit list of annotated sequences, in
// order. The epoch loop uses this after packing its own class-balanced
// partitions.
inline Minibatch build_minibatch_for(const Corpus& corpus, const std::vector<int>& seq_indices,
                                     TrainMode mode, DictVocab dict_vocab, Rng& rng) {
  Minibatch batch;
  batch.corpus = &corpus;
  batch.mode = mode;
  for (const int si : seq_indices) {
    const auto& seq = corpus.continuous.at(static_cast<std::size_t>(si));
    if (!seq.annotation) throw DataError("minibatch: sequence '" + seq.id + "' has no annotation");
    BatchItem item;
    item.seq_index = si;
    item.seq_ref = seq.id;
    item.fg_word = seq.annotation->word;
    item.fg_window = sample_foreground_start(seq.annotation->frame, seq.num_windows(), rng);
    item.bg_windows = sample_background_starts(seq.num_frames(), item.fg_window, 10, rng);
    item.subtitle_tokens = tokenize(seq.subtitle, corpus.vocabulary);
    if (const auto* entry = corpus.dict_entry(item.fg_word))
      item.fg_dict = detail::all_variant_indices(*entry);
    if (mode == TrainMode::kWatchReadLookup) {
      for (const WordId w : item.subtitle_tokens) {
        if (w == item.fg_word) continue;
        if (dict_vocab == DictVocab::kTrainingVocab && !corpus.is_seen(w)) continue;
        if (const auto* entry = corpus.dict_entry(w))
          item.bg_dict.emplace(w, detail::all_variant_indices(*entry));
      }
    }
    batch.items.push_back(std::move(item));
  }
  return batch;
}

// Samples a fresh minibatch. Under class balancing every item carries a
// distinct foreground word, maximizing in-batch negatives.
inline Minibatch build_minibatch(const Corpus& corpus, int batch_size, TrainMode mode,
                                 bool class_balanced, DictVocab dict_vocab, Rng& rng) {
  std::vector<int> annotated = corpus.annotated_sequence_indices();
  rng.shuffle(annotated);
  std::vector<int> chosen;
  if (class_balanced) {
    std::set<WordId> used;
    for (const int si : annotated) {
      const WordId w = corpus.continuous[static_cast<std::size_t>(si)].annotation->word;
      if (used.count(w)) continue;
      used.insert(w);
      chosen.push_back(si);
      if (static_cast<int>(chosen.size()) == batch_size) break;
    }
    if (static_cast<int>(chosen.size()) < batch_size)
      throw DataError("minibatch: only " + std::to_string(chosen.size()) +
                      " distinct annotated words available, need " + std::to_string(batch_size));
  } else {
    if (static_cast<int>(annotated.size()) < batch_size)
      throw DataError("minibatch: only " + std::to_string(annotated.size()) +
                      " annotated sequences available, need " + std::to_string(batch_size));
    chosen.assign(annotated.begin(), annotated.begin() + batch_size);
  }
  return build_minibatch_for(corpus, chosen, mode, dict_vocab, rng);
}

}  // namespace wrl
