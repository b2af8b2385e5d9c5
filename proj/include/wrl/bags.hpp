#pragma once

#include <algorithm>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "wrl/corpus.hpp"
#include "wrl/error.hpp"
#include "wrl/sampler.hpp"

namespace wrl {

// A pair always spans the two domains: one continuous clip, one dictionary
// video. Dictionary videos are canonical (word, variant) — the same video
// sampled via two batch items is one node, never a double-counted pair.
struct ContClipRef {
  int item = -1;
  int clip = -1;  // -1 = foreground window, 0..9 = background window index

  friend auto operator<=>(const ContClipRef&, const ContClipRef&) = default;
};

struct DictVideoRef {
  WordId word = -1;
  int variant = -1;

  friend auto operator<=>(const DictVideoRef&, const DictVideoRef&) = default;
};

struct PairRef {
  ContClipRef cont;
  DictVideoRef dict;

  friend auto operator<=>(const PairRef&, const PairRef&) = default;
};

enum class AnchorType { kSegFore, kDictFore, kSegBack, kDictBack };

inline const char* to_string(AnchorType t) {
  switch (t) {
    case AnchorType::kSegFore: return "seg-fore";
    case AnchorType::kDictFore: return "dict-fore";
    case AnchorType::kSegBack: return "seg-back";
    case AnchorType::kDictBack: return "dict-back";
  }
  return "?";
}

struct Anchor {
  AnchorType type = AnchorType::kSegFore;
  int item = -1;   // -1 for bags spanning items (lumped dict-back)
  WordId word = -1;
  int clip = -1;   // background clip index for lumped seg-back bags, else -1

  friend auto operator<=>(const Anchor&, const Anchor&) = default;
};

struct AnchoredBags {
  Anchor anchor;
  std::vector<PairRef> positives;  // sorted, unique
  std::vector<PairRef> negatives;  // sorted, unique
};

enum class SynonymPolicy { kKeepAll, kDiscard };

// Groups of word ids that denote the same (or an indistinguishable) sign.
class SynonymTable {
 public:
  SynonymTable() = default;
  explicit SynonymTable(int vocab_size) : group_(static_cast<std::size_t>(vocab_size), -1) {}

  void add_group(const std::vector<WordId>& words) {
    const int g = next_group_++;
    for (const WordId w : words) {
      if (w < 0 || static_cast<std::size_t>(w) >= group_.size())
        throw DataError("synonym table: word id out of range");
      group_[static_cast<std::size_t>(w)] = g;
    }
  }

  bool synonymous(WordId a, WordId b) const {
    if (a == b) return false;
    if (group_.empty()) return false;
    const int ga = group_.at(static_cast<std::size_t>(a));
    return ga != -1 && ga == group_.at(static_cast<std::size_t>(b));
  }

 private:
  std::vector<int> group_;
  int next_group_ = 0;
};

struct BagConfig {
  // Figure behavior: dictionary variants of the item's labelled word are
  // negatives for that item's background anchors (their true location is the
  // annotated window, which background clips avoid by construction). Off
  // discards those pairs instead.
  bool fg_negative_for_background = true;
  // Literal-formula bag shapes: one positive bag per background segment
  // spanning all subtitle words, and dictionary-background bags pooled across
  // batch items. Default is one bag per (item, background word).
  bool lumped = false;
  SynonymPolicy synonym_policy = SynonymPolicy::kKeepAll;
  const SynonymTable* synonyms = nullptr;
};

struct BagStats {
  int anchors_emitted = 0;
  int anchors_dropped_empty = 0;
  int items_without_fg_variants = 0;
  long long pairs_discarded_synonym = 0;
};

namespace detail {

struct BatchDictIndex {
  // word -> sampled variant indices (union over items), ascending
  std::map<WordId, std::vector<int>> variants;

  explicit BatchDictIndex(const Minibatch& batch) {
    std::map<WordId, std::set<int>> acc;
    for (const auto& item : batch.items) {
      for (const int v : item.fg_dict) acc[item.fg_word].insert(v);
      for (const auto& [w, vars] : item.bg_dict)
        for (const int v : vars) acc[w].insert(v);
    }
    for (auto& [w, vs] : acc) variants.emplace(w, std::vector<int>(vs.begin(), vs.end()));
  }
};

class BagBuilder {
 public:
  BagBuilder(const Minibatch& batch, const BagConfig& config, BagStats* stats)
      : batch_(batch), config_(config), dict_(batch), stats_(stats) {}

  bool discard_synonym(WordId dict_word, WordId evidence_word) const {
    if (config_.synonym_policy != SynonymPolicy::kDiscard || config_.synonyms == nullptr) return false;
    const bool syn = config_.synonyms->synonymous(dict_word, evidence_word);
    if (syn && stats_) ++stats_->pairs_discarded_synonym;
    return syn;
  }

  // Negative admissibility of (labelled clip of item j, dictionary word u):
  // labels must differ.
  bool labeled_clip_negative(int j, WordId u) const {
    const auto& it = batch_.items[static_cast<std::size_t>(j)];
    if (it.fg_word == u) return false;
    return !discard_synonym(u, it.fg_word);
  }

  // Negative admissibility of (background clip of item j, dictionary word u):
  // u must be excluded by j's subtitle tokens and annotation. When
  // allow_fg_exclusion is set, u == annotation word is additionally admitted
  // because background windows avoid the annotated span.
  bool background_clip_negative(int j, WordId u, bool allow_fg_exclusion) const {
    const auto& it = batch_.items[static_cast<std::size_t>(j)];
    if (u == it.fg_word) {
      if (!allow_fg_exclusion) return false;
      return !discard_synonym(u, it.fg_word);
    }
    if (it.subtitle_tokens.count(u)) return false;
    for (const WordId t : it.subtitle_tokens)
      if (discard_synonym(u, t)) return false;
    if (discard_synonym(u, it.fg_word)) return false;
    return true;
  }

  std::vector<AnchoredBags> build() {
    std::vector<AnchoredBags> out;
    const int n = static_cast<int>(batch_.items.size());
    for (int i = 0; i < n; ++i) {
      const auto& item = batch_.items[static_cast<std::size_t>(i)];
      if (item.fg_dict.empty() && stats_) ++stats_->items_without_fg_variants;
      emit(out, seg_fore(i));
      emit(out, dict_fore(i));
      if (batch_.mode == TrainMode::kWatchReadLookup) {
        if (!config_.lumped) {
          for (const auto& [w, vars] : item.bg_dict) {
            emit(out, seg_back(i, w, vars));
            emit(out, dict_back(i, w, vars));
          }
        } else {
          for (int k = 0; k < static_cast<int>(item.bg_windows.size()); ++k)
            emit(out, lumped_seg_back(i, k));
        }
      }
    }
    if (batch_.mode == TrainMode::kWatchReadLookup && config_.lumped) {
      std::set<WordId> bg_words;
      for (const auto& item : batch_.items)
        for (const auto& [w, vars] : item.bg_dict) bg_words.insert(w);
      for (const WordId w : bg_words) emit(out, lumped_dict_back(w));
    }
    return out;
  }

 private:
  void emit(std::vector<AnchoredBags>& out, AnchoredBags bag) {
    finalize(bag.positives);
    finalize(bag.negatives);
    if (bag.positives.empty() || bag.negatives.empty()) {
      if (stats_) ++stats_->anchors_dropped_empty;
      return;
    }
    if (stats_) ++stats_->anchors_emitted;
    out.push_back(std::move(bag));
  }

  static void finalize(std::vector<PairRef>& pairs) {
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  }

  // Pairs between one continuous clip and every sampled variant of a word.
  void add_pairs(std::vector<PairRef>& dst, ContClipRef cont, WordId word,
                 const std::vector<int>& variants) const {
    for (const int v : variants) dst.push_back({cont, {word, v}});
  }

  AnchoredBags seg_fore(int i) const {
    const auto& item = batch_.items[static_cast<std::size_t>(i)];
    AnchoredBags bag;
    bag.anchor = {AnchorType::kSegFore, i, item.fg_word, -1};
    const ContClipRef fg{i, -1};
    add_pairs(bag.positives, fg, item.fg_word, item.fg_dict);
    for (const auto& [u, vars] : dict_.variants) {
      if (u == item.fg_word) continue;
      if (!labeled_clip_negative(i, u)) continue;
      add_pairs(bag.negatives, fg, u, vars);
    }
    return bag;
  }

  AnchoredBags dict_fore(int i) const {
    const auto& item = batch_.items[static_cast<std::size_t>(i)];
    AnchoredBags bag;
    bag.anchor = {AnchorType::kDictFore, i, item.fg_word, -1};
    add_pairs(bag.positives, {i, -1}, item.fg_word, item.fg_dict);
    const int n = static_cast<int>(batch_.items.size());
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto& other = batch_.items[static_cast<std::size_t>(j)];
      if (labeled_clip_negative(j, item.fg_word))
        add_pairs(bag.negatives, {j, -1}, item.fg_word, item.fg_dict);
      if (batch_.mode == TrainMode::kWatchReadLookup &&
          background_clip_negative(j, item.fg_word, false)) {
        for (int k = 0; k < static_cast<int>(other.bg_windows.size()); ++k)
          add_pairs(bag.negatives, {j, k}, item.fg_word, item.fg_dict);
      }
    }
    return bag;
  }

  AnchoredBags seg_back(int i, WordId w, const std::vector<int>& vars) const {
    const auto& item = batch_.items[static_cast<std::size_t>(i)];
    AnchoredBags bag;
    bag.anchor = {AnchorType::kSegBack, i, w, -1};
    for (int k = 0; k < static_cast<int>(item.bg_windows.size()); ++k) {
      add_pairs(bag.positives, {i, k}, w, vars);
      for (const auto& [u, uvars] : dict_.variants) {
        if (u == w) continue;
        // Other subtitle words are neither: they may appear in the clip.
        if (!background_clip_negative(i, u, config_.fg_negative_for_background)) continue;
        add_pairs(bag.negatives, {i, k}, u, uvars);
      }
    }
    return bag;
  }

  AnchoredBags dict_back(int i, WordId w, const std::vector<int>& vars) const {
    AnchoredBags bag;
    bag.anchor = {AnchorType::kDictBack, i, w, -1};
    const auto& item = batch_.items[static_cast<std::size_t>(i)];
    for (int k = 0; k < static_cast<int>(item.bg_windows.size()); ++k)
      add_pairs(bag.positives, {i, k}, w, vars);
    const int n = static_cast<int>(batch_.items.size());
    for (int j = 0; j < n; ++j) {
      const auto& other = batch_.items[static_cast<std::size_t>(j)];
      if (labeled_clip_negative(j, w)) add_pairs(bag.negatives, {j, -1}, w, vars);
      if (j == i) continue;
      if (!background_clip_negative(j, w, false)) continue;
      for (int k = 0; k < static_cast<int>(other.bg_windows.size()); ++k)
        add_pairs(bag.negatives, {j, k}, w, vars);
    }
    return bag;
  }

  // Literal-formula shape: the bag anchors on one background segment and its
  // positives span the dictionaries of every subtitle word, the labelled one
  // included.
  AnchoredBags lumped_seg_back(int i, int k) const {
    const auto& item = batch_.items[static_cast<std::size_t>(i)];
    AnchoredBags bag;
    bag.anchor = {AnchorType::kSegBack, i, -1, k};
    const ContClipRef clip{i, k};
    for (const auto& [u, uvars] : dict_.variants) {
      const bool fg_demoted = config_.fg_negative_for_background && u == item.fg_word;
      if (item.subtitle_tokens.count(u) && !fg_demoted) {
        add_pairs(bag.positives, clip, u, uvars);
      } else if (background_clip_negative(i, u, config_.fg_negative_for_background)) {
        add_pairs(bag.negatives, clip, u, uvars);
      }
    }
    return bag;
  }

  AnchoredBags lumped_dict_back(WordId w) const {
    AnchoredBags bag;
    bag.anchor = {AnchorType::kDictBack, -1, w, -1};
    const auto vars_it = dict_.variants.find(w);
    if (vars_it == dict_.variants.end()) return bag;
    const auto& vars = vars_it->second;
    const int n = static_cast<int>(batch_.items.size());
    for (int j = 0; j < n; ++j) {
      const auto& item = batch_.items[static_cast<std::size_t>(j)];
      const bool fg_demoted = config_.fg_negative_for_background && w == item.fg_word;
      const bool in_subtitle = item.subtitle_tokens.count(w) != 0 && !fg_demoted;
      for (int k = 0; k < static_cast<int>(item.bg_windows.size()); ++k) {
        if (in_subtitle)
          add_pairs(bag.positives, {j, k}, w, vars);
        else if (background_clip_negative(j, w, config_.fg_negative_for_background))
          add_pairs(bag.negatives, {j, k}, w, vars);
      }
      if (labeled_clip_negative(j, w)) add_pairs(bag.negatives, {j, -1}, w, vars);
    }
    return bag;
  }

  const Minibatch& batch_;
  const BagConfig& config_;
  BatchDictIndex dict_;
  BagStats* stats_;
};

}  // namespace detail

inline std::vector<AnchoredBags> build_watch_lookup_bags(const Minibatch& batch,
                                                         const BagConfig& config = {},
                                                         BagStats* stats = nullptr) {
  Minibatch view = batch;
  view.mode = TrainMode::kWatchLookup;
  return detail::BagBuilder(view, config, stats).build();
}

inline std::vector<AnchoredBags> build_watch_read_lookup_bags(const Minibatch& batch,
                                                              const BagConfig& config = {},
                                                              BagStats* stats = nullptr) {
  Minibatch view = batch;
  view.mode = TrainMode::kWatchReadLookup;
  return detail::BagBuilder(view, config, stats).build();
}

// Single-instance restriction: every anchor keeps exactly one positive,
// uniformly resampled on each call. Multi-variant words therefore rotate
// their positive variant across steps.
inline std::vector<AnchoredBags> restrict_to_single_positive(std::vector<AnchoredBags> bags, Rng& rng) {
  for (auto& bag : bags) {
    if (bag.positives.size() <= 1) continue;
    const auto pick = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(bag.positives.size()) - 1));
    bag.positives = {bag.positives[pick]};
  }
  return bags;
}

inline std::vector<AnchoredBags> build_bags(const Minibatch& batch, const BagConfig& config = {},
                                            BagStats* stats = nullptr, Rng* rng = nullptr) {
  switch (batch.mode) {
    case TrainMode::kWatchLookup:
      return build_watch_lookup_bags(batch, config, stats);
    case TrainMode::kWatchReadLookup:
      return build_watch_read_lookup_bags(batch, config, stats);
    case TrainMode::kInfoNce: {
      if (rng == nullptr) throw DataError("build_bags: infonce mode needs an rng");
      return restrict_to_single_positive(build_watch_lookup_bags(batch, config, stats), *rng);
    }
    case TrainMode::kClassification:
      return {};
  }
  return {};
}

// Stable one-line-per-anchor dump for diffing.
inline void dump_bags(std::ostream& os, const std::vector<AnchoredBags>& bags,
                      const Vocabulary& vocab) {
  auto clip_str = [](const ContClipRef& c) {
    return std::to_string(c.item) + ":" + (c.clip < 0 ? "fg" : "bg" + std::to_string(c.clip));
  };
  auto word_str = [&](WordId w) { return w < 0 ? std::string("-") : vocab.word(w); };
  for (const auto& bag : bags) {
    os << to_string(bag.anchor.type) << " item=" << bag.anchor.item
       << " word=" << word_str(bag.anchor.word);
    if (bag.anchor.clip >= 0) os << " clip=bg" << bag.anchor.clip;
    os << " | P:";
    for (const auto& p : bag.positives)
      os << " (" << clip_str(p.cont) << "," << word_str(p.dict.word) << ":" << p.dict.variant << ")";
    os << " | N:";
    for (const auto& p : bag.negatives)
      os << " (" << clip_str(p.cont) << "," << word_str(p.dict.word) << ":" << p.dict.variant << ")";
    os << "\n";
  }
}

}  // namespace wrl
