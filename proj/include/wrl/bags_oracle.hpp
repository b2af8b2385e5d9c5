#pragma once

// Brute-force reference for the bag builders. Intentionally naive: for every
// anchor it walks every (continuous clip, dictionary video) combination in
// the batch and tests set membership predicates spelled out longhand. Keep
// this file free of the indexing shortcuts bags.hpp uses; unit and acceptance
// tests compare the two for set equality on small batches.

#include <set>
#include <vector>

#include "wrl/bags.hpp"
#include "wrl/error.hpp"
#include "wrl/sampler.hpp"

namespace wrl::oracle {

namespace detail {

struct Clip {
  int item;
  int clip;  // -1 fg, >=0 bg index
};

struct DictVideo {
  WordId word;
  int variant;
};

inline std::vector<Clip> all_clips(const Minibatch& batch) {
  std::vector<Clip> clips;
  for (int i = 0; i < static_cast<int>(batch.items.size()); ++i) {
    clips.push_back({i, -1});
    for (int k = 0; k < static_cast<int>(batch.items[static_cast<std::size_t>(i)].bg_windows.size()); ++k)
      clips.push_back({i, k});
  }
  return clips;
}

inline std::vector<DictVideo> all_dict_videos(const Minibatch& batch) {
  std::set<std::pair<WordId, int>> seen;
  for (const auto& item : batch.items) {
    for (const int v : item.fg_dict) seen.insert({item.fg_word, v});
    for (const auto& [w, vars] : item.bg_dict)
      for (const int v : vars) seen.insert({w, v});
  }
  std::vector<DictVideo> out;
  for (const auto& [w, v] : seen) out.push_back({w, v});
  return out;
}

inline bool words_synonymous(const BagConfig& cfg, WordId a, WordId b) {
  return cfg.synonym_policy == SynonymPolicy::kDiscard && cfg.synonyms != nullptr &&
         cfg.synonyms->synonymous(a, b);
}

// True when the evidence carried by the batch proves that dictionary word u
// cannot be the sign in this clip.
inline bool provably_mismatched(const Minibatch& batch, const BagConfig& cfg, const Clip& c, WordId u) {
  const auto& item = batch.items[static_cast<std::size_t>(c.item)];
  if (c.clip == -1) {
    if (u == item.fg_word) return false;
    if (words_synonymous(cfg, u, item.fg_word)) return false;
    return true;
  }
  if (u == item.fg_word) {
    // The annotated word's occurrence is inside the labelled window, which
    // background clips avoid; admissible only under the figure behavior.
    if (!cfg.fg_negative_for_background) return false;
    return !words_synonymous(cfg, u, item.fg_word);
  }
  if (item.subtitle_tokens.count(u)) return false;
  if (words_synonymous(cfg, u, item.fg_word)) return false;
  for (const WordId t : item.subtitle_tokens)
    if (words_synonymous(cfg, u, t)) return false;
  return true;
}

inline void insert_bag(std::vector<AnchoredBags>& out, const Anchor& anchor,
                       const std::set<PairRef>& pos, const std::set<PairRef>& neg) {
  if (pos.empty() || neg.empty()) return;
  AnchoredBags bag;
  bag.anchor = anchor;
  bag.positives.assign(pos.begin(), pos.end());
  bag.negatives.assign(neg.begin(), neg.end());
  out.push_back(std::move(bag));
}

}  // namespace detail

inline std::vector<AnchoredBags> oracle_bags(const Minibatch& batch, TrainMode mode,
                                             const BagConfig& cfg = {}) {
  if (batch.items.size() > 6) throw DataError("oracle_bags: batch too large for exhaustive oracle");
  using detail::provably_mismatched;
  const auto clips = detail::all_clips(batch);
  const auto dict_videos = detail::all_dict_videos(batch);
  const int n = static_cast<int>(batch.items.size());
  const bool wrl = mode == TrainMode::kWatchReadLookup;

  std::vector<AnchoredBags> out;

  for (int i = 0; i < n; ++i) {
    const auto& item = batch.items[static_cast<std::size_t>(i)];
    const WordId v = item.fg_word;
    const std::set<int> own_variants(item.fg_dict.begin(), item.fg_dict.end());

    // seg-fore: anchor the labelled clip of item i.
    {
      std::set<PairRef> pos, neg;
      for (const auto& c : clips) {
        if (!(c.item == i && c.clip == -1)) continue;
        for (const auto& d : dict_videos) {
          if (d.word == v && own_variants.count(d.variant))
            pos.insert(PairRef{{c.item, c.clip}, {d.word, d.variant}});
          if (d.word != v && provably_mismatched(batch, cfg, c, d.word))
            neg.insert(PairRef{{c.item, c.clip}, {d.word, d.variant}});
        }
      }
      detail::insert_bag(out, {AnchorType::kSegFore, i, v, -1}, pos, neg);
    }

    // dict-fore: anchor the variant set of item i's labelled word.
    {
      std::set<PairRef> pos, neg;
      for (const auto& d : dict_videos) {
        if (!(d.word == v && own_variants.count(d.variant))) continue;
        for (const auto& c : clips) {
          if (c.item == i && c.clip == -1) pos.insert(PairRef{{c.item, c.clip}, {d.word, d.variant}});
          if (c.item != i && c.clip == -1 && provably_mismatched(batch, cfg, c, v))
            neg.insert(PairRef{{c.item, c.clip}, {d.word, d.variant}});
          if (wrl && c.item != i && c.clip >= 0) {
            const auto& other = batch.items[static_cast<std::size_t>(c.item)];
            // only subtitle/annotation exclusion counts here, not the
            // labelled-window argument (that applies to the clip's own item)
            if (v != other.fg_word && !other.subtitle_tokens.count(v) &&
                provably_mismatched(batch, cfg, c, v))
              neg.insert(PairRef{{c.item, c.clip}, {d.word, d.variant}});
          }
        }
      }
      detail::insert_bag(out, {AnchorType::kDictFore, i, v, -1}, pos, neg);
    }

    if (!wrl) continue;

    if (!cfg.lumped) {
      for (const auto& [w, wvars] : item.bg_dict) {
        const std::set<int> wvar_set(wvars.begin(), wvars.end());
        // seg-back(i, w): anchor the background clips of item i.
        {
          std::set<PairRef> pos, neg;
          for (const auto& c : clips) {
            if (!(c.item == i && c.clip >= 0)) continue;
            for (const auto& d : dict_videos) {
              if (d.word == w && wvar_set.count(d.variant))
                pos.insert(PairRef{{c.item, c.clip}, {d.word, d.variant}});
              if (d.word != w && provably_mismatched(batch, cfg, c, d.word))
                neg.insert(PairRef{{c.item, c.clip}, {d.word, d.variant}});
            }
          }
          detail::insert_bag(out, {AnchorType::kSegBack, i, w, -1}, pos, neg);
        }
        // dict-back(i, w): anchor the variant set of background word w.
        {
          std::set<PairRef> pos, neg;
          for (const auto& d : dict_videos) {
            if (!(d.word == w && wvar_set.count(d.variant))) continue;
            for (const auto& c : clips) {
              if (c.item == i && c.clip >= 0) pos.insert(PairRef{{c.item, c.clip}, {d.word, d.variant}});
              if (c.item == i && c.clip == -1 && provably_mismatched(batch, cfg, c, w))
                neg.insert(PairRef{{c.item, c.clip}, {d.word, d.variant}});
              if (c.item != i && provably_mismatched(batch, cfg, c, w)) {
                if (c.clip == -1) {
                  neg.insert(PairRef{{c.item, c.clip}, {d.word, d.variant}});
                } else {
                  const auto& other = batch.items[static_cast<std::size_t>(c.item)];
                  if (!other.subtitle_tokens.count(w) && w != other.fg_word)
                    neg.insert(PairRef{{c.item, c.clip}, {d.word, d.variant}});
                }
              }
            }
          }
          detail::insert_bag(out, {AnchorType::kDictBack, i, w, -1}, pos, neg);
        }
      }
    } else {
      // lumped seg-back: one bag per background clip, positives across all
      // subtitle words.
      for (int k = 0; k < static_cast<int>(item.bg_windows.size()); ++k) {
        std::set<PairRef> pos, neg;
        for (const auto& d : dict_videos) {
          const bool demoted = cfg.fg_negative_for_background && d.word == v;
          if (item.subtitle_tokens.count(d.word) && !demoted)
            pos.insert(PairRef{{i, k}, {d.word, d.variant}});
          else if (provably_mismatched(batch, cfg, {i, k}, d.word))
            neg.insert(PairRef{{i, k}, {d.word, d.variant}});
        }
        detail::insert_bag(out, {AnchorType::kSegBack, i, -1, k}, pos, neg);
      }
    }
  }

  if (wrl && cfg.lumped) {
    std::set<WordId> bg_words;
    for (const auto& item : batch.items)
      for (const auto& [w, vars] : item.bg_dict) bg_words.insert(w);
    for (const WordId w : bg_words) {
      std::set<int> wvar_set;
      for (const auto& item : batch.items) {
        const auto it = item.bg_dict.find(w);
        if (it != item.bg_dict.end()) wvar_set.insert(it->second.begin(), it->second.end());
      }
      std::set<PairRef> pos, neg;
      for (const auto& d : dict_videos) {
        if (!(d.word == w && wvar_set.count(d.variant))) continue;
        for (const auto& c : clips) {
          const auto& item = batch.items[static_cast<std::size_t>(c.item)];
          if (c.clip >= 0) {
            const bool demoted = cfg.fg_negative_for_background && w == item.fg_word;
            if (item.subtitle_tokens.count(w) && !demoted)
              pos.insert(PairRef{{c.item, c.clip}, {d.word, d.variant}});
            else if (provably_mismatched(batch, cfg, c, w))
              neg.insert(PairRef{{c.item, c.clip}, {d.word, d.variant}});
          } else if (provably_mismatched(batch, cfg, c, w)) {
            neg.insert(PairRef{{c.item, c.clip}, {d.word, d.variant}});
          }
        }
      }
      detail::insert_bag(out, {AnchorType::kDictBack, -1, w, -1}, pos, neg);
    }
  }

  return out;
}

}  // namespace wrl::oracle
