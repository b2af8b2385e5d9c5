#pragma once

#include <algorithm>
#include <ostream>
#include <string>
#include <vector>

#include "wrl/corpus.hpp"
#include "wrl/error.hpp"
#include "wrl/model.hpp"
#include "wrl/sampler.hpp"

namespace wrl {

// Sliding-window embeddings of a continuous sequence. windows[i] is the
// window start of column i.
template <class Real>
struct SequenceEmbedding {
  std::vector<int> windows;
  Mat<Real> embeddings;  // 256 x |windows|
};

template <class Real>
SequenceEmbedding<Real> embed_sequence(const MlpParams<Real>& params, const ContinuousSequence& seq,
                                       int stride = 1) {
  if (stride < 1) throw DataError("embed_sequence: stride must be >= 1");
  SequenceEmbedding<Real> out;
  for (int w = 0; w < seq.num_windows(); w += stride) out.windows.push_back(w);
  Mat<Real> x(kTrunkDim, static_cast<Eigen::Index>(out.windows.size()));
  for (std::size_t i = 0; i < out.windows.size(); ++i)
    x.col(static_cast<Eigen::Index>(i)) =
        seq.features.data.row(out.windows[i]).transpose().template cast<Real>();
  out.embeddings = mlp_infer(params, x);
  return out;
}

// Per-variant embeddings of one dictionary entry (subclips pooled, then MLP).
template <class Real>
Mat<Real> embed_dictionary_entry(const MlpParams<Real>& params, const DictionaryEntry& entry) {
  Mat<Real> x(kTrunkDim, static_cast<Eigen::Index>(entry.variants.size()));
  for (std::size_t v = 0; v < entry.variants.size(); ++v)
    x.col(static_cast<Eigen::Index>(v)) = pool_dictionary<Real>(entry.variants[v]);
  return mlp_infer(params, x);
}

struct SpotResult {
  WordId word = -1;
  int best_frame = -1;    // window start of the maximum
  int best_variant = -1;
  double score = 0.0;
  std::vector<int> windows;
  Eigen::MatrixXd trace;  // |windows| x |variants| similarities
};

// Maximum-similarity search of one word's variant set over a sequence. Ties
// break to the smallest window, then the smallest variant index.
template <class Real>
SpotResult spot(const SequenceEmbedding<Real>& seq_emb, const Mat<Real>& variant_embeddings,
                WordId word = -1, CosineDiagnostics* diag = nullptr) {
  const int nw = static_cast<int>(seq_emb.windows.size());
  const int nv = static_cast<int>(variant_embeddings.cols());
  if (nv < 1) throw DataError("spot: no variant embeddings");
  SpotResult result;
  result.word = word;
  result.windows = seq_emb.windows;
  result.trace.resize(nw, nv);
  for (int w = 0; w < nw; ++w)
    for (int v = 0; v < nv; ++v)
      result.trace(w, v) = static_cast<double>(
          cosine<Real>(seq_emb.embeddings.col(w), variant_embeddings.col(v), diag));
  result.score = result.trace(0, 0);
  result.best_frame = seq_emb.windows[0];
  result.best_variant = 0;
  for (int w = 0; w < nw; ++w) {
    for (int v = 0; v < nv; ++v) {
      if (result.trace(w, v) > result.score) {
        result.score = result.trace(w, v);
        result.best_frame = seq_emb.windows[static_cast<std::size_t>(w)];
        result.best_variant = v;
      }
    }
  }
  return result;
}

// Spot every subtitle word that has a dictionary entry. Words without one are
// counted, not errors.
template <class Real>
std::vector<SpotResult> densify(const MlpParams<Real>& params, const Corpus& corpus,
                                const ContinuousSequence& seq, int stride = 1,
                                int* skipped_words = nullptr) {
  const auto tokens = tokenize(seq.subtitle, corpus.vocabulary);
  const SequenceEmbedding<Real> seq_emb = embed_sequence(params, seq, stride);
  std::vector<SpotResult> results;
  for (const WordId w : tokens) {
    const auto* entry = corpus.dict_entry(w);
    if (!entry) {
      if (skipped_words) ++(*skipped_words);
      continue;
    }
    results.push_back(spot(seq_emb, embed_dictionary_entry(params, *entry), w));
  }
  return results;
}

struct NeighborHit {
  WordId word_a = -1;
  WordId word_b = -1;
  double score = 0.0;
};

// For every entry of dictionary A, the k nearest entries of dictionary B by
// embedding similarity. Entry-level score is the max over variant pairs.
template <class Real>
std::vector<NeighborHit> cross_dictionary_neighbors(const Corpus& dict_a, const Corpus& dict_b,
                                                    const MlpParams<Real>& params, int k) {
  if (k < 1) throw DataError("cross_dictionary_neighbors: k must be >= 1");
  std::vector<Mat<Real>> emb_a, emb_b;
  for (const auto& e : dict_a.dictionary) emb_a.push_back(embed_dictionary_entry(params, e));
  for (const auto& e : dict_b.dictionary) emb_b.push_back(embed_dictionary_entry(params, e));

  std::vector<NeighborHit> out;
  for (std::size_t ia = 0; ia < emb_a.size(); ++ia) {
    std::vector<NeighborHit> scored;
    for (std::size_t ib = 0; ib < emb_b.size(); ++ib) {
      double best = -2.0;
      for (Eigen::Index va = 0; va < emb_a[ia].cols(); ++va)
        for (Eigen::Index vb = 0; vb < emb_b[ib].cols(); ++vb)
          best = std::max(best, static_cast<double>(
                                    cosine<Real>(emb_a[ia].col(va), emb_b[ib].col(vb))));
      scored.push_back({dict_a.dictionary[ia].word, dict_b.dictionary[ib].word, best});
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const NeighborHit& x, const NeighborHit& y) { return x.score > y.score; });
    const std::size_t take = std::min(static_cast<std::size_t>(k), scored.size());
    out.insert(out.end(), scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return out;
}

// CSV trace of a spot run: window_start,variant,similarity.
inline void write_trace_csv(std::ostream& os, const SpotResult& result) {
  os << "window_start,variant,similarity\n";
  for (Eigen::Index w = 0; w < result.trace.rows(); ++w)
    for (Eigen::Index v = 0; v < result.trace.cols(); ++v)
      os << result.windows[static_cast<std::size_t>(w)] << "," << v << "," << result.trace(w, v)
         << "\n";
}

}  // namespace wrl
