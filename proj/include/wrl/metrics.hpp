#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wrl/corpus.hpp"
#include "wrl/error.hpp"
#include "wrl/model.hpp"
#include "wrl/spotting.hpp"

namespace wrl {

// A retrieved match counts only if the words agree and the predicted window
// start lies within [t-20, t+5] around the annotated frame.
inline bool correctness_predicate(WordId query_word, const ContinuousSequence& clip,
                                  int predicted_frame) {
  if (!clip.annotation) throw DataError("correctness_predicate: clip '" + clip.id + "' unannotated");
  if (clip.annotation->word != query_word) return false;
  const int t = clip.annotation->frame;
  return predicted_frame >= t - 20 && predicted_frame <= t + 5;
}

// AP of a ranked 0/1 relevance list: mean of precision-at-rank over the
// relevant hits, divided by the total relevant count.
inline double average_precision(const std::vector<int>& ranked_relevance, int total_relevant) {
  if (total_relevant <= 0) return 0.0;
  double sum = 0.0;
  int hits = 0;
  for (std::size_t r = 0; r < ranked_relevance.size(); ++r) {
    if (ranked_relevance[r]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(total_relevant);
}

struct ClassMetrics {
  double map = 0.0;
  double r_at_k = 0.0;
  int num_queries = 0;  // dictionary videos of this word
  int num_clips = 0;    // annotated test clips of this word
};

struct EvalReport {
  std::string split = "all";
  int k = 5;
  int stride = 1;
  std::map<std::string, ClassMetrics> per_class;
  double aggregate_map = 0.0;
  double aggregate_r_at_k = 0.0;
  double localization_accuracy = 0.0;
  double random_map_baseline = 0.0;  // analytic chance level for the same classes
  int num_classes = 0;
  int num_test_clips = 0;
  int num_dict_videos = 0;
  int skipped_classes = 0;      // missing dictionary videos or test clips
  int unannotated_sequences = 0;

  nlohmann::json to_json() const {
    nlohmann::json per;
    for (const auto& [word, m] : per_class)
      per[word] = {{"map", m.map},
                   {"r_at_k", m.r_at_k},
                   {"num_queries", m.num_queries},
                   {"num_clips", m.num_clips}};
    return nlohmann::json{{"split", split},
                          {"k", k},
                          {"stride", stride},
                          {"per_class", per},
                          {"aggregate", {{"map", aggregate_map}, {"r_at_k", aggregate_r_at_k}}},
                          {"localization_accuracy", localization_accuracy},
                          {"random_map_baseline", random_map_baseline},
                          {"counts",
                           {{"classes", num_classes},
                            {"test_clips", num_test_clips},
                            {"dict_videos", num_dict_videos},
                            {"skipped_classes", skipped_classes},
                            {"unannotated_sequences", unannotated_sequences}}}};
  }

  // Percentage-scaled summary row for experiment tables.
  static void write_csv_header(std::ostream& os) {
    os << "split,k,stride,map_pct,r_at_k_pct,localization_accuracy_pct,classes,test_clips\n";
  }
  void write_csv_row(std::ostream& os) const {
    os << split << "," << k << "," << stride << "," << 100.0 * aggregate_map << ","
       << 100.0 * aggregate_r_at_k << "," << 100.0 * localization_accuracy << "," << num_classes
       << "," << num_test_clips << "\n";
  }
};

namespace detail {

inline double harmonic(int n) {
  double h = 0.0;
  for (int i = 1; i <= n; ++i) h += 1.0 / i;
  return h;
}

}  // namespace detail

// Expected AP of a uniformly random ranking of pool_size items where each
// clip of the class is independently relevant with its own probability (the
// chance that a random localization lands in the correctness window):
//   E[AP] = P(R>=1) H_N/N + (E[R] - P(R>=1)) (N - H_N) / (N (N-1)).
inline double expected_random_ap(const std::vector<double>& relevance_probs, int pool_size) {
  const int n = pool_size;
  if (n <= 0 || relevance_probs.empty()) return 0.0;
  double p_none = 1.0, expected_r = 0.0;
  for (const double q : relevance_probs) {
    p_none *= 1.0 - q;
    expected_r += q;
  }
  const double p_any = 1.0 - p_none;
  const double hn = detail::harmonic(n);
  if (n == 1) return p_any;
  return p_any * hn / n + (expected_r - p_any) * (n - hn) / (static_cast<double>(n) * (n - 1));
}

// Everything the ranking metrics need, independent of how scores were
// produced. scores/argmax_window are (dictionary video) x (test clip).
struct ScoreTables {
  std::vector<WordId> clip_word;
  std::vector<int> clip_frame;           // annotated frame per clip
  std::vector<double> clip_hit_probability;  // chance of a random localization hit
  std::vector<WordId> dict_word;
  Eigen::MatrixXd scores;
  Eigen::MatrixXi argmax_window;
};

// Class-averaged mAP / R@k / localization accuracy over precomputed score
// tables. Classes missing either dictionary videos or test clips are skipped
// and counted. Ranking ties break by index (stable).
inline EvalReport evaluate_tables(const Vocabulary& vocab, const std::vector<SplitTag>& tags,
                                  const ScoreTables& t, std::optional<SplitTag> class_filter,
                                  int k = 5, const std::string& split_name = "all", int stride = 1) {
  const int ncl = static_cast<int>(t.clip_word.size());
  const int nd = static_cast<int>(t.dict_word.size());
  if (t.scores.rows() != nd || t.scores.cols() != ncl)
    throw DataError("evaluate_tables: score table shape mismatch");

  EvalReport report;
  report.split = split_name;
  report.k = k;
  report.stride = stride;
  report.num_test_clips = ncl;
  report.num_dict_videos = nd;

  std::map<WordId, std::vector<int>> clips_of, dvs_of;
  for (int c = 0; c < ncl; ++c) clips_of[t.clip_word[static_cast<std::size_t>(c)]].push_back(c);
  for (int d = 0; d < nd; ++d) dvs_of[t.dict_word[static_cast<std::size_t>(d)]].push_back(d);

  auto within_window = [&](int c, int predicted) {
    const int frame = t.clip_frame[static_cast<std::size_t>(c)];
    return predicted >= frame - 20 && predicted <= frame + 5;
  };

  std::vector<WordId> classes;
  for (WordId w = 0; w < vocab.size(); ++w) {
    if (class_filter && tags.at(static_cast<std::size_t>(w)) != *class_filter) continue;
    const bool has_clips = clips_of.count(w) != 0;
    const bool has_dvs = dvs_of.count(w) != 0;
    if (!has_clips && !has_dvs) continue;
    if (!has_clips || !has_dvs) {
      ++report.skipped_classes;
      continue;
    }
    classes.push_back(w);
  }

  double map_sum = 0.0, rk_sum = 0.0, baseline_sum = 0.0;
  int loc_ok = 0, loc_total = 0;
  for (const WordId w : classes) {
    const auto& w_clips = clips_of.at(w);
    const auto& w_dvs = dvs_of.at(w);

    // mAP: each dictionary video of w queries the full clip pool.
    double ap_sum = 0.0;
    for (const int d : w_dvs) {
      std::vector<int> order(static_cast<std::size_t>(ncl));
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return t.scores(d, a) > t.scores(d, b); });
      std::vector<int> rel(order.size(), 0);
      int total_rel = 0;
      for (std::size_t r = 0; r < order.size(); ++r) {
        const int c = order[r];
        const bool ok =
            t.clip_word[static_cast<std::size_t>(c)] == w && within_window(c, t.argmax_window(d, c));
        rel[r] = ok ? 1 : 0;
        total_rel += ok ? 1 : 0;
      }
      ap_sum += average_precision(rel, total_rel);
    }
    const double class_map = ap_sum / static_cast<double>(w_dvs.size());

    // R@k: each clip of w retrieves dictionary videos.
    double recall_sum = 0.0;
    for (const int c : w_clips) {
      std::vector<int> order(static_cast<std::size_t>(nd));
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return t.scores(a, c) > t.scores(b, c); });
      int in_top = 0;
      const int top = std::min<int>(k, nd);
      for (int r = 0; r < top; ++r)
        if (t.dict_word[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] == w) ++in_top;
      recall_sum += static_cast<double>(in_top) / static_cast<double>(w_dvs.size());
    }
    const double class_rk = recall_sum / static_cast<double>(w_clips.size());

    // Localization: the clip's own word queried with all its variants; the
    // winning video's argmax window is the prediction (ties: smaller window,
    // then earlier video).
    for (const int c : w_clips) {
      int best_d = w_dvs[0];
      double best = t.scores(best_d, c);
      int best_window = t.argmax_window(best_d, c);
      for (const int d : w_dvs) {
        const double s = t.scores(d, c);
        const int win = t.argmax_window(d, c);
        if (s > best || (s == best && win < best_window)) {
          best = s;
          best_d = d;
          best_window = win;
        }
      }
      ++loc_total;
      if (within_window(c, best_window)) ++loc_ok;
    }

    std::vector<double> probs;
    for (const int c : w_clips) probs.push_back(t.clip_hit_probability[static_cast<std::size_t>(c)]);
    baseline_sum += expected_random_ap(probs, ncl);

    report.per_class[vocab.word(w)] = {class_map, class_rk, static_cast<int>(w_dvs.size()),
                                       static_cast<int>(w_clips.size())};
    map_sum += class_map;
    rk_sum += class_rk;
  }

  report.num_classes = static_cast<int>(classes.size());
  if (!classes.empty()) {
    report.aggregate_map = map_sum / static_cast<double>(classes.size());
    report.aggregate_r_at_k = rk_sum / static_cast<double>(classes.size());
    report.random_map_baseline = baseline_sum / static_cast<double>(classes.size());
  }
  if (loc_total > 0)
    report.localization_accuracy = static_cast<double>(loc_ok) / static_cast<double>(loc_total);
  return report;
}

// Cross-domain retrieval evaluation: embeds the annotated test sequences with
// a sliding window and every dictionary variant, scores all pairs, then
// defers to evaluate_tables.
template <class Real>
class Evaluator {
 public:
  Evaluator(const Corpus& corpus, const MlpParams<Real>& params, int stride = 1)
      : corpus_(corpus), stride_(stride) {
    std::vector<int> clips;
    for (std::size_t i = 0; i < corpus.continuous.size(); ++i) {
      if (corpus.continuous[i].annotation)
        clips.push_back(static_cast<int>(i));
      else
        ++unannotated_;
    }
    struct DictVideo {
      WordId word;
      int entry;
      int variant;
    };
    std::vector<DictVideo> dict_videos;
    for (std::size_t e = 0; e < corpus.dictionary.size(); ++e)
      for (std::size_t v = 0; v < corpus.dictionary[e].variants.size(); ++v)
        dict_videos.push_back(
            {corpus.dictionary[e].word, static_cast<int>(e), static_cast<int>(v)});

    const int nd = static_cast<int>(dict_videos.size());
    const int ncl = static_cast<int>(clips.size());

    Mat<Real> dict_emb;
    {
      Mat<Real> x(kTrunkDim, nd);
      for (int d = 0; d < nd; ++d) {
        const auto& dv = dict_videos[static_cast<std::size_t>(d)];
        x.col(d) = pool_dictionary<Real>(
            corpus.dictionary[static_cast<std::size_t>(dv.entry)]
                .variants[static_cast<std::size_t>(dv.variant)]);
      }
      dict_emb = mlp_infer(params, x);
      normalize_columns(dict_emb);
    }

    tables_.clip_word.resize(static_cast<std::size_t>(ncl));
    tables_.clip_frame.resize(static_cast<std::size_t>(ncl));
    tables_.clip_hit_probability.resize(static_cast<std::size_t>(ncl));
    tables_.dict_word.resize(static_cast<std::size_t>(nd));
    for (int d = 0; d < nd; ++d)
      tables_.dict_word[static_cast<std::size_t>(d)] = dict_videos[static_cast<std::size_t>(d)].word;
    tables_.scores.resize(nd, ncl);
    tables_.argmax_window.resize(nd, ncl);

    for (int c = 0; c < ncl; ++c) {
      const auto& seq =
          corpus.continuous[static_cast<std::size_t>(clips[static_cast<std::size_t>(c)])];
      tables_.clip_word[static_cast<std::size_t>(c)] = seq.annotation->word;
      tables_.clip_frame[static_cast<std::size_t>(c)] = seq.annotation->frame;
      tables_.clip_hit_probability[static_cast<std::size_t>(c)] = hit_probability(seq);

      SequenceEmbedding<Real> se = embed_sequence(params, seq, stride_);
      normalize_columns(se.embeddings);
      const Mat<Real> table = dict_emb.transpose() * se.embeddings;  // nd x windows
      for (int d = 0; d < nd; ++d) {
        int best_w = 0;
        Real best = table(d, 0);
        for (int w = 1; w < static_cast<int>(se.windows.size()); ++w) {
          if (table(d, w) > best) {
            best = table(d, w);
            best_w = w;
          }
        }
        tables_.scores(d, c) = static_cast<double>(best);
        tables_.argmax_window(d, c) = se.windows[static_cast<std::size_t>(best_w)];
      }
    }
  }

  EvalReport evaluate(std::optional<SplitTag> class_filter, int k = 5,
                      const std::string& split_name = "all") const {
    EvalReport report = evaluate_tables(corpus_.vocabulary, corpus_.split_tags, tables_,
                                        class_filter, k, split_name, stride_);
    report.unannotated_sequences = unannotated_;
    return report;
  }

  const ScoreTables& tables() const { return tables_; }

 private:
  static void normalize_columns(Mat<Real>& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const Real n = m.col(j).norm();
      if (n != Real(0)) m.col(j) /= n;
    }
  }

  // Probability that a uniformly random window start (under this stride)
  // lands in the correctness interval.
  double hit_probability(const ContinuousSequence& seq) const {
    const int frame = seq.annotation->frame;
    int valid = 0, total = 0;
    for (int w = 0; w < seq.num_windows(); w += stride_) {
      ++total;
      if (w >= frame - 20 && w <= frame + 5) ++valid;
    }
    return total > 0 ? static_cast<double>(valid) / total : 0.0;
  }

  const Corpus& corpus_;
  int stride_ = 1;
  ScoreTables tables_;
  int unannotated_ = 0;
};

}  // namespace wrl
