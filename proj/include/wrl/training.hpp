#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "wrl/bags.hpp"
#include "wrl/corpus.hpp"
#include "wrl/loss.hpp"
#include "wrl/model.hpp"
#include "wrl/sampler.hpp"

namespace wrl {

struct TrainConfig {
  TrainMode mode = TrainMode::kWatchReadLookup;
  double tau = 0.07;
  int batch_size = 128;
  int epochs = 50;
  double lr = 1e-2;
  std::vector<int> lr_decay_epochs = {40, 45};
  double lr_decay_factor = 10.0;
  double momentum = 0.0;
  bool class_balanced = true;
  DictVocab dict_vocab = DictVocab::kTrainingVocab;
  SynonymPolicy synonym_policy = SynonymPolicy::kKeepAll;
  const SynonymTable* synonyms = nullptr;
  bool fg_negative_for_background = true;
  bool lumped_bags = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (tau <= 0) throw ConfigError("config: tau must be > 0");
    if (lr <= 0) throw ConfigError("config: lr must be > 0");
    if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (lr_decay_factor <= 0) throw ConfigError("config: lr_decay_factor must be > 0");
    for (const int d : lr_decay_epochs)
      if (d >= epochs) throw ConfigError("config: decay epoch " + std::to_string(d) + " >= epochs");
  }

  double lr_at_epoch(int epoch) const {  // 1-based
    int decays = 0;
    for (const int d : lr_decay_epochs)
      if (d < epoch) ++decays;
    return lr / std::pow(lr_decay_factor, decays);
  }
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
};

struct TrainStats {
  BagStats bags;
  CosineDiagnostics cosine;
  long long steps = 0;
  long long skipped_batches = 0;  // batches that emitted no usable anchor
};

// Demotes annotations of unseen-test words to background so the unseen
// protocol never trains on them. The sequences stay (their subtitles still
// supervise watch-read-lookup).
inline Corpus demote_unseen_annotations(Corpus corpus) {
  for (auto& seq : corpus.continuous)
    if (seq.annotation && !corpus.is_seen(seq.annotation->word)) seq.annotation.reset();
  return corpus;
}

namespace detail {

// Pack annotated sequence indices into batches for one epoch. Balanced
// batches hold pairwise-distinct annotation words; only full batches train.
inline std::vector<std::vector<int>> pack_epoch(const Corpus& corpus, std::vector<int> annotated,
                                                int batch_size, bool class_balanced, Rng& rng) {
  rng.shuffle(annotated);
  std::vector<std::vector<int>> batches;
  if (class_balanced) {
    std::vector<std::set<WordId>> words_in;
    for (const int si : annotated) {
      const WordId w = corpus.continuous[static_cast<std::size_t>(si)].annotation->word;
      bool placed = false;
      for (std::size_t b = 0; b < batches.size(); ++b) {
        if (static_cast<int>(batches[b].size()) >= batch_size) continue;
        if (words_in[b].count(w)) continue;
        batches[b].push_back(si);
        words_in[b].insert(w);
        placed = true;
        break;
      }
      if (!placed) {
        batches.push_back({si});
        words_in.push_back({w});
      }
    }
  } else {
    for (std::size_t i = 0; i + static_cast<std::size_t>(batch_size) <= annotated.size();
         i += static_cast<std::size_t>(batch_size))
      batches.emplace_back(annotated.begin() + static_cast<std::ptrdiff_t>(i),
                           annotated.begin() + static_cast<std::ptrdiff_t>(i + static_cast<std::size_t>(batch_size)));
    return batches;
  }
  std::vector<std::vector<int>> full;
  for (auto& b : batches)
    if (static_cast<int>(b.size()) == batch_size) full.push_back(std::move(b));
  return full;
}

template <class Real>
struct SgdState {
  MlpGrads<Real> velocity = MlpGrads<Real>::zeros();
  Mat<Real> classifier_velocity;

  void apply(MlpParams<Real>& p, const MlpGrads<Real>& g, Real lr, Real momentum) {
    if (momentum != Real(0)) {
      velocity.w1 = momentum * velocity.w1 + g.w1;
      velocity.b1 = momentum * velocity.b1 + g.b1;
      velocity.w2 = momentum * velocity.w2 + g.w2;
      velocity.b2 = momentum * velocity.b2 + g.b2;
      velocity.w3 = momentum * velocity.w3 + g.w3;
      velocity.b3 = momentum * velocity.b3 + g.b3;
      p.w1 -= lr * velocity.w1; p.b1 -= lr * velocity.b1;
      p.w2 -= lr * velocity.w2; p.b2 -= lr * velocity.b2;
      p.w3 -= lr * velocity.w3; p.b3 -= lr * velocity.b3;
    } else {
      p.w1 -= lr * g.w1; p.b1 -= lr * g.b1;
      p.w2 -= lr * g.w2; p.b2 -= lr * g.b2;
      p.w3 -= lr * g.w3; p.b3 -= lr * g.b3;
    }
  }
};

}  // namespace detail

// MIL-NCE over MLP embeddings of an explicit node set: embeds the input
// columns, scores the listed (node, node) pairs with cosine, applies the loss,
// and backpropagates to parameter gradients if requested. The bags index into
// `pairs`. Returns the loss.
template <class Real>
Real embedding_pair_loss(const MlpParams<Real>& params, Mat<Real> inputs,
                         const std::vector<std::pair<int, int>>& pairs,
                         const std::vector<IndexedBag>& bags, Real tau,
                         MlpGrads<Real>* grads_out = nullptr, CosineDiagnostics* diag = nullptr) {
  const int n = static_cast<int>(inputs.cols());
  MlpActivations<Real> acts = mlp_forward(params, std::move(inputs));

  // Unit-normalize embeddings; cosine similarities become plain dot products.
  Mat<Real> ehat = acts.out;
  Vec<Real> norms(n);
  for (int j = 0; j < n; ++j) {
    const Real m = ehat.col(j).norm();
    norms(j) = m;
    if (m == Real(0)) {
      if (diag) ++diag->zero_norm_pairs;
    } else {
      ehat.col(j) /= m;
    }
  }

  std::vector<Real> sims(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i)
    sims[i] = ehat.col(pairs[i].first).dot(ehat.col(pairs[i].second));

  std::vector<Real> dsims;
  const Real loss = mil_nce_indexed(bags, sims, tau, grads_out ? &dsims : nullptr);
  if (!grads_out) return loss;

  // Pull the per-pair gradients back onto the normalized embeddings.
  Mat<Real> g_hat = Mat<Real>::Zero(kEmbedDim, n);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [u, v] = pairs[i];
    g_hat.col(u) += dsims[i] * ehat.col(v);
    g_hat.col(v) += dsims[i] * ehat.col(u);
  }

  // Through the normalization: d(e/|e|) pulls back as (g - (e_hat . g) e_hat) / |e|.
  Mat<Real> g_out(kEmbedDim, n);
  for (int j = 0; j < n; ++j) {
    if (norms(j) == Real(0)) {
      g_out.col(j).setZero();
      continue;
    }
    const Real dot = ehat.col(j).dot(g_hat.col(j));
    g_out.col(j) = (g_hat.col(j) - dot * ehat.col(j)) / norms(j);
  }

  *grads_out = mlp_backward(params, acts, g_out);
  return loss;
}

// Embeds every clip and dictionary variant referenced by the bags, scores all
// referenced pairs with cosine, applies the MIL-NCE (or single-instance)
// loss, and backpropagates to parameter gradients. Returns the loss.
template <class Real>
Real contrastive_step(const Corpus& corpus, const Minibatch& batch,
                      const std::vector<AnchoredBags>& bags, const MlpParams<Real>& params,
                      Real tau, MlpGrads<Real>& grads_out, TrainStats* stats) {
  // Collect referenced nodes.
  std::map<ContClipRef, int> cont_index;
  std::map<DictVideoRef, int> dict_index;
  for (const auto& bag : bags) {
    for (const auto* side : {&bag.positives, &bag.negatives}) {
      for (const auto& pr : *side) {
        cont_index.emplace(pr.cont, 0);
        dict_index.emplace(pr.dict, 0);
      }
    }
  }
  const int nc = static_cast<int>(cont_index.size());
  const int nd = static_cast<int>(dict_index.size());
  if (nc == 0 || nd == 0) throw DataError("contrastive_step: bags reference no nodes");
  {
    int i = 0;
    for (auto& [ref, idx] : cont_index) idx = i++;
    int j = nc;
    for (auto& [ref, idx] : dict_index) idx = j++;
  }

  // Materialize inputs: continuous clips first, then pooled dictionary variants.
  Mat<Real> x(kTrunkDim, nc + nd);
  for (const auto& [ref, idx] : cont_index) {
    const auto& item = batch.items[static_cast<std::size_t>(ref.item)];
    const auto& seq = corpus.continuous[static_cast<std::size_t>(item.seq_index)];
    const int window = ref.clip < 0 ? item.fg_window : item.bg_windows[static_cast<std::size_t>(ref.clip)];
    x.col(idx) = seq.features.data.row(window).transpose().cast<Real>();
  }
  for (const auto& [ref, idx] : dict_index) {
    const auto* entry = corpus.dict_entry(ref.word);
    if (!entry) throw DataError("contrastive_step: missing dictionary entry");
    x.col(idx) = pool_dictionary<Real>(entry->variants[static_cast<std::size_t>(ref.variant)]);
  }

  // Flatten bags against the unique pair list.
  std::map<PairRef, int> pair_index;
  for (const auto& bag : bags) {
    for (const auto* side : {&bag.positives, &bag.negatives})
      for (const auto& pr : *side) pair_index.emplace(pr, 0);
  }
  std::vector<std::pair<int, int>> pairs(pair_index.size());
  {
    int i = 0;
    for (auto& [pr, idx] : pair_index) {
      idx = i;
      pairs[static_cast<std::size_t>(i)] = {cont_index.at(pr.cont), dict_index.at(pr.dict)};
      ++i;
    }
  }
  std::vector<IndexedBag> indexed;
  indexed.reserve(bags.size());
  for (const auto& bag : bags) {
    IndexedBag ib;
    for (const auto& pr : bag.positives) ib.positives.push_back(pair_index.at(pr));
    for (const auto& pr : bag.negatives) ib.negatives.push_back(pair_index.at(pr));
    indexed.push_back(std::move(ib));
  }

  return embedding_pair_loss(params, std::move(x), pairs, indexed, tau, &grads_out,
                             stats ? &stats->cosine : nullptr);
}

template <class Real>
struct TrainResult {
  MlpParams<Real> params;
  std::vector<EpochLog> log;
  TrainStats stats;
};

// Full optimization loop. The checkpoint hook fires after each learning-rate
// boundary epoch and after the final epoch.
template <class Real>
TrainResult<Real> train(const Corpus& corpus, const TrainConfig& config,
                        const std::function<void(int, const MlpParams<Real>&)>& on_checkpoint = {}) {
  config.validate();
  Rng root(config.seed);

  const std::vector<int> annotated = corpus.annotated_sequence_indices();
  if (annotated.empty()) throw DataError("train: no annotated sequences");
  if (config.class_balanced) {
    std::set<WordId> distinct;
    for (const int si : annotated)
      distinct.insert(corpus.continuous[static_cast<std::size_t>(si)].annotation->word);
    if (static_cast<int>(distinct.size()) < config.batch_size)
      throw DataError("train: class-balanced batches need >= batch_size distinct annotated words (" +
                      std::to_string(distinct.size()) + " < " + std::to_string(config.batch_size) + ")");
  }

  TrainResult<Real> result;
  Rng init_rng = root.derive("init");
  result.params = init_params<Real>(init_rng);

  Mat<Real> classifier;
  if (config.mode == TrainMode::kClassification) {
    Rng cls_rng = root.derive("init/classifier");
    classifier.resize(corpus.vocabulary.size(), kEmbedDim);
    const double bound = 1.0 / std::sqrt(static_cast<double>(kEmbedDim));
    for (Eigen::Index r = 0; r < classifier.rows(); ++r)
      for (Eigen::Index c = 0; c < classifier.cols(); ++c)
        classifier(r, c) = static_cast<Real>(cls_rng.uniform_real(-bound, bound));
  }

  BagConfig bag_config;
  bag_config.fg_negative_for_background = config.fg_negative_for_background;
  bag_config.lumped = config.lumped_bags;
  bag_config.synonym_policy = config.synonym_policy;
  bag_config.synonyms = config.synonyms;

  detail::SgdState<Real> sgd;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng epoch_rng = root.derive("epoch", static_cast<std::uint64_t>(epoch));
    const auto batches = detail::pack_epoch(corpus, annotated, config.batch_size,
                                            config.class_balanced, epoch_rng);
    if (batches.empty())
      throw DataError("train: epoch " + std::to_string(epoch) + " produced no full batch");
    const Real lr = static_cast<Real>(config.lr_at_epoch(epoch));

    double loss_sum = 0.0;
    long long steps = 0;
    for (const auto& batch_indices : batches) {
      const Minibatch batch =
          build_minibatch_for(corpus, batch_indices, config.mode, config.dict_vocab, epoch_rng);
      Real loss;
      MlpGrads<Real> grads;
      if (config.mode == TrainMode::kClassification) {
        // Labelled material from both domains: foreground clips and the
        // pooled variants of their words, all under the word label.
        std::vector<WordId> labels;
        std::vector<Vec<Real>> inputs;
        for (const auto& item : batch.items) {
          const auto& seq = corpus.continuous[static_cast<std::size_t>(item.seq_index)];
          inputs.push_back(seq.features.data.row(item.fg_window).transpose().template cast<Real>());
          labels.push_back(item.fg_word);
          const auto* entry = corpus.dict_entry(item.fg_word);
          if (!entry) continue;
          for (const int v : item.fg_dict) {
            inputs.push_back(pool_dictionary<Real>(entry->variants[static_cast<std::size_t>(v)]));
            labels.push_back(item.fg_word);
          }
        }
        Mat<Real> x(kTrunkDim, static_cast<Eigen::Index>(inputs.size()));
        for (std::size_t i = 0; i < inputs.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = inputs[i];
        MlpActivations<Real> acts = mlp_forward(result.params, std::move(x));
        Mat<Real> g_cls, g_emb;
        loss = classification_loss(acts.out, labels, classifier, &g_cls, &g_emb);
        grads = mlp_backward(result.params, acts, g_emb);
        if (config.momentum != 0.0) {
          if (sgd.classifier_velocity.size() == 0)
            sgd.classifier_velocity = Mat<Real>::Zero(classifier.rows(), classifier.cols());
          sgd.classifier_velocity = static_cast<Real>(config.momentum) * sgd.classifier_velocity + g_cls;
          classifier -= lr * sgd.classifier_velocity;
        } else {
          classifier -= lr * g_cls;
        }
      } else {
        const auto bags = build_bags(batch, bag_config, &result.stats.bags, &epoch_rng);
        if (bags.empty()) {
          ++result.stats.skipped_batches;
          continue;
        }
        loss = contrastive_step(corpus, batch, bags, result.params, static_cast<Real>(config.tau),
                                grads, &result.stats);
      }
      if (!std::isfinite(static_cast<double>(loss)))
        throw DataError("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                        std::to_string(steps) + " (mode " + to_string(config.mode) + ")");
      sgd.apply(result.params, grads, lr, static_cast<Real>(config.momentum));
      loss_sum += static_cast<double>(loss);
      ++steps;
      ++result.stats.steps;
    }
    if (steps == 0)
      throw DataError("train: epoch " + std::to_string(epoch) + " performed no step");
    result.log.push_back({epoch, loss_sum / static_cast<double>(steps), config.lr_at_epoch(epoch)});

    const bool boundary =
        std::find(config.lr_decay_epochs.begin(), config.lr_decay_epochs.end(), epoch) !=
        config.lr_decay_epochs.end();
    if (on_checkpoint && (boundary || epoch == config.epochs)) on_checkpoint(epoch, result.params);
  }
  return result;
}

}  // namespace wrl
