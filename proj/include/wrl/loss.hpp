#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "wrl/bags.hpp"
#include "wrl/error.hpp"
#include "wrl/model.hpp"

namespace wrl {

// One bag, with its pairs resolved to indices into a flat similarity array.
struct IndexedBag {
  std::vector<int> positives;
  std::vector<int> negatives;
};

// Multiple-instance NCE over anchored bags:
//   per anchor, -log( sum_P e^{psi/tau} / (sum_P e^{psi/tau} + sum_N e^{psi/tau}) )
// averaged over anchors. Exponentials are shifted by the per-anchor max for
// stability; the returned gradient is exact.
template <class Real>
Real mil_nce_indexed(const std::vector<IndexedBag>& bags, const std::vector<Real>& sims, Real tau,
                     std::type_identity_t<std::vector<Real>*> grad = nullptr) {
  if (bags.empty()) throw DataError("mil_nce: empty anchor list");
  if (tau <= Real(0)) throw DataError("mil_nce: tau must be positive");
  if (grad) grad->assign(sims.size(), Real(0));
  const Real inv_tau = Real(1) / tau;
  double total = 0.0;
  const double anchor_weight = 1.0 / static_cast<double>(bags.size());
  for (const auto& bag : bags) {
    if (bag.positives.empty() || bag.negatives.empty())
      throw DataError("mil_nce: anchor with empty bag (drop empty anchors upstream)");
    Real m = sims[static_cast<std::size_t>(bag.positives[0])];
    for (const int i : bag.positives) m = std::max(m, sims[static_cast<std::size_t>(i)]);
    for (const int i : bag.negatives) m = std::max(m, sims[static_cast<std::size_t>(i)]);

    double sum_pos = 0.0, sum_neg = 0.0;
    for (const int i : bag.positives)
      sum_pos += std::exp(static_cast<double>((sims[static_cast<std::size_t>(i)] - m) * inv_tau));
    for (const int i : bag.negatives)
      sum_neg += std::exp(static_cast<double>((sims[static_cast<std::size_t>(i)] - m) * inv_tau));
    const double denom = sum_pos + sum_neg;
    total += std::log(denom) - std::log(sum_pos);

    if (grad) {
      // dL/dpsi_p = w * (e_p/denom - e_p/sum_pos) / tau, dL/dpsi_n = w * e_n/denom / tau
      const double c_pos = anchor_weight * (1.0 / denom - 1.0 / sum_pos) * static_cast<double>(inv_tau);
      const double c_neg = anchor_weight * (1.0 / denom) * static_cast<double>(inv_tau);
      for (const int i : bag.positives) {
        const double e = std::exp(static_cast<double>((sims[static_cast<std::size_t>(i)] - m) * inv_tau));
        (*grad)[static_cast<std::size_t>(i)] += static_cast<Real>(c_pos * e);
      }
      for (const int i : bag.negatives) {
        const double e = std::exp(static_cast<double>((sims[static_cast<std::size_t>(i)] - m) * inv_tau));
        (*grad)[static_cast<std::size_t>(i)] += static_cast<Real>(c_neg * e);
      }
    }
  }
  return static_cast<Real>(total * anchor_weight);
}

namespace detail {

template <class Real>
struct FlatBags {
  std::vector<PairRef> pairs;               // unique, sorted
  std::vector<IndexedBag> bags;
  std::vector<Real> sims;

  FlatBags(const std::vector<AnchoredBags>& anchors,
           const std::function<Real(const PairRef&)>& sim_of) {
    std::map<PairRef, int> index;
    for (const auto& a : anchors) {
      for (const auto& p : a.positives) index.emplace(p, 0);
      for (const auto& p : a.negatives) index.emplace(p, 0);
    }
    int next = 0;
    for (auto& [p, idx] : index) {
      idx = next++;
      pairs.push_back(p);
    }
    sims.resize(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) sims[i] = sim_of(pairs[i]);
    for (const auto& a : anchors) {
      IndexedBag bag;
      for (const auto& p : a.positives) bag.positives.push_back(index.at(p));
      for (const auto& p : a.negatives) bag.negatives.push_back(index.at(p));
      bags.push_back(std::move(bag));
    }
  }
};

}  // namespace detail

// Map-shaped convenience wrapper around the indexed core.
template <class Real>
Real mil_nce_loss(const std::vector<AnchoredBags>& anchors,
                  const std::function<Real(const PairRef&)>& sim_of, Real tau,
                  std::map<PairRef, Real>* grad = nullptr) {
  detail::FlatBags<Real> flat(anchors, sim_of);
  std::vector<Real> g;
  const Real loss = mil_nce_indexed(flat.bags, flat.sims, tau, grad ? &g : nullptr);
  if (grad) {
    grad->clear();
    for (std::size_t i = 0; i < flat.pairs.size(); ++i) grad->emplace(flat.pairs[i], g[i]);
  }
  return loss;
}

// Single-instance form: identical formula, but every anchor must carry
// exactly one positive.
template <class Real>
Real infonce_loss(const std::vector<AnchoredBags>& anchors,
                  const std::function<Real(const PairRef&)>& sim_of, Real tau,
                  std::map<PairRef, Real>* grad = nullptr) {
  for (const auto& a : anchors)
    if (a.positives.size() != 1)
      throw DataError("infonce: anchor must have exactly one positive, got " +
                      std::to_string(a.positives.size()));
  return mil_nce_loss(anchors, sim_of, tau, grad);
}

// Softmax cross-entropy over vocabulary classes through a linear head on the
// embeddings. embeddings: 256 x n, classifier: V x 256. Returns mean loss;
// fills gradients wrt classifier and embeddings when requested.
template <class Real>
Real classification_loss(const Mat<Real>& embeddings, const std::vector<WordId>& labels,
                         const Mat<Real>& classifier, Mat<Real>* g_classifier = nullptr,
                         Mat<Real>* g_embeddings = nullptr) {
  const Eigen::Index n = embeddings.cols();
  const Eigen::Index v = classifier.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw DataError("classification: labels/embeddings size mismatch");
  Mat<Real> logits = classifier * embeddings;  // V x n
  if (g_classifier) g_classifier->setZero(v, embeddings.rows());
  if (g_embeddings) g_embeddings->setZero(embeddings.rows(), n);

  double total = 0.0;
  const Real weight = Real(1) / static_cast<Real>(n);
  Mat<Real> dlogits(v, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const WordId y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= v) throw DataError("classification: label out of range");
    const Real m = logits.col(i).maxCoeff();
    double denom = 0.0;
    for (Eigen::Index k = 0; k < v; ++k)
      denom += std::exp(static_cast<double>(logits(k, i) - m));
    total += std::log(denom) - static_cast<double>(logits(y, i) - m);
    for (Eigen::Index k = 0; k < v; ++k) {
      const double p = std::exp(static_cast<double>(logits(k, i) - m)) / denom;
      dlogits(k, i) = weight * static_cast<Real>(p - (k == y ? 1.0 : 0.0));
    }
  }
  if (g_classifier) g_classifier->noalias() = dlogits * embeddings.transpose();
  if (g_embeddings) g_embeddings->noalias() = classifier.transpose() * dlogits;
  return static_cast<Real>(total / static_cast<double>(n));
}

}  // namespace wrl
