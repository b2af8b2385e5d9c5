#pragma once

// Central-difference gradient checking against the hand-derived backward
// pass. Probes that flip any leaky-ReLU pre-activation sign between the +h
// and -h evaluations are excluded: the loss is not differentiable across the
// kink, so a finite difference there checks nothing.

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "wrl/loss.hpp"
#include "wrl/model.hpp"
#include "wrl/rng.hpp"
#include "wrl/training.hpp"

namespace test_support {

struct PipelineInstance {
  wrl::Mat<double> inputs;  // 1024 x n
  std::vector<std::pair<int, int>> pairs;
  std::vector<wrl::IndexedBag> bags;
  double tau = 0.07;
};

// A few continuous-side and dictionary-side nodes with random bags over their
// cross pairs.
inline PipelineInstance random_instance(wrl::Rng& rng) {
  PipelineInstance inst;
  const int n_left = 2 + static_cast<int>(rng.uniform_int(0, 1));
  const int n_right = 2 + static_cast<int>(rng.uniform_int(0, 1));
  const int n = n_left + n_right;
  inst.inputs.resize(wrl::kTrunkDim, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < wrl::kTrunkDim; ++i) inst.inputs(i, j) = rng.normal();

  for (int u = 0; u < n_left; ++u)
    for (int v = 0; v < n_right; ++v) inst.pairs.push_back({u, n_left + v});

  const int n_pairs = static_cast<int>(inst.pairs.size());
  const int n_bags = 1 + static_cast<int>(rng.uniform_int(0, 2));
  for (int b = 0; b < n_bags; ++b) {
    std::vector<int> ids(static_cast<std::size_t>(n_pairs));
    for (int i = 0; i < n_pairs; ++i) ids[static_cast<std::size_t>(i)] = i;
    rng.shuffle(ids);
    wrl::IndexedBag bag;
    const int n_pos = 1 + static_cast<int>(rng.uniform_int(0, 1));
    const int n_neg = 1 + static_cast<int>(rng.uniform_int(0, 2));
    for (int i = 0; i < n_pos; ++i) bag.positives.push_back(ids[static_cast<std::size_t>(i)]);
    for (int i = 0; i < n_neg && n_pos + i < n_pairs; ++i)
      bag.negatives.push_back(ids[static_cast<std::size_t>(n_pos + i)]);
    if (!bag.negatives.empty()) inst.bags.push_back(std::move(bag));
  }
  if (inst.bags.empty()) inst.bags.push_back({{0}, {1}});
  const double taus[3] = {0.07, 0.5, 1.0};
  inst.tau = taus[rng.uniform_int(0, 2)];
  return inst;
}

// Loss value plus the sign pattern of every pre-activation (for kink
// detection).
inline std::pair<double, std::vector<std::uint8_t>> loss_and_signs(
    const wrl::MlpParams<double>& params, const PipelineInstance& inst) {
  wrl::MlpActivations<double> acts = wrl::mlp_forward(params, inst.inputs);
  std::vector<std::uint8_t> signs;
  signs.reserve(static_cast<std::size_t>(acts.z1.size() + acts.z2.size()));
  for (Eigen::Index j = 0; j < acts.z1.cols(); ++j) {
    for (Eigen::Index i = 0; i < acts.z1.rows(); ++i) signs.push_back(acts.z1(i, j) >= 0.0 ? 1 : 0);
    for (Eigen::Index i = 0; i < acts.z2.rows(); ++i) signs.push_back(acts.z2(i, j) >= 0.0 ? 1 : 0);
  }
  wrl::Mat<double> ehat = acts.out;
  for (Eigen::Index j = 0; j < ehat.cols(); ++j) {
    const double m = ehat.col(j).norm();
    if (m != 0.0) ehat.col(j) /= m;
  }
  std::vector<double> sims(inst.pairs.size());
  for (std::size_t i = 0; i < inst.pairs.size(); ++i)
    sims[i] = ehat.col(inst.pairs[i].first).dot(ehat.col(inst.pairs[i].second));
  const double loss = wrl::mil_nce_indexed(inst.bags, sims, inst.tau, nullptr);
  return {loss, std::move(signs)};
}

struct FdOutcome {
  int checked = 0;
  int skipped_kink = 0;
  int skipped_tiny = 0;
  double max_rel_err = 0.0;
};

// Samples coordinates across all six parameter tensors and compares the
// analytic gradient with central differences.
inline FdOutcome check_pipeline_gradients(wrl::MlpParams<double> params, const PipelineInstance& inst,
                                          int coords_per_tensor, wrl::Rng& rng, double h = 1e-4) {
  wrl::MlpGrads<double> grads;
  wrl::embedding_pair_loss<double>(params, inst.inputs, inst.pairs, inst.bags, inst.tau, &grads);
  const auto base = loss_and_signs(params, inst);

  FdOutcome outcome;
  auto probe = [&](double* cell, double analytic) {
    const double saved = *cell;
    *cell = saved + h;
    const auto plus = loss_and_signs(params, inst);
    *cell = saved - h;
    const auto minus = loss_and_signs(params, inst);
    *cell = saved;
    if (plus.second != base.second || minus.second != base.second) {
      ++outcome.skipped_kink;
      return;
    }
    const double fd = (plus.first - minus.first) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-8});
    if (std::abs(fd) < 1e-9 && std::abs(analytic) < 1e-9) {
      ++outcome.skipped_tiny;
      return;
    }
    outcome.max_rel_err = std::max(outcome.max_rel_err, std::abs(fd - analytic) / denom);
    ++outcome.checked;
  };

  auto sample_tensor = [&](auto& tensor, auto& gtensor) {
    for (int c = 0; c < coords_per_tensor; ++c) {
      const auto r = rng.uniform_int(0, tensor.rows() - 1);
      const auto col = rng.uniform_int(0, tensor.cols() - 1);
      probe(&tensor(r, col), gtensor(r, col));
    }
  };
  sample_tensor(params.w1, grads.w1);
  sample_tensor(params.b1, grads.b1);
  sample_tensor(params.w2, grads.w2);
  sample_tensor(params.b2, grads.b2);
  sample_tensor(params.w3, grads.w3);
  sample_tensor(params.b3, grads.b3);
  return outcome;
}

}  // namespace test_support
