#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "wrl/corpus.hpp"
#include "wrl/error.hpp"
#include "wrl/rng.hpp"

namespace wrl {

constexpr int kHidden1 = 1024;
constexpr int kHidden2 = 512;
constexpr int kEmbedDim = 256;

template <class Real>
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
template <class Real>
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

// The embedding head: three linear layers with leaky-ReLU activations and an
// identity skip over the first block,
//   h1 = lrelu(W1 x + b1) + x
//   h2 = lrelu(W2 h1 + b2)
//   out = W3 h2 + b3
// mapping 1024-d trunk features to 256-d sign spotting embeddings. Weights
// are stored output-major (rows = output dim).
template <class Real>
struct MlpParams {
  Mat<Real> w1{kHidden1, kTrunkDim};
  Vec<Real> b1{kHidden1};
  Mat<Real> w2{kHidden2, kHidden1};
  Vec<Real> b2{kHidden2};
  Mat<Real> w3{kEmbedDim, kHidden2};
  Vec<Real> b3{kEmbedDim};
  Real leaky_slope = Real(0.2);

  void set_zero() {
    w1.setZero(); b1.setZero();
    w2.setZero(); b2.setZero();
    w3.setZero(); b3.setZero();
  }

  template <class Other>
  MlpParams<Other> cast() const {
    MlpParams<Other> p;
    p.w1 = w1.template cast<Other>(); p.b1 = b1.template cast<Other>();
    p.w2 = w2.template cast<Other>(); p.b2 = b2.template cast<Other>();
    p.w3 = w3.template cast<Other>(); p.b3 = b3.template cast<Other>();
    p.leaky_slope = static_cast<Other>(leaky_slope);
    return p;
  }
};

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], weights then bias per
// layer, draw order fixed.
template <class Real>
MlpParams<Real> init_params(Rng& rng) {
  MlpParams<Real> p;
  auto fill = [&rng](auto& m, double bound) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        m(r, c) = static_cast<Real>(rng.uniform_real(-bound, bound));
  };
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(kTrunkDim));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(kHidden1));
  const double bound3 = 1.0 / std::sqrt(static_cast<double>(kHidden2));
  fill(p.w1, bound1); fill(p.b1, bound1);
  fill(p.w2, bound2); fill(p.b2, bound2);
  fill(p.w3, bound3); fill(p.b3, bound3);
  return p;
}

// Forward pass over a batch of inputs (one column per sample), keeping what
// the backward pass needs.
template <class Real>
struct MlpActivations {
  Mat<Real> x;    // 1024 x n
  Mat<Real> z1;   // pre-activation of layer 1
  Mat<Real> h1;   // lrelu(z1) + x
  Mat<Real> z2;
  Mat<Real> h2;
  Mat<Real> out;  // 256 x n
};

template <class Real>
MlpActivations<Real> mlp_forward(const MlpParams<Real>& p, Mat<Real> x) {
  MlpActivations<Real> a;
  const Real slope = p.leaky_slope;
  auto lrelu = [slope](Real v) { return v >= Real(0) ? v : slope * v; };
  a.x = std::move(x);
  a.z1.noalias() = p.w1 * a.x;
  a.z1.colwise() += p.b1;
  a.h1 = a.z1.unaryExpr(lrelu);
  a.h1 += a.x;
  a.z2.noalias() = p.w2 * a.h1;
  a.z2.colwise() += p.b2;
  a.h2 = a.z2.unaryExpr(lrelu);
  a.out.noalias() = p.w3 * a.h2;
  a.out.colwise() += p.b3;
  return a;
}

template <class Real>
Vec<Real> mlp_forward_vec(const MlpParams<Real>& p, const Vec<Real>& x) {
  Mat<Real> m = x;
  return mlp_forward(p, std::move(m)).out.col(0);
}

// Inference-only forward: no activations kept.
template <class Real>
Mat<Real> mlp_infer(const MlpParams<Real>& p, const Mat<Real>& x) {
  const Real slope = p.leaky_slope;
  auto lrelu = [slope](Real v) { return v >= Real(0) ? v : slope * v; };
  Mat<Real> h = p.w1 * x;
  h.colwise() += p.b1;
  h = h.unaryExpr(lrelu);
  h += x;
  Mat<Real> h2 = p.w2 * h;
  h2.colwise() += p.b2;
  h2 = h2.unaryExpr(lrelu);
  Mat<Real> out = p.w3 * h2;
  out.colwise() += p.b3;
  return out;
}

template <class Real>
struct MlpGrads {
  Mat<Real> w1, w2, w3;
  Vec<Real> b1, b2, b3;
  Mat<Real> x;  // gradient wrt the inputs

  static MlpGrads zeros() {
    MlpGrads g;
    g.w1 = Mat<Real>::Zero(kHidden1, kTrunkDim);
    g.b1 = Vec<Real>::Zero(kHidden1);
    g.w2 = Mat<Real>::Zero(kHidden2, kHidden1);
    g.b2 = Vec<Real>::Zero(kHidden2);
    g.w3 = Mat<Real>::Zero(kEmbedDim, kHidden2);
    g.b3 = Vec<Real>::Zero(kEmbedDim);
    return g;
  }
};

// Reverse-mode gradients of the stack above. The leaky-ReLU subgradient at
// exactly zero takes the identity branch.
template <class Real>
MlpGrads<Real> mlp_backward(const MlpParams<Real>& p, const MlpActivations<Real>& a,
                            const Mat<Real>& g_out) {
  const Real slope = p.leaky_slope;
  MlpGrads<Real> g;
  auto dmask = [slope](const Mat<Real>& z) -> Mat<Real> {
    return z.unaryExpr([slope](Real v) { return v >= Real(0) ? Real(1) : slope; });
  };

  g.w3.noalias() = g_out * a.h2.transpose();
  g.b3 = g_out.rowwise().sum();
  Mat<Real> g_h2 = p.w3.transpose() * g_out;

  Mat<Real> g_z2 = g_h2.cwiseProduct(dmask(a.z2));
  g.w2.noalias() = g_z2 * a.h1.transpose();
  g.b2 = g_z2.rowwise().sum();
  Mat<Real> g_h1 = p.w2.transpose() * g_z2;

  Mat<Real> g_z1 = g_h1.cwiseProduct(dmask(a.z1));
  g.w1.noalias() = g_z1 * a.x.transpose();
  g.b1 = g_z1.rowwise().sum();
  g.x = p.w1.transpose() * g_z1;
  g.x += g_h1;  // skip connection
  return g;
}

// Mean over a dictionary variant's subclip vectors; the single input the MLP
// sees for that variant.
template <class Real>
Vec<Real> pool_dictionary(const FeatureSeries& variant) {
  if (variant.rows() < 1) throw DataError("pool_dictionary: variant has no subclips");
  Eigen::VectorXf mean = variant.data.colwise().mean().transpose();
  return mean.cast<Real>();
}

struct CosineDiagnostics {
  long long zero_norm_pairs = 0;
};

// Cosine similarity; zero-norm inputs score 0 (a degenerate embedding should
// match nothing).
template <class Real, class DerivedA, class DerivedB>
Real cosine(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
            CosineDiagnostics* diag = nullptr) {
  const Real na = a.norm();
  const Real nb = b.norm();
  if (na == Real(0) || nb == Real(0)) {
    if (diag) ++diag->zero_norm_pairs;
    return Real(0);
  }
  return a.dot(b) / (na * nb);
}

// d cosine / d a and d cosine / d b, scaled by the upstream gradient.
template <class Real>
void cosine_backward(const Vec<Real>& a, const Vec<Real>& b, Real upstream, Vec<Real>& ga,
                     Vec<Real>& gb) {
  const Real na = a.norm();
  const Real nb = b.norm();
  if (na == Real(0) || nb == Real(0)) return;
  const Real inv = Real(1) / (na * nb);
  const Real psi = a.dot(b) * inv;
  ga += upstream * (b * inv - a * (psi / (na * na)));
  gb += upstream * (a * inv - b * (psi / (nb * nb)));
}

// ---------------------------------------------------------------------------
// Model file, binary, little-endian:
//   magic 'WRLM', u32 version=1, u32 dims[4] = {1024, 1024, 512, 256},
//   then f32 parameters in layer order: W1 row-major, b1, W2, b2, W3, b3.
// ---------------------------------------------------------------------------

template <class Real>
void save_model(const MlpParams<Real>& p, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("model file: cannot open for write: " + path.string());
  os.write("WRLM", 4);
  detail::put_u32_le(os, 1);
  for (const int d : {kTrunkDim, kHidden1, kHidden2, kEmbedDim})
    detail::put_u32_le(os, static_cast<std::uint32_t>(d));
  auto put_mat = [&os](const auto& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        detail::put_u32_le(os, detail::f32_bits(static_cast<float>(m(r, c))));
  };
  put_mat(p.w1); put_mat(p.b1);
  put_mat(p.w2); put_mat(p.b2);
  put_mat(p.w3); put_mat(p.b3);
  if (!os) throw DataError("model file: write failed: " + path.string());
}

template <class Real>
MlpParams<Real> load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("model file: cannot open: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "WRLM", 4) != 0)
    throw DataError("model file: bad magic: " + path.string());
  std::uint32_t version = 0;
  if (!detail::get_u32_le(is, version) || version != 1)
    throw DataError("model file: unsupported version: " + path.string());
  const int expect[4] = {kTrunkDim, kHidden1, kHidden2, kEmbedDim};
  for (const int d : expect) {
    std::uint32_t got = 0;
    if (!detail::get_u32_le(is, got) || got != static_cast<std::uint32_t>(d))
      throw DataError("model file: dimension mismatch: " + path.string());
  }
  MlpParams<Real> p;
  auto get_mat = [&is, &path](auto& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        std::uint32_t bits;
        if (!detail::get_u32_le(is, bits))
          throw DataError("model file: truncated: " + path.string());
        const float f = detail::bits_f32(bits);
        if (!std::isfinite(f)) throw DataError("model file: non-finite parameter: " + path.string());
        m(r, c) = static_cast<std::remove_reference_t<decltype(m(0, 0))>>(f);
      }
  };
  get_mat(p.w1); get_mat(p.b1);
  get_mat(p.w2); get_mat(p.b2);
  get_mat(p.w3); get_mat(p.b3);
  if (is.peek() != std::char_traits<char>::eof())
    throw DataError("model file: trailing bytes: " + path.string());
  return p;
}

}  // namespace wrl
