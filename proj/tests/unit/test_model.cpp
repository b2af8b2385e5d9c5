#include <catch2/catch_amalgamated.hpp>

#include "support/finite_diff.hpp"
#include "support/naive_oracles.hpp"
#include "support/tmpdir.hpp"
#include "wrl/model.hpp"
#include "wrl/rng.hpp"

using namespace wrl;

namespace {

MlpParams<double> random_params(std::uint64_t seed) {
  Rng rng(seed);
  Rng stream = rng.derive("init");
  return init_params<double>(stream);
}

}  // namespace

TEST_CASE("zero network maps everything to zero") {
  MlpParams<double> p;
  p.set_zero();
  Rng rng(3);
  Vec<double> x(kTrunkDim);
  for (int i = 0; i < kTrunkDim; ++i) x(i) = rng.normal();
  const Vec<double> out = mlp_forward_vec(p, x);
  REQUIRE(out.norm() == 0.0);
}

TEST_CASE("identity path through the skip connection") {
  // W1 = 0 so h1 = x; truncated-identity W2, W3 pass the first 256 coords of
  // a non-negative input straight through.
  MlpParams<double> p;
  p.set_zero();
  for (int i = 0; i < kHidden2; ++i) p.w2(i, i) = 1.0;
  for (int i = 0; i < kEmbedDim; ++i) p.w3(i, i) = 1.0;
  Rng rng(4);
  Vec<double> x(kTrunkDim);
  for (int i = 0; i < kTrunkDim; ++i) x(i) = std::abs(rng.normal());
  const Vec<double> out = mlp_forward_vec(p, x);
  for (int i = 0; i < kEmbedDim; ++i) REQUIRE(out(i) == Catch::Approx(x(i)).epsilon(1e-12));
}

TEST_CASE("forward matches an independent straight-line recomputation") {
  const MlpParams<double> p = random_params(11);
  Rng rng(12);
  for (int rep = 0; rep < 3; ++rep) {
    std::vector<double> x(kTrunkDim);
    Vec<double> xv(kTrunkDim);
    for (int i = 0; i < kTrunkDim; ++i) {
      x[static_cast<std::size_t>(i)] = rng.normal();
      xv(i) = x[static_cast<std::size_t>(i)];
    }
    const Vec<double> out = mlp_forward_vec(p, xv);
    const auto naive = test_support::naive_mlp_forward(p, x);
    for (int i = 0; i < kEmbedDim; ++i) {
      const double denom = std::max(std::abs(naive[static_cast<std::size_t>(i)]), 1e-9);
      REQUIRE(std::abs(out(i) - naive[static_cast<std::size_t>(i)]) / denom < 1e-6);
    }
  }
}

TEST_CASE("leaky slope is exactly 0.2 on the negative side") {
  MlpParams<double> p;
  p.set_zero();
  p.b1(0) = -1.0;  // z1[0] = -1 regardless of input
  p.w2(0, 0) = 1.0;
  p.w3(0, 0) = 1.0;
  Vec<double> x = Vec<double>::Zero(kTrunkDim);
  const Vec<double> out = mlp_forward_vec(p, x);
  // h1[0] = lrelu(-1) + 0 = -0.2; z2[0] = -0.2; h2[0] = lrelu(-0.2) = -0.04
  REQUIRE(out(0) == Catch::Approx(-0.04).margin(1e-15));
}

TEST_CASE("dictionary pooling") {
  FeatureSeries one;
  one.data.resize(1, kTrunkDim);
  one.data.setConstant(2.5f);
  REQUIRE(pool_dictionary<double>(one)(17) == Catch::Approx(2.5));

  FeatureSeries sym;
  sym.data.resize(2, kTrunkDim);
  sym.data.row(0).setConstant(1.0f);
  sym.data.row(1).setConstant(-1.0f);
  REQUIRE(pool_dictionary<double>(sym).norm() == 0.0);

  FeatureSeries copies;
  copies.data.resize(4, kTrunkDim);
  for (int r = 0; r < 4; ++r) copies.data.row(r).setConstant(0.75f);
  REQUIRE(pool_dictionary<double>(copies)(0) == Catch::Approx(0.75));
}

TEST_CASE("cosine basics") {
  Rng rng(21);
  Vec<double> v(kEmbedDim), w(kEmbedDim);
  for (int i = 0; i < kEmbedDim; ++i) {
    v(i) = rng.normal();
    w(i) = rng.normal();
  }
  REQUIRE(cosine<double>(v, v) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(cosine<double>(v, Vec<double>(-v)) == Catch::Approx(-1.0).margin(1e-12));
  const double base = cosine<double>(v, w);
  REQUIRE(cosine<double>(Vec<double>(3.7 * v), w) == Catch::Approx(base).margin(1e-12));
  REQUIRE(base >= -1.0);
  REQUIRE(base <= 1.0);

  CosineDiagnostics diag;
  const Vec<double> zero = Vec<double>::Zero(kEmbedDim);
  REQUIRE(cosine<double>(zero, w, &diag) == 0.0);
  REQUIRE(diag.zero_norm_pairs == 1);
}

TEST_CASE("cosine gradient closed form at orthogonal unit vectors") {
  Vec<double> a = Vec<double>::Zero(kEmbedDim);
  Vec<double> b = Vec<double>::Zero(kEmbedDim);
  a(0) = 1.0;
  b(1) = 1.0;
  Vec<double> ga = Vec<double>::Zero(kEmbedDim);
  Vec<double> gb = Vec<double>::Zero(kEmbedDim);
  cosine_backward<double>(a, b, 1.0, ga, gb);
  // d/da (a.b/|a||b|) at orthonormal a, b is exactly b
  REQUIRE((ga - b).norm() == Catch::Approx(0.0).margin(1e-14));
  REQUIRE((gb - a).norm() == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("zero upstream gradient yields zero parameter gradient") {
  const MlpParams<double> p = random_params(31);
  Rng rng(32);
  Mat<double> x(kTrunkDim, 3);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < kTrunkDim; ++i) x(i, j) = rng.normal();
  const auto acts = mlp_forward(p, x);
  const Mat<double> g_out = Mat<double>::Zero(kEmbedDim, 3);
  const auto grads = mlp_backward(p, acts, g_out);
  REQUIRE(grads.w1.norm() == 0.0);
  REQUIRE(grads.b2.norm() == 0.0);
  REQUIRE(grads.w3.norm() == 0.0);
  REQUIRE(grads.x.norm() == 0.0);
}

TEST_CASE("pipeline gradients match central finite differences") {
  Rng rng(1234);
  int total_checked = 0;
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    Rng init = rng.derive("params", static_cast<std::uint64_t>(rep));
    const MlpParams<double> params = init_params<double>(init);
    Rng inst_rng = rng.derive("inst", static_cast<std::uint64_t>(rep));
    const auto inst = test_support::random_instance(inst_rng);
    Rng coord_rng = rng.derive("coords", static_cast<std::uint64_t>(rep));
    const auto outcome = test_support::check_pipeline_gradients(params, inst, 4, coord_rng);
    total_checked += outcome.checked;
    worst = std::max(worst, outcome.max_rel_err);
  }
  INFO("checked " << total_checked << " coordinates, worst rel err " << worst);
  REQUIRE(total_checked > 300);
  REQUIRE(worst < 1e-4);
}

TEST_CASE("model file round-trips") {
  test_support::TmpDir tmp;
  Rng rng(41);
  Rng stream = rng.derive("init");
  MlpParams<float> p = init_params<float>(stream);
  const auto path = tmp.path() / "m.bin";
  save_model(p, path);
  const auto back = load_model<float>(path);
  REQUIRE(back.w1 == p.w1);
  REQUIRE(back.b1 == p.b1);
  REQUIRE(back.w2 == p.w2);
  REQUIRE(back.b2 == p.b2);
  REQUIRE(back.w3 == p.w3);
  REQUIRE(back.b3 == p.b3);

  SECTION("bad magic rejected") {
    std::ofstream os(tmp.path() / "junk.bin", std::ios::binary);
    os << "JUNKJUNKJUNK";
    os.close();
    REQUIRE_THROWS_AS(load_model<float>(tmp.path() / "junk.bin"), DataError);
  }
}

TEST_CASE("forward determinism within a build") {
  const MlpParams<double> p = random_params(51);
  Rng rng(52);
  Mat<double> x(kTrunkDim, 2);
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < kTrunkDim; ++i) x(i, j) = rng.normal();
  const auto a = mlp_forward(p, x);
  const auto b = mlp_forward(p, x);
  REQUIRE(a.out == b.out);
}
