#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "rpn/uncertainty.hpp"

using namespace rpn;
using rpn::testing::gradcheck;
using rpn::testing::param_gradcheck;

TEST_CASE("uncertainty head output dims and degenerate config") {
  ParamStore store;
  Rng rng(3);
  // spatial 3-level setup: latent of level 2 is (H/16, W/16) of the level-2
  // image; the level-1 map must come out at (H/2, W/2).
  UncertaintyHeadParams p = make_uncertainty_head(store, "u", 16, 3, rng);
  TensorR y = TensorR::random_uniform({1, 16, 4, 4}, rng, -2, 2);
  Var u = estimate_uncertainty(constant(y), p);
  CHECK(u->value.shape() == Shape{1, 1, 32, 32});
  CHECK(u->value.arr().isFinite().all());

  // zero weights: map equals the projection bias everywhere
  for (const auto& it : store.items()) it->value.fill(0);
  p.proj_b->value[0] = 0.7;
  Var u2 = estimate_uncertainty(constant(y), p);
  for (int64_t i = 0; i < u2->value.size(); ++i) CHECK(u2->value[i] == 0.7);
}

TEST_CASE("uncertainty head gradients") {
  ParamStore store;
  Rng rng(5);
  UncertaintyHeadParams p = make_uncertainty_head(store, "u", 4, 1, rng);
  TensorR y = TensorR::random_uniform({1, 4, 2, 2}, rng, -1, 1);
  auto f = [&]() { return sum(square(estimate_uncertainty(constant(y), p))); };
  CHECK(param_gradcheck(f, store, 1e-5) < 1e-4);
}

TEST_CASE("loss_uncertainty closed forms") {
  SUBCASE("zero error, unit variance") {
    TensorR x(Shape{1, 3, 2, 2});
    x.fill(0.3);
    TensorR u(Shape{1, 1, 2, 2});
    Var l = loss_uncertainty(constant(x), constant(x), constant(u));
    CHECK(l->value[0] == 0.0);
  }

  SUBCASE("single pixel, e=2, delta=0.5") {
    TensorR ref(Shape{1, 3, 1, 1});
    TensorR rec(Shape{1, 3, 1, 1});
    for (int c = 0; c < 3; ++c) rec[c] = ref[c] + std::sqrt(2.0);
    TensorR u(Shape{1, 1, 1, 1});
    u[0] = std::log(0.5);
    Var l = loss_uncertainty(constant(rec), constant(ref), constant(u));
    CHECK(l->value[0] == doctest::Approx(0.96028).epsilon(1e-4));
  }
}

TEST_CASE("loss_uncertainty gradient wrt u matches finite differences") {
  Rng rng(7);
  TensorR rec = TensorR::random_uniform({1, 3, 2, 2}, rng, 0, 1);
  TensorR ref = TensorR::random_uniform({1, 3, 2, 2}, rng, 0, 1);
  TensorR u = TensorR::random_uniform({1, 1, 2, 2}, rng, -1.5, 1.5);
  auto f = [&](const std::vector<Var>& v) {
    return loss_uncertainty(v[0], constant(ref), v[1]);
  };
  CHECK(gradcheck(f, {rec, u}, 1e-6, 1e-2) < 1e-6);
}

TEST_CASE("loss_uncertainty decomposes per pixel") {
  Rng rng(11);
  TensorR rec = TensorR::random_uniform({1, 3, 3, 3}, rng, 0, 1);
  TensorR ref = TensorR::random_uniform({1, 3, 3, 3}, rng, 0, 1);
  TensorR u = TensorR::random_uniform({1, 1, 3, 3}, rng, -1, 1);
  Var full = loss_uncertainty(constant(rec), constant(ref), constant(u));
  Real acc = 0;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      Real e = 0;
      for (int c = 0; c < 3; ++c) {
        const Real d = rec.at(0, c, y, x) - ref.at(0, c, y, x);
        e += d * d;
      }
      e /= 3;
      const Real uv = u.at(0, 0, y, x);
      acc += std::exp(-(uv + std::log(2.0))) * e + 1.5 * uv;
    }
  acc /= 9;
  CHECK(full->value[0] == doctest::Approx(acc).epsilon(1e-6));
}

TEST_CASE("loss_uncertainty monotone in u at zero error") {
  TensorR x(Shape{1, 3, 1, 1});
  x.fill(0.5);
  Real prev = -std::numeric_limits<Real>::infinity();
  for (Real uv = -10; uv <= 10; uv += 2.5) {
    TensorR u(Shape{1, 1, 1, 1});
    u[0] = uv;
    Var l = loss_uncertainty(constant(x), constant(x), constant(u));
    CHECK(l->value[0] > prev);
    prev = l->value[0];
  }
}

TEST_CASE("loss_uncertainty_guided fixtures") {
  SUBCASE("two-pixel weighted mean") {
    TensorR ref(Shape{1, 3, 1, 2});
    TensorR rec(Shape{1, 3, 1, 2});
    for (int c = 0; c < 3; ++c) {
      rec.at(0, c, 0, 0) = ref.at(0, c, 0, 0) + std::sqrt(5.0);
      rec.at(0, c, 0, 1) = ref.at(0, c, 0, 1) + std::sqrt(3.0);
    }
    TensorR u(Shape{1, 1, 1, 2});
    u[0] = -1;  // normalizes to 0
    u[1] = 2;   // normalizes to 1
    Var l = loss_uncertainty_guided(constant(rec), constant(ref), constant(u));
    CHECK(l->value[0] == doctest::Approx(1.5).epsilon(1e-9));
  }

  SUBCASE("perfect reconstruction with constant map") {
    TensorR x(Shape{1, 3, 2, 2});
    x.fill(0.9);
    TensorR u(Shape{1, 1, 2, 2});
    u.fill(-3);
    Var l = loss_uncertainty_guided(constant(x), constant(x), constant(u));
    CHECK(l->value[0] == 0.0);
  }

  SUBCASE("affine reparameterization leaves the loss unchanged") {
    Rng rng(13);
    TensorR rec = TensorR::random_uniform({2, 3, 3, 3}, rng, 0, 1);
    TensorR ref = TensorR::random_uniform({2, 3, 3, 3}, rng, 0, 1);
    TensorR u = TensorR::random_uniform({2, 1, 3, 3}, rng, -2, 2);
    Var base = loss_uncertainty_guided(constant(rec), constant(ref), constant(u));
    TensorR u2 = u;
    for (int64_t i = 0; i < u2.size(); ++i) u2[i] = 3.7 * u2[i] - 11.0;
    Var same = loss_uncertainty_guided(constant(rec), constant(ref), constant(u2));
    CHECK(same->value[0] == doctest::Approx(base->value[0]).epsilon(1e-9));
  }

  SUBCASE("non-negative on random inputs") {
    Rng rng(17);
    for (int t = 0; t < 5; ++t) {
      TensorR rec = TensorR::random_uniform({1, 3, 4, 4}, rng, 0, 1);
      TensorR ref = TensorR::random_uniform({1, 3, 4, 4}, rng, 0, 1);
      TensorR u = TensorR::random_normal({1, 1, 4, 4}, rng, 2);
      Var l = loss_uncertainty_guided(constant(rec), constant(ref), constant(u));
      CHECK(l->value[0] >= 0);
    }
  }
}

TEST_CASE("no gradient reaches the head through the guided loss") {
  ParamStore store;
  Rng rng(19);
  UncertaintyHeadParams p = make_uncertainty_head(store, "u", 4, 1, rng);
  TensorR y = TensorR::random_uniform({1, 4, 2, 2}, rng, -1, 1);
  TensorR rec = TensorR::random_uniform({1, 3, 4, 4}, rng, 0, 1);
  TensorR ref = TensorR::random_uniform({1, 3, 4, 4}, rng, 0, 1);
  store.zero_grads();
  Var u = estimate_uncertainty(make_var(y, false), p);
  // map is (N,1,4,4) here which matches the reconstruction dims
  Var l = loss_uncertainty_guided(make_var(rec, true), constant(ref), u);
  backward(l);
  for (const auto& it : store.items())
    CHECK(it->grad.arr().abs().maxCoeff() == 0);
}

TEST_CASE("reverse pass produces maps for lower levels only") {
  ParamStore store;
  Rng rng(23);
  std::vector<UncertaintyHeadParams> heads;
  heads.push_back(make_uncertainty_head(store, "u0", 4, 3, rng));
  heads.push_back(make_uncertainty_head(store, "u1", 4, 3, rng));
  std::vector<Var> latents;
  latents.push_back(constant(TensorR::random_uniform({1, 4, 1, 1}, rng, -1, 1)));
  latents.push_back(constant(TensorR::random_uniform({1, 4, 2, 2}, rng, -1, 1)));
  latents.push_back(constant(TensorR::random_uniform({1, 4, 4, 4}, rng, -1, 1)));
  auto maps = reverse_pyramid_pass(latents, heads);
  REQUIRE(maps.size() == 2);
  CHECK(maps[0]->value.shape() == Shape{1, 1, 16, 16});
  CHECK(maps[1]->value.shape() == Shape{1, 1, 32, 32});

  // single level: no maps
  std::vector<Var> one{latents[0]};
  CHECK(reverse_pyramid_pass(one, {}).empty());

  // reproducible given fixed latents
  auto again = reverse_pyramid_pass(latents, heads);
  CHECK((again[0]->value.arr() == maps[0]->value.arr()).all());
}
