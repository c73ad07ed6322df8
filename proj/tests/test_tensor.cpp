// Built against the double-precision library so finite differences are
// meaningful at tight tolerances.

#include <doctest.h>

#include <cmath>
#include <random>

#include "tlm/mask.hpp"
#include "tlm/tensor.hpp"
#include "testing.hpp"

using namespace tlm;
using testing::gradCheck;
using testing::randomTensor;

static_assert(sizeof(real) == 8, "tensor tests expect the double build");

namespace {

Parameter param(const char* name, Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  return Parameter(name, randomTensor(std::move(shape), rng, scale));
}

// Fixed random projection so every primitive ends in a scalar with a
// non-trivial gradient.
Var project(Tape& t, Var x, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return ops::weightedSum(t, x, randomTensor(t.value(x).shape(), rng));
}

}  // namespace

TEST_CASE("matmul examples") {
  Tape t;
  const Var a = t.constant(Tensor::fromRows({{1, 2}, {3, 4}}));
  const Var eye = t.constant(Tensor::fromRows({{1, 0}, {0, 1}}));
  CHECK(t.value(ops::matmul(t, a, eye)) == Tensor::fromRows({{1, 2}, {3, 4}}));
  CHECK(t.value(ops::matmul(t, eye, eye)) == Tensor::fromRows({{1, 0}, {0, 1}}));
  CHECK_THROWS_AS(ops::matmul(t, a, t.constant(Tensor({3, 2}))), ShapeError);
}

TEST_CASE("matmul gradient, 3x4 by 4x5") {
  std::mt19937_64 rng(1);
  std::vector<Parameter> ps{param("a", {3, 4}, rng), param("b", {4, 5}, rng)};
  // Step 1e-3 as in the reference example; matmul is bilinear so the central
  // difference is exact up to rounding.
  CHECK(gradCheck(ps, [](Tape& t, const auto& v) { return project(t, ops::matmul(t, v[0], v[1])); }, 1e-3) < 1e-4);
}

TEST_CASE("gradients of every primitive match central differences") {
  std::mt19937_64 rng(2);
  SUBCASE("matmulNT") {
    std::vector<Parameter> ps{param("a", {3, 4}, rng), param("b", {5, 4}, rng)};
    CHECK(gradCheck(ps, [](Tape& t, const auto& v) { return project(t, ops::matmulNT(t, v[0], v[1])); }) < 1e-4);
  }
  SUBCASE("add and addBias") {
    std::vector<Parameter> ps{param("a", {3, 4}, rng), param("b", {3, 4}, rng), param("c", {4}, rng)};
    CHECK(gradCheck(ps, [](Tape& t, const auto& v) {
            return project(t, ops::addBias(t, ops::add(t, v[0], v[1]), v[2]));
          }) < 1e-4);
  }
  SUBCASE("scale and relu") {
    std::vector<Parameter> ps{param("a", {4, 6}, rng)};
    CHECK(gradCheck(ps, [](Tape& t, const auto& v) { return project(t, ops::relu(t, ops::scale(t, v[0], 1.7))); }) <
          1e-4);
  }
  SUBCASE("layerNorm") {
    std::vector<Parameter> ps{param("x", {3, 8}, rng), param("g", {8}, rng), param("b", {8}, rng)};
    CHECK(gradCheck(ps, [](Tape& t, const auto& v) { return project(t, ops::layerNorm(t, v[0], v[1], v[2])); }) <
          1e-4);
  }
  SUBCASE("embedding with repeated ids") {
    std::vector<Parameter> ps{param("table", {6, 4}, rng)};
    const std::vector<TokenId> ids{0, 3, 3, 5, 1};
    CHECK(gradCheck(ps, [&](Tape& t, const auto& v) { return project(t, ops::embedding(t, v[0], ids)); }) < 1e-4);
  }
  SUBCASE("dropout with a fixed mask") {
    std::vector<Parameter> ps{param("x", {4, 5}, rng)};
    CHECK(gradCheck(ps, [](Tape& t, const auto& v) {
            std::mt19937_64 r(5);
            return project(t, ops::dropout(t, v[0], 0.3, r));
          }) < 1e-4);
  }
  SUBCASE("maskedSoftmax") {
    const AttentionMask m = buildTlmMask(2, 3, SourceMask::Triangular);
    std::vector<Parameter> ps{param("z", {5, 5}, rng)};
    CHECK(gradCheck(ps, [&](Tape& t, const auto& v) { return project(t, ops::maskedSoftmax(t, v[0], m.view())); }) <
          1e-4);
  }
  SUBCASE("multiHeadAttention over two packed segments") {
    const AttentionMask m1 = buildTlmMask(2, 2, SourceMask::Full);
    const AttentionMask m2 = buildCausalMask(3);
    const std::vector<AttentionSegment> segs{{0, 4, 0, 4, m1.view()}, {4, 3, 4, 3, m2.view()}};
    std::vector<Parameter> ps{param("q", {7, 8}, rng), param("k", {7, 8}, rng), param("v", {7, 8}, rng)};
    CHECK(gradCheck(ps, [&](Tape& t, const auto& v) {
            return project(t, ops::multiHeadAttention(t, v[0], v[1], v[2], segs, 2));
          }) < 1e-4);
  }
  SUBCASE("cross attention with differing query and key ranges") {
    const AttentionMask full(2, 3, 0, SourceMask::Full);
    AttentionMask cross = full;
    for (std::size_t q = 0; q < 2; ++q)
      for (std::size_t k = 0; k < 3; ++k) cross.set(q, k, true);
    const std::vector<AttentionSegment> segs{{0, 2, 0, 3, cross.view()}};
    std::vector<Parameter> ps{param("q", {2, 4}, rng), param("k", {3, 4}, rng), param("v", {3, 4}, rng)};
    CHECK(gradCheck(ps, [&](Tape& t, const auto& v) {
            return project(t, ops::multiHeadAttention(t, v[0], v[1], v[2], segs, 2));
          }) < 1e-4);
  }
  SUBCASE("crossEntropy with smoothing and weights") {
    const std::vector<TokenId> targets{1, 0, 4, 2};
    const std::vector<real> weights{1, 0, 2, 0.5};
    std::vector<Parameter> ps{param("z", {4, 5}, rng)};
    CHECK(gradCheck(ps, [&](Tape& t, const auto& v) { return ops::crossEntropy(t, v[0], targets, weights, 0.1); }) <
          1e-4);
  }
  SUBCASE("combineScalars") {
    std::vector<Parameter> ps{param("a", {2, 3}, rng), param("b", {3, 2}, rng)};
    CHECK(gradCheck(ps, [](Tape& t, const auto& v) {
            return ops::combineScalars(t, project(t, v[0]), 0.7, project(t, v[1], 3), 1.3);
          }) < 1e-4);
  }
}

TEST_CASE("maskedSoftmax examples") {
  Tape t;
  SUBCASE("uniform over three allowed keys") {
    AttentionMask m(1, 5, 0, SourceMask::Full);
    m.set(0, 0, true);
    m.set(0, 2, true);
    m.set(0, 4, true);
    const Tensor p = t.value(ops::maskedSoftmax(t, t.constant(Tensor({1, 5})), m.view()));
    CHECK(p[0] == doctest::Approx(1.0 / 3));
    CHECK(p[2] == doctest::Approx(1.0 / 3));
    CHECK(p[4] == doctest::Approx(1.0 / 3));
    CHECK(p[1] == 0.0);
    CHECK(p[3] == 0.0);
  }
  SUBCASE("single allowed key per row") {
    const AttentionMask m = buildCausalMask(1);
    const Tensor p = t.value(ops::maskedSoftmax(t, t.constant(Tensor::fromRows({{42}})), m.view()));
    CHECK(p[0] == 1.0);
  }
  SUBCASE("logits 2,1,0 all allowed") {
    AttentionMask m(1, 3, 0, SourceMask::Full);
    for (std::size_t k = 0; k < 3; ++k) m.set(0, k, true);
    const Tensor p = t.value(ops::maskedSoftmax(t, t.constant(Tensor::fromRows({{2, 1, 0}})), m.view()));
    CHECK(p[0] == doctest::Approx(0.6652).epsilon(1e-4));
    CHECK(p[1] == doctest::Approx(0.2447).epsilon(1e-3));
    CHECK(p[2] == doctest::Approx(0.0900).epsilon(1e-3));
  }
  SUBCASE("blocked keys stay zero even with huge logits") {
    const AttentionMask m = buildCausalMask(2);
    const Tensor p = t.value(ops::maskedSoftmax(t, t.constant(Tensor::fromRows({{0, 1e12}, {0, 0}})), m.view()));
    CHECK(p[0] == 1.0);
    CHECK(p[1] == 0.0);
  }
  SUBCASE("a row with no allowed key is an error") {
    const AttentionMask m(1, 2, 0, SourceMask::Full);
    CHECK_THROWS_AS(ops::maskedSoftmax(t, t.constant(Tensor({1, 2})), m.view()), DataError);
  }
}

TEST_CASE("crossEntropy examples") {
  Tape t;
  const std::vector<TokenId> target0{0};
  const std::vector<real> one{1};
  SUBCASE("large correct margin gives zero loss") {
    const Var z = t.constant(Tensor::fromRows({{100, 0, 0}}));
    CHECK(t.value(ops::crossEntropy(t, z, target0, one, 0))[0] == doctest::Approx(0).epsilon(1e-12));
  }
  SUBCASE("uniform logits over V=4") {
    const Var z = t.constant(Tensor({1, 4}));
    CHECK(t.value(ops::crossEntropy(t, z, target0, one, 0))[0] == doctest::Approx(std::log(4.0)));
  }
  SUBCASE("V=2, logits [1,0], target 0, epsilon 0.1") {
    // Smoothed target distribution q = 0.9 * onehot + 0.1 / V.
    const double p0 = std::exp(1.0) / (std::exp(1.0) + 1), p1 = 1 - p0;
    const double expected = -(0.95 * std::log(p0) + 0.05 * std::log(p1));
    const Var z = t.constant(Tensor::fromRows({{1, 0}}));
    CHECK(t.value(ops::crossEntropy(t, z, target0, one, 0.1))[0] == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("zero total weight gives zero") {
    const std::vector<real> none{0};
    CHECK(t.value(ops::crossEntropy(t, t.constant(Tensor({1, 3})), target0, none, 0.1))[0] == 0.0);
  }
  SUBCASE("out of range target") {
    const std::vector<TokenId> bad{7};
    CHECK_THROWS_AS(ops::crossEntropy(t, t.constant(Tensor({1, 3})), bad, one, 0), DataError);
  }
}

TEST_CASE("tape bookkeeping") {
  Parameter p("w", Tensor::fromRows({{1, 2}}));
  SUBCASE("second backward is refused") {
    Tape t;
    const Var loss = ops::weightedSum(t, t.parameter(p), Tensor::fromRows({{1, 1}}));
    t.backward(loss);
    CHECK(p.grad == Tensor::fromRows({{1, 1}}));
    CHECK_THROWS(t.backward(loss));
  }
  SUBCASE("inference tape cannot run backward") {
    Tape t(false);
    const Var loss = ops::weightedSum(t, t.parameter(p), Tensor::fromRows({{1, 1}}));
    CHECK_THROWS(t.backward(loss));
  }
  SUBCASE("non-finite values raise NumericError") {
    Tape t;
    const Var x = t.constant(Tensor::fromRows({{1e300, 1e300}}));
    CHECK_THROWS_AS(ops::scale(t, x, 1e300), NumericError);
  }
  SUBCASE("gradients accumulate across tapes until cleared") {
    for (int i = 0; i < 2; ++i) {
      Tape t;
      t.backward(ops::weightedSum(t, t.parameter(p), Tensor::fromRows({{1, 3}})));
    }
    CHECK(p.grad == Tensor::fromRows({{2, 6}}));
    p.zeroGrad();
    CHECK(p.grad == Tensor::fromRows({{0, 0}}));
  }
}

TEST_CASE("allFinite detects NaN and infinities") {
  Tensor a = Tensor::fromRows({{1, 2, 3}});
  CHECK(a.allFinite());
  a[1] = std::numeric_limits<real>::infinity();
  CHECK_FALSE(a.allFinite());
  a[1] = -std::numeric_limits<real>::infinity();
  CHECK_FALSE(a.allFinite());
  a[1] = std::numeric_limits<real>::quiet_NaN();
  CHECK_FALSE(a.allFinite());
  a[1] = std::numeric_limits<real>::max();
  CHECK(a.allFinite());
}

TEST_CASE("sinusoidal positions") {
  const Tensor p = sinusoidalPositions(5, 6);
  CHECK(p.shape() == Shape{5, 6});
  CHECK(p.at(0, 0) == 0.0);
  CHECK(p.at(0, 1) == 1.0);
  CHECK(p.at(3, 0) == doctest::Approx(std::sin(3.0)));
  CHECK(p.at(3, 1) == doctest::Approx(std::cos(3.0)));
  CHECK(p.at(2, 2) == doctest::Approx(std::sin(2.0 / std::pow(10000.0, 2.0 / 6))));
}
