#include <doctest.h>

#include <cmath>
#include <limits>

#include "adsorbtext/io.hpp"
#include "adsorbtext/tensor.hpp"
#include "gradcheck.hpp"

using namespace adsorbtext;
using namespace adsorbtext::tensor;
using testing::grad_check;
using testing::random_tensor;

namespace {

// Reduces any [m,n] output to a scalar through a fixed random projection so
// every output element gets a distinct upstream gradient.
struct Projector {
  std::mt19937_64 rng{11};
  Tensor w;
  Tensor operator()(Tape& t, const Tensor& y) {
    if (!w.defined() || w.rows() != y.cols()) {
      w = random_tensor({y.cols(), 1}, rng);
      w.set_requires_grad(false);
    }
    return sum(t, matmul(t, y, w));
  }
};

void require_ok(const testing::GradCheck& r, double tol_max = 1e-6) {
  CHECK(r.checked > 0);
  CHECK(r.failed == 0);
  CHECK(r.max_error < tol_max);
}

}  // namespace

TEST_CASE("finite differences for every op") {
  std::mt19937_64 rng(3);
  Projector proj;

  SUBCASE("matmul and matmul_nt") {
    auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng), c = random_tensor({5, 4}, rng);
    require_ok(grad_check({a, b}, [&](Tape& t) { return proj(t, matmul(t, a, b)); }));
    require_ok(grad_check({a, c}, [&](Tape& t) { return proj(t, matmul_nt(t, a, c)); }));
  }
  SUBCASE("add, add_bias, scale") {
    auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng), bias = random_tensor({4}, rng);
    require_ok(grad_check({a, b}, [&](Tape& t) { return proj(t, add(t, a, b)); }));
    require_ok(grad_check({a, bias}, [&](Tape& t) { return proj(t, add_bias(t, a, bias)); }));
    require_ok(grad_check({a}, [&](Tape& t) { return proj(t, scale(t, a, -2.5)); }));
    // same tensor used twice accumulates
    require_ok(grad_check({a}, [&](Tape& t) { return proj(t, add(t, a, a)); }));
  }
  SUBCASE("softmax both axes and masked columns") {
    auto x = random_tensor({4, 5}, rng);
    require_ok(grad_check({x}, [&](Tape& t) { return proj(t, softmax(t, x, 1)); }));
    // columns sum to one, so a plain projection would have zero gradient
    require_ok(grad_check({x}, [&](Tape& t) { return proj(t, tanh(t, softmax(t, x, 0))); }));
    std::vector<std::uint8_t> keep{1, 0, 1, 1, 0};
    require_ok(grad_check({x}, [&](Tape& t) { return proj(t, softmax(t, mask_columns(t, x, keep), 1)); }));
  }
  SUBCASE("layer_norm") {
    auto x = random_tensor({3, 6}, rng), g = random_tensor({6}, rng), b = random_tensor({6}, rng);
    require_ok(grad_check({x, g, b}, [&](Tape& t) { return proj(t, layer_norm(t, x, g, b)); }), 1e-5);
  }
  SUBCASE("activations") {
    auto x = random_tensor({3, 4}, rng);
    require_ok(grad_check({x}, [&](Tape& t) { return proj(t, gelu(t, x, GeluKind::tanh_approx)); }));
    require_ok(grad_check({x}, [&](Tape& t) { return proj(t, gelu(t, x, GeluKind::erf_exact)); }));
    require_ok(grad_check({x}, [&](Tape& t) { return proj(t, tanh(t, x)); }));
  }
  SUBCASE("embedding with repeated ids") {
    auto table = random_tensor({6, 3}, rng);
    std::vector<int> ids{2, 0, 2, 5};
    require_ok(grad_check({table}, [&](Tape& t) { return proj(t, embedding(t, table, ids)); }));
  }
  SUBCASE("slicing and concatenation") {
    auto a = random_tensor({4, 6}, rng), b = random_tensor({4, 2}, rng), c = random_tensor({1, 6}, rng);
    require_ok(grad_check({a}, [&](Tape& t) { return proj(t, slice_rows(t, a, 1, 2)); }));
    require_ok(grad_check({a}, [&](Tape& t) { return proj(t, slice_cols(t, a, 2, 3)); }));
    require_ok(grad_check({a, b}, [&](Tape& t) { return proj(t, concat_cols(t, {a, b})); }));
    require_ok(grad_check({a, c}, [&](Tape& t) { return proj(t, concat_rows(t, {a, c})); }));
  }
  SUBCASE("dropout with a fixed mask") {
    auto x = random_tensor({3, 5}, rng);
    require_ok(grad_check({x}, [&](Tape& t) {
      std::mt19937_64 local(99);
      return proj(t, dropout(t, x, 0.3, &local));
    }));
  }
  SUBCASE("losses") {
    auto pred = random_tensor({4, 1}, rng);
    std::vector<Real> target;
    for (std::size_t i = 0; i < 4; ++i) target.push_back(pred.values()[i] + (i % 2 ? 0.7 : -0.4));
    require_ok(grad_check({pred}, [&](Tape& t) { return l1_loss(t, pred, target); }));
    auto logits = random_tensor({3, 5}, rng);
    std::vector<int> cls{4, 0, 2};
    require_ok(grad_check({logits}, [&](Tape& t) { return cross_entropy(t, logits, cls); }));
  }
}

TEST_CASE("softmax values") {
  Tape t = Tape::inference();
  const double inf = std::numeric_limits<double>::infinity();
  SUBCASE("equal inputs give the uniform distribution") {
    auto y = softmax(t, Tensor::from({1, 4}, {0.3, 0.3, 0.3, 0.3}));
    for (auto v : y.values()) CHECK(v == doctest::Approx(0.25));
  }
  SUBCASE("masked entries are exactly zero") {
    auto y = softmax(t, Tensor::from({1, 3}, {1.0, -inf, 2.0}));
    CHECK(y(0, 1) == 0.0);
    CHECK(y(0, 0) + y(0, 2) == doctest::Approx(1.0));
    CHECK(y(0, 2) / y(0, 0) == doctest::Approx(std::exp(1.0)));
  }
  SUBCASE("large inputs do not overflow") {
    auto y = softmax(t, Tensor::from({1, 2}, {1000.0, 1000.0}));
    CHECK(y(0, 0) == doctest::Approx(0.5));
    CHECK(std::isfinite(y(0, 1)));
  }
  SUBCASE("shift invariance") {
    std::mt19937_64 rng(4);
    auto x = random_tensor({3, 5}, rng);
    auto shifted = x.clone();
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 5; ++c) shifted(r, c) += 17.0 * (r + 1);
    auto a = softmax(t, x), b = softmax(t, shifted);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.values()[i] == doctest::Approx(b.values()[i]).epsilon(1e-12));
  }
  SUBCASE("axis 0 normalizes columns") {
    auto y = softmax(t, Tensor::from({2, 2}, {0.0, 1.0, 0.0, 3.0}), 0);
    CHECK(y(0, 0) == doctest::Approx(0.5));
    CHECK(y(0, 1) + y(1, 1) == doctest::Approx(1.0));
  }
}

TEST_CASE("layer_norm values") {
  Tape t = Tape::inference();
  auto g = Tensor::from({4}, {1, 1, 1, 1}), b = Tensor::from({4}, {0, 0, 0, 0});
  SUBCASE("constant row maps to the bias") {
    auto y = layer_norm(t, Tensor::from({1, 4}, {5, 5, 5, 5}), g, Tensor::from({4}, {0.5, -1, 2, 0}));
    CHECK(y(0, 0) == doctest::Approx(0.5));
    CHECK(y(0, 1) == doctest::Approx(-1.0));
    CHECK(y(0, 2) == doctest::Approx(2.0));
  }
  SUBCASE("zero mean and unit variance") {
    auto y = layer_norm(t, Tensor::from({1, 4}, {1, 2, 3, 10}), g, b, 1e-300);
    double mean = 0, var = 0;
    for (auto v : y.values()) mean += v / 4;
    for (auto v : y.values()) var += (v - mean) * (v - mean) / 4;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("hand computed row") {
    // mean 2.5, population variance 1.25
    auto y = layer_norm(t, Tensor::from({1, 4}, {1, 2, 3, 4}), g, b, 1e-300);
    CHECK(y(0, 0) == doctest::Approx(-1.5 / std::sqrt(1.25)));
    CHECK(y(0, 3) == doctest::Approx(1.5 / std::sqrt(1.25)));
  }
  CHECK_THROWS(layer_norm(t, Tensor::from({1, 1}, {1.0}), Tensor::from({1}, {1}), Tensor::from({1}, {0})));
}

TEST_CASE("gelu and cross entropy reference values") {
  Tape t = Tape::inference();
  auto x = Tensor::from({1, 3}, {-1.0, 0.0, 2.0});
  auto e = gelu(t, x, GeluKind::erf_exact);
  CHECK(e(0, 0) == doctest::Approx(-0.15865525393145707));
  CHECK(e(0, 1) == 0.0);
  CHECK(e(0, 2) == doctest::Approx(1.9544997361036416));
  auto a = gelu(t, x, GeluKind::tanh_approx);
  CHECK(a(0, 2) == doctest::Approx(1.9545976940871754));

  auto logits = Tensor::from({1, 3}, {0.0, 0.0, 0.0});
  std::vector<int> cls{1};
  CHECK(cross_entropy(t, logits, cls).item() == doctest::Approx(std::log(3.0)));
}

TEST_CASE("backward semantics") {
  SUBCASE("non-scalar loss") {
    Tape t;
    auto x = Tensor::from({2}, {1, 2}, true);
    auto y = scale(t, x, 2.0);
    CHECK_THROWS_AS(t.backward(y), Error);
  }
  SUBCASE("tape replays once") {
    Tape t;
    auto x = Tensor::from({2}, {1, 2}, true);
    auto y = sum(t, x);
    t.backward(y);
    CHECK_THROWS_AS(t.backward(y), Error);
  }
  SUBCASE("gradients accumulate across tapes until zeroed") {
    auto x = Tensor::from({1, 2}, {1, 2}, true);
    for (int k = 0; k < 2; ++k) {
      Tape t;
      t.backward(sum(t, scale(t, x, 3.0)));
    }
    CHECK(x.grad()[0] == doctest::Approx(6.0));
    x.zero_grad();
    CHECK(x.grad()[1] == 0.0);
  }
  SUBCASE("inference tape records nothing") {
    Tape t = Tape::inference();
    auto x = Tensor::from({1, 2}, {1, 2}, true);
    sum(t, scale(t, x, 3.0));
    CHECK(t.size() == 0);
  }
  SUBCASE("shape errors") {
    Tape t;
    auto a = Tensor::from({2, 3}, std::vector<Real>(6, 1.0));
    CHECK_THROWS_AS(matmul(t, a, a), Error);
    CHECK_THROWS_AS(add(t, a, Tensor::from({3, 2}, std::vector<Real>(6, 1.0))), Error);
    std::vector<int> bad{7};
    CHECK_THROWS_AS(embedding(t, a, bad), Error);
  }
}
