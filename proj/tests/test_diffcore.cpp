#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fairasr/diffcore.h"
#include "fairasr/rng.h"
#include "fairasr/tensor.h"

using fairasr::GradMap;
using fairasr::SplitMix64;
using fairasr::Tensor;
namespace diffcore = fairasr::diffcore;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, SplitMix64& rng,
                     double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = scale * rng.gaussian();
  return t;
}

// Independent oracle: plain triple loop, no shared code with the primitive.
Tensor naive_matmul_bias(const Tensor& a, const Tensor& b, const Tensor& bias) {
  Tensor out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = bias[j];
      for (std::size_t k = 0; k < a.cols(); ++k) {
        acc += a.at(i, k) * b.at(k, j);
      }
      out.at(i, j) = acc;
    }
  }
  return out;
}

// Independent cross-entropy oracle: explicit softmax, then -log of the
// target probability (no log-sum-exp trick; only safe for modest logits).
double naive_cross_entropy(const Tensor& logits,
                           const std::vector<int>& targets) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      sum += std::exp(logits.at(i, j));
    }
    const double p =
        std::exp(logits.at(i, static_cast<std::size_t>(targets[i]))) / sum;
    total += -std::log(p);
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace

TEST_CASE("affine forward identity weight") {
  const Tensor input({1, 2}, {1.0, 2.0});
  const Tensor weight({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const Tensor bias({2}, {0.0, 0.0});
  const Tensor out = diffcore::affine_forward(input, weight, bias);
  CHECK(out.at(0, 0) == doctest::Approx(1.0));
  CHECK(out.at(0, 1) == doctest::Approx(2.0));
}

TEST_CASE("affine forward hand arithmetic") {
  const Tensor input({1, 2}, {1.0, 1.0});
  const Tensor weight({2, 1}, {2.0, 3.0});
  const Tensor bias({1}, {1.0});
  const Tensor out = diffcore::affine_forward(input, weight, bias);
  CHECK(out.at(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("affine forward matches the naive triple-loop oracle") {
  SplitMix64 rng(11);
  const Tensor input = random_tensor({3, 4}, rng);
  const Tensor weight = random_tensor({4, 2}, rng);
  const Tensor bias = random_tensor({2}, rng);
  const Tensor got = diffcore::affine_forward(input, weight, bias);
  const Tensor want = naive_matmul_bias(input, weight, bias);
  REQUIRE(got.same_shape(want));
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("affine shape mismatch names both shapes") {
  const Tensor input({1, 3}, {1.0, 2.0, 3.0});
  const Tensor weight({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const Tensor bias({2}, {0.0, 0.0});
  try {
    diffcore::affine_forward(input, weight, bias);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    CHECK(what.find("[1x3]") != std::string::npos);
    CHECK(what.find("[2x2]") != std::string::npos);
  }
}

TEST_CASE("affine is exactly linear") {
  // f(x + y) - f(x) - f(y) + f(0) == 0 within 1e-12
  SplitMix64 rng(101);
  const Tensor weight = random_tensor({5, 3}, rng);
  const Tensor bias = random_tensor({3}, rng);
  const Tensor x = random_tensor({2, 5}, rng);
  const Tensor y = random_tensor({2, 5}, rng);
  Tensor x_plus_y = x;
  for (std::size_t i = 0; i < x.size(); ++i) x_plus_y[i] += y[i];
  const Tensor zero({2, 5});

  const Tensor f_sum = diffcore::affine_forward(x_plus_y, weight, bias);
  const Tensor f_x = diffcore::affine_forward(x, weight, bias);
  const Tensor f_y = diffcore::affine_forward(y, weight, bias);
  const Tensor f_0 = diffcore::affine_forward(zero, weight, bias);
  for (std::size_t i = 0; i < f_sum.size(); ++i) {
    CHECK(std::abs(f_sum[i] - f_x[i] - f_y[i] + f_0[i]) < 1e-12);
  }
}

TEST_CASE("tanh forward") {
  const Tensor zero({1, 1}, {0.0});
  CHECK(diffcore::tanh_forward(zero)[0] == 0.0);

  const Tensor large({1, 1}, {50.0});
  const double saturated = diffcore::tanh_forward(large)[0];
  CHECK(saturated > 0.999);
  CHECK(saturated <= 1.0);

  const Tensor one({1, 1}, {1.0});
  CHECK(diffcore::tanh_forward(one)[0] ==
        doctest::Approx(std::tanh(1.0)).epsilon(1e-15));
  CHECK(diffcore::tanh_forward(one)[0] == doctest::Approx(0.761594).epsilon(1e-6));
}

TEST_CASE("cross-entropy trivial values") {
  const Tensor uniform({1, 2}, {0.0, 0.0});
  CHECK(diffcore::ce_logits_forward(uniform, {0}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Large logit gap: stays finite and ~0 thanks to the max shift.
  const Tensor spiked({1, 2}, {1000.0, 0.0});
  const double loss = diffcore::ce_logits_forward(spiked, {0});
  CHECK(std::isfinite(loss));
  CHECK(loss < 1e-300);

  const Tensor asym({1, 2}, {1.0, -1.0});
  CHECK(diffcore::ce_logits_forward(asym, {0}) ==
        doctest::Approx(std::log(1.0 + std::exp(-2.0))).epsilon(1e-12));
}

TEST_CASE("cross-entropy matches the independent softmax+log oracle") {
  SplitMix64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor logits = random_tensor({4, 5}, rng, 2.0);
    std::vector<int> targets;
    for (int i = 0; i < 4; ++i) {
      targets.push_back(static_cast<int>(rng.below(5)));
    }
    CHECK(diffcore::ce_logits_forward(logits, targets) ==
          doctest::Approx(naive_cross_entropy(logits, targets)).epsilon(1e-12));
  }
}

TEST_CASE("cross-entropy rejects out-of-range targets") {
  const Tensor logits({1, 3}, {0.0, 0.0, 0.0});
  CHECK_THROWS_AS(diffcore::ce_logits_forward(logits, {3}), std::out_of_range);
  CHECK_THROWS_AS(diffcore::ce_logits_backward(logits, {-1}),
                  std::out_of_range);
}

TEST_CASE("cross-entropy is invariant to per-row constant shifts") {
  SplitMix64 rng(23);
  const Tensor logits = random_tensor({3, 4}, rng, 3.0);
  const std::vector<int> targets{1, 0, 3};
  const double base = diffcore::ce_logits_forward(logits, targets);
  for (double shift : {-7.5, 0.25, 1234.0}) {
    Tensor shifted = logits;
    for (double& v : shifted.data()) v += shift;
    CHECK(std::abs(diffcore::ce_logits_forward(shifted, targets) - base) <
          1e-12);
  }
}

TEST_CASE("cross-entropy gradient at uniform logits") {
  const Tensor logits({1, 2}, {0.0, 0.0});
  const Tensor grad = diffcore::ce_logits_backward(logits, {0});
  CHECK(grad[0] == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(grad[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("tanh gradient at zero is one") {
  const Tensor activation({1, 1}, {0.0});  // tanh(0)
  const Tensor upstream({1, 1}, {1.0});
  CHECK(diffcore::tanh_backward(activation, upstream)[0] == 1.0);
}

TEST_CASE("primitive backward passes match central finite differences") {
  // Composite scalar: ce(tanh(affine(x, w, b)), targets); checks every
  // primitive's backward in one chain against the finite-difference oracle.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SplitMix64 rng(seed * 7919 + 1);
    std::map<std::string, Tensor> params;
    params["w"] = random_tensor({3, 4}, rng);
    params["b"] = random_tensor({4}, rng);
    params["x"] = random_tensor({2, 3}, rng);
    const std::vector<int> targets{static_cast<int>(rng.below(4)),
                                   static_cast<int>(rng.below(4))};

    auto eval = [&](const std::map<std::string, Tensor>& p) {
      const Tensor hidden = diffcore::tanh_forward(
          diffcore::affine_forward(p.at("x"), p.at("w"), p.at("b")));
      return diffcore::ce_logits_forward(hidden, targets);
    };

    // Analytic gradients through the explicit backward functions.
    const Tensor lin =
        diffcore::affine_forward(params["x"], params["w"], params["b"]);
    const Tensor hidden = diffcore::tanh_forward(lin);
    const Tensor d_hidden = diffcore::ce_logits_backward(hidden, targets);
    const Tensor d_lin = diffcore::tanh_backward(hidden, d_hidden);
    const diffcore::AffineGrads affine =
        diffcore::affine_backward(params["x"], params["w"], d_lin);
    GradMap analytic;
    analytic.accumulate("w", affine.d_weight);
    analytic.accumulate("b", affine.d_bias);
    analytic.accumulate("x", affine.d_input);

    const auto errors = diffcore::grad_check(eval, params, analytic, 1e-4);
    for (const auto& [name, err] : errors) {
      CHECK_MESSAGE(err < 1e-4, "seed ", seed, " param ", name, " err ", err);
    }
  }
}

TEST_CASE("grad_check on a quadratic") {
  std::map<std::string, Tensor> params;
  params["theta"] = Tensor::scalar(3.0);
  auto f = [](const std::map<std::string, Tensor>& p) {
    const double theta = p.at("theta")[0];
    return theta * theta;
  };
  GradMap analytic;
  analytic.accumulate("theta", Tensor::scalar(6.0));
  const auto errors = diffcore::grad_check(f, params, analytic, 1e-4);
  CHECK(errors.at("theta") < 1e-9);  // central differences are exact-ish here
}

TEST_CASE("grad_check on a constant function") {
  std::map<std::string, Tensor> params;
  params["theta"] = Tensor::scalar(0.5);
  auto f = [](const std::map<std::string, Tensor>&) { return 4.0; };
  GradMap analytic;
  analytic.accumulate("theta", Tensor::scalar(0.0));
  const auto errors = diffcore::grad_check(f, params, analytic, 1e-4);
  CHECK(errors.at("theta") == 0.0);
}

TEST_CASE("grad_check rejects non-finite objectives") {
  std::map<std::string, Tensor> params;
  params["theta"] = Tensor::scalar(1.0);
  auto f = [](const std::map<std::string, Tensor>& p) {
    return std::log(-p.at("theta")[0]);  // NaN for positive theta
  };
  GradMap analytic;
  analytic.accumulate("theta", Tensor::scalar(0.0));
  CHECK_THROWS_AS(diffcore::grad_check(f, params, analytic, 1e-4),
                  std::runtime_error);
}

TEST_CASE("tensor shape and data must agree") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({0}), std::invalid_argument);
}

TEST_CASE("gradmap accumulation is element-wise addition") {
  GradMap grads;
  grads.accumulate("p", Tensor({2}, {1.0, 2.0}));
  grads.accumulate("p", Tensor({2}, {0.5, -1.0}));
  const Tensor* entry = grads.find("p");
  REQUIRE(entry != nullptr);
  CHECK((*entry)[0] == 1.5);
  CHECK((*entry)[1] == 1.0);
  CHECK_THROWS_AS(grads.accumulate("p", Tensor({3})), std::invalid_argument);
}
