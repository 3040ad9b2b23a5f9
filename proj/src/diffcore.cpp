#include "fairasr/diffcore.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fairasr::diffcore {

namespace {

void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(what) + " must be rank-2, got " +
                                shape_to_string(t.shape()));
  }
}

}  // namespace

Tensor affine_forward(const Tensor& input, const Tensor& weight,
                      const Tensor& bias) {
  require_rank2(input, "affine input");
  require_rank2(weight, "affine weight");
  if (input.cols() != weight.rows() || bias.rank() != 1 ||
      bias.shape()[0] != weight.cols()) {
    throw std::invalid_argument(
        "affine shape mismatch: input " + shape_to_string(input.shape()) +
        ", weight " + shape_to_string(weight.shape()) + ", bias " +
        shape_to_string(bias.shape()));
  }
  const std::size_t n = input.rows();
  const std::size_t d_in = input.cols();
  const std::size_t d_out = weight.cols();
  Tensor out({n, d_out});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d_out; ++j) out.at(i, j) = bias[j];
    for (std::size_t k = 0; k < d_in; ++k) {
      const double x = input.at(i, k);
      if (x == 0.0) continue;
      for (std::size_t j = 0; j < d_out; ++j) {
        out.at(i, j) += x * weight.at(k, j);
      }
    }
  }
  return out;
}

AffineGrads affine_backward(const Tensor& input, const Tensor& weight,
                            const Tensor& d_output) {
  require_rank2(d_output, "affine upstream gradient");
  if (d_output.rows() != input.rows() || d_output.cols() != weight.cols()) {
    throw std::invalid_argument(
        "affine backward shape mismatch: upstream " +
        shape_to_string(d_output.shape()) + ", input " +
        shape_to_string(input.shape()) + ", weight " +
        shape_to_string(weight.shape()));
  }
  const std::size_t n = input.rows();
  const std::size_t d_in = input.cols();
  const std::size_t d_out = weight.cols();
  AffineGrads grads{Tensor({n, d_in}), Tensor({d_in, d_out}),
                    Tensor({d_out})};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d_out; ++j) {
      const double dy = d_output.at(i, j);
      grads.d_bias[j] += dy;
      for (std::size_t k = 0; k < d_in; ++k) {
        grads.d_input.at(i, k) += dy * weight.at(k, j);
        grads.d_weight.at(k, j) += dy * input.at(i, k);
      }
    }
  }
  return grads;
}

Tensor tanh_forward(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data()) v = std::tanh(v);
  return out;
}

Tensor tanh_backward(const Tensor& activation, const Tensor& d_output) {
  if (!activation.same_shape(d_output)) {
    throw std::invalid_argument("tanh backward shape mismatch: " +
                                shape_to_string(activation.shape()) + " vs " +
                                shape_to_string(d_output.shape()));
  }
  Tensor out = d_output;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] *= 1.0 - activation[i] * activation[i];
  }
  return out;
}

Tensor softmax_rows(const Tensor& logits) {
  require_rank2(logits, "softmax logits");
  Tensor out = logits;
  const std::size_t n = logits.rows();
  const std::size_t v = logits.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double row_max = out.at(i, 0);
    for (std::size_t j = 1; j < v; ++j) row_max = std::max(row_max, out.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      double e = std::exp(out.at(i, j) - row_max);
      out.at(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < v; ++j) out.at(i, j) /= sum;
  }
  return out;
}

double ce_logits_forward(const Tensor& logits,
                         const std::vector<int>& targets) {
  require_rank2(logits, "cross-entropy logits");
  const std::size_t n = logits.rows();
  const std::size_t v = logits.cols();
  if (targets.size() != n) {
    throw std::invalid_argument("cross-entropy: " + std::to_string(n) +
                                " logit rows but " +
                                std::to_string(targets.size()) + " targets");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int target = targets[i];
    if (target < 0 || static_cast<std::size_t>(target) >= v) {
      throw std::out_of_range("cross-entropy target " + std::to_string(target) +
                              " outside [0, " + std::to_string(v) +
                              ") at row " + std::to_string(i));
    }
    double row_max = logits.at(i, 0);
    for (std::size_t j = 1; j < v; ++j) {
      row_max = std::max(row_max, logits.at(i, j));
    }
    double sum_exp = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      sum_exp += std::exp(logits.at(i, j) - row_max);
    }
    // -log softmax[target] = log(sum_exp) + max - logit[target]
    total += std::log(sum_exp) + row_max -
             logits.at(i, static_cast<std::size_t>(target));
  }
  return total / static_cast<double>(n);
}

Tensor ce_logits_backward(const Tensor& logits,
                          const std::vector<int>& targets) {
  const std::size_t n = logits.rows();
  const std::size_t v = logits.cols();
  if (targets.size() != n) {
    throw std::invalid_argument("cross-entropy: " + std::to_string(n) +
                                " logit rows but " +
                                std::to_string(targets.size()) + " targets");
  }
  Tensor grad = softmax_rows(logits);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int target = targets[i];
    if (target < 0 || static_cast<std::size_t>(target) >= v) {
      throw std::out_of_range("cross-entropy target " + std::to_string(target) +
                              " outside [0, " + std::to_string(v) +
                              ") at row " + std::to_string(i));
    }
    grad.at(i, static_cast<std::size_t>(target)) -= 1.0;
    for (std::size_t j = 0; j < v; ++j) grad.at(i, j) *= inv_n;
  }
  return grad;
}

std::map<std::string, double> grad_check(
    const std::function<double(const std::map<std::string, Tensor>&)>& f,
    const std::map<std::string, Tensor>& params, const GradMap& analytic,
    double step) {
  if (step <= 0.0) {
    throw std::invalid_argument("grad_check step must be positive");
  }
  std::map<std::string, double> max_errors;
  std::map<std::string, Tensor> work = params;
  for (const auto& [name, grad] : analytic.entries()) {
    auto it = work.find(name);
    if (it == work.end()) {
      throw std::invalid_argument("grad_check: analytic gradient for unknown "
                                  "parameter '" + name + "'");
    }
    if (!it->second.same_shape(grad)) {
      throw std::invalid_argument(
          "grad_check: shape mismatch for '" + name + "': " +
          shape_to_string(it->second.shape()) + " vs " +
          shape_to_string(grad.shape()));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const double saved = it->second[i];
      it->second[i] = saved + step;
      const double plus = f(work);
      it->second[i] = saved - step;
      const double minus = f(work);
      it->second[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw std::runtime_error("grad_check: non-finite objective while "
                                 "perturbing '" + name + "'");
      }
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = grad[i];
      const double rel = std::abs(a - numeric) /
                         std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, rel);
    }
    max_errors[name] = worst;
  }
  return max_errors;
}

}  // namespace fairasr::diffcore
