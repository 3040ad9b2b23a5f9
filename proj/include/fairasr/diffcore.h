#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fairasr/tensor.h"

namespace fairasr::diffcore {

// Forward/backward primitives for the toy model. Reverse-mode accumulation
// happens through explicit per-operation backward functions over saved
// forward values; the model graph is small and fixed, so no tape is needed.

// output[i,j] = sum_k input[i,k] * weight[k,j] + bias[j]
Tensor affine_forward(const Tensor& input, const Tensor& weight,
                      const Tensor& bias);

struct AffineGrads {
  Tensor d_input;
  Tensor d_weight;
  Tensor d_bias;
};

AffineGrads affine_backward(const Tensor& input, const Tensor& weight,
                            const Tensor& d_output);

Tensor tanh_forward(const Tensor& input);

// activation is the saved tanh output; d_input = d_output * (1 - activation^2).
Tensor tanh_backward(const Tensor& activation, const Tensor& d_output);

// Row-wise softmax with the max-shift; never overflows on finite input.
Tensor softmax_rows(const Tensor& logits);

// (1/n) * sum_i -log softmax(logits[i])[targets[i]], computed through
// log-sum-exp with the per-row max shift.
double ce_logits_forward(const Tensor& logits, const std::vector<int>& targets);

// d(loss)/d(logits[i]) = (softmax(logits[i]) - onehot(targets[i])) / n
Tensor ce_logits_backward(const Tensor& logits, const std::vector<int>& targets);

// Central-difference gradient check. `f` re-evaluates the scalar objective
// under a perturbed parameter map; `analytic` holds the gradients to verify
// (only its keys are checked, so frozen parameters stay out by omission).
// Returns the max relative error per parameter, with relative error
// |a - n| / max(1, |a|, |n|). Throws on a non-finite objective value.
std::map<std::string, double> grad_check(
    const std::function<double(const std::map<std::string, Tensor>&)>& f,
    const std::map<std::string, Tensor>& params, const GradMap& analytic,
    double step = 1e-4);

}  // namespace fairasr::diffcore
