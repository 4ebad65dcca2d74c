#pragma once

#include "paddyforge/tensor.hpp"

namespace pf {

// Row-wise softmax with max subtraction. Accepts rank-1 [K] or rank-2 [B,K];
// output is always Full32.
Tensor softmax(const Tensor& logits);

// -sum p(x) ln(max(q(x), 1e-12)). For rank-2 inputs the result is the mean
// over rows.
float cross_entropy(const Tensor& probs, const Tensor& targets);

// Gradient of cross_entropy(softmax(z), p) with respect to z: softmax(z) - p,
// divided by the row count for rank-2 (mean-reduced) inputs.
Tensor softmax_xent_grad(const Tensor& logits, const Tensor& targets);

// True when v is nonnegative and sums to 1 within tol.
bool is_prob_vector(const Tensor& v, float tol = 1e-6f);

}  // namespace pf
