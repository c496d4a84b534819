#pragma once

#include <cstddef>
#include <vector>

#include "fw/tape.hpp"
#include "fw/tensor.hpp"

namespace fw {

// Differentiable tensor ops. Every op computes its value eagerly; while a
// TapeScope is active, an op whose inputs require gradients (or were produced
// on the active tape) also records a backward closure. Outside a scope the
// ops are plain arithmetic.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scalar_mul(const Tensor& x, double c);

// out = s * x where s is a scalar tensor (so s itself can be trained).
Tensor scale(const Tensor& x, const Tensor& s);

Tensor transpose(const Tensor& m);              // rank-2
Tensor reshape(const Tensor& x, Shape to);      // element count preserved
Tensor flatten(const Tensor& x);                // reshape to rank-1
Tensor concat(const std::vector<Tensor>& xs);   // rank-1 pieces, in order

Tensor sum(const Tensor& x);   // scalar
Tensor mean(const Tensor& x);  // scalar

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]x[k,n] -> [m,n]
Tensor matvec(const Tensor& a, const Tensor& x);  // [m,n]x[n]   -> [m]
Tensor outer(const Tensor& u, const Tensor& v);   // [m],[n]     -> [m,n]

// y = x W (+ b): x is [in] or [batch,in], W is [in,out], b is [out].
Tensor dense(const Tensor& x, const Tensor& w);
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

// max(x, slope*x) with slope in (0,1). The backward pass multiplies by 1
// where x >= 0 and by slope elsewhere (the x = 0 tie takes the linear branch).
Tensor leaky_relu(const Tensor& x, double slope);

// The pointwise derivative values of leaky_relu (1 or slope per element).
// Piecewise constant in x, so it is treated as a local constant: no node is
// recorded and no gradient flows into x through it. This matches the true
// derivative almost everywhere.
Tensor leaky_relu_prime(const Tensor& x, double slope);

// 3x3 convolution, stride 1. x is [c_in,h,w], w is [c_out,c_in,3,3], b is
// [c_out] or an undefined Tensor for no bias. pad is 0 or 1 rows/cols of
// zeros on each border.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int pad);

// 2x2 max pooling, stride 2, over [c,h,w]. Odd edges keep a partial window.
// Gradient routes to the first (row-major) maximal element of each window.
Tensor maxpool2x2(const Tensor& x);

Tensor softmax(const Tensor& logits);  // rank-1, numerically stabilized

// Scalar -log softmax(logits)[target]. Backward is softmax(logits) - onehot.
Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target);

// Deep value copy with no tape linkage and requires_grad off: gradient flow
// stops here by construction.
Tensor detach(const Tensor& x);

// Plain rank-1 constructor: e_index in R^n.
Tensor onehot(std::size_t index, std::size_t n);

// Index of the largest element (first one on ties). Not differentiable.
std::size_t argmax(const Tensor& x);

// Non-recording softmax over a plain vector, for evaluation paths.
std::vector<double> softmax_values(const std::vector<double>& logits);

}  // namespace fw
