#pragma once

#include <vector>

#include "lease/graph.hpp"

namespace lease {

// Primitive traced ops. Each validates shapes and input finiteness, computes the
// forward value, and records the backward rule on the graph.
//
// add supports one broadcast form: a of shape (R,C) plus a bias vector of shape (C).
// mul supports scalar broadcast when either side has a single element.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var matmul(Var a, Var b);  // (M,K) x (K,N) -> (M,N)

// x: (N,Cin,H,W), k: (Cout,Cin,KH,KW), zero padding.
Var conv2d(Var x, Var k, int stride, int pad);

Var relu(Var a);

// 3x3 window, stride 1, pad 1; shape preserving. avg divides by 9 (pad counted
// as zero); max ignores padding and routes gradient to the argmax element,
// ties broken by lowest flat index.
Var avg_pool3(Var a);
Var max_pool3(Var a);

Var global_avg_pool(Var a);  // (N,C,H,W) -> (N,C)
Var sum(Var a);              // -> scalar

Var softmax_rows(Var a);  // rows of a 2-d tensor

// Mean over rows of -sum_k t[k] * log(max(p[k], 1e-12)). Both arguments must be
// row-normalized within 1e-9. Gradient flows into both arguments.
Var cross_entropy(Var pred_probs, Var target_probs);

Var select_row(Var a, int64_t r);              // (R,C) -> (1,C)
Var select_elem(Var a, int64_t r, int64_t c);  // (R,C) -> scalar
Var concat_channels(const std::vector<Var>& xs);

// Per-example weight map w = |d| / max(max_entry |d|, 1e-12) over (N,C,H,W).
Var maxabs_normalize(Var d);

// Constant copy: blocks gradient flow.
Var detach(Var a);

// Central-difference gradient of a scalar function; the per-coordinate step is
// h * (1 + |x_i|).
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                            double h = 1e-5);

constexpr double kLogFloor = 1e-12;

}  // namespace lease
