#pragma once

#include <vector>

#include "clrm/nn/tensor.hpp"

namespace clrm::nn {

/// x [N, in] (or [in]) times w [in, out] plus optional bias b [out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = {});
Tensor matmul(const Tensor& a, const Tensor& b);

/// Elementwise; b may also be a [m] row broadcast over a [n, m].
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double c);
/// Elementwise minimum; the gradient goes to the smaller operand (a on ties).
Tensor minimum(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor square(const Tensor& x);
/// Clamps into [lo, hi]; zero gradient outside.
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Normalizes over the last axis, then applies gain and bias of that length.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Row softmax of x [R, C]. Row r ignores its first leading_masked[r / group] entries.
Tensor masked_softmax(const Tensor& x, const std::vector<int>& leading_masked, int group);
Tensor softmax(const Tensor& x);

/// Same-padded, stride-1 convolution over time: x [B, T, C], w [K*C, F] with
/// row index k*C + c for tap k (k = 0 is the earliest), b [F]. Returns [B, T, F].
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b);
/// Mean over the time axis: [B, T, C] -> [B, C].
Tensor mean_time(const Tensor& x);

/// Rows idx of x [N, D] -> [P, D].
Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);
/// Row-wise dot products of two [P, D] tensors -> [P].
Tensor rowwise_dot(const Tensor& a, const Tensor& b);
/// out[s] = sum of x[p] with segment[p] == s.
Tensor segment_sum(const Tensor& x, const std::vector<int>& segment, int segments);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, int start, int count);
/// [B, S1, D] and [B, S2, D] -> [B, S1 + S2, D].
Tensor concat_seq(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& x, Shape shape);

/// Relative-position attention logits, scaled by 1/sqrt(head_dim).
/// q [B, H*d], k [B, S, H*d], r [S, H*d], u and v [H*d]. Row b*H + h of the
/// [B*H, S] result holds ((q + u)_h . k_{b,j,h} + (q + v)_h . r_{j,h}) / sqrt(d).
Tensor attention_scores(const Tensor& q, const Tensor& k, const Tensor& r, const Tensor& u, const Tensor& v,
                        int heads);
/// Weighted sum of values: w [B*H, S], values [B, S, H*d] -> [B, H*d].
Tensor attention_mix(const Tensor& w, const Tensor& values, int heads);

}  // namespace clrm::nn
