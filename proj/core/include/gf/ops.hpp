#ifndef GF_OPS_HPP
#define GF_OPS_HPP

#include <functional>

#include "gf/tensor.hpp"

namespace gf {

// Probabilities below this are clamped inside log-space computations,
// following the 0*log(0) = 0 convention.
inline constexpr Real kLogEps = 1e-12;
inline constexpr Real kLayerNormEps = 1e-5;

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// Adds a length-n row vector (rank-1 or 1xn) to every row of a [m x n] matrix.
Tensor add_rowvec(const Tensor& a, const Tensor& row);
Tensor scale(const Tensor& a, Real c);
Tensor add_const(const Tensor& a, Real c);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor abs_val(const Tensor& a);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
// log(max(x, eps)); the clamp keeps entropy terms finite at zero.
Tensor log_clamped(const Tensor& a, Real eps = kLogEps);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Column means of a [m x n] matrix -> rank-1 [n].
Tensor mean_rows(const Tensor& a);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1);
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);
// Row gather; duplicate indices accumulate gradient additively.
Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx);
Tensor reshape(const Tensor& a, Shape shape);

// Row-wise softmax with per-row max subtraction.
Tensor softmax_rows(const Tensor& a);
// Mean over rows of -log softmax(logits)[target], stabilized in log space.
Tensor cross_entropy_from_logits(const Tensor& logits,
                                 const std::vector<std::size_t>& targets);
// Per-last-axis normalization followed by the affine (gain, bias).
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 Real eps = kLayerNormEps);

// Inverted dropout; identity when rate == 0 or rng == nullptr.
Tensor dropout(const Tensor& a, Real rate, Rng* rng);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// f must be scalar-valued; evaluations for the differences run untaped.
Real finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                       Real step);

}  // namespace gf

#endif
