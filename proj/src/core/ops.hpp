#pragma once

#include <functional>
#include <vector>

#include "core/tensor.hpp"

namespace aseg {

// Pointwise arithmetic. Binary operations accept either identical dims or a
// single-element second operand, which broadcasts.
template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b, TapeT<S>* tape = nullptr);
template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b, TapeT<S>* tape = nullptr);
template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b, TapeT<S>* tape = nullptr);
template <class S>
TensorT<S> scalar_mul(const TensorT<S>& a, S scalar, TapeT<S>* tape = nullptr);
template <class S>
TensorT<S> neg(const TensorT<S>& a, TapeT<S>* tape = nullptr);
template <class S>
TensorT<S> abs(const TensorT<S>& a, TapeT<S>* tape = nullptr);
// Requires strictly positive inputs.
template <class S>
TensorT<S> log(const TensorT<S>& a, TapeT<S>* tape = nullptr);
// log(1 + exp(x)) evaluated without overflow at large |x|.
template <class S>
TensorT<S> softplus(const TensorT<S>& a, TapeT<S>* tape = nullptr);

// Activations.
template <class S>
TensorT<S> relu(const TensorT<S>& a, TapeT<S>* tape = nullptr);
template <class S>
TensorT<S> leaky_relu(const TensorT<S>& a, S alpha = S(0.2), TapeT<S>* tape = nullptr);
template <class S>
TensorT<S> tanh(const TensorT<S>& a, TapeT<S>* tape = nullptr);
template <class S>
TensorT<S> sigmoid(const TensorT<S>& a, TapeT<S>* tape = nullptr);

// 2-D convolution. input [N,C,H,W], kernel [out_ch,in_ch,kh,kw], bias [out_ch].
// Output extent: floor((H + 2*padding - kh) / stride) + 1, same for width.
template <class S>
TensorT<S> conv2d(const TensorT<S>& input, const TensorT<S>& kernel, const TensorT<S>& bias,
                  int stride, int padding, TapeT<S>* tape = nullptr);

// Transposed 2-D convolution, the adjoint of conv2d under matching geometry.
// kernel [in_ch,out_ch,kh,kw]. Output extent: (H - 1)*stride - 2*padding + kh.
template <class S>
TensorT<S> conv_transpose2d(const TensorT<S>& input, const TensorT<S>& kernel,
                            const TensorT<S>& bias, int stride, int padding,
                            TapeT<S>* tape = nullptr);

inline int conv_output_extent(int extent, int kernel, int stride, int padding) {
  return (extent + 2 * padding - kernel) / stride + 1;
}
inline int conv_transpose_output_extent(int extent, int kernel, int stride, int padding) {
  return (extent - 1) * stride - 2 * padding + kernel;
}

enum class NormMode { train, eval };

// Exponential-average statistics kept across training steps for eval-mode
// normalization. Buffers are sized on first update.
template <class S>
struct RunningStatsT {
  std::vector<S> mean;
  std::vector<S> var;
};

// Per-channel normalization over the batch and spatial axes. In train mode the
// batch statistics are used (and `running`, when given, is updated); in eval
// mode `running` supplies the statistics. Variance gets an epsilon, so a
// constant channel normalizes to zero instead of failing.
template <class S>
TensorT<S> channel_norm(const TensorT<S>& input, const TensorT<S>& gain, const TensorT<S>& shift,
                        NormMode mode, RunningStatsT<S>* running = nullptr,
                        TapeT<S>* tape = nullptr, S momentum = S(0.1), S epsilon = S(1e-5));

// Inverted-scaling dropout: survivors are divided by (1 - p), so inactive mode
// is exactly the identity. Consumes one uniform draw per element when active
// with p > 0.
template <class S>
TensorT<S> dropout(const TensorT<S>& input, double p, Rng& rng, bool active,
                   TapeT<S>* tape = nullptr);

// Channel concatenation of two [N,C,H,W] tensors agreeing on N, H, W; `a`
// occupies the leading channels.
template <class S>
TensorT<S> concat_channels(const TensorT<S>& a, const TensorT<S>& b, TapeT<S>* tape = nullptr);

// Channels [begin, end) of a 4-D tensor.
template <class S>
TensorT<S> slice_channels(const TensorT<S>& input, int begin, int end, TapeT<S>* tape = nullptr);

// Arithmetic mean over all elements, as a single-element tensor.
template <class S>
TensorT<S> reduce_mean(const TensorT<S>& input, TapeT<S>* tape = nullptr);

// A differentiable scalar function of several tensors: the callable receives
// tracked inputs plus the tape to record on.
using GradCheckFn =
    std::function<TensorT<double>(const std::vector<TensorT<double>>&, TapeT<double>&)>;

// Central-difference check of reverse-mode gradients, run entirely in 64-bit.
// Step per element: 1e-5 * max(1, |x|). Returns the maximum over elements of
// |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
double grad_check(const GradCheckFn& fn, const std::vector<TensorT<double>>& inputs);

}  // namespace aseg
