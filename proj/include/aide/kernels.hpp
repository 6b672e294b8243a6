#pragma once

#include "aide/tensor.hpp"

namespace aide {

/// Output spatial extent of a cross-correlation: (in + 2*pad - k) / stride + 1.
int conv_out_dim(int in, int k, int stride, int pad);
/// Output spatial extent of a transposed convolution: (in - 1) * stride - 2*pad + k.
int deconv_out_dim(int in, int k, int stride, int pad);

/// Arithmetic width of the conv contractions. Gradient checks and oracle
/// comparisons run in f64; training may opt into f32 (storage precision).
/// Either way results are deterministic for a fixed build and thread-safe.
enum class Precision { f64, f32 };

// Production kernels. Parallelized with OpenMP over independent output
// planes; per-element accumulation order is fixed, so results are
// bit-identical for any thread count.

/// kernel (out_ch, in_ch, kh, kw); bias (1, out_ch, 1, 1) or empty for none.
Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& kernel,
                       const Tensor4& bias, int stride, int padding,
                       Precision prec = Precision::f64);

/// Gradient w.r.t. conv2d input; `in_h`/`in_w` give the original spatial dims.
Tensor4 conv2d_backward_input(const Tensor4& grad_out, const Tensor4& kernel,
                              int stride, int padding, int in_h, int in_w,
                              Precision prec = Precision::f64);

Tensor4 conv2d_backward_kernel(const Tensor4& grad_out, const Tensor4& input,
                               int kh, int kw, int stride, int padding,
                               Precision prec = Precision::f64);

/// Per-output-channel sum of grad_out -> (1, out_ch, 1, 1).
Tensor4 channel_sum(const Tensor4& grad_out);

/// Transposed convolution. kernel (in_ch, out_ch, kh, kw); adjoint of
/// conv2d_forward with the same hyperparameters.
Tensor4 deconv2d_forward(const Tensor4& input, const Tensor4& kernel,
                         const Tensor4& bias, int stride, int padding,
                         Precision prec = Precision::f64);

Tensor4 deconv2d_backward_input(const Tensor4& grad_out, const Tensor4& kernel,
                                int stride, int padding,
                                Precision prec = Precision::f64);

Tensor4 deconv2d_backward_kernel(const Tensor4& grad_out, const Tensor4& input,
                                 int kh, int kw, int stride, int padding,
                                 Precision prec = Precision::f64);

Tensor4 relu_forward(const Tensor4& input);
/// Masks gradient where the forward *input* was <= 0 (zero subgradient at 0).
Tensor4 relu_backward(const Tensor4& grad_out, const Tensor4& forward_input);

Tensor4 add(const Tensor4& a, const Tensor4& b);

double mse_forward(const Tensor4& pred, const Tensor4& target);
/// d(mse)/d(pred) = 2 * (pred - target) / numel.
Tensor4 mse_backward_pred(const Tensor4& pred, const Tensor4& target, double upstream);

namespace serial {

// Brute-force reference implementations: plain nested loops, no OpenMP, no
// layout tricks. Kept for oracle tests and the kernel benchmark.

Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& kernel,
                       const Tensor4& bias, int stride, int padding);
Tensor4 conv2d_backward_input(const Tensor4& grad_out, const Tensor4& kernel,
                              int stride, int padding, int in_h, int in_w);
Tensor4 conv2d_backward_kernel(const Tensor4& grad_out, const Tensor4& input,
                               int kh, int kw, int stride, int padding);
Tensor4 deconv2d_forward(const Tensor4& input, const Tensor4& kernel,
                         const Tensor4& bias, int stride, int padding);

} // namespace serial

} // namespace aide
