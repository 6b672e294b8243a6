#include "aide/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace aide {

namespace {

// Training allocates and frees multi-megabyte tensors every step; glibc would
// serve those straight from mmap and hand the pages back on free, paying a
// page-fault storm per step. Raise the thresholds so the arena retains them.
[[maybe_unused]] const bool malloc_tuned = [] {
#ifdef __GLIBC__
    mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
#endif
    return true;
}();

} // namespace

#ifdef AIDE_USE_BLAS
namespace blas_impl {
void conv_forward(const Tensor4& input, const Tensor4& kernel, const Tensor4& bias, int stride,
                  int padding, Tensor4& out, Precision prec);
void conv_backward_input(const Tensor4& grad_out, const Tensor4& kernel, int stride, int padding,
                         Tensor4& gin, Precision prec);
void conv_backward_kernel(const Tensor4& grad_out, const Tensor4& input, int kh, int kw,
                          int stride, int padding, Tensor4& gk, Precision prec);
void deconv_forward(const Tensor4& input, const Tensor4& kernel, int stride, int padding,
                    Tensor4& out, Precision prec);
} // namespace blas_impl
#endif

namespace {

void check_stride_pad(int stride, int padding, const char* op) {
    if (stride < 1)
        throw ConfigError(std::string(op) + ": stride must be >= 1, got " + std::to_string(stride));
    if (padding < 0)
        throw ConfigError(std::string(op) + ": padding must be >= 0, got " + std::to_string(padding));
}

void check_bias(const Tensor4& bias, int out_ch, const char* op) {
    if (bias.empty()) return;
    if (bias.n() != 1 || bias.c() != out_ch || bias.h() != 1 || bias.w() != 1)
        throw DimensionError(std::string(op) + ": bias shape " + shape_str(bias) +
                             " does not match (1," + std::to_string(out_ch) + ",1,1)");
}

#ifndef AIDE_USE_BLAS

int ceil_div(int a, int b) { return a > 0 ? (a + b - 1) / b : a / b; }
int floor_div(int a, int b) { return a >= 0 ? a / b : (a - b + 1) / b; }

// acc[ox] += sum_kx kp[kx] * in_row[ox + kx], KW known at compile time so the
// tap loop unrolls and the ox loop vectorizes.
template <int KW>
void row_taps(double* __restrict acc, const double* __restrict in_row,
              const double* __restrict kp, int n) {
#pragma omp simd
    for (int ox = 0; ox < n; ++ox) {
        double s = 0.0;
        for (int kx = 0; kx < KW; ++kx) s += kp[kx] * in_row[ox + kx];
        acc[ox] += s;
    }
}

void row_taps_any(double* __restrict acc, const double* __restrict in_row,
                  const double* __restrict kp, int n, int kw) {
    switch (kw) {
        case 1: row_taps<1>(acc, in_row, kp, n); return;
        case 3: row_taps<3>(acc, in_row, kp, n); return;
        case 5: row_taps<5>(acc, in_row, kp, n); return;
        case 7: row_taps<7>(acc, in_row, kp, n); return;
        default:
            for (int ox = 0; ox < n; ++ox) {
                double s = 0.0;
                for (int kx = 0; kx < kw; ++kx) s += kp[kx] * in_row[ox + kx];
                acc[ox] += s;
            }
    }
}

// Valid cross-correlation (stride 1, no padding): out[n,oc] = bias[oc] +
// sum_ic taps(input[n,ic], K[oc,ic]). K layout (OC, IC, KH, KW).
void conv_valid(const Tensor4& input, const double* kdata, int OC, int KH, int KW,
                const Tensor4& bias, Tensor4& out) {
    const int N = input.n(), IC = input.c(), W = input.w();
    const int OH = out.h(), OW = out.w();
    const size_t kplane = static_cast<size_t>(KH) * KW;

#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < N; ++n) {
        for (int oc = 0; oc < OC; ++oc) {
            std::vector<double> acc(OW);
            double* out_p = out.plane(n, oc);
            const double b = bias.empty() ? 0.0 : bias.data[oc];
            for (int oy = 0; oy < OH; ++oy) {
                std::fill(acc.begin(), acc.end(), b);
                for (int ic = 0; ic < IC; ++ic) {
                    const double* in_p = input.plane(n, ic);
                    const double* k_p = kdata + (static_cast<size_t>(oc) * IC + ic) * kplane;
                    for (int ky = 0; ky < KH; ++ky)
                        row_taps_any(acc.data(), in_p + static_cast<size_t>(oy + ky) * W,
                                     k_p + static_cast<size_t>(ky) * KW, OW, KW);
                }
                std::copy(acc.begin(), acc.end(), out_p + static_cast<size_t>(oy) * OW);
            }
        }
    }
}

// General gather path for stride/padding combinations off the hot path.
void conv_general(const Tensor4& input, const Tensor4& kernel, const Tensor4& bias, int stride,
                  int padding, Tensor4& out) {
    const int N = input.n(), IC = input.c(), H = input.h(), W = input.w();
    const int OC = kernel.n(), KH = kernel.h(), KW = kernel.w();
    const int OH = out.h(), OW = out.w();

#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < N; ++n) {
        for (int oc = 0; oc < OC; ++oc) {
            double* out_p = out.plane(n, oc);
            const double b = bias.empty() ? 0.0 : bias.data[oc];
            std::fill(out_p, out_p + static_cast<size_t>(OH) * OW, b);
            for (int ic = 0; ic < IC; ++ic) {
                const double* in_p = input.plane(n, ic);
                const double* k_p = kernel.plane(oc, ic);
                for (int ky = 0; ky < KH; ++ky) {
                    const int oy_lo = std::max(0, ceil_div(padding - ky, stride));
                    const int oy_hi = std::min(OH - 1, floor_div(H - 1 + padding - ky, stride));
                    for (int kx = 0; kx < KW; ++kx) {
                        const double wv = k_p[ky * KW + kx];
                        const int ox_lo = std::max(0, ceil_div(padding - kx, stride));
                        const int ox_hi = std::min(OW - 1, floor_div(W - 1 + padding - kx, stride));
                        if (ox_hi < ox_lo) continue;
                        for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                            const double* __restrict in_row =
                                in_p + static_cast<size_t>(oy * stride - padding + ky) * W;
                            double* __restrict out_row = out_p + static_cast<size_t>(oy) * OW;
                            if (stride == 1) {
                                const int off = kx - padding;
#pragma omp simd
                                for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                    out_row[ox] += wv * in_row[ox + off];
                            } else {
                                for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                    out_row[ox] += wv * in_row[ox * stride - padding + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

// dst[n, dc, sy*stride - pad + ky, sx*stride - pad + kx] += src[n, sc, sy, sx]
// * K[sc, dc, ky, kx]; dst pre-filled. Used by deconv forward and the conv
// input gradient. Stride-1 pad-0 runs as a full correlation with a flipped
// kernel over a zero-padded copy of src, which keeps the inner loop dense.
void scatter_planes(const Tensor4& src, const Tensor4& kernel, int stride, int padding,
                    Tensor4& dst) {
    const int N = src.n(), SC = src.c(), SH = src.h(), SW = src.w();
    const int DC = kernel.c(), KH = kernel.h(), KW = kernel.w();
    const int DH = dst.h(), DW = dst.w();

    if (stride == 1 && padding == 0) {
        // flipped kernel, transposed to (dc, sc) plane order
        Tensor4 kflip(DC, SC, KH, KW);
        for (int sc = 0; sc < SC; ++sc)
            for (int dc = 0; dc < DC; ++dc)
                for (int ky = 0; ky < KH; ++ky)
                    for (int kx = 0; kx < KW; ++kx)
                        kflip.at(dc, sc, ky, kx) = kernel.at(sc, dc, KH - 1 - ky, KW - 1 - kx);

        const int PH = SH + 2 * (KH - 1), PW = SW + 2 * (KW - 1);
        Tensor4 padded(N, SC, PH, PW);
#pragma omp parallel for collapse(2) schedule(static)
        for (int n = 0; n < N; ++n)
            for (int sc = 0; sc < SC; ++sc) {
                const double* s_p = src.plane(n, sc);
                double* p_p = padded.plane(n, sc);
                for (int y = 0; y < SH; ++y)
                    std::copy(s_p + static_cast<size_t>(y) * SW,
                              s_p + static_cast<size_t>(y + 1) * SW,
                              p_p + static_cast<size_t>(y + KH - 1) * PW + (KW - 1));
            }

#pragma omp parallel for collapse(2) schedule(static)
        for (int n = 0; n < N; ++n) {
            for (int dc = 0; dc < DC; ++dc) {
                std::vector<double> acc(DW);
                double* dst_p = dst.plane(n, dc);
                for (int dy = 0; dy < DH; ++dy) {
                    std::fill(acc.begin(), acc.end(), 0.0);
                    for (int sc = 0; sc < SC; ++sc) {
                        const double* p_p = padded.plane(n, sc);
                        const double* k_p = kflip.plane(dc, sc);
                        for (int ky = 0; ky < KH; ++ky)
                            row_taps_any(acc.data(), p_p + static_cast<size_t>(dy + ky) * PW,
                                         k_p + static_cast<size_t>(ky) * KW, DW, KW);
                    }
                    double* dst_row = dst_p + static_cast<size_t>(dy) * DW;
                    for (int dx = 0; dx < DW; ++dx) dst_row[dx] += acc[dx];
                }
            }
        }
        return;
    }

#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < N; ++n) {
        for (int dc = 0; dc < DC; ++dc) {
            double* dst_p = dst.plane(n, dc);
            for (int sc = 0; sc < SC; ++sc) {
                const double* src_p = src.plane(n, sc);
                const double* k_p = kernel.plane(sc, dc);
                for (int ky = 0; ky < KH; ++ky) {
                    const int sy_lo = std::max(0, ceil_div(padding - ky, stride));
                    const int sy_hi = std::min(SH - 1, floor_div(DH - 1 + padding - ky, stride));
                    for (int kx = 0; kx < KW; ++kx) {
                        const double wv = k_p[ky * KW + kx];
                        const int sx_lo = std::max(0, ceil_div(padding - kx, stride));
                        const int sx_hi = std::min(SW - 1, floor_div(DW - 1 + padding - kx, stride));
                        if (sx_hi < sx_lo) continue;
                        for (int sy = sy_lo; sy <= sy_hi; ++sy) {
                            const int dy = sy * stride - padding + ky;
                            double* __restrict dst_row = dst_p + static_cast<size_t>(dy) * DW;
                            const double* __restrict src_row =
                                src_p + static_cast<size_t>(sy) * SW;
                            if (stride == 1) {
                                const int off = kx - padding;
#pragma omp simd
                                for (int sx = sx_lo; sx <= sx_hi; ++sx)
                                    dst_row[sx + off] += wv * src_row[sx];
                            } else {
                                for (int sx = sx_lo; sx <= sx_hi; ++sx)
                                    dst_row[sx * stride - padding + kx] += wv * src_row[sx];
                            }
                        }
                    }
                }
            }
        }
    }
}

#endif // !AIDE_USE_BLAS

} // namespace

int conv_out_dim(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }
int deconv_out_dim(int in, int k, int stride, int pad) { return (in - 1) * stride - 2 * pad + k; }

Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& kernel, const Tensor4& bias,
                       int stride, int padding, Precision prec) {
    check_stride_pad(stride, padding, "conv2d");
    if (kernel.c() != input.c())
        throw DimensionError("conv2d: input " + shape_str(input) + " has " +
                             std::to_string(input.c()) + " channels but kernel " +
                             shape_str(kernel) + " expects " + std::to_string(kernel.c()));
    const int OC = kernel.n(), KH = kernel.h(), KW = kernel.w();
    const int OH = conv_out_dim(input.h(), KH, stride, padding);
    const int OW = conv_out_dim(input.w(), KW, stride, padding);
    if (OH < 1 || OW < 1)
        throw DimensionError("conv2d: input " + shape_str(input) + " with kernel " +
                             shape_str(kernel) + " yields non-positive output " +
                             std::to_string(OH) + "x" + std::to_string(OW));
    check_bias(bias, OC, "conv2d");

    Tensor4 out(input.n(), OC, OH, OW);
#ifdef AIDE_USE_BLAS
    blas_impl::conv_forward(input, kernel, bias, stride, padding, out, prec);
#else
    (void)prec;
    if (stride == 1 && padding == 0)
        conv_valid(input, kernel.data.data(), OC, KH, KW, bias, out);
    else
        conv_general(input, kernel, bias, stride, padding, out);
#endif
    return out;
}

Tensor4 conv2d_backward_input(const Tensor4& grad_out, const Tensor4& kernel, int stride,
                              int padding, int in_h, int in_w, Precision prec) {
    check_stride_pad(stride, padding, "conv2d_backward_input");
    if (kernel.n() != grad_out.c())
        throw DimensionError("conv2d_backward_input: grad " + shape_str(grad_out) +
                             " vs kernel " + shape_str(kernel));
    if (conv_out_dim(in_h, kernel.h(), stride, padding) != grad_out.h() ||
        conv_out_dim(in_w, kernel.w(), stride, padding) != grad_out.w())
        throw DimensionError("conv2d_backward_input: grad " + shape_str(grad_out) +
                             " inconsistent with input dims " + std::to_string(in_h) + "x" +
                             std::to_string(in_w));
    Tensor4 gin(grad_out.n(), kernel.c(), in_h, in_w);
#ifdef AIDE_USE_BLAS
    blas_impl::conv_backward_input(grad_out, kernel, stride, padding, gin, prec);
#else
    (void)prec;
    scatter_planes(grad_out, kernel, stride, padding, gin);
#endif
    return gin;
}

Tensor4 conv2d_backward_kernel(const Tensor4& grad_out, const Tensor4& input, int kh, int kw,
                               int stride, int padding, Precision prec) {
    check_stride_pad(stride, padding, "conv2d_backward_kernel");
    if (grad_out.n() != input.n())
        throw DimensionError("conv2d_backward_kernel: batch mismatch " + shape_str(grad_out) +
                             " vs " + shape_str(input));
    [[maybe_unused]] const int N = grad_out.n();
    const int OC = grad_out.c(), OH = grad_out.h(), OW = grad_out.w();
    const int IC = input.c(), H = input.h(), W = input.w();
    if (conv_out_dim(H, kh, stride, padding) != OH || conv_out_dim(W, kw, stride, padding) != OW)
        throw DimensionError("conv2d_backward_kernel: grad " + shape_str(grad_out) +
                             " inconsistent with input " + shape_str(input));

    Tensor4 gk(OC, IC, kh, kw);

#ifdef AIDE_USE_BLAS
    blas_impl::conv_backward_kernel(grad_out, input, kh, kw, stride, padding, gk, prec);
#else
    (void)prec;
#pragma omp parallel for collapse(2) schedule(static)
    for (int oc = 0; oc < OC; ++oc) {
        for (int ic = 0; ic < IC; ++ic) {
            double* gk_p = gk.plane(oc, ic);
            for (int ky = 0; ky < kh; ++ky) {
                const int oy_lo = std::max(0, ceil_div(padding - ky, stride));
                const int oy_hi = std::min(OH - 1, floor_div(H - 1 + padding - ky, stride));
                for (int kx = 0; kx < kw; ++kx) {
                    const int ox_lo = std::max(0, ceil_div(padding - kx, stride));
                    const int ox_hi = std::min(OW - 1, floor_div(W - 1 + padding - kx, stride));
                    double acc = 0.0;
                    for (int n = 0; n < N; ++n) {
                        const double* go_p = grad_out.plane(n, oc);
                        const double* in_p = input.plane(n, ic);
                        for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                            const double* __restrict go_row =
                                go_p + static_cast<size_t>(oy) * OW;
                            const double* __restrict in_row =
                                in_p + static_cast<size_t>(oy * stride - padding + ky) * W;
                            if (stride == 1) {
                                const int off = kx - padding;
                                double a = 0.0;
#pragma omp simd reduction(+ : a)
                                for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                    a += go_row[ox] * in_row[ox + off];
                                acc += a;
                            } else {
                                for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                    acc += go_row[ox] * in_row[ox * stride - padding + kx];
                            }
                        }
                    }
                    gk_p[ky * kw + kx] = acc;
                }
            }
        }
    }
#endif
    return gk;
}

Tensor4 channel_sum(const Tensor4& grad_out) {
    Tensor4 out(1, grad_out.c(), 1, 1);
    const size_t plane = static_cast<size_t>(grad_out.h()) * grad_out.w();
#pragma omp parallel for schedule(static)
    for (int c = 0; c < grad_out.c(); ++c) {
        double acc = 0.0;
        for (int n = 0; n < grad_out.n(); ++n) {
            const double* p = grad_out.plane(n, c);
            for (size_t i = 0; i < plane; ++i) acc += p[i];
        }
        out.data[c] = acc;
    }
    return out;
}

Tensor4 deconv2d_forward(const Tensor4& input, const Tensor4& kernel, const Tensor4& bias,
                         int stride, int padding, Precision prec) {
    check_stride_pad(stride, padding, "deconv2d");
    if (kernel.n() != input.c())
        throw DimensionError("deconv2d: input " + shape_str(input) + " has " +
                             std::to_string(input.c()) + " channels but kernel " +
                             shape_str(kernel) + " expects " + std::to_string(kernel.n()));
    const int OC = kernel.c(), KH = kernel.h(), KW = kernel.w();
    const int OH = deconv_out_dim(input.h(), KH, stride, padding);
    const int OW = deconv_out_dim(input.w(), KW, stride, padding);
    if (OH < 1 || OW < 1)
        throw DimensionError("deconv2d: input " + shape_str(input) + " with kernel " +
                             shape_str(kernel) + " yields non-positive output " +
                             std::to_string(OH) + "x" + std::to_string(OW));
    check_bias(bias, OC, "deconv2d");

    Tensor4 out(input.n(), OC, OH, OW);
    if (!bias.empty()) {
        const size_t plane = static_cast<size_t>(OH) * OW;
        for (int n = 0; n < out.n(); ++n)
            for (int oc = 0; oc < OC; ++oc) {
                double* p = out.plane(n, oc);
                std::fill(p, p + plane, bias.data[oc]);
            }
    }
#ifdef AIDE_USE_BLAS
    blas_impl::deconv_forward(input, kernel, stride, padding, out, prec);
#else
    (void)prec;
    scatter_planes(input, kernel, stride, padding, out);
#endif
    return out;
}

Tensor4 deconv2d_backward_input(const Tensor4& grad_out, const Tensor4& kernel, int stride,
                                int padding, Precision prec) {
    // The adjoint of the scatter is a plain cross-correlation with the same
    // kernel memory viewed as (out_ch=in_ch, in_ch=out_ch, kh, kw).
    return conv2d_forward(grad_out, kernel, Tensor4(), stride, padding, prec);
}

Tensor4 deconv2d_backward_kernel(const Tensor4& grad_out, const Tensor4& input, int kh, int kw,
                                 int stride, int padding, Precision prec) {
    // Same contraction as the conv kernel gradient with input/grad roles swapped.
    return conv2d_backward_kernel(input, grad_out, kh, kw, stride, padding, prec);
}

Tensor4 relu_forward(const Tensor4& input) {
    Tensor4 out = Tensor4::zeros_like(input);
    const size_t n = input.size();
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) out.data[i] = input.data[i] > 0.0 ? input.data[i] : 0.0;
    return out;
}

Tensor4 relu_backward(const Tensor4& grad_out, const Tensor4& forward_input) {
    require_same_shape(grad_out, forward_input, "relu_backward");
    Tensor4 out = Tensor4::zeros_like(grad_out);
    const size_t n = grad_out.size();
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i)
        out.data[i] = forward_input.data[i] > 0.0 ? grad_out.data[i] : 0.0;
    return out;
}

Tensor4 add(const Tensor4& a, const Tensor4& b) {
    require_same_shape(a, b, "add");
    Tensor4 out = Tensor4::zeros_like(a);
    const size_t n = a.size();
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

double mse_forward(const Tensor4& pred, const Tensor4& target) {
    require_same_shape(pred, target, "mse");
    if (pred.size() == 0) throw DimensionError("mse: empty tensors");
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

Tensor4 mse_backward_pred(const Tensor4& pred, const Tensor4& target, double upstream) {
    require_same_shape(pred, target, "mse_backward");
    Tensor4 out = Tensor4::zeros_like(pred);
    const double scale = upstream * 2.0 / static_cast<double>(pred.size());
    const size_t n = pred.size();
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) out.data[i] = scale * (pred.data[i] - target.data[i]);
    return out;
}

} // namespace aide
