// GEMM-backed convolution contractions (im2col / col2im + OpenBLAS).
// Compiled only when BLAS is available; the loop kernels in kernels.cpp are
// the fallback. Determinism: every gemm runs single-threaded and per-sample
// partials are combined in fixed batch order, so results do not depend on the
// OpenMP thread count. Precision::f32 runs the same contractions in float.

#ifdef AIDE_USE_BLAS

#include <cblas.h>

#include <cstdlib>
#include <cstring>
#include <type_traits>
#include <vector>

#include "aide/kernels.hpp"

extern "C" void openblas_set_num_threads(int);

namespace aide::blas_impl {

namespace {

// OpenBLAS's CPUID probe falls back to Prescott kernels on CPUs it does not
// recognize (common under virtualization). Steer its DYNAMIC_ARCH dispatch
// from the actual ISA; an explicit OPENBLAS_CORETYPE in the environment wins.
// Priority 101 so this runs before OpenBLAS's own initializer when the
// library is linked statically.
__attribute__((constructor(101))) void set_blas_coretype() {
#if defined(__GNUC__) && defined(__x86_64__)
    __builtin_cpu_init(); // libgcc's own detection may not have run yet
    if (__builtin_cpu_supports("avx512f"))
        setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
    else if (__builtin_cpu_supports("avx2"))
        setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
#endif
}

// gemm calls run inside our own OpenMP regions; keep OpenBLAS sequential.
// Lazy so it never races OpenBLAS's own initialization.
void ensure_blas_sequential() {
    static const bool done = [] {
        openblas_set_num_threads(1);
        return true;
    }();
    (void)done;
}

template <typename T>
void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc) {
    if constexpr (std::is_same_v<T, double>)
        cblas_dgemm(CblasRowMajor, ta, tb, m, n, k, 1.0, a, lda, b, ldb, beta, c, ldc);
    else
        cblas_sgemm(CblasRowMajor, ta, tb, m, n, k, 1.0f, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
std::vector<T> cast_copy(const std::vector<double>& v) {
    std::vector<T> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<T>(v[i]);
    return out;
}

// cols is (C*KH*KW) x (OH*OW), row-major; row r = (c*KH + ky)*KW + kx.
template <typename T>
void im2col(const Tensor4& t, int n, int KH, int KW, int stride, int padding, int OH, int OW,
            T* cols) {
    const int C = t.c(), H = t.h(), W = t.w();
    const size_t ohow = static_cast<size_t>(OH) * OW;
    for (int c = 0; c < C; ++c) {
        const double* plane = t.plane(n, c);
        for (int ky = 0; ky < KH; ++ky) {
            for (int kx = 0; kx < KW; ++kx) {
                T* row = cols + (static_cast<size_t>(c) * KH * KW +
                                 static_cast<size_t>(ky) * KW + kx) *
                                    ohow;
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * stride - padding + ky;
                    T* dst = row + static_cast<size_t>(oy) * OW;
                    if (iy < 0 || iy >= H) {
                        std::fill(dst, dst + OW, T(0));
                        continue;
                    }
                    const double* src = plane + static_cast<size_t>(iy) * W;
                    if (stride == 1) {
                        const int off = kx - padding;
                        // ox valid where 0 <= ox + off < W
                        const int lo = std::max(0, -off);
                        const int hi = std::min(OW, W - off);
                        for (int ox = 0; ox < lo; ++ox) dst[ox] = T(0);
                        for (int ox = lo; ox < hi; ++ox) dst[ox] = static_cast<T>(src[ox + off]);
                        for (int ox = hi; ox < OW; ++ox) dst[ox] = T(0);
                    } else {
                        for (int ox = 0; ox < OW; ++ox) {
                            const int ix = ox * stride - padding + kx;
                            dst[ox] = (ix >= 0 && ix < W) ? static_cast<T>(src[ix]) : T(0);
                        }
                    }
                }
            }
        }
    }
}

// Scatter-add of a cols matrix back onto the (n, :) planes of dst.
// cols is (C*KH*KW) x (SH*SW) over the source grid; dst gets
// dst[c, sy*stride - padding + ky, sx*stride - padding + kx] += cols[r][sy,sx].
template <typename T>
void col2im_add(const T* cols, int C, int KH, int KW, int stride, int padding, int SH, int SW,
                Tensor4& dst, int n) {
    const int DH = dst.h(), DW = dst.w();
    const size_t shsw = static_cast<size_t>(SH) * SW;
    for (int c = 0; c < C; ++c) {
        double* plane = dst.plane(n, c);
        for (int ky = 0; ky < KH; ++ky) {
            for (int kx = 0; kx < KW; ++kx) {
                const T* row = cols + (static_cast<size_t>(c) * KH * KW +
                                       static_cast<size_t>(ky) * KW + kx) *
                                          shsw;
                for (int sy = 0; sy < SH; ++sy) {
                    const int dy = sy * stride - padding + ky;
                    if (dy < 0 || dy >= DH) continue;
                    double* __restrict drow = plane + static_cast<size_t>(dy) * DW;
                    const T* __restrict srow = row + static_cast<size_t>(sy) * SW;
                    if (stride == 1) {
                        const int off = kx - padding;
                        const int lo = std::max(0, -off);
                        const int hi = std::min(SW, DW - off);
#pragma omp simd
                        for (int sx = lo; sx < hi; ++sx)
                            drow[sx + off] += static_cast<double>(srow[sx]);
                    } else {
                        for (int sx = 0; sx < SW; ++sx) {
                            const int dx = sx * stride - padding + kx;
                            if (dx >= 0 && dx < DW) drow[dx] += static_cast<double>(srow[sx]);
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv_forward_impl(const Tensor4& input, const Tensor4& kernel, const Tensor4& bias,
                       int stride, int padding, Tensor4& out) {
    const int N = input.n(), OC = kernel.n();
    const int KH = kernel.h(), KW = kernel.w();
    const int K = input.c() * KH * KW;
    const int ohow = out.h() * out.w();

    const std::vector<T> kbuf = cast_copy<T>(kernel.data);

#pragma omp parallel
    {
        std::vector<T> cols(static_cast<size_t>(K) * ohow);
        std::vector<T> cbuf;
        if constexpr (!std::is_same_v<T, double>) cbuf.resize(static_cast<size_t>(OC) * ohow);
#pragma omp for schedule(static)
        for (int n = 0; n < N; ++n) {
            im2col<T>(input, n, KH, KW, stride, padding, out.h(), out.w(), cols.data());
            double* out_n = out.plane(n, 0);
            if constexpr (std::is_same_v<T, double>) {
                for (int oc = 0; oc < OC; ++oc)
                    std::fill(out_n + static_cast<size_t>(oc) * ohow,
                              out_n + static_cast<size_t>(oc + 1) * ohow,
                              bias.empty() ? 0.0 : bias.data[oc]);
                gemm<double>(CblasNoTrans, CblasNoTrans, OC, ohow, K, kbuf.data(), K,
                             cols.data(), ohow, 1.0, out_n, ohow);
            } else {
                for (int oc = 0; oc < OC; ++oc)
                    std::fill(cbuf.begin() + static_cast<size_t>(oc) * ohow,
                              cbuf.begin() + static_cast<size_t>(oc + 1) * ohow,
                              bias.empty() ? T(0) : static_cast<T>(bias.data[oc]));
                gemm<T>(CblasNoTrans, CblasNoTrans, OC, ohow, K, kbuf.data(), K, cols.data(),
                        ohow, T(1), cbuf.data(), ohow);
                for (size_t i = 0; i < cbuf.size(); ++i) out_n[i] = static_cast<double>(cbuf[i]);
            }
        }
    }
}

template <typename T>
void conv_backward_input_impl(const Tensor4& grad_out, const Tensor4& kernel, int stride,
                              int padding, Tensor4& gin) {
    const int N = grad_out.n(), OC = kernel.n();
    const int KH = kernel.h(), KW = kernel.w();
    const int K = kernel.c() * KH * KW;
    const int ohow = grad_out.h() * grad_out.w();

    const std::vector<T> kbuf = cast_copy<T>(kernel.data);

#pragma omp parallel
    {
        std::vector<T> cols(static_cast<size_t>(K) * ohow);
        std::vector<T> gbuf;
        if constexpr (!std::is_same_v<T, double>) gbuf.resize(static_cast<size_t>(OC) * ohow);
#pragma omp for schedule(static)
        for (int n = 0; n < N; ++n) {
            const T* go_n;
            if constexpr (std::is_same_v<T, double>) {
                go_n = grad_out.plane(n, 0);
            } else {
                const double* src = grad_out.plane(n, 0);
                for (size_t i = 0; i < gbuf.size(); ++i) gbuf[i] = static_cast<T>(src[i]);
                go_n = gbuf.data();
            }
            // cols = kernel^T (K x OC) * grad_out_n (OC x OHOW)
            gemm<T>(CblasTrans, CblasNoTrans, K, ohow, OC, kbuf.data(), K, go_n, ohow, T(0),
                    cols.data(), ohow);
            col2im_add<T>(cols.data(), kernel.c(), KH, KW, stride, padding, grad_out.h(),
                          grad_out.w(), gin, n);
        }
    }
}

template <typename T>
void conv_backward_kernel_impl(const Tensor4& grad_out, const Tensor4& input, int kh, int kw,
                               int stride, int padding, Tensor4& gk) {
    const int N = grad_out.n(), OC = grad_out.c();
    const int K = input.c() * kh * kw;
    const int ohow = grad_out.h() * grad_out.w();

    // per-sample partials, reduced in batch order
    std::vector<std::vector<T>> partial(N);

#pragma omp parallel
    {
        std::vector<T> cols(static_cast<size_t>(K) * ohow);
        std::vector<T> gbuf;
        if constexpr (!std::is_same_v<T, double>) gbuf.resize(static_cast<size_t>(OC) * ohow);
#pragma omp for schedule(static)
        for (int n = 0; n < N; ++n) {
            im2col<T>(input, n, kh, kw, stride, padding, grad_out.h(), grad_out.w(),
                      cols.data());
            const T* go_n;
            if constexpr (std::is_same_v<T, double>) {
                go_n = grad_out.plane(n, 0);
            } else {
                const double* src = grad_out.plane(n, 0);
                for (size_t i = 0; i < gbuf.size(); ++i) gbuf[i] = static_cast<T>(src[i]);
                go_n = gbuf.data();
            }
            partial[n].assign(static_cast<size_t>(OC) * K, T(0));
            // gk_n (OC x K) = grad_out_n (OC x OHOW) * cols^T (OHOW x K)
            gemm<T>(CblasNoTrans, CblasTrans, OC, K, ohow, go_n, ohow, cols.data(), ohow, T(0),
                    partial[n].data(), K);
        }
    }
    for (int n = 0; n < N; ++n)
        for (size_t i = 0; i < gk.size(); ++i) gk.data[i] += static_cast<double>(partial[n][i]);
}

template <typename T>
void deconv_forward_impl(const Tensor4& input, const Tensor4& kernel, int stride, int padding,
                         Tensor4& out) {
    // kernel (SC, DC, KH, KW) flattened row-major is (SC) x (DC*KH*KW)
    const int N = input.n(), SC = input.c();
    const int KH = kernel.h(), KW = kernel.w();
    const int K = kernel.c() * KH * KW;
    const int shsw = input.h() * input.w();

    const std::vector<T> kbuf = cast_copy<T>(kernel.data);

#pragma omp parallel
    {
        std::vector<T> cols(static_cast<size_t>(K) * shsw);
        std::vector<T> ibuf;
        if constexpr (!std::is_same_v<T, double>) ibuf.resize(static_cast<size_t>(SC) * shsw);
#pragma omp for schedule(static)
        for (int n = 0; n < N; ++n) {
            const T* in_n;
            if constexpr (std::is_same_v<T, double>) {
                in_n = input.plane(n, 0);
            } else {
                const double* src = input.plane(n, 0);
                for (size_t i = 0; i < ibuf.size(); ++i) ibuf[i] = static_cast<T>(src[i]);
                in_n = ibuf.data();
            }
            // cols (K x SHSW) = kernel^T (K x SC) * input_n (SC x SHSW)
            gemm<T>(CblasTrans, CblasNoTrans, K, shsw, SC, kbuf.data(), K, in_n, shsw, T(0),
                    cols.data(), shsw);
            col2im_add<T>(cols.data(), kernel.c(), KH, KW, stride, padding, input.h(),
                          input.w(), out, n);
        }
    }
}

} // namespace

void conv_forward(const Tensor4& input, const Tensor4& kernel, const Tensor4& bias, int stride,
                  int padding, Tensor4& out, Precision prec) {
    ensure_blas_sequential();
    if (prec == Precision::f64)
        conv_forward_impl<double>(input, kernel, bias, stride, padding, out);
    else
        conv_forward_impl<float>(input, kernel, bias, stride, padding, out);
}

void conv_backward_input(const Tensor4& grad_out, const Tensor4& kernel, int stride, int padding,
                         Tensor4& gin, Precision prec) {
    ensure_blas_sequential();
    if (prec == Precision::f64)
        conv_backward_input_impl<double>(grad_out, kernel, stride, padding, gin);
    else
        conv_backward_input_impl<float>(grad_out, kernel, stride, padding, gin);
}

void conv_backward_kernel(const Tensor4& grad_out, const Tensor4& input, int kh, int kw,
                          int stride, int padding, Tensor4& gk, Precision prec) {
    ensure_blas_sequential();
    if (prec == Precision::f64)
        conv_backward_kernel_impl<double>(grad_out, input, kh, kw, stride, padding, gk);
    else
        conv_backward_kernel_impl<float>(grad_out, input, kh, kw, stride, padding, gk);
}

void deconv_forward(const Tensor4& input, const Tensor4& kernel, int stride, int padding,
                    Tensor4& out, Precision prec) {
    ensure_blas_sequential();
    if (prec == Precision::f64)
        deconv_forward_impl<double>(input, kernel, stride, padding, out);
    else
        deconv_forward_impl<float>(input, kernel, stride, padding, out);
}

} // namespace aide::blas_impl

#endif // AIDE_USE_BLAS
