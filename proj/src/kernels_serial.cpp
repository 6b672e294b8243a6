#include "aide/kernels.hpp"

namespace aide::serial {

// Reference kernels: one gather loop per output element, bounds checked per
// tap. Slow and obvious on purpose.

Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& kernel, const Tensor4& bias,
                       int stride, int padding) {
    const int N = input.n(), IC = input.c(), H = input.h(), W = input.w();
    const int OC = kernel.n(), KH = kernel.h(), KW = kernel.w();
    const int OH = conv_out_dim(H, KH, stride, padding);
    const int OW = conv_out_dim(W, KW, stride, padding);
    Tensor4 out(N, OC, OH, OW);
    for (int n = 0; n < N; ++n)
        for (int oc = 0; oc < OC; ++oc)
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox) {
                    double acc = bias.empty() ? 0.0 : bias.at(0, oc, 0, 0);
                    for (int ic = 0; ic < IC; ++ic)
                        for (int ky = 0; ky < KH; ++ky)
                            for (int kx = 0; kx < KW; ++kx) {
                                const int iy = oy * stride - padding + ky;
                                const int ix = ox * stride - padding + kx;
                                if (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                    acc += input.at(n, ic, iy, ix) * kernel.at(oc, ic, ky, kx);
                            }
                    out.at(n, oc, oy, ox) = acc;
                }
    return out;
}

Tensor4 deconv2d_forward(const Tensor4& input, const Tensor4& kernel, const Tensor4& bias,
                         int stride, int padding) {
    const int N = input.n(), IC = input.c(), IH = input.h(), IW = input.w();
    const int OC = kernel.c(), KH = kernel.h(), KW = kernel.w();
    const int OH = deconv_out_dim(IH, KH, stride, padding);
    const int OW = deconv_out_dim(IW, KW, stride, padding);
    Tensor4 out(N, OC, OH, OW);
    for (int n = 0; n < N; ++n)
        for (int oc = 0; oc < OC; ++oc)
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox) {
                    double acc = bias.empty() ? 0.0 : bias.at(0, oc, 0, 0);
                    for (int ic = 0; ic < IC; ++ic)
                        for (int ky = 0; ky < KH; ++ky)
                            for (int kx = 0; kx < KW; ++kx) {
                                // oy = iy*stride - padding + ky  =>  iy = (oy + padding - ky) / stride
                                const int ny = oy + padding - ky;
                                const int nx = ox + padding - kx;
                                if (ny < 0 || nx < 0 || ny % stride != 0 || nx % stride != 0)
                                    continue;
                                const int iy = ny / stride;
                                const int ix = nx / stride;
                                if (iy < IH && ix < IW)
                                    acc += input.at(n, ic, iy, ix) * kernel.at(ic, oc, ky, kx);
                            }
                    out.at(n, oc, oy, ox) = acc;
                }
    return out;
}

Tensor4 conv2d_backward_input(const Tensor4& grad_out, const Tensor4& kernel, int stride,
                              int padding, int in_h, int in_w) {
    const int N = grad_out.n(), OC = grad_out.c(), OH = grad_out.h(), OW = grad_out.w();
    const int IC = kernel.c(), KH = kernel.h(), KW = kernel.w();
    Tensor4 gin(N, IC, in_h, in_w);
    for (int n = 0; n < N; ++n)
        for (int ic = 0; ic < IC; ++ic)
            for (int iy = 0; iy < in_h; ++iy)
                for (int ix = 0; ix < in_w; ++ix) {
                    double acc = 0.0;
                    for (int oc = 0; oc < OC; ++oc)
                        for (int ky = 0; ky < KH; ++ky)
                            for (int kx = 0; kx < KW; ++kx) {
                                const int ny = iy + padding - ky;
                                const int nx = ix + padding - kx;
                                if (ny < 0 || nx < 0 || ny % stride != 0 || nx % stride != 0)
                                    continue;
                                const int oy = ny / stride;
                                const int ox = nx / stride;
                                if (oy < OH && ox < OW)
                                    acc += grad_out.at(n, oc, oy, ox) * kernel.at(oc, ic, ky, kx);
                            }
                    gin.at(n, ic, iy, ix) = acc;
                }
    return gin;
}

Tensor4 conv2d_backward_kernel(const Tensor4& grad_out, const Tensor4& input, int kh, int kw,
                               int stride, int padding) {
    const int N = grad_out.n(), OC = grad_out.c(), OH = grad_out.h(), OW = grad_out.w();
    const int IC = input.c(), H = input.h(), W = input.w();
    Tensor4 gk(OC, IC, kh, kw);
    for (int oc = 0; oc < OC; ++oc)
        for (int ic = 0; ic < IC; ++ic)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    double acc = 0.0;
                    for (int n = 0; n < N; ++n)
                        for (int oy = 0; oy < OH; ++oy)
                            for (int ox = 0; ox < OW; ++ox) {
                                const int iy = oy * stride - padding + ky;
                                const int ix = ox * stride - padding + kx;
                                if (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                    acc += grad_out.at(n, oc, oy, ox) * input.at(n, ic, iy, ix);
                            }
                    gk.at(oc, ic, ky, kx) = acc;
                }
    return gk;
}

} // namespace aide::serial
