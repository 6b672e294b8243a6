// Times the OpenMP conv/deconv kernels against the serial reference on
// RED-CNN-sized workloads and checks that both paths agree.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "aide/kernels.hpp"
#include "aide/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace aide;

namespace {

Tensor4 random_tensor(int n, int c, int h, int w, Rng& rng) {
    Tensor4 t(n, c, h, w);
    for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
}

double max_abs_diff(const Tensor4& a, const Tensor4& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = std::abs(a.data[i] - b.data[i]);
        if (d > m) m = d;
    }
    return m;
}

template <typename F>
double time_ms(F&& f, int reps) {
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) f();
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

struct Case {
    std::string name;
    int n, ic, h, w, oc, k;
    int reps_fast, reps_slow;
};

} // namespace

int main() {
#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (no OpenMP)\n");
#endif

    // Shapes drawn from the desk preset (32 ch) and the full preset (96 ch).
    std::vector<Case> cases = {
        {"conv 1->32  55x55 b16", 16, 1, 55, 55, 32, 5, 20, 3},
        {"conv 32->32 51x51 b16", 16, 32, 51, 51, 32, 5, 5, 1},
        {"conv 96->96 51x51 b4", 4, 96, 51, 51, 96, 5, 2, 1},
    };

    std::printf("%-24s %12s %12s %8s %12s\n", "case", "omp ms", "serial ms", "speedup",
                "max |diff|");
    Rng rng(12345);
    for (const auto& c : cases) {
        Tensor4 in = random_tensor(c.n, c.ic, c.h, c.w, rng);
        Tensor4 k = random_tensor(c.oc, c.ic, c.k, c.k, rng);
        Tensor4 b = random_tensor(1, c.oc, 1, 1, rng);

        Tensor4 fast = conv2d_forward(in, k, b, 1, 0);
        Tensor4 slow = serial::conv2d_forward(in, k, b, 1, 0);
        double diff = max_abs_diff(fast, slow);

        double t_fast = time_ms([&] { conv2d_forward(in, k, b, 1, 0); }, c.reps_fast);
        double t_slow = time_ms([&] { serial::conv2d_forward(in, k, b, 1, 0); }, c.reps_slow);

        double macs = double(c.n) * c.oc * (c.h - c.k + 1) * (c.w - c.k + 1) * c.ic * c.k * c.k;
        std::printf("%-24s %12.2f %12.2f %7.1fx %12.2e  (%.1f GMAC/s omp)\n", c.name.c_str(),
                    t_fast, t_slow, t_slow / t_fast, diff, macs / (t_fast * 1e6));
    }

    // Backward kernels on the mid-size case.
    {
        Case c = cases[1];
        Rng r2(99);
        Tensor4 in = random_tensor(c.n, c.ic, c.h, c.w, r2);
        Tensor4 k = random_tensor(c.oc, c.ic, c.k, c.k, r2);
        Tensor4 gout = random_tensor(c.n, c.oc, c.h - c.k + 1, c.w - c.k + 1, r2);

        double t_gi = time_ms([&] { conv2d_backward_input(gout, k, 1, 0, c.h, c.w); }, 5);
        double t_gk = time_ms([&] { conv2d_backward_kernel(gout, in, c.k, c.k, 1, 0); }, 5);
        std::printf("%-24s %12.2f\n", "bwd_input 32ch b16", t_gi);
        std::printf("%-24s %12.2f\n", "bwd_kernel 32ch b16", t_gk);
    }
    return 0;
}
