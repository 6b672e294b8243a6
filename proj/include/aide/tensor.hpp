#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "aide/errors.hpp"

namespace aide {

/// Dense 4-D tensor (batch, channels, height, width), row-major, contiguous.
/// All arithmetic in the engine runs in double; model files store float32.
struct Tensor4 {
    std::array<int, 4> shape{0, 0, 0, 0};
    std::vector<double> data;

    Tensor4() = default;
    Tensor4(int n, int c, int h, int w)
        : shape{n, c, h, w}, data(static_cast<size_t>(n) * c * h * w, 0.0) {}

    int n() const { return shape[0]; }
    int c() const { return shape[1]; }
    int h() const { return shape[2]; }
    int w() const { return shape[3]; }

    size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    size_t index(int n, int c, int y, int x) const {
        return ((static_cast<size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x;
    }
    double& at(int n, int c, int y, int x) { return data[index(n, c, y, x)]; }
    double at(int n, int c, int y, int x) const { return data[index(n, c, y, x)]; }

    /// Pointer to the start of one (n, c) plane.
    double* plane(int n, int c) { return data.data() + index(n, c, 0, 0); }
    const double* plane(int n, int c) const { return data.data() + index(n, c, 0, 0); }

    void fill(double v) { data.assign(data.size(), v); }

    bool same_shape(const Tensor4& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static Tensor4 zeros_like(const Tensor4& o) {
        return Tensor4(o.shape[0], o.shape[1], o.shape[2], o.shape[3]);
    }
};

/// Snap every entry onto the float32 grid. Parameters live on this grid
/// (storage precision); arithmetic stays double.
inline void quantize_f32(Tensor4& t) {
    for (auto& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

inline std::string shape_str(const Tensor4& t) {
    return "(" + std::to_string(t.shape[0]) + "," + std::to_string(t.shape[1]) + "," +
           std::to_string(t.shape[2]) + "," + std::to_string(t.shape[3]) + ")";
}

inline void require_same_shape(const Tensor4& a, const Tensor4& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) +
                             " vs " + shape_str(b));
}

} // namespace aide
