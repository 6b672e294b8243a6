#include "aide/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "aide/errors.hpp"

namespace aide {

const char* regime_name(Regime r) {
    switch (r) {
        case Regime::lung: return "lung";
        case Regime::abdomen: return "abdomen";
        case Regime::pelvis: return "pelvis";
    }
    return "?";
}

Regime regime_from_name(const std::string& name) {
    if (name == "lung") return Regime::lung;
    if (name == "abdomen") return Regime::abdomen;
    if (name == "pelvis") return Regime::pelvis;
    throw ValidationError("unknown regime '" + name + "'");
}

namespace {

struct Canvas {
    std::vector<double> hu;
    int h, w;

    Canvas(int h_, int w_, double background) : hu(static_cast<size_t>(h_) * w_, background),
                                                h(h_), w(w_) {}

    void ellipse(double cy, double cx, double ry, double rx, double value) {
        const int y0 = std::max(0, static_cast<int>(cy - ry - 1));
        const int y1 = std::min(h - 1, static_cast<int>(cy + ry + 1));
        const int x0 = std::max(0, static_cast<int>(cx - rx - 1));
        const int x1 = std::min(w - 1, static_cast<int>(cx + rx + 1));
        for (int y = y0; y <= y1; ++y) {
            const double dy = (y - cy) / ry;
            for (int x = x0; x <= x1; ++x) {
                const double dx = (x - cx) / rx;
                if (dy * dy + dx * dx <= 1.0) hu[static_cast<size_t>(y) * w + x] = value;
            }
        }
    }
};

double jit(Rng& rng, double base, double spread) { return base + rng.uniform(-spread, spread); }

void paint_lung(Canvas& c, Rng& rng, double cy, double cx, double body_ry, double body_rx) {
    const double soft = jit(rng, 40, 10);
    c.ellipse(cy, cx, body_ry, body_rx, soft);
    // spine
    c.ellipse(cy + body_ry * 0.72, cx, 30, 24, jit(rng, 700, 40));
    // two lungs with vessel blobs
    for (int side : {-1, 1}) {
        const double lcy = jit(rng, cy - body_ry * 0.06, 6);
        const double lcx = cx + side * jit(rng, body_rx * 0.42, 8);
        const double lry = jit(rng, body_ry * 0.62, 8);
        const double lrx = jit(rng, body_rx * 0.34, 6);
        const double air = jit(rng, -850, 25);
        c.ellipse(lcy, lcx, lry, lrx, air);
        const int vessels = 6 + static_cast<int>(rng.below(5));
        for (int i = 0; i < vessels; ++i) {
            const double vy = lcy + rng.uniform(-0.7, 0.7) * lry;
            const double vx = lcx + rng.uniform(-0.7, 0.7) * lrx;
            c.ellipse(vy, vx, rng.uniform(3, 8), rng.uniform(3, 8), jit(rng, 30, 30));
        }
    }
    // heart-ish mass between the lungs
    c.ellipse(cy + body_ry * 0.12, cx, body_ry * 0.24, body_rx * 0.16, jit(rng, 45, 10));
}

void paint_abdomen(Canvas& c, Rng& rng, double cy, double cx, double body_ry, double body_rx) {
    c.ellipse(cy, cx, body_ry, body_rx, jit(rng, 40, 8));
    // liver (right side of the image), stomach, spleen, kidneys, spine
    c.ellipse(cy - body_ry * 0.14, cx + body_rx * 0.30, body_ry * 0.46, body_rx * 0.40,
              jit(rng, 62, 8));
    c.ellipse(cy - body_ry * 0.16, cx - body_rx * 0.34, body_ry * 0.30, body_rx * 0.26,
              jit(rng, 18, 8));
    c.ellipse(cy - body_ry * 0.40, cx - body_rx * 0.52, body_ry * 0.17, body_rx * 0.16,
              jit(rng, 52, 6));
    for (int side : {-1, 1})
        c.ellipse(cy + body_ry * 0.38, cx + side * body_rx * 0.36, body_ry * 0.17,
                  body_rx * 0.12, jit(rng, 32, 6));
    c.ellipse(cy + body_ry * 0.70, cx, 28, 22, jit(rng, 690, 40));
    // bowel gas pockets, small and sparse
    const int pockets = static_cast<int>(rng.below(4));
    for (int i = 0; i < pockets; ++i)
        c.ellipse(cy + rng.uniform(0.0, 0.5) * body_ry, cx + rng.uniform(-0.4, 0.4) * body_rx,
                  rng.uniform(6, 14), rng.uniform(6, 14), jit(rng, -720, 60));
}

void paint_pelvis(Canvas& c, Rng& rng, double cy, double cx, double body_ry, double body_rx) {
    c.ellipse(cy, cx, body_ry, body_rx, jit(rng, 38, 8));
    // iliac wings: big lateral bone masses
    for (int side : {-1, 1})
        c.ellipse(jit(rng, cy - body_ry * 0.05, 6), cx + side * jit(rng, body_rx * 0.44, 8),
                  jit(rng, body_ry * 0.52, 10), jit(rng, body_rx * 0.20, 6), jit(rng, 650, 50));
    // sacrum
    c.ellipse(cy - body_ry * 0.10, cx, body_ry * 0.26, body_rx * 0.15, jit(rng, 620, 40));
    // bladder and rectum
    c.ellipse(cy + body_ry * 0.32, cx, body_ry * 0.24, body_rx * 0.22, jit(rng, 12, 6));
    c.ellipse(cy + body_ry * 0.66, cx, body_ry * 0.10, body_rx * 0.08, jit(rng, 8, 8));
}

} // namespace

HuSlice make_phantom(Regime regime, Rng& rng, int height, int width) {
    Canvas canvas(height, width, -1000.0);
    const double cy = jit(rng, height / 2.0, 8);
    const double cx = jit(rng, width / 2.0, 8);
    const double body_ry = jit(rng, height * 0.37, 12);
    const double body_rx = jit(rng, width * 0.45, 12);

    switch (regime) {
        case Regime::lung: paint_lung(canvas, rng, cy, cx, body_ry, body_rx); break;
        case Regime::abdomen: paint_abdomen(canvas, rng, cy, cx, body_ry, body_rx); break;
        case Regime::pelvis: paint_pelvis(canvas, rng, cy, cx, body_ry, body_rx); break;
    }

    HuSlice slice;
    slice.height = height;
    slice.width = width;
    slice.pixels.resize(canvas.hu.size());
    for (size_t i = 0; i < canvas.hu.size(); ++i)
        slice.pixels[i] = static_cast<int16_t>(std::lround(std::clamp(canvas.hu[i], -2048.0, 4096.0)));
    return slice;
}

HuSlice apply_dose_noise(const HuSlice& clean, double noise_hu, Rng& rng) {
    HuSlice out = clean;
    if (noise_hu <= 0.0) return out;
    for (auto& px : out.pixels) {
        const double hu = static_cast<double>(px);
        const double sigma = noise_hu * std::sqrt(0.25 + (hu + 1000.0) / 4000.0);
        const double noisy = hu + sigma * rng.normal();
        px = static_cast<int16_t>(std::lround(std::clamp(noisy, -2048.0, 4096.0)));
    }
    return out;
}

double regime_noise_hu(const PhantomParams& p, Regime r) {
    switch (r) {
        case Regime::lung: return p.lung_noise_hu;
        case Regime::abdomen: return p.abdomen_noise_hu;
        case Regime::pelvis: return p.pelvis_noise_hu;
    }
    return 0.0;
}

Manifest generate_phantom_dataset(const PhantomParams& params, const std::string& out_dir,
                                  uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    Manifest manifest;
    const Rng root = Rng(seed);
    for (Regime regime : {Regime::lung, Regime::abdomen, Regime::pelvis}) {
        const uint64_t regime_tag = static_cast<uint64_t>(regime) + 1;
        for (int i = 0; i < params.slices_per_regime; ++i) {
            Rng slice_rng = root.derive(regime_tag * 100000 + static_cast<uint64_t>(i));
            const HuSlice clean = make_phantom(regime, slice_rng, params.height, params.width);

            char id[64];
            std::snprintf(id, sizeof(id), "%s_%04d", regime_name(regime), i);
            const double q_noise = regime_noise_hu(params, regime);

            HuSlice quarter = apply_dose_noise(clean, q_noise, slice_rng);
            HuSlice full = apply_dose_noise(clean, q_noise * params.full_noise_frac, slice_rng);

            const std::string patient =
                std::string(regime_name(regime)) + "_pat" +
                std::to_string(i % std::max(1, params.patients_per_regime));

            for (auto [dose, slice] : {std::pair<const char*, HuSlice*>{"quarter", &quarter},
                                       {"full", &full}}) {
                slice->slice_id = std::string(id) + (dose[0] == 'q' ? "_q" : "_f");
                slice->patient_id = patient;
                slice->dose_tag = dose;
                const std::string file = slice->slice_id + ".hu16";
                write_hu16((fs::path(out_dir) / file).string(), *slice);
                manifest.entries.push_back(
                    {slice->slice_id, patient, dose, (fs::path(out_dir) / file).string(), id});
            }
        }
    }
    write_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    return manifest;
}

} // namespace aide
