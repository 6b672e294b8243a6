#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "aide/phantom.hpp"
#include "aide/preprocess.hpp"
#include "test_support.hpp"

using namespace aide;

namespace {

Grid random_grid(int h, int w, Rng& rng) {
    Grid g;
    g.height = h;
    g.width = w;
    g.v.resize(static_cast<size_t>(h) * w);
    for (auto& v : g.v) v = rng.uniform();
    return g;
}

double grid_max_diff(const Grid& a, const Grid& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
    return m;
}

} // namespace

TEST_CASE("normalize_hu window endpoints, midpoint, and clipping") {
    CHECK(normalize_hu_value(-1000) == 0.0);
    CHECK(normalize_hu_value(3000) == 1.0);
    CHECK(normalize_hu_value(5000) == 1.0);  // clipped
    CHECK(normalize_hu_value(-2048) == 0.0); // clipped
    CHECK(normalize_hu_value(1000) == 0.5);
}

TEST_CASE("normalize_hu is monotone and idempotent after clipping") {
    Rng rng(21);
    for (int i = 0; i < 200; ++i) {
        double a = rng.uniform(-2048, 4096);
        double b = rng.uniform(-2048, 4096);
        if (a > b) std::swap(a, b);
        CHECK(normalize_hu_value(a) <= normalize_hu_value(b));
    }
    // re-windowing the clipped HU value changes nothing
    for (double hu : {-2048.0, -1000.0, 0.0, 2999.0, 4096.0}) {
        const double clipped = std::clamp(hu, kHuWindowLo, kHuWindowHi);
        CHECK(normalize_hu_value(clipped) == normalize_hu_value(hu));
    }
}

TEST_CASE("patchify: 512x512 yields exactly 81 patches in row-major order") {
    Rng rng(22);
    Grid slice = random_grid(512, 512, rng);
    auto patches = patchify(slice);
    REQUIRE(patches.size() == 81);
    for (const auto& p : patches) {
        CHECK(p.height == 55);
        CHECK(p.width == 55);
    }
}

TEST_CASE("patchify: constant slice gives constant patches") {
    Grid slice;
    slice.height = slice.width = 512;
    slice.v.assign(512 * 512, 0.37);
    for (const auto& p : patchify(slice))
        for (double v : p.v) CHECK(v == 0.37);
}

TEST_CASE("patchify: marker pixel at slice (8,8) is patch (0,0)'s top-left") {
    Grid slice;
    slice.height = slice.width = 512;
    slice.v.assign(512 * 512, 0.0);
    slice.at(8, 8) = 1.0;
    auto patches = patchify(slice);
    CHECK(patches[0].at(0, 0) == 1.0);
    // and nothing else in that patch
    CHECK(std::count(patches[0].v.begin(), patches[0].v.end(), 1.0) == 1);
}

TEST_CASE("patchify: undersized slice is rejected") {
    Rng rng(23);
    Grid small = random_grid(494, 512, rng);
    CHECK_THROWS_AS(patchify(small), ValidationError);
}

TEST_CASE("unpatchify inverts patchify on the covered region") {
    Rng rng(24);
    Grid slice = random_grid(512, 512, rng);
    Grid back = unpatchify(patchify(slice), 0.0);
    const int a = patch_anchor(512);
    for (int y = a; y < a + kCoveredExtent; ++y)
        for (int x = a; x < a + kCoveredExtent; ++x) CHECK(back.at(y, x) == slice.at(y, x));
    // border ring is the fill value
    CHECK(back.at(0, 0) == 0.0);
    CHECK(back.at(7, 100) == 0.0);
    CHECK(back.at(511, 511) == 0.0);
    // marker fixture: slice (8,8) reappears at (8,8)
    CHECK(back.at(8, 8) == slice.at(8, 8));
}

TEST_CASE("unpatchify rejects a wrong patch count") {
    Rng rng(25);
    Grid slice = random_grid(512, 512, rng);
    auto patches = patchify(slice);
    patches.pop_back();
    CHECK_THROWS_AS(unpatchify(patches, 0.0), ValidationError);
}

TEST_CASE("rotations and flips compose to the identity bit-exactly") {
    Rng rng(26);
    Grid g = random_grid(55, 55, rng);
    CHECK(grid_max_diff(rot270(rot90(g)), g) == 0.0);
    CHECK(grid_max_diff(hflip(hflip(g)), g) == 0.0);
    CHECK(grid_max_diff(vflip(vflip(g)), g) == 0.0);
    // rot90 applied four times is also the identity
    CHECK(grid_max_diff(rot90(rot90(rot90(rot90(g)))), g) == 0.0);
}

TEST_CASE("45-degree rotation leaves a centered disk nearly unchanged") {
    // Soft-edged disk, small enough that the corner regions whose rotated
    // source falls off-grid (and therefore reflect-samples interior content)
    // only ever see the disk's near-zero tail.
    Grid disk;
    disk.height = disk.width = 55;
    disk.v.assign(55 * 55, 0.0);
    const double c = 27.0;
    for (int y = 0; y < 55; ++y)
        for (int x = 0; x < 55; ++x) {
            const double r = std::hypot(y - c, x - c);
            disk.at(y, x) = 1.0 / (1.0 + std::exp((r - 11.0) / 1.2));
        }
    Grid rot = rotate_bilinear(disk, 45.0);
    double mean_abs = 0.0;
    for (size_t i = 0; i < disk.v.size(); ++i) mean_abs += std::abs(rot.v[i] - disk.v[i]);
    mean_abs /= disk.v.size();
    CHECK(mean_abs < 1e-2);
}

TEST_CASE("augment: baseline emits 5 pairs, expert 6, all values in [0,1]") {
    Rng rng(27);
    PatchPair pair;
    pair.low = random_grid(55, 55, rng);
    pair.full = random_grid(55, 55, rng);
    pair.slice_id = "s1";

    Rng arng(1);
    auto base = augment(pair, AugmentPolicy::baseline, arng);
    CHECK(base.size() == 5);
    CHECK(base[0].augmentation_tag == "orig");

    Rng arng2(1);
    auto expert = augment(pair, AugmentPolicy::expert, arng2);
    CHECK(expert.size() == 6);
    CHECK(expert.back().augmentation_tag.substr(0, 3) == "rot");

    for (const auto& p : expert)
        for (double v : p.low.v) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
}

TEST_CASE("augment: low and full receive the identical transform") {
    Rng rng(28);
    PatchPair pair;
    pair.low = random_grid(55, 55, rng);
    pair.full = pair.low; // identical content must stay identical
    Rng arng(7);
    for (const auto& p : augment(pair, AugmentPolicy::expert, arng)) {
        INFO("tag ", p.augmentation_tag);
        CHECK(grid_max_diff(p.low, p.full) == 0.0);
    }
}

TEST_CASE("hu16 files round-trip") {
    HuSlice s;
    s.height = s.width = 16;
    s.pixels.resize(256);
    Rng rng(29);
    for (auto& p : s.pixels) p = static_cast<int16_t>(rng.uniform_int(-2048, 4096));
    const std::string path = "/tmp/aide_test_slice.hu16";
    write_hu16(path, s);
    HuSlice r = read_hu16(path, 16, 16);
    CHECK(r.pixels == s.pixels);
    CHECK_THROWS_AS(read_hu16(path, 32, 32), IoError);
    std::remove(path.c_str());
}

TEST_CASE("manifest: json round-trip and pairing") {
    Manifest m;
    m.entries = {{"a_q", "p0", "quarter", "/x/a_q.hu16", "a"},
                 {"a_f", "p0", "full", "/x/a_f.hu16", "a"},
                 {"b_q", "p1", "quarter", "/x/b_q.hu16", "b"},
                 {"b_f", "p1", "full", "/x/b_f.hu16", "b"}};
    const std::string path = "/tmp/aide_test_manifest.json";
    write_manifest(m, path);
    Manifest r = read_manifest(path);
    REQUIRE(r.entries.size() == 4);
    CHECK(r.entries[0].slice_id == "a_q");
    auto pairs = r.pairs();
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].first.dose_tag == "quarter");
    CHECK(pairs[0].second.dose_tag == "full");

    r.entries.pop_back(); // b loses its full dose
    CHECK_THROWS_AS(r.pairs(), ValidationError);
    std::remove(path.c_str());
}

TEST_CASE("phantom: lung slices are air-dominated, pelvis slices bone-heavy") {
    Rng rng(30);
    Rng rng2(31);
    const HuSlice lung = make_phantom(Regime::lung, rng);
    const HuSlice pelvis = make_phantom(Regime::pelvis, rng2);

    auto frac_below = [](const HuSlice& s, int16_t thr) {
        size_t n = 0;
        for (int16_t v : s.pixels) n += v < thr;
        return static_cast<double>(n) / s.pixels.size();
    };
    auto frac_above = [](const HuSlice& s, int16_t thr) {
        size_t n = 0;
        for (int16_t v : s.pixels) n += v > thr;
        return static_cast<double>(n) / s.pixels.size();
    };

    CHECK(frac_below(lung, -500) >= 0.40); // the profiler fixture relies on this
    CHECK(frac_above(pelvis, 300) > 0.05);
    CHECK(frac_above(lung, 300) < 0.03);
}

TEST_CASE("phantom: dataset generation is deterministic and paired") {
    namespace fs = std::filesystem;
    PhantomParams params;
    params.slices_per_regime = 2;
    const std::string dir_a = "/tmp/aide_test_phantom_a";
    const std::string dir_b = "/tmp/aide_test_phantom_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);

    Manifest ma = generate_phantom_dataset(params, dir_a, 99);
    Manifest mb = generate_phantom_dataset(params, dir_b, 99);
    CHECK(ma.entries.size() == 12); // 3 regimes x 2 slices x 2 doses
    CHECK(ma.pairs().size() == 6);

    for (size_t i = 0; i < ma.entries.size(); ++i) {
        HuSlice sa = read_hu16(ma.entries[i].path);
        HuSlice sb = read_hu16(mb.entries[i].path);
        CHECK(sa.pixels == sb.pixels); // same seed, same bits
    }

    // quarter dose is noisier than full dose (which is clean by default)
    HuSlice q = read_hu16(ma.entries[0].path);
    HuSlice f = read_hu16(ma.entries[1].path);
    CHECK(ma.entries[0].dose_tag == "quarter");
    CHECK(q.pixels != f.pixels);

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}
