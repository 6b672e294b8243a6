#include "aide/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "aide/errors.hpp"

namespace aide {

Grid normalize_hu(const HuSlice& slice) {
    Grid g;
    g.height = slice.height;
    g.width = slice.width;
    g.v.resize(slice.pixels.size());
    for (size_t i = 0; i < slice.pixels.size(); ++i)
        g.v[i] = normalize_hu_value(static_cast<double>(slice.pixels[i]));
    return g;
}

std::vector<Grid> patchify(const Grid& slice) {
    if (slice.height < kCoveredExtent || slice.width < kCoveredExtent)
        throw ValidationError("patchify: slice " + std::to_string(slice.height) + "x" +
                              std::to_string(slice.width) + " smaller than " +
                              std::to_string(kCoveredExtent) + "x" +
                              std::to_string(kCoveredExtent));
    const int ay = patch_anchor(slice.height);
    const int ax = patch_anchor(slice.width);

    std::vector<Grid> patches;
    patches.reserve(kPatchesPerSlice);
    for (int ty = 0; ty < kPatchGrid; ++ty) {
        for (int tx = 0; tx < kPatchGrid; ++tx) {
            Grid p;
            p.height = p.width = kPatchSize;
            p.v.resize(static_cast<size_t>(kPatchSize) * kPatchSize);
            for (int y = 0; y < kPatchSize; ++y) {
                const int sy = ay + ty * kPatchSize + y;
                const double* src = slice.v.data() + static_cast<size_t>(sy) * slice.width +
                                    ax + static_cast<size_t>(tx) * kPatchSize;
                std::copy(src, src + kPatchSize, p.v.begin() + static_cast<size_t>(y) * kPatchSize);
            }
            patches.push_back(std::move(p));
        }
    }
    return patches;
}

Grid unpatchify(const std::vector<Grid>& patches, double fill, int height, int width) {
    if (patches.size() != kPatchesPerSlice)
        throw ValidationError("unpatchify: expected " + std::to_string(kPatchesPerSlice) +
                              " patches, got " + std::to_string(patches.size()));
    if (height < kCoveredExtent || width < kCoveredExtent)
        throw ValidationError("unpatchify: target grid smaller than the covered region");
    Grid g;
    g.height = height;
    g.width = width;
    g.v.assign(static_cast<size_t>(height) * width, fill);
    const int ay = patch_anchor(height);
    const int ax = patch_anchor(width);
    for (int ty = 0; ty < kPatchGrid; ++ty) {
        for (int tx = 0; tx < kPatchGrid; ++tx) {
            const Grid& p = patches[static_cast<size_t>(ty) * kPatchGrid + tx];
            if (p.height != kPatchSize || p.width != kPatchSize)
                throw ValidationError("unpatchify: patch " + std::to_string(ty) + "," +
                                      std::to_string(tx) + " is not 55x55");
            for (int y = 0; y < kPatchSize; ++y) {
                const int sy = ay + ty * kPatchSize + y;
                std::copy(p.v.begin() + static_cast<size_t>(y) * kPatchSize,
                          p.v.begin() + static_cast<size_t>(y + 1) * kPatchSize,
                          g.v.begin() + static_cast<size_t>(sy) * width + ax +
                              static_cast<size_t>(tx) * kPatchSize);
            }
        }
    }
    return g;
}

Grid rot90(const Grid& g) {
    Grid out;
    out.height = g.width;
    out.width = g.height;
    out.v.resize(g.v.size());
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) out.at(g.width - 1 - x, y) = g.at(y, x);
    return out;
}

Grid rot270(const Grid& g) {
    Grid out;
    out.height = g.width;
    out.width = g.height;
    out.v.resize(g.v.size());
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) out.at(x, g.height - 1 - y) = g.at(y, x);
    return out;
}

Grid hflip(const Grid& g) {
    Grid out = g;
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) out.at(y, x) = g.at(y, g.width - 1 - x);
    return out;
}

Grid vflip(const Grid& g) {
    Grid out = g;
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) out.at(y, x) = g.at(g.height - 1 - y, x);
    return out;
}

namespace {

// reflect index into [0, n): ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
int reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    i = ((i % period) + period) % period;
    return i < n ? i : period - 1 - i;
}

} // namespace

Grid rotate_bilinear(const Grid& g, double degrees) {
    const double rad = degrees * M_PI / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    const double cy = (g.height - 1) / 2.0, cx = (g.width - 1) / 2.0;

    Grid out;
    out.height = g.height;
    out.width = g.width;
    out.v.resize(g.v.size());
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            // inverse-map the output pixel into the source
            const double dy = y - cy, dx = x - cx;
            const double sy = cy + (c * dy + s * dx);
            const double sx = cx + (-s * dy + c * dx);
            const int y0 = static_cast<int>(std::floor(sy));
            const int x0 = static_cast<int>(std::floor(sx));
            const double fy = sy - y0, fx = sx - x0;
            const double v00 = g.at(reflect(y0, g.height), reflect(x0, g.width));
            const double v01 = g.at(reflect(y0, g.height), reflect(x0 + 1, g.width));
            const double v10 = g.at(reflect(y0 + 1, g.height), reflect(x0, g.width));
            const double v11 = g.at(reflect(y0 + 1, g.height), reflect(x0 + 1, g.width));
            out.at(y, x) = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                           fy * ((1 - fx) * v10 + fx * v11);
        }
    }
    return out;
}

std::vector<PatchPair> augment(const PatchPair& pair, AugmentPolicy policy, Rng& rng) {
    std::vector<PatchPair> out;
    auto emit = [&](const char* tag, auto&& f) {
        PatchPair p = pair;
        p.low = f(pair.low);
        p.full = f(pair.full);
        p.augmentation_tag = tag;
        out.push_back(std::move(p));
    };

    out.push_back(pair);
    out.back().augmentation_tag = "orig";
    emit("rot+90", [](const Grid& g) { return rot90(g); });
    emit("rot-90", [](const Grid& g) { return rot270(g); });
    emit("hflip", [](const Grid& g) { return hflip(g); });
    emit("vflip", [](const Grid& g) { return vflip(g); });

    if (policy == AugmentPolicy::expert) {
        const double angle = rng.uniform(30.0, 60.0);
        char tag[32];
        std::snprintf(tag, sizeof(tag), "rot%.2f", angle);
        emit(tag, [angle](const Grid& g) { return rotate_bilinear(g, angle); });
    }
    return out;
}

void write_hu16(const std::string& path, const HuSlice& slice) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("write_hu16: cannot open '" + path + "'");
    for (int16_t v : slice.pixels) {
        const uint8_t b[2] = {static_cast<uint8_t>(v & 0xff),
                              static_cast<uint8_t>((static_cast<uint16_t>(v) >> 8) & 0xff)};
        out.write(reinterpret_cast<const char*>(b), 2);
    }
    if (!out) throw IoError("write_hu16: write to '" + path + "' failed");
}

HuSlice read_hu16(const std::string& path, int height, int width) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_hu16: cannot open '" + path + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    const size_t expected = static_cast<size_t>(height) * width * 2;
    if (bytes.size() != expected)
        throw IoError("read_hu16: '" + path + "' holds " + std::to_string(bytes.size()) +
                      " bytes, expected " + std::to_string(expected));
    HuSlice slice;
    slice.height = height;
    slice.width = width;
    slice.pixels.resize(static_cast<size_t>(height) * width);
    for (size_t i = 0; i < slice.pixels.size(); ++i)
        slice.pixels[i] =
            static_cast<int16_t>(bytes[2 * i] | (static_cast<uint16_t>(bytes[2 * i + 1]) << 8));
    return slice;
}

std::vector<std::pair<ManifestEntry, ManifestEntry>> Manifest::pairs() const {
    std::map<std::string, std::pair<const ManifestEntry*, const ManifestEntry*>> by_id;
    for (const auto& e : entries) {
        auto& slot = by_id[e.pair_id];
        if (e.dose_tag == "quarter")
            slot.first = &e;
        else if (e.dose_tag == "full")
            slot.second = &e;
        else
            throw ValidationError("manifest: unknown dose_tag '" + e.dose_tag + "' in slice '" +
                                  e.slice_id + "'");
    }
    std::vector<std::pair<ManifestEntry, ManifestEntry>> out;
    for (const auto& [pair_id, slot] : by_id) {
        if (!slot.first || !slot.second)
            throw ValidationError("manifest: pair '" + pair_id + "' is missing its " +
                                  (slot.first ? "full" : "quarter") + "-dose slice");
        out.emplace_back(*slot.first, *slot.second);
    }
    return out;
}

Manifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_manifest: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("read_manifest: '" + path + "' is not valid JSON: " + e.what());
    }
    Manifest m;
    for (const auto& row : j.at("slices")) {
        ManifestEntry e;
        e.slice_id = row.at("slice_id").get<std::string>();
        e.patient_id = row.at("patient_id").get<std::string>();
        e.dose_tag = row.at("dose_tag").get<std::string>();
        e.path = row.at("path").get<std::string>();
        e.pair_id = row.at("pair_id").get<std::string>();
        m.entries.push_back(std::move(e));
    }
    return m;
}

void write_manifest(const Manifest& manifest, const std::string& path) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : manifest.entries)
        rows.push_back({{"slice_id", e.slice_id},
                        {"patient_id", e.patient_id},
                        {"dose_tag", e.dose_tag},
                        {"path", e.path},
                        {"pair_id", e.pair_id}});
    nlohmann::json j{{"slices", rows},
                     {"tiling", {{"patch", kPatchSize},
                                 {"grid", kPatchGrid},
                                 {"covered", kCoveredExtent},
                                 {"discarded_border", "17px split 8/9 per axis at 512"}}}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("write_manifest: cannot open '" + path + "'");
    out << j.dump(2) << "\n";
}

} // namespace aide
