#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aide/rng.hpp"
#include "aide/tensor.hpp"

namespace aide {

/// One CT slice in raw Hounsfield units plus acquisition metadata.
struct HuSlice {
    std::vector<int16_t> pixels; // row-major
    int height = 512;
    int width = 512;
    std::string slice_id;
    std::string patient_id;
    std::string dose_tag; // "quarter" | "full"
};

/// Normalized 2-D grid in [0,1].
struct Grid {
    std::vector<double> v;
    int height = 0;
    int width = 0;

    double at(int y, int x) const { return v[static_cast<size_t>(y) * width + x]; }
    double& at(int y, int x) { return v[static_cast<size_t>(y) * width + x]; }
};

constexpr int kPatchSize = 55;
constexpr int kPatchGrid = 9;                          // 9x9 tiles per 512x512 slice
constexpr int kPatchesPerSlice = kPatchGrid * kPatchGrid; // 81
constexpr int kCoveredExtent = kPatchGrid * kPatchSize;   // 495
constexpr double kHuWindowLo = -1000.0;
constexpr double kHuWindowHi = 3000.0;

/// Tiling anchor for an H x W slice: the uncovered remainder splits nearly in
/// half, (8, 8) for 512x512.
inline int patch_anchor(int extent) { return (extent - kCoveredExtent) / 2; }

/// Min-max window to [0,1] over [-1000, 3000] HU; values outside clip.
Grid normalize_hu(const HuSlice& slice);

/// Monotone scalar version of the same window.
inline double normalize_hu_value(double hu) {
    double v = (hu - kHuWindowLo) / (kHuWindowHi - kHuWindowLo);
    return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
}

/// Row-major 9x9 grid of non-overlapping 55x55 tiles anchored at
/// (patch_anchor, patch_anchor). Requires extents >= 495.
std::vector<Grid> patchify(const Grid& slice);

/// Inverse of patchify on the covered region; uncovered border gets `fill`.
Grid unpatchify(const std::vector<Grid>& patches, double fill, int height = 512, int width = 512);

/// Aligned (quarter, full) patches with provenance.
struct PatchPair {
    Grid low;
    Grid full;
    std::string slice_id;
    int row_tile = 0;
    int col_tile = 0;
    std::string augmentation_tag = "orig";
};

enum class AugmentPolicy { baseline, expert };

/// Baseline: original + rot90 + rot-90 + h-flip + v-flip (exact pixel
/// permutations). Expert additionally emits one bilinear rotation at an angle
/// drawn uniformly from [30, 60] degrees with reflect padding. Low and full
/// always receive the identical transform.
std::vector<PatchPair> augment(const PatchPair& pair, AugmentPolicy policy, Rng& rng);

// exact transforms used by augment, exposed for tests
Grid rot90(const Grid& g);  // counter-clockwise
Grid rot270(const Grid& g); // clockwise
Grid hflip(const Grid& g);
Grid vflip(const Grid& g);
/// Bilinear rotation about the grid center, reflect padding at the borders.
Grid rotate_bilinear(const Grid& g, double degrees);

// --- slice files and manifests ----------------------------------------------

/// Raw slice file `<id>.hu16`: height*width little-endian int16 HU values,
/// row-major.
void write_hu16(const std::string& path, const HuSlice& slice);
HuSlice read_hu16(const std::string& path, int height = 512, int width = 512);

struct ManifestEntry {
    std::string slice_id;
    std::string patient_id;
    std::string dose_tag;
    std::string path;
    std::string pair_id;
};

struct Manifest {
    std::vector<ManifestEntry> entries;

    /// pair_id -> (quarter entry, full entry); throws on incomplete pairs.
    std::vector<std::pair<ManifestEntry, ManifestEntry>> pairs() const;
};

Manifest read_manifest(const std::string& path);
void write_manifest(const Manifest& manifest, const std::string& path);

} // namespace aide
