#pragma once

#include <string>

#include "aide/preprocess.hpp"
#include "aide/rng.hpp"

namespace aide {

/// Anatomical regimes the generator can emit. Each has its own geometry, HU
/// content, and quarter-dose noise level, so cluster experts have something
/// real to specialize on.
enum class Regime { lung, abdomen, pelvis };

const char* regime_name(Regime r);
Regime regime_from_name(const std::string& name);

struct PhantomParams {
    int slices_per_regime = 20;
    int height = 512;
    int width = 512;
    /// Quarter-dose noise scale per regime, in HU at the soft-tissue level.
    double lung_noise_hu = 220.0;
    double abdomen_noise_hu = 60.0;
    double pelvis_noise_hu = 130.0;
    /// Full-dose noise as a fraction of the quarter-dose scale (0 = clean
    /// ground truth).
    double full_noise_frac = 0.0;
    int patients_per_regime = 4;
};

/// Clean ellipse/organ-blob phantom: air -1000 outside the body, soft tissue
/// around 40 HU, lung-like air pockets around -850 HU, bone around 650-700 HU.
/// Deterministic for a given (regime, rng state).
HuSlice make_phantom(Regime regime, Rng& rng, int height = 512, int width = 512);

/// Dose-dependent Poisson-Gaussian noise: per-pixel sigma grows with the
/// attenuation signal, sigma(hu) = noise_hu * sqrt(0.25 + (hu+1000)/4000).
HuSlice apply_dose_noise(const HuSlice& clean, double noise_hu, Rng& rng);

double regime_noise_hu(const PhantomParams& p, Regime r);

/// Writes (quarter, full) .hu16 pairs for every regime under `out_dir` and
/// returns the manifest (also written to out_dir/manifest.json). Slice ids
/// look like "lung_0003"; the regime is recoverable from the id prefix.
Manifest generate_phantom_dataset(const PhantomParams& params, const std::string& out_dir,
                                  uint64_t seed);

} // namespace aide
