#pragma once
#include <algorithm>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "aide/autodiff.hpp"
#include "aide/optim.hpp"

namespace aide {

/// Residual encoder-decoder layout: `num_enc_layers` convolutions followed by
/// as many transposed convolutions, ReLU after every stage, with shortcut
/// additions landing on decoder outputs before their activation.
struct RedCnnConfig {
    int num_enc_layers = 5;
    int channels = 96;
    int kernel = 5;
    int stride = 1;
    int padding = 0;
    /// (encoder layer, decoder layer); encoder 0 means the raw input, decoder
    /// layers count 1..num_enc_layers in execution order. The source is the
    /// encoder stage's post-activation output; it is added to the decoder
    /// stage's output ahead of that stage's ReLU.
    std::vector<std::pair<int, int>> shortcut_pairs;

    /// Full-scale preset: 5+5 layers, 96 channels, shortcuts input->dec5,
    /// enc2->dec3, enc4->dec1.
    static RedCnnConfig defaults();
    /// Desk-scale preset: 3+3 layers, 32 channels; trains on a CPU in minutes.
    static RedCnnConfig desk();

    /// Smallest input extent whose innermost feature map stays >= 1 pixel.
    int min_spatial() const {
        const int shrink = (kernel - 1) - 2 * padding; // per layer
        return std::max(num_enc_layers * std::max(shrink, 0) + 1, kernel - 2 * padding);
    }

    void validate() const;
};

constexpr int kBaselineClusterId = -1;

/// A trained denoiser plus the routing metadata the agent needs.
struct ExpertModel {
    RedCnnConfig config;
    ParamSet params;
    int cluster_id = kBaselineClusterId; // 0..2 or kBaselineClusterId
    std::string description;             // capability sentence fed to the router
    std::string train_fingerprint;       // seed + data-manifest hash

    std::string cluster_label() const {
        return cluster_id == kBaselineClusterId ? "baseline" : std::to_string(cluster_id);
    }
};

/// Fresh model with Kaiming-uniform (fan-in) weights and zero biases, both on
/// the float32 storage grid; deterministic under `seed`.
ExpertModel build_redcnn(const RedCnnConfig& config, uint64_t seed);

/// Plain forward pass (no tape).
Tensor4 redcnn_forward(const ExpertModel& model, const Tensor4& input,
                       Precision prec = Precision::f64);

/// Forward pass recorded on a tape for training; returns the prediction node.
Tape::NodeId redcnn_forward_on_tape(ExpertModel& model, Tape& tape, Tape::NodeId input);

/// Denoise a batch of normalized patches: validates the [0,1] input range
/// (tolerance 0.01), runs the network, clamps the result to [0,1].
Tensor4 denoise(const ExpertModel& model, const Tensor4& patches,
                Precision prec = Precision::f64);

/// Model file, magic "AIDE": header, config block, per-layer shape table,
/// float32 little-endian weights, trailing CRC32. load(save(m)) reproduces
/// m's outputs bit-exactly.
void save_model(const ExpertModel& model, const std::string& path);
ExpertModel load_model(const std::string& path);

} // namespace aide
