#pragma once

#include "cbvd/adam.hpp"
#include "cbvd/frames.hpp"
#include "cbvd/grid.hpp"
#include "cbvd/keyvalue.hpp"
#include "cbvd/networks.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace cbvd {

struct TrainConfig {
    int radius = 2; // K; the window holds B = 2K + 1 frames
    int levels = 30;
    bool append_raw = false;
    double lambda1 = 1.0;
    double lambda2 = 0.1;
    double lambda3 = 1.0;
    double lr1 = 1e-4;
    double lr2 = 1e-5;
    int lr_decay_every = 1000;
    double lr_decay_factor = 0.1;
    int epochs_stage1 = 2000;
    int epochs_stage2 = 2000;
    std::uint64_t seed = 0;

    Index feat_channels = 0; // 0 selects C_in * B
    Index feature_width = 256;
    Index denoise_width = 256;
    Index denoise_bottleneck = 96;
    DenoiserLayout denoiser = DenoiserLayout::table;
    Index refine_width = 256;
    int refine_hidden = 4;
    double omega0 = 30.0;
    double bn_eps = 1e-5;

    // Data extents, filled from the sequence being fit.
    Index in_channels = 3;
    Index height = 0;
    Index width = 0;
    Index frames = 0;

    int window() const { return 2 * radius + 1; }
    NetworkConfig network() const;
    /// base * factor^floor(epoch / lr_decay_every), epochs counted from 0.
    double learning_rate(double base, int epoch) const;
    void validate() const;

    /// Every key, data extents included; this is the checkpoint snapshot.
    KeyValues to_key_values() const;
    /// Applies one key. Returns false when the key is not a training key.
    bool apply(const std::string& key, const std::string& value);
    /// Strict inverse of to_key_values: unknown keys are rejected.
    static TrainConfig from_key_values(const KeyValues& kv);

    bool operator==(const TrainConfig&) const = default;
};

/// Names of the keys a user may set (data extents excluded).
const std::vector<std::string>& train_config_keys();
bool is_extent_key(const std::string& key);

std::string to_string(DenoiserLayout layout);
DenoiserLayout parse_denoiser_layout(const std::string& name);

enum class Stage { after_stage1, after_stage2 };
std::string to_string(Stage stage);
Stage parse_stage(const std::string& name);

struct Checkpoint {
    TrainConfig config;
    Stage stage = Stage::after_stage1;
    NetworkParams<float> params;
    AdamState<float> adam1; // feature generator + denoiser
    AdamState<float> adam2; // refine network
};

/// Deep copy of every parameter tensor.
NetworkParams<float> clone(const NetworkParams<float>& params);
ParameterList<float> stage1_parameters(const NetworkParams<float>& params);
ParameterList<float> stage2_parameters(const NetworkParams<float>& params);

/// Frame indices t-K .. t+K, reflected at the sequence ends.
std::vector<Index> window_indices(Index frames, Index center, int radius);

struct Batch {
    std::vector<Index> indices;
    std::vector<CoordGrid> grids;
    std::vector<TensorF> noisy; // [C, H, W] each
    TensorF center;             // [C, H, W]
};

Batch build_batch(const FrameSequence& seq, Index center, int radius);

struct EpochLog {
    int epoch = 0; // from 0
    int stage = 1;
    double mean_loss = 0.0;
    double lr = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// "epoch=<e> stage=<s> loss=<v> lr=<r>"
std::string format_epoch_log(const EpochLog& log);

/// Fits feature generator and denoiser jointly; refine parameters stay at their initialization.
Checkpoint train_stage1(const FrameSequence& seq, TrainConfig cfg, const EpochCallback& on_epoch = {});

/// Fits the refine network against frozen stage-1 outputs. The input checkpoint is not modified.
Checkpoint train_stage2(const FrameSequence& seq, const Checkpoint& ckpt, const EpochCallback& on_epoch = {});

enum class OutputStage { denoiser, refined };
OutputStage parse_output_stage(const std::string& name);

/// Denoiser output, or the refine output clipped to [0, 1], for every frame.
FrameSequence denoise_sequence(const Checkpoint& ckpt, const FrameSequence& seq, OutputStage stage);

/// Throws ShapeError when the sequence extents differ from those the checkpoint was fit on.
void check_compatible(const Checkpoint& ckpt, const FrameSequence& seq);

} // namespace cbvd
