#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fusion/model.hpp"

namespace fusion {

/// Optimizer and early-stopping state carried across epochs. Moments are
/// aligned index-for-index with model.parameters().
struct TrainState {
    std::uint64_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    double best_val = std::numeric_limits<double>::infinity();
    std::uint64_t epochs_since_best = 0;
    std::uint64_t seed = 0;

    static TrainState init(const ParamList& params, std::uint64_t seed);
};

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Binary checkpoint: "FUSN" magic, format version, ablation bitfield, base
/// width, seeds and early-stopping scalars, then one record per tensor
/// (name length, name, rank, extents, little-endian f64 payload) and a
/// trailing CRC32 of everything after the magic.
void save_checkpoint(const FusionModel& model, const TrainState& state,
                     const std::string& path);

struct LoadedCheckpoint {
    FusionModel model;
    TrainState state;
};

/// Rebuilds the model from the stored config and restores parameters and
/// moments bit-exactly. Throws CheckpointError on CRC/version/truncation
/// problems.
LoadedCheckpoint load_checkpoint(const std::string& path);

/// Restores into an existing model; rejects checkpoints whose config or
/// shape table does not match. The model is untouched on failure.
void load_checkpoint_into(const std::string& path, FusionModel& model,
                          TrainState& state);

}  // namespace fusion
