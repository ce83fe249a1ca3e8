#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusion/checkpoint.hpp"
#include "fusion/model.hpp"
#include "fusion/synthetic.hpp"

namespace fusion {

struct TrainConfig {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t batch_size = 4;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    std::uint64_t seed = 0;
    std::string checkpoint_path;  // empty: train without persisting
};

/// L = mean|pred-target| + 0.2*(1-SSIM(pred,target)), differentiable.
/// The SSIM term matches metrics::ssim (11x11 Gaussian, sigma 1.5).
Tensor training_loss(const Tensor& pred, const Tensor& target);

/// One bias-corrected Adam update over all parameters. Increments
/// state.step once. A non-finite gradient aborts with the parameter name.
void adam_step(TrainState& state, ParamList& params,
               const TrainConfig& config);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_l1 = 0.0;
    double val_psnr = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    double best_val = 0.0;
    std::size_t epochs_run = 0;
    bool early_stopped = false;

    /// Line-delimited history; the first line names the early-stopping
    /// metric so the LPIPS substitution stays visible.
    std::string history_text() const;
};

/// Minimizes training_loss with Adam; validates on val L1 each epoch, stops
/// after `patience` epochs without improvement, and checkpoints each new
/// best. Deterministic in (seed, data, config).
TrainResult train(FusionModel& model, const std::vector<TrainPair>& train_set,
                  const std::vector<TrainPair>& val_set,
                  const TrainConfig& config);

}  // namespace fusion
