#pragma once

#include <cstdint>
#include <string>

namespace fusion {

/// Exit code contract shared by every subcommand: 0 success, 1 check
/// failure, 2 usage/config error, 3 numerical abort.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

struct RunConfig {
    std::string preset = "tiny";
    std::string ablation = "full";
    std::uint64_t seed = 0;
    std::size_t epochs = 100;
    std::size_t batch_size = 4;
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    std::size_t patience = 10;
    std::size_t synthetic_count = 20;  // 0: train from data_dir instead
    std::string data_dir;
    std::string checkpoint_path = "fusion.ckpt";
    std::string output_dir = ".";

    void validate() const;  // throws std::invalid_argument
};

/// FUSION_SEED environment variable, or 0 when unset/unparsable.
std::uint64_t default_seed();

/// Applies a flat key=value config file ('#' comments, blank lines allowed)
/// on top of `config`. Unknown keys are rejected.
void apply_config_file(const std::string& path, RunConfig& config);

int cmd_train(const RunConfig& config);
int cmd_enhance(const std::string& checkpoint_path, const std::string& input,
                const std::string& output_dir, std::size_t resize);
int cmd_eval(const std::string& enhanced_dir,
             const std::string& reference_dir, const std::string& csv_path);
int cmd_gradcheck(const std::string& preset, std::uint64_t seed,
                  const std::string& corrupt_param = "");
int cmd_ablate(const RunConfig& config);

}  // namespace fusion
