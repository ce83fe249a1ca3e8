#include <string>

#include "CLI11.hpp"
#include "fusion/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"FUSION dual-domain underwater image enhancement"};
    app.require_subcommand(1);

    fusion::RunConfig config;
    config.seed = fusion::default_seed();
    std::string config_file;

    auto add_run_flags = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_file,
                        "key=value config file; flags override its values");
        cmd->add_option("--preset", config.preset,
                        "width preset: tiny or paper");
        cmd->add_option("--ablation", config.ablation, "ablation preset");
        cmd->add_option("--seed", config.seed,
                        "RNG seed (default: FUSION_SEED or 0)");
        cmd->add_option("--epochs", config.epochs, "maximum epochs");
        cmd->add_option("--batch-size", config.batch_size, "batch size");
        cmd->add_option("--lr", config.lr, "learning rate");
        cmd->add_option("--patience", config.patience,
                        "early-stopping patience in epochs");
        cmd->add_option("--synthetic", config.synthetic_count,
                        "number of synthetic 64x64 training images");
        cmd->add_option("--data-dir", config.data_dir,
                        "directory of clean PNGs to degrade for training");
        cmd->add_option("--checkpoint", config.checkpoint_path,
                        "checkpoint output path");
        cmd->add_option("--output-dir", config.output_dir,
                        "directory for history/table outputs");
    };

    CLI::App* train = app.add_subcommand("train", "train a model");
    add_run_flags(train);

    CLI::App* enhance =
        app.add_subcommand("enhance", "enhance PNGs with a checkpoint");
    std::string enh_checkpoint, enh_input, enh_output = ".";
    std::size_t enh_resize = 0;
    enhance->add_option("--checkpoint", enh_checkpoint, "checkpoint path")
        ->required();
    enhance->add_option("--input", enh_input, "input PNG file or directory")
        ->required();
    enhance->add_option("--output-dir", enh_output, "output directory");
    enhance->add_option("--resize", enh_resize,
                        "resize inputs to NxN before enhancement");

    CLI::App* eval = app.add_subcommand("eval", "compute image metrics");
    std::string eval_dir, eval_ref, eval_csv;
    eval->add_option("--images", eval_dir, "directory of PNGs to score")
        ->required();
    eval->add_option("--references", eval_ref,
                     "directory of matching ground-truth PNGs");
    eval->add_option("--csv", eval_csv, "CSV output path (default: stdout)");

    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "finite-difference gradient check");
    std::string gc_preset = "tiny";
    std::uint64_t gc_seed = fusion::default_seed();
    std::string gc_corrupt;
    gradcheck->add_option("--preset", gc_preset, "width preset");
    gradcheck->add_option("--seed", gc_seed, "RNG seed");
    gradcheck
        ->add_option("--corrupt", gc_corrupt,
                     "fault-injection hook: corrupt this parameter's "
                     "analytic gradient")
        ->group("");  // hidden

    CLI::App* ablate =
        app.add_subcommand("ablate", "train and compare all ablation presets");
    add_run_flags(ablate);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : fusion::kExitUsage;
    }

    try {
        if (!config_file.empty()) {
            fusion::RunConfig from_file;
            from_file.seed = fusion::default_seed();
            fusion::apply_config_file(config_file, from_file);
            // flags given on the command line override file values
            CLI::App* active = train->parsed() ? train : ablate;
            auto keep = [&](const std::string& flag) {
                return active->count(flag) > 0;
            };
            if (!keep("--preset")) config.preset = from_file.preset;
            if (!keep("--ablation")) config.ablation = from_file.ablation;
            if (!keep("--seed")) config.seed = from_file.seed;
            if (!keep("--epochs")) config.epochs = from_file.epochs;
            if (!keep("--batch-size"))
                config.batch_size = from_file.batch_size;
            if (!keep("--lr")) config.lr = from_file.lr;
            if (!keep("--patience")) config.patience = from_file.patience;
            if (!keep("--synthetic"))
                config.synthetic_count = from_file.synthetic_count;
            if (!keep("--data-dir")) config.data_dir = from_file.data_dir;
            if (!keep("--checkpoint"))
                config.checkpoint_path = from_file.checkpoint_path;
            if (!keep("--output-dir"))
                config.output_dir = from_file.output_dir;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return fusion::kExitUsage;
    }

    if (train->parsed()) return fusion::cmd_train(config);
    if (enhance->parsed())
        return fusion::cmd_enhance(enh_checkpoint, enh_input, enh_output,
                                   enh_resize);
    if (eval->parsed()) return fusion::cmd_eval(eval_dir, eval_ref, eval_csv);
    if (gradcheck->parsed())
        return fusion::cmd_gradcheck(gc_preset, gc_seed, gc_corrupt);
    if (ablate->parsed()) return fusion::cmd_ablate(config);
    return fusion::kExitUsage;
}
