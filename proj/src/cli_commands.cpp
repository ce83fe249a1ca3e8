#include "fusion/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "fusion/checkpoint.hpp"
#include "fusion/gradcheck.hpp"
#include "fusion/image_io.hpp"
#include "fusion/metrics.hpp"
#include "fusion/model.hpp"
#include "fusion/ops.hpp"
#include "fusion/synthetic.hpp"
#include "fusion/trainer.hpp"

namespace fs = std::filesystem;

namespace fusion {

void RunConfig::validate() const {
    ModelConfig::from_name(preset);
    AblationConfig::preset(ablation);
    if (epochs == 0) throw std::invalid_argument("epochs must be positive");
    if (batch_size == 0)
        throw std::invalid_argument("batch_size must be positive");
    if (patience == 0)
        throw std::invalid_argument("patience must be positive");
    if (lr < 0.0) throw std::invalid_argument("lr must be non-negative");
    if (synthetic_count == 0 && data_dir.empty())
        throw std::invalid_argument(
            "either a synthetic image count or a data directory is required");
    if (checkpoint_path.empty())
        throw std::invalid_argument("checkpoint path must not be empty");
    if (output_dir.empty())
        throw std::invalid_argument("output directory must not be empty");
}

std::uint64_t default_seed() {
    const char* env = std::getenv("FUSION_SEED");
    if (!env || !*env) return 0;
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') {
        std::fprintf(stderr,
                     "[fusion] warning: ignoring unparsable FUSION_SEED "
                     "'%s'\n",
                     env);
        return 0;
    }
    return v;
}

namespace {

std::string trim(const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r");
    auto end = s.find_last_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    return s.substr(begin, end - begin + 1);
}

}  // namespace

void apply_config_file(const std::string& path, RunConfig& config) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string stripped = trim(line.substr(0, line.find('#')));
        if (stripped.empty()) continue;
        auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                        ": expected key=value");
        std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        try {
            if (key == "preset") config.preset = value;
            else if (key == "ablation") config.ablation = value;
            else if (key == "seed") config.seed = std::stoull(value);
            else if (key == "epochs") config.epochs = std::stoull(value);
            else if (key == "batch_size")
                config.batch_size = std::stoull(value);
            else if (key == "lr") config.lr = std::stod(value);
            else if (key == "beta1") config.beta1 = std::stod(value);
            else if (key == "beta2") config.beta2 = std::stod(value);
            else if (key == "patience") config.patience = std::stoull(value);
            else if (key == "synthetic")
                config.synthetic_count = std::stoull(value);
            else if (key == "data_dir") config.data_dir = value;
            else if (key == "checkpoint") config.checkpoint_path = value;
            else if (key == "output_dir") config.output_dir = value;
            else
                throw std::invalid_argument("unknown config key '" + key +
                                            "'");
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception&) {
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                        ": bad value for '" + key + "'");
        }
    }
}

namespace {

std::vector<fs::path> list_pngs(const std::string& dir) {
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    return paths;
}

std::vector<TrainPair> build_dataset(const RunConfig& config) {
    if (config.synthetic_count > 0)
        return synthetic_dataset(config.synthetic_count, 64, 64, config.seed);
    std::vector<TrainPair> pairs;
    Rng rng(config.seed);
    for (const auto& path : list_pngs(config.data_dir)) {
        Tensor clean = read_png(path.string());
        pairs.push_back({degrade(clean, DegradationParams::random(rng)),
                         clean});
    }
    if (pairs.empty())
        throw std::invalid_argument("no PNG images in " + config.data_dir);
    return pairs;
}

// Last fifth (at least one image) validates; a single-pair dataset is its
// own validation set so single-image overfitting works.
void split_dataset(std::vector<TrainPair> all,
                   std::vector<TrainPair>& train_set,
                   std::vector<TrainPair>& val_set) {
    if (all.size() == 1) {
        train_set = all;
        val_set = std::move(all);
        return;
    }
    const std::size_t val_count = std::max<std::size_t>(1, all.size() / 5);
    val_set.assign(all.end() - val_count, all.end());
    train_set.assign(all.begin(), all.end() - val_count);
}

TrainConfig train_config_from(const RunConfig& config) {
    TrainConfig tc;
    tc.lr = config.lr;
    tc.beta1 = config.beta1;
    tc.beta2 = config.beta2;
    tc.batch_size = config.batch_size;
    tc.max_epochs = config.epochs;
    tc.patience = config.patience;
    tc.seed = config.seed;
    return tc;
}

double mean_val_psnr(const FusionModel& model,
                     const std::vector<TrainPair>& val_set) {
    NoGradGuard guard;
    double acc = 0.0;
    for (const auto& pair : val_set)
        acc += psnr(model.forward(pair.degraded), pair.clean);
    return acc / static_cast<double>(val_set.size());
}

double mean_val_ssim(const FusionModel& model,
                     const std::vector<TrainPair>& val_set) {
    NoGradGuard guard;
    double acc = 0.0;
    for (const auto& pair : val_set)
        acc += ssim(model.forward(pair.degraded), pair.clean);
    return acc / static_cast<double>(val_set.size());
}

}  // namespace

int cmd_train(const RunConfig& config) {
    try {
        config.validate();
        fs::create_directories(config.output_dir);

        std::vector<TrainPair> train_set, val_set;
        split_dataset(build_dataset(config), train_set, val_set);

        FusionModel model(ModelConfig::from_name(config.preset),
                          AblationConfig::preset(config.ablation),
                          config.seed);
        TrainConfig tc = train_config_from(config);
        tc.checkpoint_path = config.checkpoint_path;

        std::cout << "preset=" << config.preset
                  << " ablation=" << config.ablation
                  << " parameters=" << model.count_parameters()
                  << " lr=" << tc.lr << " beta1=" << tc.beta1
                  << " beta2=" << tc.beta2 << " batch_size=" << tc.batch_size
                  << " seed=" << config.seed << '\n';

        TrainResult result = train(model, train_set, val_set, tc);

        const std::string history_path =
            (fs::path(config.output_dir) / "history.txt").string();
        std::ofstream history(history_path, std::ios::trunc);
        history << result.history_text();
        if (!history)
            throw std::runtime_error("cannot write " + history_path);

        double best_psnr = 0.0;
        for (const auto& r : result.history)
            if (r.val_l1 == result.best_val) best_psnr = r.val_psnr;
        std::cout << "epochs_run=" << result.epochs_run
                  << " early_stopped=" << (result.early_stopped ? 1 : 0)
                  << " best_val_l1=" << result.best_val
                  << " best_val_psnr=" << best_psnr << '\n';
        return kExitOk;
    } catch (const NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}

int cmd_enhance(const std::string& checkpoint_path, const std::string& input,
                const std::string& output_dir, std::size_t resize) {
    try {
        LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);

        std::vector<fs::path> inputs;
        if (fs::is_directory(input))
            inputs = list_pngs(input);
        else if (fs::is_regular_file(input))
            inputs.push_back(input);
        if (inputs.empty())
            throw std::invalid_argument("no input images at " + input);
        fs::create_directories(output_dir);

        std::size_t written = 0;
        for (const auto& path : inputs) {
            Tensor img;
            try {
                img = read_png(path.string());
            } catch (const ImageIoError& e) {
                std::cerr << "warning: skipping " << path.string() << ": "
                          << e.what() << '\n';
                continue;
            }
            if (resize > 0) img = resize_bilinear(img, resize, resize);
            NoGradGuard guard;
            Tensor out = loaded.model.forward(img);
            const std::string out_path =
                (fs::path(output_dir) / path.filename()).string();
            write_png(out, out_path);
            ++written;
        }
        if (written == 0) {
            std::cerr << "error: no image could be enhanced\n";
            return kExitCheckFailed;
        }
        std::cout << "enhanced=" << written << " of " << inputs.size()
                  << '\n';
        return kExitOk;
    } catch (const NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}

int cmd_eval(const std::string& enhanced_dir,
             const std::string& reference_dir, const std::string& csv_path) {
    try {
        std::vector<fs::path> images = list_pngs(enhanced_dir);
        if (images.empty())
            throw std::invalid_argument("no PNG images in " + enhanced_dir);

        if (!reference_dir.empty()) {
            std::vector<std::string> unmatched;
            for (const auto& path : images)
                if (!fs::exists(fs::path(reference_dir) / path.filename()))
                    unmatched.push_back(path.filename().string());
            if (!unmatched.empty()) {
                std::string list;
                for (const auto& name : unmatched) list += " " + name;
                throw std::invalid_argument("missing references for:" + list);
            }
        }

        MetricReport report;
        for (const auto& path : images) {
            Tensor img = read_png(path.string());
            MetricRecord record;
            record.path = path.filename().string();
            UiqmComponents c = uiqm(img);
            record.uicm = c.uicm;
            record.uism = c.uism;
            record.uiconm = c.uiconm;
            record.uiqm = c.uiqm;
            if (!reference_dir.empty()) {
                Tensor ref = read_png(
                    (fs::path(reference_dir) / path.filename()).string());
                record.mse = mse(img, ref);
                record.psnr_db = psnr(img, ref);
                record.ssim = ssim(img, ref);
            } else {
                record.mse = std::nan("");
                record.psnr_db = std::nan("");
                record.ssim = std::nan("");
            }
            report.records.push_back(std::move(record));
        }

        std::string csv = report.to_csv();
        if (csv_path.empty()) {
            std::cout << csv;
        } else {
            std::ofstream out(csv_path, std::ios::trunc);
            out << csv;
            if (!out) throw std::runtime_error("cannot write " + csv_path);
        }

        MetricRecord agg = report.aggregate();
        std::cout << "images=" << report.records.size() << '\n';
        if (!reference_dir.empty())
            std::cout << "full_reference: mean_mse=" << agg.mse
                      << " mean_psnr_db=" << agg.psnr_db
                      << " mean_ssim=" << agg.ssim << '\n';
        std::cout << "no_reference: mean_uicm=" << agg.uicm
                  << " mean_uism=" << agg.uism
                  << " mean_uiconm=" << agg.uiconm
                  << " mean_uiqm=" << agg.uiqm << '\n';
        return kExitOk;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}

int cmd_gradcheck(const std::string& preset, std::uint64_t seed,
                  const std::string& corrupt_param) {
    try {
        FusionModel model(ModelConfig::from_name(preset),
                          AblationConfig::preset("full"), seed);
        Rng rng(seed + 1);
        std::vector<double> iv(3 * 8 * 8), tv(3 * 8 * 8);
        for (auto& x : iv) x = rng.uniform();
        for (auto& x : tv) x = rng.uniform();
        Tensor input = Tensor::from({3, 8, 8}, std::move(iv));
        Tensor target = Tensor::from({3, 8, 8}, std::move(tv));

        auto loss_fn = [&]() {
            return mean(abs(sub(model.forward(input), target)));
        };
        GradCheckOptions options;
        options.seed = seed;
        options.corrupt_param = corrupt_param;
        GradCheckReport report =
            finite_diff_check(model.parameters(), loss_fn, options);

        for (const auto& e : report.entries)
            std::cout << e.name << " max_rel_err=" << e.max_rel_err
                      << " samples=" << e.samples << '\n';
        constexpr double kTol = 1e-4;
        if (report.passed(kTol)) {
            std::cout << "gradcheck PASS worst=" << report.worst << '\n';
            return kExitOk;
        }
        std::cout << "gradcheck FAIL worst=" << report.worst << '\n';
        for (const auto& name : report.failing(kTol))
            std::cout << "failing: " << name << '\n';
        return kExitCheckFailed;
    } catch (const NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}

int cmd_ablate(const RunConfig& config) {
    try {
        config.validate();
        fs::create_directories(config.output_dir);

        std::vector<TrainPair> train_set, val_set;
        split_dataset(build_dataset(config), train_set, val_set);

        struct Row {
            std::string preset;
            std::size_t params = 0;
            double train_loss = 0.0, val_psnr = 0.0, val_ssim = 0.0;
            std::string error;
        };
        std::vector<Row> rows;
        bool any_failed = false;

        for (const auto& name : AblationConfig::preset_names()) {
            Row row;
            row.preset = name;
            try {
                FusionModel model(ModelConfig::from_name(config.preset),
                                  AblationConfig::preset(name), config.seed);
                row.params = model.count_parameters();
                TrainConfig tc = train_config_from(config);
                tc.checkpoint_path =
                    (fs::path(config.output_dir) / ("ablate_" + name + ".ckpt"))
                        .string();
                TrainResult result = train(model, train_set, val_set, tc);
                row.train_loss = result.history.back().train_loss;
                row.val_psnr = mean_val_psnr(model, val_set);
                row.val_ssim = mean_val_ssim(model, val_set);
            } catch (const std::exception& e) {
                row.error = e.what();
                any_failed = true;
            }
            rows.push_back(std::move(row));
        }

        std::ostringstream table;
        table << "seed=" << config.seed << " width=" << config.preset
              << " epochs=" << config.epochs << '\n';
        table << "preset,params,train_loss,val_psnr,val_ssim\n";
        table.precision(9);
        for (const auto& row : rows) {
            if (!row.error.empty()) {
                table << row.preset << ",FAILED," << row.error << '\n';
                continue;
            }
            table << row.preset << ',' << row.params << ',' << row.train_loss
                  << ',' << row.val_psnr << ',' << row.val_ssim << '\n';
        }
        const std::string table_path =
            (fs::path(config.output_dir) / "ablation.csv").string();
        std::ofstream out(table_path, std::ios::trunc);
        out << table.str();
        if (!out) throw std::runtime_error("cannot write " + table_path);
        std::cout << table.str();
        return any_failed ? kExitCheckFailed : kExitOk;
    } catch (const NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}

}  // namespace fusion
