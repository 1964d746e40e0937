#include "spader/allocator.hpp"
#include "spader/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace fs = std::filesystem;

int main(int argc, char** argv) {
    spader::tune_allocator();
    CLI::App app{"Spatially-weighted reconstruction anomaly detection on the noisy-digit benchmark"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    std::string config_path;
    std::vector<std::string> overrides;
    std::string data_dir = "data";
    std::string weights_dir = "weights";
    std::string out;

    app.add_option("--seed", seed, "Experiment seed (overrides the config file)");
    app.add_option("--config", config_path, "key=value configuration file")->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "Extra key=value setting, applied after --config and --seed");
    app.add_option("--data-dir", data_dir, "Dataset directory")->capture_default_str();
    app.add_option("--weights-dir", weights_dir, "Directory holding vae.w and reg.w")->capture_default_str();
    app.add_option("--out", out, "Output file (score) or directory (eval, visualize)");

    auto* gen = app.add_subcommand("gen-data", "Generate the benchmark dataset");
    auto* train = app.add_subcommand("train", "Train the VAE and the regressor");
    auto* score = app.add_subcommand("score", "Score the test split with every configured strategy");
    auto* eval = app.add_subcommand("eval", "Summarize AUROC over one or more scores files");
    auto* vis = app.add_subcommand("visualize", "Write PGM heatmaps for one image");
    auto* show = app.add_subcommand("show-config", "Print the effective configuration");

    std::vector<std::string> score_files;
    eval->add_option("scores", score_files, "scores.csv files, one per trial")->required()->check(CLI::ExistingFile);
    std::uint64_t image_id = 0;
    vis->add_option("--image-id", image_id, "Image id from manifest.csv")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        spader::ExperimentConfig config;
        if (!config_path.empty()) spader::load_config(config_path, config);
        if (seed) config.seed = *seed;
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw spader::ConfigError("--set expects key=value, got '" + kv + "'");
            spader::apply_setting(config, kv.substr(0, eq), kv.substr(eq + 1));
        }

        if (gen->parsed()) {
            spader::cmd_gen_data(config, data_dir);
            std::cout << "wrote dataset to " << data_dir << '\n';
        } else if (train->parsed()) {
            spader::cmd_train(config, data_dir, weights_dir);
            std::cout << "wrote weights to " << weights_dir << '\n';
        } else if (score->parsed()) {
            const fs::path target = out.empty() ? fs::path("scores.csv") : fs::path(out);
            spader::cmd_score(config, data_dir, weights_dir, target);
            std::cout << "wrote " << target.string() << '\n';
        } else if (eval->parsed()) {
            const fs::path target = out.empty() ? fs::path("results") : fs::path(out);
            std::vector<fs::path> files(score_files.begin(), score_files.end());
            const auto summaries = spader::cmd_eval(files, target);
            std::cout << spader::format_table(summaries);
        } else if (vis->parsed()) {
            const fs::path target = out.empty() ? fs::path("heatmaps") : fs::path(out);
            spader::cmd_visualize(config, data_dir, weights_dir, image_id, target);
            std::cout << "wrote heatmaps to " << target.string() << '\n';
        } else if (show->parsed()) {
            config.validate();
            std::cout << spader::dump_config(config);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
