#pragma once

// Experiment harness behind the command-line tool: configuration, the five
// commands, and an in-memory pipeline used by the benchmark suites.

#include "spader/dataset.hpp"
#include "spader/evaluation.hpp"
#include "spader/regressor.hpp"
#include "spader/scoring.hpp"
#include "spader/vae.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace spader {

enum class DataSource { synthetic, idx_files };

struct ExperimentConfig {
    std::uint64_t seed = 0;
    SplitConfig split{};
    SplitCounts counts{};
    NoiseConfig noise{};
    CanvasConfig canvas{};
    VaeConfig vae{};
    RegressorConfig reg{};
    ScoringConfig scoring{};
    std::vector<Strategy> strategies{kAllStrategies.begin(), kAllStrategies.end()};
    DataSource source = DataSource::synthetic;
    std::filesystem::path idx_images;
    std::filesystem::path idx_labels;

    /// Throws std::invalid_argument naming the offending setting.
    void validate() const;
    /// Derives the component seeds from `seed` and copies the canvas size
    /// into both model configs. Commands call this on their own copy.
    void propagate();
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Applies one key=value setting. Unknown keys and malformed values throw ConfigError.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Line-oriented key=value text; '#' starts a comment, blank lines are skipped.
void parse_config(std::istream& in, ExperimentConfig& config);
void load_config(const std::filesystem::path& path, ExperimentConfig& config);

/// Every recognized key with its current value, one key=value per line.
std::string dump_config(const ExperimentConfig& config);

BenchmarkConfig benchmark_config(const ExperimentConfig& config);
Splits generate_splits(const ExperimentConfig& config);

// Commands. Each validates its inputs before creating any output file.
void cmd_gen_data(const ExperimentConfig& config, const std::filesystem::path& data_dir);
void cmd_train(const ExperimentConfig& config, const std::filesystem::path& data_dir,
               const std::filesystem::path& weights_dir);
void cmd_score(const ExperimentConfig& config, const std::filesystem::path& data_dir,
               const std::filesystem::path& weights_dir, const std::filesystem::path& out_csv);
/// Each scores file is one trial; writes summary.txt and summary.csv into out_dir.
std::vector<ConditionSummary> cmd_eval(const std::vector<std::filesystem::path>& score_files,
                                       const std::filesystem::path& out_dir);
void cmd_visualize(const ExperimentConfig& config, const std::filesystem::path& data_dir,
                   const std::filesystem::path& weights_dir, std::uint64_t image_id,
                   const std::filesystem::path& out_dir);

// Score files.
struct ScoreRow {
    std::uint64_t image_id = 0;
    int digit = 0;
    Role role = Role::normal;
    Strategy strategy = Strategy::vae;
    double score = 0.0;
};

std::string format_scores(const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> read_scores(const std::filesystem::path& path);

/// AUROC per strategy for one trial; the known-anomaly digit is read off the rows.
std::vector<std::pair<Strategy, double>> strategy_aurocs(const std::vector<ScoreRow>& rows,
                                                         int* known_anomaly_digit = nullptr);

// Heatmaps.
/// Binary PGM of an [H,W] or [1,H,W] map, min-max normalized to 0..255 (all zero if constant).
std::string pgm_bytes(const Tensor& map);
void write_pgm(const std::filesystem::path& path, const Tensor& map);

struct Heatmaps {
    Tensor input, reconstruction, loss, cam, weighted;  // all [H,W]
};

/// The maps cmd_visualize writes, for the first reconstruction trial.
Heatmaps compute_heatmaps(const Tensor& x, std::uint64_t image_id, const VaeParams& vae,
                          const RegressorParams& reg, const ScoringConfig& config);

// In-memory pipeline.
struct TrialResult {
    VaeTrainResult vae;
    RegressorTrainResult reg;
    std::vector<ScoreRow> scores;
};

struct PipelineTimings {
    double generate = 0.0, train_vae = 0.0, train_reg = 0.0, score = 0.0;  // seconds
};

/// Generates, trains and scores in memory, exactly as the commands would.
TrialResult run_pipeline(const ExperimentConfig& config, PipelineTimings* timings = nullptr);

/// Scores every test image under config.strategies.
std::vector<ScoreRow> score_test_set(const std::vector<ImageSample>& test, const Models& models,
                                     const ExperimentConfig& config);

}  // namespace spader
