#include "spader/experiment.hpp"
#include "spader/weights_io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace spader {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kVaeSeedSalt = 0x7a5e;
constexpr std::uint64_t kRegSeedSalt = 0x7e60;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size() || v.empty()) {
        throw ConfigError("config: '" + key + "' expects a nonnegative integer, got '" + v + "'");
    }
    return out;
}

std::size_t to_size(const std::string& key, const std::string& v) { return static_cast<std::size_t>(to_u64(key, v)); }

int to_digit(const std::string& key, const std::string& v) {
    const auto d = to_u64(key, v);
    if (d > 9) throw ConfigError("config: '" + key + "' must be a digit 0-9, got '" + v + "'");
    return static_cast<int>(d);
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size() || !std::isfinite(out)) {
        throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError("config: '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& item : split(v, ',')) out.push_back(to_size(key, item));
    return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Setting {
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

const std::map<std::string, Setting>& settings() {
    using C = ExperimentConfig;
    using S = const std::string;
    static const std::map<std::string, Setting> table{
        {"seed", {[](C& c, S& k, S& v) { c.seed = to_u64(k, v); }, [](const C& c) { return std::to_string(c.seed); }}},
        {"normal_digit", {[](C& c, S& k, S& v) { c.split.normal_digit = to_digit(k, v); },
                          [](const C& c) { return std::to_string(c.split.normal_digit); }}},
        {"known_anomaly_digit", {[](C& c, S& k, S& v) { c.split.known_anomaly_digit = to_digit(k, v); },
                                 [](const C& c) { return std::to_string(c.split.known_anomaly_digit); }}},
        {"train_vae", {[](C& c, S& k, S& v) { c.counts.train_vae = to_size(k, v); },
                       [](const C& c) { return std::to_string(c.counts.train_vae); }}},
        {"train_reg_normal", {[](C& c, S& k, S& v) { c.counts.train_reg_normal = to_size(k, v); },
                              [](const C& c) { return std::to_string(c.counts.train_reg_normal); }}},
        {"train_reg_known", {[](C& c, S& k, S& v) { c.counts.train_reg_known = to_size(k, v); },
                             [](const C& c) { return std::to_string(c.counts.train_reg_known); }}},
        {"test_per_digit", {[](C& c, S& k, S& v) { c.counts.test_per_digit = to_size(k, v); },
                            [](const C& c) { return std::to_string(c.counts.test_per_digit); }}},
        {"source", {[](C& c, S& k, S& v) {
                        if (v == "synthetic") c.source = DataSource::synthetic;
                        else if (v == "idx") c.source = DataSource::idx_files;
                        else throw ConfigError("config: '" + k + "' must be synthetic or idx, got '" + v + "'");
                    },
                    [](const C& c) { return std::string(c.source == DataSource::synthetic ? "synthetic" : "idx"); }}},
        {"idx_images", {[](C& c, S&, S& v) { c.idx_images = v; }, [](const C& c) { return c.idx_images.string(); }}},
        {"idx_labels", {[](C& c, S&, S& v) { c.idx_labels = v; }, [](const C& c) { return c.idx_labels.string(); }}},
        {"noise_sigma_mean", {[](C& c, S& k, S& v) { c.noise.sigma_mean = to_double(k, v); },
                              [](const C& c) { return num(c.noise.sigma_mean); }}},
        {"noise_sigma_std", {[](C& c, S& k, S& v) { c.noise.sigma_std = to_double(k, v); },
                             [](const C& c) { return num(c.noise.sigma_std); }}},
        {"noise_sigma", {[](C& c, S& k, S& v) {
                             if (v == "random") c.noise.forced_sigma.reset();
                             else c.noise.forced_sigma = to_double(k, v);
                         },
                         [](const C& c) {
                             return c.noise.forced_sigma ? num(*c.noise.forced_sigma) : std::string("random");
                         }}},
        {"canvas_size", {[](C& c, S& k, S& v) { c.canvas.size = to_size(k, v); },
                         [](const C& c) { return std::to_string(c.canvas.size); }}},
        {"canvas_min_scale", {[](C& c, S& k, S& v) { c.canvas.min_scale = to_double(k, v); },
                              [](const C& c) { return num(c.canvas.min_scale); }}},
        {"canvas_max_scale", {[](C& c, S& k, S& v) { c.canvas.max_scale = to_double(k, v); },
                              [](const C& c) { return num(c.canvas.max_scale); }}},
        {"vae_latent", {[](C& c, S& k, S& v) { c.vae.latent_dim = to_size(k, v); },
                        [](const C& c) { return std::to_string(c.vae.latent_dim); }}},
        {"vae_channels", {[](C& c, S& k, S& v) { c.vae.channels = to_sizes(k, v); },
                          [](const C& c) { return join_sizes(c.vae.channels); }}},
        {"vae_epochs", {[](C& c, S& k, S& v) { c.vae.epochs = to_size(k, v); },
                        [](const C& c) { return std::to_string(c.vae.epochs); }}},
        {"vae_batch", {[](C& c, S& k, S& v) { c.vae.batch_size = to_size(k, v); },
                       [](const C& c) { return std::to_string(c.vae.batch_size); }}},
        {"vae_lr", {[](C& c, S& k, S& v) { c.vae.adam.lr = to_double(k, v); },
                    [](const C& c) { return num(c.vae.adam.lr); }}},
        {"vae_beta_rec", {[](C& c, S& k, S& v) { c.vae.beta_rec = to_double(k, v); },
                          [](const C& c) { return num(c.vae.beta_rec); }}},
        {"reg_channels", {[](C& c, S& k, S& v) { c.reg.channels = to_sizes(k, v); },
                          [](const C& c) { return join_sizes(c.reg.channels); }}},
        {"reg_epochs", {[](C& c, S& k, S& v) { c.reg.epochs = to_size(k, v); },
                        [](const C& c) { return std::to_string(c.reg.epochs); }}},
        {"reg_batch", {[](C& c, S& k, S& v) { c.reg.batch_size = to_size(k, v); },
                       [](const C& c) { return std::to_string(c.reg.batch_size); }}},
        {"reg_lr", {[](C& c, S& k, S& v) { c.reg.adam.lr = to_double(k, v); },
                    [](const C& c) { return num(c.reg.adam.lr); }}},
        {"reg_loss", {[](C& c, S& k, S& v) {
                          if (v == "absolute") c.reg.loss = RegressionLoss::absolute;
                          else if (v == "squared") c.reg.loss = RegressionLoss::squared;
                          else throw ConfigError("config: '" + k + "' must be absolute or squared, got '" + v + "'");
                      },
                      [](const C& c) {
                          return std::string(c.reg.loss == RegressionLoss::absolute ? "absolute" : "squared");
                      }}},
        {"reg_target_layer", {[](C& c, S& k, S& v) {
                                  c.reg.target_layer = v == "last" ? static_cast<std::size_t>(-1) : to_size(k, v);
                              },
                              [](const C& c) {
                                  return c.reg.target_layer == static_cast<std::size_t>(-1)
                                             ? std::string("last")
                                             : std::to_string(c.reg.target_layer);
                              }}},
        {"trials", {[](C& c, S& k, S& v) { c.scoring.trials = to_size(k, v); },
                    [](const C& c) { return std::to_string(c.scoring.trials); }}},
        {"epsilon", {[](C& c, S& k, S& v) { c.scoring.epsilon = to_double(k, v); },
                     [](const C& c) { return num(c.scoring.epsilon); }}},
        {"cam_norm", {[](C& c, S& k, S& v) {
                          if (v == "l1") c.scoring.norm = CamNorm::l1;
                          else if (v == "l2") c.scoring.norm = CamNorm::l2;
                          else throw ConfigError("config: '" + k + "' must be l1 or l2, got '" + v + "'");
                      },
                      [](const C& c) { return std::string(c.scoring.norm == CamNorm::l1 ? "l1" : "l2"); }}},
        {"cam_scale", {[](C& c, S& k, S& v) { c.scoring.cam_scale = to_double(k, v); },
                       [](const C& c) { return num(c.scoring.cam_scale); }}},
        {"identity_reconstruction", {[](C& c, S& k, S& v) { c.scoring.identity_reconstruction = to_bool(k, v); },
                                     [](const C& c) {
                                         return std::string(c.scoring.identity_reconstruction ? "true" : "false");
                                     }}},
        {"strategies", {[](C& c, S& k, S& v) {
                            std::vector<Strategy> out;
                            for (const auto& name : split(v, ',')) {
                                const auto s = parse_strategy(name);
                                if (!s) throw ConfigError("config: '" + k + "' has unknown strategy '" + name + "'");
                                out.push_back(*s);
                            }
                            c.strategies = out;
                        },
                        [](const C& c) {
                            std::string out;
                            for (std::size_t i = 0; i < c.strategies.size(); ++i) {
                                out += (i ? "," : "") + std::string(strategy_name(c.strategies[i]));
                            }
                            return out;
                        }}},
    };
    return table;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool needs_vae(const ExperimentConfig& c) {
    return std::any_of(c.strategies.begin(), c.strategies.end(), [](Strategy s) { return s != Strategy::cnn_reg; });
}

bool needs_regressor(const ExperimentConfig& c) {
    return std::any_of(c.strategies.begin(), c.strategies.end(), [](Strategy s) { return s != Strategy::vae; });
}

ExperimentConfig prepared(const ExperimentConfig& config) {
    ExperimentConfig c = config;
    c.propagate();
    c.validate();
    return c;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string loss_history_csv(const std::vector<double>& history) {
    std::string out = "epoch,loss\n";
    for (std::size_t e = 0; e < history.size(); ++e) out += std::to_string(e + 1) + "," + num(history[e]) + "\n";
    return out;
}

const ImageSample* find_image(const Splits& splits, std::uint64_t id) {
    for (const auto* set : {&splits.test, &splits.train_vae, &splits.train_reg}) {
        for (const ImageSample& s : *set) {
            if (s.id == id) return &s;
        }
    }
    return nullptr;
}

void check_model_size(std::size_t h, std::size_t w, const Splits& splits, const char* model) {
    const ImageSample* any = !splits.test.empty() ? &splits.test.front() : nullptr;
    if (any && any->pixels.shape() != Shape{1, h, w}) {
        throw std::invalid_argument(std::string(model) + " weights expect " + std::to_string(h) + "x" +
                                    std::to_string(w) + " images, dataset has " + to_string(any->pixels.shape()));
    }
}

struct LoadedModels {
    VaeParams vae;
    RegressorParams reg;
};

LoadedModels load_models(const ExperimentConfig& c, const fs::path& weights_dir, const Splits& splits,
                         bool want_vae, bool want_reg) {
    LoadedModels m;
    if (want_vae && !c.scoring.identity_reconstruction) {
        m.vae = load_vae(weights_dir / "vae.w");
        check_model_size(m.vae.image_height, m.vae.image_width, splits, "VAE");
    }
    if (want_reg) {
        m.reg = load_regressor(weights_dir / "reg.w");
        check_model_size(m.reg.image_height, m.reg.image_width, splits, "regressor");
    }
    return m;
}

Tensor as_map(const Tensor& t) {
    if (t.rank() == 3 && t.dim(0) == 1) return t.reshaped({t.dim(1), t.dim(2)});
    if (t.rank() != 2) throw ShapeError("heatmap: expected [H,W] or [1,H,W], got " + to_string(t.shape()));
    return t;
}

}  // namespace

void ExperimentConfig::propagate() {
    vae.seed = make_stream(seed, 0, kVaeSeedSalt)();
    reg.seed = make_stream(seed, 0, kRegSeedSalt)();
    scoring.seed = seed;
    vae.image_height = vae.image_width = canvas.size;
    reg.image_height = reg.image_width = canvas.size;
}

void ExperimentConfig::validate() const {
    split.validate();
    require(counts.train_vae > 0 && counts.train_reg_normal > 0 && counts.train_reg_known > 0 &&
                counts.test_per_digit > 0,
            "all image counts must be positive");
    require(!strategies.empty(), "strategies must not be empty");
    require(noise.sigma_std >= 0.0 && noise.pixel_scale > 0.0, "noise sigma std must be nonnegative");
    require(!noise.forced_sigma || *noise.forced_sigma >= 0.0, "noise_sigma must be nonnegative");
    require(canvas.size > 0, "canvas_size must be positive");
    require(canvas.min_scale > 0.0 && canvas.min_scale <= canvas.max_scale,
            "canvas scales need 0 < canvas_min_scale <= canvas_max_scale");
    require(vae.latent_dim > 0 && !vae.channels.empty() && vae.epochs > 0 && vae.batch_size > 0 &&
                vae.adam.lr > 0.0 && vae.beta_rec > 0.0,
            "VAE settings must be positive and vae_channels nonempty");
    require(!reg.channels.empty() && reg.epochs > 0 && reg.batch_size > 1 && reg.adam.lr > 0.0,
            "regressor settings must be positive, reg_batch at least 2, reg_channels nonempty");
    require(reg.target_layer == static_cast<std::size_t>(-1) || reg.target_layer < reg.channels.size(),
            "reg_target_layer is out of range");
    for (std::size_t ch : vae.channels) require(ch > 0, "vae_channels entries must be positive");
    for (std::size_t ch : reg.channels) require(ch > 0, "reg_channels entries must be positive");
    require(source == DataSource::synthetic || (!idx_images.empty() && !idx_labels.empty()),
            "source=idx needs idx_images and idx_labels");
    try {
        scoring.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value) {
    const auto& table = settings();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second.set(config, key, value);
}

void parse_config(std::istream& in, ExperimentConfig& config) {
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key=value");
        try {
            apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(n) + ": " + e.what());
        }
    }
}

void load_config(const fs::path& path, ExperimentConfig& config) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    parse_config(in, config);
}

std::string dump_config(const ExperimentConfig& config) {
    std::string out;
    for (const auto& [key, s] : settings()) out += key + "=" + s.get(config) + "\n";
    return out;
}

BenchmarkConfig benchmark_config(const ExperimentConfig& config) {
    BenchmarkConfig b;
    b.split = config.split;
    b.counts = config.counts;
    b.noise = config.noise;
    b.canvas = config.canvas;
    b.seed = config.seed;
    return b;
}

Splits generate_splits(const ExperimentConfig& config) {
    const BenchmarkConfig b = benchmark_config(config);
    if (config.source == DataSource::synthetic) return generate_benchmark(synth_source(b), b);
    for (const auto& p : {config.idx_images, config.idx_labels}) {
        if (!fs::exists(p)) throw std::runtime_error("missing IDX file " + p.string());
    }
    return generate_benchmark(load_idx(config.idx_images, config.idx_labels), b);
}

void cmd_gen_data(const ExperimentConfig& config, const fs::path& data_dir) {
    const ExperimentConfig c = prepared(config);
    const Splits splits = generate_splits(c);
    write_dataset(data_dir, splits, c.canvas.size, c.canvas.size);
}

void cmd_train(const ExperimentConfig& config, const fs::path& data_dir, const fs::path& weights_dir) {
    ExperimentConfig c = prepared(config);
    const Splits splits = read_dataset(data_dir);
    if (splits.train_vae.empty() || splits.train_reg.empty()) {
        throw std::invalid_argument("train: dataset " + data_dir.string() + " has no training images");
    }
    const auto& shape = splits.train_vae.front().pixels.shape();
    c.vae.image_height = c.reg.image_height = shape[1];
    c.vae.image_width = c.reg.image_width = shape[2];

    const VaeTrainResult vae = train_vae(splits.train_vae, c.vae);
    const RegressorTrainResult reg = train_regressor(splits.train_reg, c.reg);

    std::string audit = "model,image_id,digit,role,label\n";
    for (const ImageSample& s : splits.train_vae) {
        audit += "vae," + std::to_string(s.id) + "," + std::to_string(s.digit) + "," +
                 std::string(role_name(s.role)) + ",\n";
    }
    for (const ImageSample& s : splits.train_reg) {
        audit += "reg," + std::to_string(s.id) + "," + std::to_string(s.digit) + "," +
                 std::string(role_name(s.role)) + "," + num(normalness_label(s.role)) + "\n";
    }

    fs::create_directories(weights_dir);
    save_vae(weights_dir / "vae.w", vae.params);
    save_regressor(weights_dir / "reg.w", reg.params);
    write_text(weights_dir / "vae_loss.csv", loss_history_csv(vae.loss_history));
    write_text(weights_dir / "reg_loss.csv", loss_history_csv(reg.loss_history));
    write_text(weights_dir / "train_audit.csv", audit);
}

std::vector<ScoreRow> score_test_set(const std::vector<ImageSample>& test, const Models& models,
                                     const ExperimentConfig& config) {
    const auto scores = batch_score(test, config.strategies, models, config.scoring);
    std::vector<ScoreRow> rows;
    rows.reserve(scores.size());
    const std::size_t per_image = config.strategies.size();
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const ImageSample& img = test[i / per_image];
        rows.push_back({img.id, img.digit, img.role, scores[i].strategy, scores[i].value});
    }
    return rows;
}

void cmd_score(const ExperimentConfig& config, const fs::path& data_dir, const fs::path& weights_dir,
               const fs::path& out_csv) {
    const ExperimentConfig c = prepared(config);
    const Splits splits = read_dataset(data_dir);
    if (splits.test.empty()) throw std::invalid_argument("score: dataset " + data_dir.string() + " has no test images");
    const LoadedModels m = load_models(c, weights_dir, splits, needs_vae(c), needs_regressor(c));
    const Models models{m.vae.empty() ? nullptr : &m.vae, m.reg.empty() ? nullptr : &m.reg};
    write_text(out_csv, format_scores(score_test_set(splits.test, models, c)));
}

std::string format_scores(const std::vector<ScoreRow>& rows) {
    std::string out = "image_id,digit,role,strategy,score\n";
    for (const ScoreRow& r : rows) {
        out += std::to_string(r.image_id) + "," + std::to_string(r.digit) + "," + std::string(role_name(r.role)) +
               "," + std::string(strategy_name(r.strategy)) + "," + num(r.score + 0.0) + "\n";
    }
    return out;
}

std::vector<ScoreRow> read_scores(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scores file " + path.string());
    std::string line;
    if (!std::getline(in, line) || trim(line) != "image_id,digit,role,strategy,score") {
        throw FormatError(path.string() + ": missing header image_id,digit,role,strategy,score");
    }
    std::vector<ScoreRow> rows;
    for (std::size_t n = 2; std::getline(in, line); ++n) {
        if (trim(line).empty()) continue;
        const auto f = split(trim(line), ',');
        const std::string where = path.string() + " line " + std::to_string(n);
        if (f.size() != 5) throw FormatError(where + ": expected 5 fields");
        ScoreRow r;
        try {
            r.image_id = to_u64("image_id", f[0]);
            r.digit = to_digit("digit", f[1]);
            r.score = to_double("score", f[4]);
        } catch (const ConfigError& e) {
            throw FormatError(where + ": " + e.what());
        }
        const auto role = parse_role(f[2]);
        const auto strategy = parse_strategy(f[3]);
        if (!role) throw FormatError(where + ": unknown role '" + f[2] + "'");
        if (!strategy) throw FormatError(where + ": unknown strategy '" + f[3] + "'");
        r.role = *role;
        r.strategy = *strategy;
        rows.push_back(r);
    }
    return rows;
}

std::vector<std::pair<Strategy, double>> strategy_aurocs(const std::vector<ScoreRow>& rows,
                                                         int* known_anomaly_digit) {
    if (known_anomaly_digit) {
        *known_anomaly_digit = -1;
        for (const ScoreRow& r : rows) {
            if (r.role == Role::known_anomaly) {
                *known_anomaly_digit = r.digit;
                break;
            }
        }
    }
    std::vector<std::pair<Strategy, double>> out;
    for (Strategy s : kAllStrategies) {
        std::vector<EvalRecord> records;
        for (const ScoreRow& r : rows) {
            if (r.strategy == s) records.push_back({r.image_id, r.score, r.role != Role::normal});
        }
        if (records.empty()) continue;
        try {
            out.emplace_back(s, auroc(records));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(std::string(strategy_name(s)) + ": " + e.what());
        }
    }
    return out;
}

std::vector<ConditionSummary> cmd_eval(const std::vector<fs::path>& score_files, const fs::path& out_dir) {
    if (score_files.empty()) throw std::invalid_argument("eval: no scores files given");
    std::map<std::pair<int, Strategy>, std::vector<double>> trials;
    for (const fs::path& p : score_files) {
        int digit = -1;
        std::vector<std::pair<Strategy, double>> aurocs;
        try {
            aurocs = strategy_aurocs(read_scores(p), &digit);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(p.string() + ": " + e.what());
        }
        for (const auto& [s, a] : aurocs) trials[{digit, s}].push_back(a);
    }
    std::vector<ConditionSummary> out;
    for (const auto& [key, values] : trials) out.push_back(summarize(values, key.second, key.first));
    std::stable_sort(out.begin(), out.end(), [](const ConditionSummary& a, const ConditionSummary& b) {
        if (a.known_anomaly_digit != b.known_anomaly_digit) return a.known_anomaly_digit < b.known_anomaly_digit;
        const auto rank = [](Strategy s) {
            return std::find(kAllStrategies.begin(), kAllStrategies.end(), s) - kAllStrategies.begin();
        };
        return rank(a.strategy) < rank(b.strategy);
    });
    write_text(out_dir / "summary.txt", format_table(out));
    write_text(out_dir / "summary.csv", format_csv(out));
    return out;
}

std::string pgm_bytes(const Tensor& t) {
    const Tensor map = as_map(t);
    const std::size_t h = map.dim(0), w = map.dim(1);
    const auto [lo, hi] = std::minmax_element(map.values().begin(), map.values().end());
    const double range = map.empty() ? 0.0 : *hi - *lo;
    std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.reserve(out.size() + h * w);
    for (double v : map.values()) {
        const double level = range > 0.0 ? std::round(255.0 * (v - *lo) / range) : 0.0;
        out.push_back(static_cast<char>(static_cast<unsigned char>(level)));
    }
    return out;
}

void write_pgm(const fs::path& path, const Tensor& map) { write_text(path, pgm_bytes(map)); }

Heatmaps compute_heatmaps(const Tensor& x, std::uint64_t image_id, const VaeParams& vae, const RegressorParams& reg,
                          const ScoringConfig& config) {
    ScoringConfig one = config;
    one.trials = 1;
    const Tensor x_hat = scoring_reconstructions(x, image_id, vae.empty() ? nullptr : &vae, one).front();
    Heatmaps h;
    h.input = as_map(x);
    h.reconstruction = as_map(x_hat);
    h.loss = loss_image(x, x_hat);
    const InputCams cams = input_cams(x, reg);
    const Tensor recon_cam = positive_cams(std::span<const Tensor>(&x_hat, 1), reg).front();
    CamMap combined{cams.signed_map, CamSource::combined};
    for (std::size_t i = 0; i < combined.values.size(); ++i) {
        combined.values[i] = config.cam_scale * (combined.values[i] + recon_cam[i]);
    }
    h.cam = combined.values;
    h.weighted = spatial_weight(h.loss, combined, config.epsilon, config.norm);
    return h;
}

void cmd_visualize(const ExperimentConfig& config, const fs::path& data_dir, const fs::path& weights_dir,
                   std::uint64_t image_id, const fs::path& out_dir) {
    const ExperimentConfig c = prepared(config);
    const Splits splits = read_dataset(data_dir);
    const ImageSample* img = find_image(splits, image_id);
    if (img == nullptr) throw std::invalid_argument("visualize: unknown image id " + std::to_string(image_id));
    const LoadedModels m = load_models(c, weights_dir, splits, true, true);
    const Heatmaps h = compute_heatmaps(img->pixels, image_id, m.vae, m.reg, c.scoring);

    const std::pair<const char*, const Tensor*> maps[] = {{"input", &h.input},
                                                          {"reconstruction", &h.reconstruction},
                                                          {"loss", &h.loss},
                                                          {"cam", &h.cam},
                                                          {"weighted", &h.weighted}};
    std::string sidecar = "map,row,col,value\n";
    for (const auto& [name, t] : maps) {
        for (std::size_t r = 0; r < t->dim(0); ++r) {
            for (std::size_t col = 0; col < t->dim(1); ++col) {
                sidecar += std::string(name) + "," + std::to_string(r) + "," + std::to_string(col) + "," +
                           num((*t)[r * t->dim(1) + col]) + "\n";
            }
        }
    }
    fs::create_directories(out_dir);
    for (const auto& [name, t] : maps) write_pgm(out_dir / (std::string(name) + ".pgm"), *t);
    write_text(out_dir / "heatmaps.csv", sidecar);
}

TrialResult run_pipeline(const ExperimentConfig& config, PipelineTimings* timings) {
    const ExperimentConfig c = prepared(config);
    PipelineTimings t;
    auto t0 = std::chrono::steady_clock::now();
    const Splits splits = generate_splits(c);
    t.generate = seconds_since(t0);

    TrialResult out;
    if (needs_vae(c) && !c.scoring.identity_reconstruction) {
        t0 = std::chrono::steady_clock::now();
        out.vae = train_vae(splits.train_vae, c.vae);
        t.train_vae = seconds_since(t0);
    }
    if (needs_regressor(c)) {
        t0 = std::chrono::steady_clock::now();
        out.reg = train_regressor(splits.train_reg, c.reg);
        t.train_reg = seconds_since(t0);
    }
    t0 = std::chrono::steady_clock::now();
    const Models models{out.vae.params.empty() ? nullptr : &out.vae.params,
                        out.reg.params.empty() ? nullptr : &out.reg.params};
    out.scores = score_test_set(splits.test, models, c);
    t.score = seconds_since(t0);
    if (timings) *timings = t;
    return out;
}

}  // namespace spader
