#include "spader/allocator.hpp"
#include "spader/evaluation.hpp"
#include "spader/experiment.hpp"
#include "spader/gradcam.hpp"
#include "spader/weights_io.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace spader;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.data(), t.data() + t.size(), out.mutable_data());
    return out;
}

Tensor from_numpy(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

/// Accepts [H,W] or [1,H,W].
Tensor image_from_numpy(const Array& a) {
    Tensor t = from_numpy(a);
    if (t.rank() == 2) return Tensor({1, t.dim(0), t.dim(1)}, std::vector<double>(t.values().begin(), t.values().end()));
    if (t.rank() != 3 || t.dim(0) != 1) throw ShapeError("expected an [H,W] or [1,H,W] image, got " + to_string(t.shape()));
    return t;
}

py::dict samples_to_dict(const std::vector<ImageSample>& samples) {
    std::size_t h = 0, w = 0;
    if (!samples.empty()) h = samples[0].pixels.dim(1), w = samples[0].pixels.dim(2);
    py::array_t<double> images({samples.size(), h, w});
    py::array_t<std::int64_t> digits(samples.size());
    py::array_t<std::uint64_t> ids(samples.size());
    py::list roles;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::copy(samples[i].pixels.data(), samples[i].pixels.data() + h * w, images.mutable_data() + i * h * w);
        digits.mutable_at(i) = samples[i].digit;
        ids.mutable_at(i) = samples[i].id;
        roles.append(std::string(role_name(samples[i].role)));
    }
    py::dict d;
    d["images"] = images;
    d["digits"] = digits;
    d["roles"] = roles;
    d["ids"] = ids;
    return d;
}

py::list rows_to_list(const std::vector<ScoreRow>& rows) {
    py::list out;
    for (const ScoreRow& r : rows) {
        py::dict d;
        d["image_id"] = r.image_id;
        d["digit"] = r.digit;
        d["role"] = std::string(role_name(r.role));
        d["strategy"] = std::string(strategy_name(r.strategy));
        d["score"] = r.score;
        out.append(d);
    }
    return out;
}

ExperimentConfig make_config(const std::map<std::string, std::string>& settings) {
    ExperimentConfig c;
    for (const auto& [k, v] : settings) apply_setting(c, k, v);
    return c;
}

std::vector<Strategy> parse_strategies(const std::vector<std::string>& names) {
    std::vector<Strategy> out;
    for (const std::string& n : names) {
        const auto s = parse_strategy(n);
        if (!s) throw std::invalid_argument("unknown strategy '" + n + "'");
        out.push_back(*s);
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_spader, m) {
    m.doc() = "Spatially-weighted reconstruction anomaly detection";
    tune_allocator();

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<WeightsFormatError>(m, "WeightsFormatError", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

    m.attr("STRATEGIES") = [] {
        std::vector<std::string> names;
        for (Strategy s : kAllStrategies) names.emplace_back(strategy_name(s));
        return names;
    }();

    py::class_<ExperimentConfig>(m, "Config")
        .def(py::init(&make_config), py::arg("settings") = std::map<std::string, std::string>{})
        .def("set", &apply_setting, py::arg("key"), py::arg("value"))
        .def("validate", &ExperimentConfig::validate)
        .def("dump", &dump_config)
        .def_readwrite("seed", &ExperimentConfig::seed)
        .def("__repr__", [](const ExperimentConfig& c) { return "<spader.Config seed=" + std::to_string(c.seed) + ">"; });
    m.def("load_config", [](const std::filesystem::path& p) {
        ExperimentConfig c;
        load_config(p, c);
        return c;
    });

    py::class_<VaeParams>(m, "Vae")
        .def_readonly("latent_dim", &VaeParams::latent_dim)
        .def_property_readonly("image_shape", [](const VaeParams& v) { return std::pair(v.image_height, v.image_width); })
        .def("encode", [](const VaeParams& v, const Array& x) {
            const LatentStats s = encode(image_from_numpy(x), v);
            return std::pair(to_numpy(s.mu), to_numpy(s.logvar));
        })
        .def("decode", [](const VaeParams& v, const Array& z) { return to_numpy(decode(from_numpy(z), v)); })
        .def("reconstruct", [](const VaeParams& v, const Array& x, std::uint64_t seed, std::size_t count) {
            Rng rng(seed);
            py::list out;
            for (const Tensor& t : reconstruct_many(image_from_numpy(x), v, rng, count)) out.append(to_numpy(t));
            return out;
        }, py::arg("x"), py::arg("seed") = 0, py::arg("count") = 1)
        .def("elbo", [](const VaeParams& v, const Array& x, std::uint64_t seed, double beta_rec) {
            Rng rng(seed);
            return elbo_loss(image_from_numpy(x), v, rng, beta_rec);
        }, py::arg("x"), py::arg("seed") = 0, py::arg("beta_rec") = 1.0)
        .def("save", [](const VaeParams& v, const std::filesystem::path& p) { save_vae(p, v); });
    m.def("load_vae", &load_vae, py::arg("path"));

    py::class_<RegressorParams>(m, "Regressor")
        .def_readonly("target_layer", &RegressorParams::target_layer)
        .def("predict", [](const RegressorParams& r, const Array& x) { return predict(image_from_numpy(x), r); })
        .def("cams", [](const RegressorParams& r, const Array& x) {
            const InputCams c = input_cams(image_from_numpy(x), r);
            py::dict d;
            d["prediction"] = c.prediction;
            d["signed"] = to_numpy(c.signed_map);
            d["positive"] = to_numpy(c.positive_map);
            return d;
        })
        .def("combined_cam", [](const RegressorParams& r, const Array& x, const Array& x_hat) {
            return to_numpy(combined_cam(image_from_numpy(x), image_from_numpy(x_hat), r).values);
        })
        .def("save", [](const RegressorParams& r, const std::filesystem::path& p) { save_regressor(p, r); });
    m.def("load_regressor", &load_regressor, py::arg("path"));

    m.def("generate", [](ExperimentConfig c) {
        c.validate();
        c.propagate();
        const Splits s = generate_splits(c);
        py::dict d;
        d["train_vae"] = samples_to_dict(s.train_vae);
        d["train_reg"] = samples_to_dict(s.train_reg);
        d["test"] = samples_to_dict(s.test);
        return d;
    }, py::arg("config"), "Benchmark splits as numpy arrays.");

    m.def("score_image", [](const Array& x, std::uint64_t image_id, const std::vector<std::string>& strategies,
                            const VaeParams* vae, const RegressorParams* reg, const ExperimentConfig& config) {
        ExperimentConfig c = config;
        c.propagate();
        const std::vector<Strategy> wanted = parse_strategies(strategies);
        const std::vector<double> values =
            score_strategies(image_from_numpy(x), image_id, wanted, Models{vae, reg}, c.scoring);
        std::map<std::string, double> out;
        for (std::size_t i = 0; i < wanted.size(); ++i) out[std::string(strategy_name(wanted[i]))] = values[i];
        return out;
    }, py::arg("x"), py::arg("image_id"), py::arg("strategies"), py::arg("vae") = nullptr,
       py::arg("regressor") = nullptr, py::arg("config") = ExperimentConfig{});

    m.def("loss_image", [](const Array& x, const Array& x_hat) {
        return to_numpy(loss_image(image_from_numpy(x), image_from_numpy(x_hat)));
    });
    m.def("upsample_bilinear", [](const Array& map, std::size_t h, std::size_t w) {
        return to_numpy(upsample_bilinear(from_numpy(map), h, w));
    });

    m.def("auroc", [](const std::vector<double>& scores, const std::vector<bool>& is_anomaly) {
        if (scores.size() != is_anomaly.size()) throw std::invalid_argument("auroc: scores and labels differ in length");
        std::vector<EvalRecord> records;
        for (std::size_t i = 0; i < scores.size(); ++i) records.push_back({i, scores[i], is_anomaly[i]});
        return auroc(records);
    }, py::arg("scores"), py::arg("is_anomaly"), "Higher scores mean more normal.");

    m.def("gen_data", &cmd_gen_data, py::arg("config"), py::arg("data_dir"));
    m.def("train", &cmd_train, py::arg("config"), py::arg("data_dir"), py::arg("weights_dir"));
    m.def("score", &cmd_score, py::arg("config"), py::arg("data_dir"), py::arg("weights_dir"), py::arg("out_csv"));
    m.def("evaluate", [](const std::vector<std::filesystem::path>& files, const std::filesystem::path& out_dir) {
        py::list out;
        for (const ConditionSummary& s : cmd_eval(files, out_dir)) {
            py::dict d;
            d["strategy"] = std::string(strategy_name(s.strategy));
            d["known_anomaly_digit"] = s.known_anomaly_digit;
            d["trials"] = s.trials;
            d["mean"] = s.mean;
            d["std"] = s.std;
            out.append(d);
        }
        return out;
    }, py::arg("score_files"), py::arg("out_dir"));
    m.def("visualize", &cmd_visualize, py::arg("config"), py::arg("data_dir"), py::arg("weights_dir"),
          py::arg("image_id"), py::arg("out_dir"));
    m.def("read_scores", [](const std::filesystem::path& p) { return rows_to_list(read_scores(p)); });

    m.def("run_pipeline", [](const ExperimentConfig& c) {
        TrialResult r;
        {
            py::gil_scoped_release release;
            r = run_pipeline(c);
        }
        py::dict d;
        d["vae"] = py::cast(std::move(r.vae.params));
        d["regressor"] = py::cast(std::move(r.reg.params));
        d["vae_loss"] = r.vae.loss_history;
        d["reg_loss"] = r.reg.loss_history;
        d["scores"] = rows_to_list(r.scores);
        return d;
    }, py::arg("config"), "Generate, train and score in memory.");
}
