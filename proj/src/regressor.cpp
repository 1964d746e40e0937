#include "spader/regressor.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace spader {

namespace {

struct RegressorVars {
    std::vector<ConvVars> convs;
    DenseVars head;

    std::vector<ad::Var> flat() const {
        std::vector<ad::Var> out;
        for (const ConvVars& c : convs) {
            out.push_back(c.weight);
            out.push_back(c.bias);
        }
        out.push_back(head.weight);
        out.push_back(head.bias);
        return out;
    }
};

RegressorVars bind_regressor(ad::Tape& tape, const RegressorParams& params, bool trainable) {
    RegressorVars v;
    for (const ConvLayer& c : params.convs) v.convs.push_back(bind(tape, c, trainable));
    v.head = bind(tape, params.head, trainable);
    return v;
}

RegressorForward run(const RegressorParams& params, const RegressorVars& vars, ad::Var x) {
    const bool batched = x.value().rank() == 4;
    RegressorForward out;
    ad::Var h = x;
    for (std::size_t i = 0; i < params.convs.size(); ++i) {
        h = ad::relu(apply(vars.convs[i], params.convs[i], h));
        if (i == params.target_layer) out.features = h;
    }
    const Tensor& last = h.value();
    const std::size_t features = batched ? last.size() / last.dim(0) : last.size();
    h = ad::reshape(h, batched ? Shape{last.dim(0), features} : Shape{features});
    out.output = ad::sigmoid(apply(vars.head, h));
    return out;
}

void check_image(const Tensor& x, const RegressorParams& params, const char* op) {
    if (params.empty()) throw std::invalid_argument(std::string(op) + ": regressor parameters are empty");
    const Shape single{1, params.image_height, params.image_width};
    const bool ok = x.shape() == single ||
                    (x.rank() == 4 && Shape(x.shape().begin() + 1, x.shape().end()) == single);
    if (!ok) {
        throw ShapeError(std::string(op) + ": expected image " + to_string(single) + ", got " +
                         to_string(x.shape()));
    }
}

}  // namespace

NamedTensors RegressorParams::tensors() {
    NamedTensors out;
    for (std::size_t i = 0; i < convs.size(); ++i) {
        out.emplace_back("conv." + std::to_string(i) + ".weight", &convs[i].weight);
        out.emplace_back("conv." + std::to_string(i) + ".bias", &convs[i].bias);
    }
    out.emplace_back("head.weight", &head.weight);
    out.emplace_back("head.bias", &head.bias);
    return out;
}

ConstNamedTensors RegressorParams::tensors() const {
    ConstNamedTensors out;
    for (auto& [name, t] : const_cast<RegressorParams*>(this)->tensors()) out.emplace_back(name, t);
    return out;
}

RegressorParams init_regressor(const RegressorConfig& config, Rng& rng) {
    if (config.channels.empty()) throw std::invalid_argument("init_regressor: need at least one conv layer");
    RegressorParams p;
    p.image_height = config.image_height;
    p.image_width = config.image_width;
    p.target_layer = std::min(config.target_layer, config.channels.size() - 1);
    std::size_t in_ch = 1;
    std::size_t h = config.image_height;
    std::size_t w = config.image_width;
    for (std::size_t ch : config.channels) {
        p.convs.push_back(make_conv(ch, in_ch, 3, 2, 1, rng));
        in_ch = ch;
        h = halved(h);
        w = halved(w);
    }
    p.head = make_dense(1, in_ch * h * w, rng, 1.0);
    return p;
}

double normalness_label(Role role) {
    switch (role) {
        case Role::normal: return 1.0;
        case Role::known_anomaly: return 0.0;
        case Role::unknown_anomaly: break;
    }
    throw std::invalid_argument("normalness_label: unknown-anomaly images have no regression target");
}

RegressorForward forward_with_features(ad::Tape& tape, ad::Var x, const RegressorParams& params) {
    check_image(x.value(), params, "forward_with_features");
    return run(params, bind_regressor(tape, params, false), x);
}

double predict(const Tensor& x, const RegressorParams& params) {
    ad::Tape tape;
    return forward_with_features(tape, tape.borrow(x, false), params).output.value()[0];
}

ad::Var regression_loss(ad::Tape& tape, ad::Var outputs, const Tensor& targets, RegressionLoss kind) {
    ad::Var diff = ad::sub(outputs, tape.borrow(targets, false));
    ad::Var per = kind == RegressionLoss::absolute ? ad::abs(diff) : ad::square(diff);
    return ad::mean(per);
}

RegressorTrainResult train_regressor(std::span<const ImageSample> dataset,
                                     const RegressorConfig& config) {
    std::vector<std::size_t> normals;
    std::vector<std::size_t> anomalies;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const ImageSample& s = dataset[i];
        if (s.role == Role::unknown_anomaly) {
            throw std::invalid_argument("train_regressor: sample " + std::to_string(s.id) +
                                        " is an unknown anomaly; training uses normal and known-anomaly images only");
        }
        if (s.pixels.shape() != Shape{1, config.image_height, config.image_width}) {
            throw ShapeError("train_regressor: sample " + std::to_string(s.id) + " has shape " +
                             to_string(s.pixels.shape()));
        }
        (s.role == Role::normal ? normals : anomalies).push_back(i);
    }
    if (normals.empty() || anomalies.empty()) {
        throw std::invalid_argument("train_regressor: both normal and known-anomaly images are required (got " +
                                    std::to_string(normals.size()) + " normal, " +
                                    std::to_string(anomalies.size()) + " known anomaly)");
    }
    if (config.batch_size < 2) throw std::invalid_argument("train_regressor: batch_size must be at least 2");

    Rng rng(config.seed);
    RegressorTrainResult result;
    result.params = init_regressor(config, rng);
    RegressorParams& params = result.params;
    NamedTensors named = params.tensors();
    AdamState adam;

    // Each class is drawn from its own reshuffled cycle so batches stay balanced.
    struct Cycle {
        std::vector<std::size_t> items;
        std::size_t pos = 0;
        std::size_t next(Rng& rng) {
            if (pos == 0) std::shuffle(items.begin(), items.end(), rng);
            const std::size_t v = items[pos];
            pos = (pos + 1) % items.size();
            return v;
        }
    };
    Cycle normal_cycle{normals};
    Cycle anomaly_cycle{anomalies};

    const std::size_t plane = config.image_height * config.image_width;
    const std::size_t steps = (dataset.size() + config.batch_size - 1) / config.batch_size;
    const std::size_t half = config.batch_size / 2;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double total = 0.0;
        for (std::size_t step = 0; step < steps; ++step) {
            const std::size_t count = config.batch_size;
            Tensor xb({count, 1, config.image_height, config.image_width});
            Tensor yb({count, 1});
            for (std::size_t b = 0; b < count; ++b) {
                const std::size_t idx = b < half ? normal_cycle.next(rng) : anomaly_cycle.next(rng);
                const ImageSample& s = dataset[idx];
                std::copy(s.pixels.data(), s.pixels.data() + plane, xb.data() + b * plane);
                yb[b] = normalness_label(s.role);
            }
            ad::Tape tape;
            const RegressorVars vars = bind_regressor(tape, params, true);
            const RegressorForward fwd = run(params, vars, tape.borrow(xb, false));
            ad::Var loss = regression_loss(tape, fwd.output, yb, config.loss);
            tape.backward(loss);
            total += loss.value().item();

            const std::vector<ad::Var> flat = vars.flat();
            std::vector<ParamRef> refs;
            for (std::size_t k = 0; k < flat.size(); ++k) {
                refs.push_back({named[k].first, named[k].second, flat[k].grad()});
            }
            adam_step(refs, adam, config.adam);
        }
        result.loss_history.push_back(total / static_cast<double>(steps));
    }
    return result;
}

}  // namespace spader
