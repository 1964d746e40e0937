#include "spader/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace spader {

namespace {

void append(NamedTensors& out, const std::string& name, ConvLayer& layer) {
    out.emplace_back(name + ".weight", &layer.weight);
    out.emplace_back(name + ".bias", &layer.bias);
}
void append(NamedTensors& out, const std::string& name, DenseLayer& layer) {
    out.emplace_back(name + ".weight", &layer.weight);
    out.emplace_back(name + ".bias", &layer.bias);
}

void check_image(const Tensor& x, const VaeParams& params, const char* op) {
    if (params.empty()) throw std::invalid_argument(std::string(op) + ": VAE parameters are empty");
    const Shape expected{1, params.image_height, params.image_width};
    if (x.shape() != expected) {
        throw ShapeError(std::string(op) + ": expected image " + to_string(expected) + ", got " +
                         to_string(x.shape()));
    }
}

std::pair<ad::Var, ad::Var> encoder_forward(const VaeParams& params, const VaeVars& vars, ad::Var x) {
    const bool batched = x.value().rank() == 4;
    ad::Var h = x;
    for (std::size_t i = 0; i < params.encoder.size(); ++i) {
        h = ad::relu(apply(vars.encoder[i], params.encoder[i], h));
    }
    const std::size_t features = element_count(params.feature_shape());
    const Shape flat = batched ? Shape{x.value().dim(0), features} : Shape{features};
    h = ad::reshape(h, flat);
    return {apply(vars.mu_head, h), apply(vars.logvar_head, h)};
}

ad::Var decoder_forward(const VaeParams& params, const VaeVars& vars, ad::Var z) {
    const bool batched = z.value().rank() == 2;
    ad::Var h = ad::relu(apply(vars.decoder_input, z));
    Shape fs = params.feature_shape();
    if (batched) fs.insert(fs.begin(), z.value().dim(0));
    h = ad::reshape(h, fs);
    const auto sizes = params.encoder_sizes();
    for (std::size_t i = 0; i < params.decoder.size(); ++i) {
        const auto [th, tw] = sizes[sizes.size() - 2 - i];
        h = ad::upsample_nearest(h, th, tw);
        h = apply(vars.decoder[i], params.decoder[i], h);
        h = (i + 1 == params.decoder.size()) ? ad::sigmoid(h) : ad::relu(h);
    }
    return h;
}

}  // namespace

Shape VaeParams::feature_shape() const {
    const auto sizes = encoder_sizes();
    return {encoder.back().weight.dim(0), sizes.back().first, sizes.back().second};
}

std::vector<std::pair<std::size_t, std::size_t>> VaeParams::encoder_sizes() const {
    std::vector<std::pair<std::size_t, std::size_t>> sizes{{image_height, image_width}};
    for (const ConvLayer& layer : encoder) {
        auto [h, w] = sizes.back();
        const std::size_t k = layer.weight.dim(2);
        sizes.emplace_back((h + 2 * layer.padding - k) / layer.stride + 1,
                           (w + 2 * layer.padding - k) / layer.stride + 1);
    }
    return sizes;
}

NamedTensors VaeParams::tensors() {
    NamedTensors out;
    for (std::size_t i = 0; i < encoder.size(); ++i) append(out, "encoder." + std::to_string(i), encoder[i]);
    append(out, "mu_head", mu_head);
    append(out, "logvar_head", logvar_head);
    append(out, "decoder_input", decoder_input);
    for (std::size_t i = 0; i < decoder.size(); ++i) append(out, "decoder." + std::to_string(i), decoder[i]);
    return out;
}

ConstNamedTensors VaeParams::tensors() const {
    ConstNamedTensors out;
    for (auto& [name, t] : const_cast<VaeParams*>(this)->tensors()) out.emplace_back(name, t);
    return out;
}

std::vector<ad::Var> VaeVars::flat() const {
    std::vector<ad::Var> out;
    for (const ConvVars& c : encoder) {
        out.push_back(c.weight);
        out.push_back(c.bias);
    }
    for (const DenseVars* d : {&mu_head, &logvar_head, &decoder_input}) {
        out.push_back(d->weight);
        out.push_back(d->bias);
    }
    for (const ConvVars& c : decoder) {
        out.push_back(c.weight);
        out.push_back(c.bias);
    }
    return out;
}

VaeParams init_vae(const VaeConfig& config, Rng& rng) {
    if (config.channels.empty() || config.latent_dim == 0) {
        throw std::invalid_argument("init_vae: need at least one conv layer and a positive latent size");
    }
    VaeParams p;
    p.latent_dim = config.latent_dim;
    p.image_height = config.image_height;
    p.image_width = config.image_width;
    std::size_t in_ch = 1;
    for (std::size_t ch : config.channels) {
        p.encoder.push_back(make_conv(ch, in_ch, 3, 2, 1, rng));
        in_ch = ch;
    }
    const std::size_t features = element_count(p.feature_shape());
    p.mu_head = make_dense(config.latent_dim, features, rng, 1.0);
    p.logvar_head = make_dense(config.latent_dim, features, rng, 0.1);
    p.decoder_input = make_dense(features, config.latent_dim, rng);
    for (std::size_t i = config.channels.size(); i-- > 0;) {
        const std::size_t out_ch = i == 0 ? 1 : config.channels[i - 1];
        p.decoder.push_back(make_conv(out_ch, config.channels[i], 3, 1, 1, rng));
    }
    return p;
}

VaeVars bind(ad::Tape& tape, const VaeParams& params, bool trainable) {
    VaeVars v;
    for (const ConvLayer& c : params.encoder) v.encoder.push_back(bind(tape, c, trainable));
    v.mu_head = bind(tape, params.mu_head, trainable);
    v.logvar_head = bind(tape, params.logvar_head, trainable);
    v.decoder_input = bind(tape, params.decoder_input, trainable);
    for (const ConvLayer& c : params.decoder) v.decoder.push_back(bind(tape, c, trainable));
    return v;
}

VaeGraph vae_forward(const VaeParams& params, const VaeVars& vars, ad::Var x, ad::Var eps) {
    VaeGraph g;
    std::tie(g.mu, g.logvar) = encoder_forward(params, vars, x);
    g.z = ad::add(g.mu, ad::mul(ad::exp(ad::scale(g.logvar, 0.5)), eps));
    g.reconstruction = decoder_forward(params, vars, g.z);
    return g;
}

ad::Var kl_graph(ad::Var mu, ad::Var logvar) {
    ad::Var terms = ad::sub(ad::add(ad::square(mu), ad::exp(logvar)), ad::add_scalar(logvar, 1.0));
    return ad::scale(ad::sum(terms), 0.5);
}

ad::Var elbo_graph(const VaeGraph& graph, ad::Var x, double beta_rec) {
    ad::Var rec = ad::sum(ad::square(ad::sub(graph.reconstruction, x)));
    return ad::add(ad::scale(rec, beta_rec), kl_graph(graph.mu, graph.logvar));
}

LatentStats encode(const Tensor& x, const VaeParams& params) {
    check_image(x, params, "encode");
    ad::Tape tape;
    const VaeVars vars = bind(tape, params, false);
    auto [mu, logvar] = encoder_forward(params, vars, tape.borrow(x, false));
    return {mu.value(), logvar.value()};
}

Tensor reparameterize(const Tensor& mu, const Tensor& logvar, Rng& rng) {
    if (mu.shape() != logvar.shape()) {
        throw ShapeError("reparameterize: mu " + to_string(mu.shape()) + " vs logvar " +
                         to_string(logvar.shape()));
    }
    Tensor z(mu.shape());
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = mu[i] + std::exp(0.5 * logvar[i]) * standard_normal(rng);
    }
    return z;
}

LatentSample sample_latent(const Tensor& x, const VaeParams& params, Rng& rng) {
    LatentStats stats = encode(x, params);
    Tensor z = reparameterize(stats.mu, stats.logvar, rng);
    return {std::move(stats.mu), std::move(stats.logvar), std::move(z)};
}

Tensor decode(const Tensor& z, const VaeParams& params) {
    if (params.empty()) throw std::invalid_argument("decode: VAE parameters are empty");
    if (z.shape() != Shape{params.latent_dim} &&
        !(z.rank() == 2 && z.dim(1) == params.latent_dim)) {
        throw ShapeError("decode: expected latent [" + std::to_string(params.latent_dim) + "], got " +
                         to_string(z.shape()));
    }
    ad::Tape tape;
    const VaeVars vars = bind(tape, params, false);
    return decoder_forward(params, vars, tape.borrow(z, false)).value();
}

Tensor reconstruct(const Tensor& x, const VaeParams& params, Rng& rng) {
    return decode(sample_latent(x, params, rng).z, params);
}

std::vector<Tensor> reconstruct_many(const Tensor& x, const VaeParams& params, Rng& rng,
                                     std::size_t count) {
    const LatentStats stats = encode(x, params);
    const std::size_t latent = params.latent_dim;
    Tensor z({count, latent});
    for (std::size_t m = 0; m < count; ++m) {
        for (std::size_t d = 0; d < latent; ++d) {
            z[m * latent + d] = stats.mu[d] + std::exp(0.5 * stats.logvar[d]) * standard_normal(rng);
        }
    }
    const Tensor batch = decode(z, params);
    const std::size_t plane = params.image_height * params.image_width;
    std::vector<Tensor> out;
    out.reserve(count);
    for (std::size_t m = 0; m < count; ++m) {
        out.emplace_back(Shape{1, params.image_height, params.image_width},
                         std::vector<double>(batch.data() + m * plane, batch.data() + (m + 1) * plane));
    }
    return out;
}

double kl_divergence(const Tensor& mu, const Tensor& logvar) {
    if (mu.shape() != logvar.shape()) {
        throw ShapeError("kl_divergence: mu " + to_string(mu.shape()) + " vs logvar " +
                         to_string(logvar.shape()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        s += mu[i] * mu[i] + std::exp(logvar[i]) - 1.0 - logvar[i];
    }
    return 0.5 * s;
}

double elbo_loss(const Tensor& x, const VaeParams& params, Rng& rng, double beta_rec) {
    check_image(x, params, "elbo_loss");
    Tensor eps({params.latent_dim});
    for (double& e : eps.values()) e = standard_normal(rng);
    ad::Tape tape;
    const VaeVars vars = bind(tape, params, false);
    ad::Var xv = tape.borrow(x, false);
    const VaeGraph g = vae_forward(params, vars, xv, tape.borrow(eps, false));
    return elbo_graph(g, xv, beta_rec).value().item();
}

VaeTrainResult train_vae(std::span<const ImageSample> dataset, const VaeConfig& config) {
    if (dataset.empty()) throw std::invalid_argument("train_vae: dataset is empty");
    for (const ImageSample& s : dataset) {
        if (s.role != Role::normal) {
            throw std::invalid_argument("train_vae: sample " + std::to_string(s.id) + " has role " +
                                        std::string(role_name(s.role)) +
                                        "; the VAE trains on normal images only");
        }
        if (s.pixels.shape() != Shape{1, config.image_height, config.image_width}) {
            throw ShapeError("train_vae: sample " + std::to_string(s.id) + " has shape " +
                             to_string(s.pixels.shape()));
        }
    }
    if (config.batch_size == 0) throw std::invalid_argument("train_vae: batch_size must be positive");

    Rng rng(config.seed);
    VaeTrainResult result;
    result.params = init_vae(config, rng);
    VaeParams& params = result.params;
    AdamState adam;
    NamedTensors named = params.tensors();

    const std::size_t plane = config.image_height * config.image_width;
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, order.size() - start);
            Tensor xb({count, 1, config.image_height, config.image_width});
            for (std::size_t b = 0; b < count; ++b) {
                const Tensor& px = dataset[order[start + b]].pixels;
                std::copy(px.data(), px.data() + plane, xb.data() + b * plane);
            }
            Tensor eps({count, config.latent_dim});
            for (double& e : eps.values()) e = standard_normal(rng);

            ad::Tape tape;
            const VaeVars vars = bind(tape, params, true);
            ad::Var xv = tape.borrow(xb, false);
            const VaeGraph g = vae_forward(params, vars, xv, tape.borrow(eps, false));
            ad::Var loss = ad::scale(elbo_graph(g, xv, config.beta_rec), 1.0 / static_cast<double>(count));
            tape.backward(loss);
            total += loss.value().item() * static_cast<double>(count);

            const std::vector<ad::Var> flat = vars.flat();
            std::vector<ParamRef> refs;
            refs.reserve(flat.size());
            for (std::size_t k = 0; k < flat.size(); ++k) {
                refs.push_back({named[k].first, named[k].second, flat[k].grad()});
            }
            adam_step(refs, adam, config.adam);
        }
        result.loss_history.push_back(total / static_cast<double>(dataset.size()));
    }
    return result;
}

}  // namespace spader
