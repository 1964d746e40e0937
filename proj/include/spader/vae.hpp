#pragma once

#include "spader/autodiff.hpp"
#include "spader/layers.hpp"
#include "spader/optim.hpp"
#include "spader/rng.hpp"
#include "spader/sample.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace spader {

struct VaeConfig {
    std::size_t image_height = 84;
    std::size_t image_width = 84;
    std::size_t latent_dim = 128;
    std::vector<std::size_t> channels{16, 32, 64, 128};
    // Weight on the summed squared reconstruction error.
    double beta_rec = 1.0;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    AdamConfig adam{};
    std::uint64_t seed = 0;
};

/// Encoder: stride-2 convs, then dense heads to mu and log-variance.
/// Decoder: dense to the encoder's feature map, then nearest-upsample + conv
/// blocks mirroring the encoder, sigmoid output.
struct VaeParams {
    std::vector<ConvLayer> encoder;
    DenseLayer mu_head;
    DenseLayer logvar_head;
    DenseLayer decoder_input;
    std::vector<ConvLayer> decoder;
    std::size_t latent_dim = 0;
    std::size_t image_height = 0;
    std::size_t image_width = 0;

    bool empty() const { return encoder.empty(); }
    /// Shape [C,h,w] of the deepest encoder feature map.
    Shape feature_shape() const;
    /// Spatial sizes visited by the encoder, input first.
    std::vector<std::pair<std::size_t, std::size_t>> encoder_sizes() const;

    NamedTensors tensors();
    ConstNamedTensors tensors() const;
};

VaeParams init_vae(const VaeConfig& config, Rng& rng);

struct LatentStats {
    Tensor mu;      // [L]
    Tensor logvar;  // [L]
};

struct LatentSample {
    Tensor mu;
    Tensor logvar;
    Tensor z;
};

LatentStats encode(const Tensor& x, const VaeParams& params);
/// z = mu + exp(logvar/2) * eps with eps ~ N(0, I) drawn from rng.
Tensor reparameterize(const Tensor& mu, const Tensor& logvar, Rng& rng);
LatentSample sample_latent(const Tensor& x, const VaeParams& params, Rng& rng);
Tensor decode(const Tensor& z, const VaeParams& params);
/// Stochastic reconstruction decode(reparameterize(encode(x))).
Tensor reconstruct(const Tensor& x, const VaeParams& params, Rng& rng);
/// `count` reconstructions of x sharing one encoder pass; draws eps in trial order.
std::vector<Tensor> reconstruct_many(const Tensor& x, const VaeParams& params, Rng& rng,
                                     std::size_t count);

/// KL(N(mu, exp(logvar)) || N(0, I)).
double kl_divergence(const Tensor& mu, const Tensor& logvar);

/// beta_rec * sum((x_hat - x)^2) + KL, one latent sample.
double elbo_loss(const Tensor& x, const VaeParams& params, Rng& rng, double beta_rec = 1.0);

// Graph-level access used by training and gradient checks.
struct VaeVars {
    std::vector<ConvVars> encoder;
    DenseVars mu_head, logvar_head, decoder_input;
    std::vector<ConvVars> decoder;

    std::vector<ad::Var> flat() const;
};

VaeVars bind(ad::Tape& tape, const VaeParams& params, bool trainable);

struct VaeGraph {
    ad::Var mu, logvar, z, reconstruction;
};

/// x is [1,H,W] or [B,1,H,W]; eps is [L] or [B,L] to match.
VaeGraph vae_forward(const VaeParams& params, const VaeVars& vars, ad::Var x, ad::Var eps);
/// Summed over the batch: beta_rec * sum((x_hat - x)^2) + KL.
ad::Var elbo_graph(const VaeGraph& graph, ad::Var x, double beta_rec);
ad::Var kl_graph(ad::Var mu, ad::Var logvar);

struct VaeTrainResult {
    VaeParams params;
    std::vector<double> loss_history;  // mean per-image loss per epoch
};

/// Trains on normal-role images only. Throws if the set is empty or holds any other role.
VaeTrainResult train_vae(std::span<const ImageSample> dataset, const VaeConfig& config);

}  // namespace spader
