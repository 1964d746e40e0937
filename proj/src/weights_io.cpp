#include "spader/weights_io.hpp"
#include "spader/binary_io.hpp"

#include <fstream>
#include <map>

namespace spader {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'S', 'P', 'D', 'R'};

using TensorMap = std::map<std::string, Tensor>;

TensorMap to_map(NamedTensorList list) {
    TensorMap out;
    for (auto& [name, t] : list) out.emplace(std::move(name), std::move(t));
    return out;
}

const Tensor& require(const TensorMap& m, const std::string& name, const fs::path& path) {
    const auto it = m.find(name);
    if (it == m.end()) throw WeightsFormatError(path.string() + ": missing tensor '" + name + "'");
    return it->second;
}

std::pair<std::size_t, std::size_t> image_size(const TensorMap& m, const fs::path& path) {
    const Tensor& t = require(m, "meta.image_size", path);
    if (t.size() != 2) throw WeightsFormatError(path.string() + ": meta.image_size must hold 2 values");
    return {static_cast<std::size_t>(t[0]), static_cast<std::size_t>(t[1])};
}

ConvLayer conv_from(const TensorMap& m, const std::string& prefix, std::size_t stride, const fs::path& path) {
    ConvLayer c;
    c.weight = require(m, prefix + ".weight", path);
    c.bias = require(m, prefix + ".bias", path);
    c.stride = stride;
    c.padding = 1;
    if (c.weight.rank() != 4 || c.bias.shape() != Shape{c.weight.dim(0)}) {
        throw WeightsFormatError(path.string() + ": inconsistent shapes for '" + prefix + "'");
    }
    return c;
}

DenseLayer dense_from(const TensorMap& m, const std::string& prefix, const fs::path& path) {
    DenseLayer d;
    d.weight = require(m, prefix + ".weight", path);
    d.bias = require(m, prefix + ".bias", path);
    if (d.weight.rank() != 2 || d.bias.shape() != Shape{d.weight.dim(0)}) {
        throw WeightsFormatError(path.string() + ": inconsistent shapes for '" + prefix + "'");
    }
    return d;
}

template <class Named>
NamedTensorList collect(const Named& named) {
    NamedTensorList out;
    for (const auto& [name, t] : named) out.emplace_back(name, *t);
    return out;
}

}  // namespace

void save_tensors(const fs::path& path, const NamedTensorList& tensors) {
    for (const auto& [name, t] : tensors) {
        if (name.size() > 0xffff || t.rank() > 0xff) {
            throw WeightsFormatError("save_tensors: tensor '" + name + "' cannot be encoded");
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_tensors: cannot open " + path.string());
    out.write(kMagic, 4);
    write_le<std::uint32_t>(out, kWeightsVersion);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        write_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
        for (std::size_t d : t.shape()) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        write_f64_le(out, t.values());
    }
    if (!out) throw std::runtime_error("save_tensors: write failed for " + path.string());
}

NamedTensorList load_tensors(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_tensors: cannot open " + path.string());
    NamedTensorList out;
    try {
        char magic[4];
        if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4)) {
            throw WeightsFormatError(path.string() + ": not a weights file (bad magic)");
        }
        const auto version = read_le<std::uint32_t>(in);
        if (version != kWeightsVersion) {
            throw WeightsFormatError(path.string() + ": weights format version " + std::to_string(version) +
                                     " is not supported (this build reads version " +
                                     std::to_string(kWeightsVersion) + ")");
        }
        const auto count = read_le<std::uint32_t>(in);
        for (std::uint32_t i = 0; i < count; ++i) {
            const auto name_len = read_le<std::uint16_t>(in);
            std::string name(name_len, '\0');
            if (!in.read(name.data(), name_len)) throw WeightsFormatError(path.string() + ": truncated name");
            const auto rank = read_le<std::uint8_t>(in);
            Shape shape(rank);
            for (auto& d : shape) d = read_le<std::uint32_t>(in);
            Tensor t(shape);
            read_f64_le(in, t.values());
            out.emplace_back(std::move(name), std::move(t));
        }
    } catch (const WeightsFormatError&) {
        throw;
    } catch (const std::exception& e) {
        throw WeightsFormatError(path.string() + ": " + e.what());
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw WeightsFormatError(path.string() + ": trailing bytes after the last tensor");
    }
    return out;
}

void save_vae(const fs::path& path, const VaeParams& params) {
    if (params.empty()) throw std::invalid_argument("save_vae: parameters are empty");
    NamedTensorList list = collect(params.tensors());
    list.emplace_back("meta.image_size", Tensor::from({static_cast<double>(params.image_height),
                                                       static_cast<double>(params.image_width)}));
    save_tensors(path, list);
}

VaeParams load_vae(const fs::path& path) {
    const TensorMap m = to_map(load_tensors(path));
    VaeParams p;
    std::tie(p.image_height, p.image_width) = image_size(m, path);
    for (std::size_t i = 0; m.count("encoder." + std::to_string(i) + ".weight"); ++i) {
        p.encoder.push_back(conv_from(m, "encoder." + std::to_string(i), 2, path));
    }
    for (std::size_t i = 0; m.count("decoder." + std::to_string(i) + ".weight"); ++i) {
        p.decoder.push_back(conv_from(m, "decoder." + std::to_string(i), 1, path));
    }
    if (p.encoder.empty() || p.decoder.size() != p.encoder.size()) {
        throw WeightsFormatError(path.string() + ": not a VAE weights file");
    }
    p.mu_head = dense_from(m, "mu_head", path);
    p.logvar_head = dense_from(m, "logvar_head", path);
    p.decoder_input = dense_from(m, "decoder_input", path);
    p.latent_dim = p.mu_head.weight.dim(0);
    const std::size_t features = element_count(p.feature_shape());
    if (p.mu_head.weight.dim(1) != features || p.logvar_head.weight.shape() != p.mu_head.weight.shape() ||
        p.decoder_input.weight.shape() != Shape{features, p.latent_dim}) {
        throw WeightsFormatError(path.string() + ": VAE head shapes do not match the encoder");
    }
    return p;
}

void save_regressor(const fs::path& path, const RegressorParams& params) {
    if (params.empty()) throw std::invalid_argument("save_regressor: parameters are empty");
    NamedTensorList list = collect(params.tensors());
    list.emplace_back("meta.image_size", Tensor::from({static_cast<double>(params.image_height),
                                                       static_cast<double>(params.image_width)}));
    list.emplace_back("meta.target_layer", Tensor::from({static_cast<double>(params.target_layer)}));
    save_tensors(path, list);
}

RegressorParams load_regressor(const fs::path& path) {
    const TensorMap m = to_map(load_tensors(path));
    RegressorParams p;
    std::tie(p.image_height, p.image_width) = image_size(m, path);
    for (std::size_t i = 0; m.count("conv." + std::to_string(i) + ".weight"); ++i) {
        p.convs.push_back(conv_from(m, "conv." + std::to_string(i), 2, path));
    }
    if (p.convs.empty()) throw WeightsFormatError(path.string() + ": not a regressor weights file");
    p.head = dense_from(m, "head", path);
    p.target_layer = static_cast<std::size_t>(require(m, "meta.target_layer", path).item());
    if (p.target_layer >= p.convs.size() || p.head.weight.dim(0) != 1) {
        throw WeightsFormatError(path.string() + ": regressor head or target layer is inconsistent");
    }
    return p;
}

}  // namespace spader
