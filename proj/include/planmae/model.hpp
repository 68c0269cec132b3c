#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "planmae/masking.hpp"
#include "planmae/patches.hpp"
#include "planmae/raster.hpp"

namespace planmae {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Geometry and width/depth of the asymmetric autoencoder.
struct ModelConfig {
    int image_size = 256;
    int patch_size = 16;
    int channels = 1;
    int enc_dim = 192;
    int enc_depth = 4;
    int enc_heads = 3;
    int dec_dim = 96;
    int dec_depth = 2;
    int dec_heads = 3;
    double mlp_ratio = 4.0;
    std::uint64_t seed = 0;

    /// 64x64 images, 8-pixel patches, 64-wide/2-deep encoder and a
    /// 32-wide/1-deep decoder.
    static ModelConfig desk();

    /// Throws BadConfig on any violated constraint.
    void validate() const;

    PatchGrid grid() const { return PatchGrid::for_image(image_size, image_size, patch_size); }
    int patch_dim() const { return patch_size * patch_size * channels; }
    int enc_hidden() const;
    int dec_hidden() const;

    bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

template <typename T>
struct LinearParams {
    Mat<T> weight;  // out x in
    Mat<T> bias;    // 1 x out
};

template <typename T>
struct NormParams {
    Mat<T> scale;  // 1 x dim
    Mat<T> shift;  // 1 x dim
};

template <typename T>
struct BlockParams {
    NormParams<T> norm1;
    LinearParams<T> q, k, v, out;
    NormParams<T> norm2;
    LinearParams<T> fc1, fc2;
};

template <typename T>
struct ModelParams {
    LinearParams<T> patch_embed;
    std::vector<BlockParams<T>> encoder;
    NormParams<T> enc_norm;
    LinearParams<T> enc_to_dec;
    Mat<T> mask_token;  // 1 x dec_dim, shared by every masked position
    std::vector<BlockParams<T>> decoder;
    NormParams<T> dec_norm;
    LinearParams<T> head;

    /// All tensors zero, shaped for `config`.
    static ModelParams zeros(const ModelConfig& config);

    template <typename U>
    ModelParams<U> cast() const;
};

/// Calls f(name, tensor) for every tensor in canonical order. Works for
/// const and mutable params.
template <typename P, typename F>
void for_each_tensor(P& params, F&& f) {
    auto linear = [&](const std::string& name, auto& l) {
        f(name + ".weight", l.weight);
        f(name + ".bias", l.bias);
    };
    auto norm = [&](const std::string& name, auto& n) {
        f(name + ".scale", n.scale);
        f(name + ".shift", n.shift);
    };
    auto blocks = [&](const std::string& prefix, auto& list) {
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::string p = prefix + "." + std::to_string(i);
            auto& b = list[i];
            norm(p + ".norm1", b.norm1);
            linear(p + ".attn.q", b.q);
            linear(p + ".attn.k", b.k);
            linear(p + ".attn.v", b.v);
            linear(p + ".attn.out", b.out);
            norm(p + ".norm2", b.norm2);
            linear(p + ".mlp.fc1", b.fc1);
            linear(p + ".mlp.fc2", b.fc2);
        }
    };
    linear("patch_embed", params.patch_embed);
    blocks("encoder", params.encoder);
    norm("enc_norm", params.enc_norm);
    linear("enc_to_dec", params.enc_to_dec);
    f(std::string("mask_token"), params.mask_token);
    blocks("decoder", params.decoder);
    norm("dec_norm", params.dec_norm);
    linear("head", params.head);
}

/// Pointers to every tensor in canonical order.
template <typename T>
std::vector<Mat<T>*> tensor_list(ModelParams<T>& params) {
    std::vector<Mat<T>*> out;
    for_each_tensor(params, [&](const std::string&, Mat<T>& m) { out.push_back(&m); });
    return out;
}

template <typename T>
std::vector<const Mat<T>*> tensor_list(const ModelParams<T>& params) {
    std::vector<const Mat<T>*> out;
    for_each_tensor(params, [&](const std::string&, const Mat<T>& m) { out.push_back(&m); });
    return out;
}

struct TensorInfo {
    std::string name;
    int rows;
    int cols;

    bool operator==(const TensorInfo&) const = default;
};

/// Canonical (name, shape) list derived from the config.
std::vector<TensorInfo> tensor_layout(const ModelConfig& config);

/// Truncated-normal(0.02) weights and mask token, zero biases and norm
/// shifts, unit norm scales. Deterministic in config.seed.
template <typename T>
ModelParams<T> init_params(const ModelConfig& config);

/// Encoder output: one enc_dim row per visible patch, ascending index order.
template <typename T>
Mat<T> encode(const ModelParams<T>& params, const ModelConfig& config,
              const PatchSequence& patches, const MaskPlan& plan);

/// Encoder blocks and final norm applied to already embedded tokens (patch
/// embedding plus positional rows), one row per token.
template <typename T>
Mat<T> encoder_stack(const ModelParams<T>& params, const ModelConfig& config, const Mat<T>& tokens);

/// Decoder input before positional embeddings: projected latents at visible
/// positions, the shared mask token everywhere else.
template <typename T>
Mat<T> decoder_tokens(const ModelParams<T>& params, const ModelConfig& config,
                      const Mat<T>& latents, const MaskPlan& plan);

/// Decoder prediction for all N patches as an N x (P*P*C) matrix.
template <typename T>
Mat<T> decode_matrix(const ModelParams<T>& params, const ModelConfig& config,
                     const Mat<T>& latents, const MaskPlan& plan);

/// Decoder prediction as a patch sequence (unclamped raw values).
template <typename T>
PatchSequence decode(const ModelParams<T>& params, const ModelConfig& config,
                     const Mat<T>& latents, const MaskPlan& plan);

/// Composite image: visible patches copied from `image`, masked patches
/// predicted, clamped to [0,1].
template <typename T>
Raster reconstruct(const ModelParams<T>& params, const ModelConfig& config, const Raster& image,
                   const MaskPlan& plan);

/// Forward + masked MSE + backward for one image. Gradients are scaled by
/// `weight` and added into `grads`. Returns the unweighted loss.
template <typename T>
T accumulate_gradient(const ModelParams<T>& params, const ModelConfig& config,
                      const PatchSequence& target, const MaskPlan& plan, ModelParams<T>& grads,
                      T weight);

/// Patches as an N x (P*P*C) matrix.
template <typename T>
Mat<T> patch_matrix(const PatchSequence& seq);

PatchSequence to_patch_sequence(const Mat<float>& m, const PatchGrid& grid, int channels);

/// Throws GeometryMismatch unless plan/patches agree with the config.
void check_geometry(const ModelConfig& config, const PatchGrid& grid, int channels);

}  // namespace planmae
