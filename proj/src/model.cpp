#include "planmae/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include "planmae/error.hpp"
#include "planmae/pos_embed.hpp"
#include "planmae/rng.hpp"

namespace planmae {

namespace {

constexpr double kNormEps = 1e-6;

void require(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::BadConfig, what);
}

int hidden_width(int dim, double ratio) {
    return static_cast<int>(std::lround(dim * ratio));
}

template <typename T>
Mat<T> zeros(int rows, int cols) {
    return Mat<T>::Zero(rows, cols);
}

template <typename T>
BlockParams<T> zero_block(int dim, int hidden) {
    BlockParams<T> b;
    b.norm1 = {zeros<T>(1, dim), zeros<T>(1, dim)};
    b.q = {zeros<T>(dim, dim), zeros<T>(1, dim)};
    b.k = {zeros<T>(dim, dim), zeros<T>(1, dim)};
    b.v = {zeros<T>(dim, dim), zeros<T>(1, dim)};
    b.out = {zeros<T>(dim, dim), zeros<T>(1, dim)};
    b.norm2 = {zeros<T>(1, dim), zeros<T>(1, dim)};
    b.fc1 = {zeros<T>(hidden, dim), zeros<T>(1, hidden)};
    b.fc2 = {zeros<T>(dim, hidden), zeros<T>(1, dim)};
    return b;
}

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Positional tables are pure functions of (grid, dim); build each once.
template <typename T>
std::shared_ptr<const Mat<T>> position_table(const PatchGrid& grid, int dim) {
    static std::mutex mutex;
    static std::map<std::tuple<int, int, int>, std::shared_ptr<const Mat<T>>> cache;
    const auto key = std::tuple(grid.rows, grid.cols, dim);
    std::lock_guard lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    const PosEmbedTable table(grid, dim);
    auto m = std::make_shared<Mat<T>>(table.size(), dim);
    for (int i = 0; i < table.size(); ++i) {
        const auto row = table.row(i);
        for (int d = 0; d < dim; ++d) (*m)(i, d) = static_cast<T>(row[static_cast<std::size_t>(d)]);
    }
    cache.emplace(key, m);
    return m;
}

// ---------------------------------------------------------------------------
// Layers. Each forward stores what its backward needs; backward functions
// add parameter gradients into the matching grad struct and return the
// gradient with respect to the layer input.

template <typename T>
Mat<T> linear_forward(const LinearParams<T>& p, const Mat<T>& x) {
    Mat<T> y = x * p.weight.transpose();
    y.rowwise() += p.bias.row(0);
    return y;
}

template <typename T>
Mat<T> linear_backward(const LinearParams<T>& p, const Mat<T>& x, const Mat<T>& dy,
                       LinearParams<T>& g) {
    g.weight.noalias() += dy.transpose() * x;
    g.bias.row(0) += dy.colwise().sum();
    return dy * p.weight;
}

template <typename T>
struct NormCache {
    Mat<T> xhat;
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std;
};

template <typename T>
Mat<T> norm_forward(const NormParams<T>& p, const Mat<T>& x, NormCache<T>& cache) {
    const auto n = x.rows();
    const auto d = x.cols();
    cache.xhat.resize(n, d);
    cache.inv_std.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const T mean = x.row(i).mean();
        const auto centered = (x.row(i).array() - mean).matrix();
        const T var = centered.squaredNorm() / static_cast<T>(d);
        const T inv = T(1) / std::sqrt(var + static_cast<T>(kNormEps));
        cache.inv_std(i) = inv;
        cache.xhat.row(i) = centered * inv;
    }
    Mat<T> y = cache.xhat.array().rowwise() * p.scale.row(0).array();
    y.rowwise() += p.shift.row(0);
    return y;
}

template <typename T>
Mat<T> norm_backward(const NormParams<T>& p, const NormCache<T>& cache, const Mat<T>& dy,
                     NormParams<T>& g) {
    g.scale.row(0) += (dy.array() * cache.xhat.array()).matrix().colwise().sum();
    g.shift.row(0) += dy.colwise().sum();
    const Mat<T> dxhat = dy.array().rowwise() * p.scale.row(0).array();
    Mat<T> dx(dy.rows(), dy.cols());
    const T d = static_cast<T>(dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
        const T mean_dxhat = dxhat.row(i).sum() / d;
        const T mean_dxhat_xhat = dxhat.row(i).dot(cache.xhat.row(i)) / d;
        dx.row(i) = cache.inv_std(i) *
                    (dxhat.row(i).array() - mean_dxhat - cache.xhat.row(i).array() * mean_dxhat_xhat)
                        .matrix();
    }
    return dx;
}

template <typename T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * static_cast<T>(M_SQRT1_2)));
}

template <typename T>
T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * static_cast<T>(M_SQRT1_2)));
    const T pdf = std::exp(T(-0.5) * x * x) * static_cast<T>(0.3989422804014327);
    return cdf + x * pdf;
}

template <typename T>
struct BlockCache {
    Mat<T> input;
    NormCache<T> norm1;
    Mat<T> normed1;
    Mat<T> q, k, v;
    std::vector<Mat<T>> attn;  // per head, n x n softmax weights
    Mat<T> heads;              // concatenated head outputs, n x dim
    Mat<T> mid;                // residual stream after attention
    NormCache<T> norm2;
    Mat<T> normed2;
    Mat<T> pre_act;
    Mat<T> act;
};

template <typename T>
Mat<T> block_forward(const BlockParams<T>& p, int num_heads, const Mat<T>& x, BlockCache<T>& c) {
    const auto n = x.rows();
    const int dim = static_cast<int>(x.cols());
    const int head_dim = dim / num_heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(head_dim));

    c.input = x;
    c.normed1 = norm_forward(p.norm1, x, c.norm1);
    c.q = linear_forward(p.q, c.normed1);
    c.k = linear_forward(p.k, c.normed1);
    c.v = linear_forward(p.v, c.normed1);
    c.heads.resize(n, dim);
    c.attn.resize(static_cast<std::size_t>(num_heads));
    for (int h = 0; h < num_heads; ++h) {
        const auto qh = c.q.middleCols(h * head_dim, head_dim);
        const auto kh = c.k.middleCols(h * head_dim, head_dim);
        const auto vh = c.v.middleCols(h * head_dim, head_dim);
        Mat<T> scores = (qh * kh.transpose()) * scale;
        for (Eigen::Index i = 0; i < n; ++i) {
            const T row_max = scores.row(i).maxCoeff();
            scores.row(i) = (scores.row(i).array() - row_max).exp().matrix();
            scores.row(i) /= scores.row(i).sum();
        }
        c.heads.middleCols(h * head_dim, head_dim).noalias() = scores * vh;
        c.attn[static_cast<std::size_t>(h)] = std::move(scores);
    }
    c.mid = x + linear_forward(p.out, c.heads);

    c.normed2 = norm_forward(p.norm2, c.mid, c.norm2);
    c.pre_act = linear_forward(p.fc1, c.normed2);
    c.act = c.pre_act.unaryExpr([](T v) { return gelu(v); });
    return c.mid + linear_forward(p.fc2, c.act);
}

template <typename T>
Mat<T> block_backward(const BlockParams<T>& p, int num_heads, const BlockCache<T>& c,
                      const Mat<T>& dy, BlockParams<T>& g) {
    const auto n = dy.rows();
    const int dim = static_cast<int>(dy.cols());
    const int head_dim = dim / num_heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(head_dim));

    // MLP branch.
    Mat<T> dact = linear_backward(p.fc2, c.act, dy, g.fc2);
    const Mat<T> dpre =
        dact.array() * c.pre_act.unaryExpr([](T v) { return gelu_grad(v); }).array();
    const Mat<T> dnormed2 = linear_backward(p.fc1, c.normed2, dpre, g.fc1);
    Mat<T> dmid = dy + norm_backward(p.norm2, c.norm2, dnormed2, g.norm2);

    // Attention branch.
    const Mat<T> dheads = linear_backward(p.out, c.heads, dmid, g.out);
    Mat<T> dq(n, dim), dk(n, dim), dv(n, dim);
    for (int h = 0; h < num_heads; ++h) {
        const Mat<T>& a = c.attn[static_cast<std::size_t>(h)];
        const auto dout = dheads.middleCols(h * head_dim, head_dim);
        const auto qh = c.q.middleCols(h * head_dim, head_dim);
        const auto kh = c.k.middleCols(h * head_dim, head_dim);
        const auto vh = c.v.middleCols(h * head_dim, head_dim);
        const Mat<T> da = dout * vh.transpose();
        dv.middleCols(h * head_dim, head_dim).noalias() = a.transpose() * dout;
        const auto row_dot = (da.array() * a.array()).rowwise().sum();
        const Mat<T> dscores = (a.array() * (da.array().colwise() - row_dot)).matrix() * scale;
        dq.middleCols(h * head_dim, head_dim).noalias() = dscores * kh;
        dk.middleCols(h * head_dim, head_dim).noalias() = dscores.transpose() * qh;
    }
    Mat<T> dnormed1 = linear_backward(p.q, c.normed1, dq, g.q);
    dnormed1 += linear_backward(p.k, c.normed1, dk, g.k);
    dnormed1 += linear_backward(p.v, c.normed1, dv, g.v);
    return dmid + norm_backward(p.norm1, c.norm1, dnormed1, g.norm1);
}

// ---------------------------------------------------------------------------
// Whole-model forward with caches.

template <typename T>
struct ForwardCache {
    std::vector<int> visible;
    Mat<T> visible_patches;
    std::vector<BlockCache<T>> encoder;
    Mat<T> enc_pre_norm;
    NormCache<T> enc_norm;
    Mat<T> latents;
    std::vector<BlockCache<T>> decoder;
    Mat<T> dec_pre_norm;
    NormCache<T> dec_norm;
    Mat<T> dec_out;
};

template <typename T>
Mat<T> run_encoder_stack(const ModelParams<T>& params, const ModelConfig& config, Mat<T> x,
                         ForwardCache<T>& c) {
    c.encoder.resize(params.encoder.size());
    for (std::size_t l = 0; l < params.encoder.size(); ++l) {
        x = block_forward(params.encoder[l], config.enc_heads, x, c.encoder[l]);
    }
    c.enc_pre_norm = std::move(x);
    c.latents = norm_forward(params.enc_norm, c.enc_pre_norm, c.enc_norm);
    return c.latents;
}

template <typename T>
Mat<T> run_encoder(const ModelParams<T>& params, const ModelConfig& config,
                   const Mat<T>& all_patches, const MaskPlan& plan, ForwardCache<T>& c) {
    const PatchGrid grid = config.grid();
    const auto pos = position_table<T>(grid, config.enc_dim);
    c.visible = plan.visible();
    const auto nv = static_cast<Eigen::Index>(c.visible.size());
    c.visible_patches.resize(nv, all_patches.cols());
    Mat<T> pos_rows(nv, config.enc_dim);
    for (Eigen::Index i = 0; i < nv; ++i) {
        c.visible_patches.row(i) = all_patches.row(c.visible[static_cast<std::size_t>(i)]);
        pos_rows.row(i) = pos->row(c.visible[static_cast<std::size_t>(i)]);
    }
    return run_encoder_stack(params, config,
                             Mat<T>(linear_forward(params.patch_embed, c.visible_patches) + pos_rows), c);
}

template <typename T>
Mat<T> decoder_input(const ModelParams<T>& params, const ModelConfig& config, const Mat<T>& latents,
                     const MaskPlan& plan) {
    const int n = config.grid().num_patches();
    const Mat<T> projected = linear_forward(params.enc_to_dec, latents);
    Mat<T> x(n, config.dec_dim);
    const auto flags = plan.mask_flags();
    Eigen::Index next_visible = 0;
    for (int i = 0; i < n; ++i) {
        if (flags[static_cast<std::size_t>(i)]) {
            x.row(i) = params.mask_token.row(0);
        } else {
            x.row(i) = projected.row(next_visible++);
        }
    }
    return x;
}

template <typename T>
Mat<T> run_decoder(const ModelParams<T>& params, const ModelConfig& config, const Mat<T>& latents,
                   const MaskPlan& plan, ForwardCache<T>& c) {
    const PatchGrid grid = config.grid();
    const auto pos = position_table<T>(grid, config.dec_dim);
    Mat<T> x = decoder_input(params, config, latents, plan);
    x += *pos;
    c.decoder.resize(params.decoder.size());
    for (std::size_t l = 0; l < params.decoder.size(); ++l) {
        x = block_forward(params.decoder[l], config.dec_heads, x, c.decoder[l]);
    }
    c.dec_pre_norm = std::move(x);
    c.dec_out = norm_forward(params.dec_norm, c.dec_pre_norm, c.dec_norm);
    return linear_forward(params.head, c.dec_out);
}

template <typename T>
void check_plan(const ModelConfig& config, const MaskPlan& plan) {
    if (!(plan.grid == config.grid())) {
        throw Error(ErrorCode::GeometryMismatch, "mask plan grid does not match model geometry");
    }
}

}  // namespace

// ---------------------------------------------------------------------------

ModelConfig ModelConfig::desk() {
    ModelConfig c;
    c.image_size = 64;
    c.patch_size = 8;
    c.channels = 1;
    c.enc_dim = 64;
    c.enc_depth = 2;
    c.enc_heads = 4;
    c.dec_dim = 32;
    c.dec_depth = 1;
    c.dec_heads = 4;
    c.mlp_ratio = 4.0;
    return c;
}

int ModelConfig::enc_hidden() const { return hidden_width(enc_dim, mlp_ratio); }
int ModelConfig::dec_hidden() const { return hidden_width(dec_dim, mlp_ratio); }

void ModelConfig::validate() const {
    require(image_size > 0 && patch_size > 0, "image_size and patch_size must be positive");
    require(image_size % patch_size == 0, "patch_size must divide image_size");
    require(channels == 1 || channels == 3, "channels must be 1 or 3");
    require(enc_dim > 0 && enc_dim % 4 == 0, "enc_dim must be a positive multiple of 4");
    require(dec_dim > 0 && dec_dim % 4 == 0, "dec_dim must be a positive multiple of 4");
    require(enc_heads > 0 && enc_dim % enc_heads == 0, "enc_dim must be divisible by enc_heads");
    require(dec_heads > 0 && dec_dim % dec_heads == 0, "dec_dim must be divisible by dec_heads");
    require(enc_depth >= 0 && dec_depth >= 0, "depths must be non-negative");
    require(mlp_ratio > 0 && enc_hidden() > 0 && dec_hidden() > 0, "mlp_ratio must be positive");
}

nlohmann::json to_json(const ModelConfig& c) {
    return {{"image_size", c.image_size}, {"patch_size", c.patch_size}, {"channels", c.channels},
            {"enc_dim", c.enc_dim},       {"enc_depth", c.enc_depth},   {"enc_heads", c.enc_heads},
            {"dec_dim", c.dec_dim},       {"dec_depth", c.dec_depth},   {"dec_heads", c.dec_heads},
            {"mlp_ratio", c.mlp_ratio},   {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
    if (!j.is_object()) throw Error(ErrorCode::BadConfig, "model config must be an object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "image_size") c.image_size = value.get<int>();
            else if (key == "patch_size") c.patch_size = value.get<int>();
            else if (key == "channels") c.channels = value.get<int>();
            else if (key == "enc_dim") c.enc_dim = value.get<int>();
            else if (key == "enc_depth") c.enc_depth = value.get<int>();
            else if (key == "enc_heads") c.enc_heads = value.get<int>();
            else if (key == "dec_dim") c.dec_dim = value.get<int>();
            else if (key == "dec_depth") c.dec_depth = value.get<int>();
            else if (key == "dec_heads") c.dec_heads = value.get<int>();
            else if (key == "mlp_ratio") c.mlp_ratio = value.get<double>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else throw Error(ErrorCode::BadConfig, "unknown model key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadConfig, std::string("model config: ") + e.what());
    }
    return c;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& config) {
    config.validate();
    const int pd = config.patch_dim();
    const int ed = config.enc_dim;
    const int dd = config.dec_dim;
    ModelParams<T> p;
    p.patch_embed = {planmae::zeros<T>(ed, pd), planmae::zeros<T>(1, ed)};
    for (int i = 0; i < config.enc_depth; ++i) p.encoder.push_back(zero_block<T>(ed, config.enc_hidden()));
    p.enc_norm = {planmae::zeros<T>(1, ed), planmae::zeros<T>(1, ed)};
    p.enc_to_dec = {planmae::zeros<T>(dd, ed), planmae::zeros<T>(1, dd)};
    p.mask_token = planmae::zeros<T>(1, dd);
    for (int i = 0; i < config.dec_depth; ++i) p.decoder.push_back(zero_block<T>(dd, config.dec_hidden()));
    p.dec_norm = {planmae::zeros<T>(1, dd), planmae::zeros<T>(1, dd)};
    p.head = {planmae::zeros<T>(pd, dd), planmae::zeros<T>(1, pd)};
    return p;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
    ModelParams<U> out;
    auto cast_linear = [](const LinearParams<T>& l) {
        return LinearParams<U>{l.weight.template cast<U>(), l.bias.template cast<U>()};
    };
    auto cast_norm = [](const NormParams<T>& n) {
        return NormParams<U>{n.scale.template cast<U>(), n.shift.template cast<U>()};
    };
    auto cast_block = [&](const BlockParams<T>& b) {
        return BlockParams<U>{cast_norm(b.norm1), cast_linear(b.q),   cast_linear(b.k),
                              cast_linear(b.v),   cast_linear(b.out), cast_norm(b.norm2),
                              cast_linear(b.fc1), cast_linear(b.fc2)};
    };
    out.patch_embed = cast_linear(patch_embed);
    for (const auto& b : encoder) out.encoder.push_back(cast_block(b));
    out.enc_norm = cast_norm(enc_norm);
    out.enc_to_dec = cast_linear(enc_to_dec);
    out.mask_token = mask_token.template cast<U>();
    for (const auto& b : decoder) out.decoder.push_back(cast_block(b));
    out.dec_norm = cast_norm(dec_norm);
    out.head = cast_linear(head);
    return out;
}

std::vector<TensorInfo> tensor_layout(const ModelConfig& config) {
    std::vector<TensorInfo> out;
    const auto params = ModelParams<float>::zeros(config);
    for_each_tensor(params, [&](const std::string& name, const Mat<float>& m) {
        out.push_back({name, static_cast<int>(m.rows()), static_cast<int>(m.cols())});
    });
    return out;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& config) {
    auto params = ModelParams<T>::zeros(config);
    Rng rng(config.seed);
    for_each_tensor(params, [&](const std::string& name, Mat<T>& m) {
        if (ends_with(name, ".scale")) {
            m.setOnes();
        } else if (ends_with(name, ".weight") || name == "mask_token") {
            for (Eigen::Index i = 0; i < m.size(); ++i) {
                m.data()[i] = static_cast<T>(rng.truncated_normal(0.02));
            }
        }
    });
    return params;
}

void check_geometry(const ModelConfig& config, const PatchGrid& grid, int channels) {
    if (!(grid == config.grid()) || channels != config.channels) {
        throw Error(ErrorCode::GeometryMismatch,
                    "input " + std::to_string(grid.image_height()) + "x" +
                        std::to_string(grid.image_width()) + "x" + std::to_string(channels) +
                        " (patch " + std::to_string(grid.patch_size) + ") does not match model " +
                        std::to_string(config.image_size) + "x" + std::to_string(config.image_size) +
                        "x" + std::to_string(config.channels) + " (patch " +
                        std::to_string(config.patch_size) + ")");
    }
}

template <typename T>
Mat<T> patch_matrix(const PatchSequence& seq) {
    Mat<T> m(static_cast<Eigen::Index>(seq.patches.size()),
             static_cast<Eigen::Index>(seq.patch_length()));
    for (std::size_t i = 0; i < seq.patches.size(); ++i) {
        for (std::size_t j = 0; j < seq.patches[i].size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                static_cast<T>(seq.patches[i][j]);
        }
    }
    return m;
}

PatchSequence to_patch_sequence(const Mat<float>& m, const PatchGrid& grid, int channels) {
    PatchSequence seq{grid, channels, {}};
    seq.patches.reserve(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        seq.patches.emplace_back(m.row(i).data(), m.row(i).data() + m.cols());
    }
    return seq;
}

template <typename T>
Mat<T> encode(const ModelParams<T>& params, const ModelConfig& config,
              const PatchSequence& patches, const MaskPlan& plan) {
    check_geometry(config, patches.grid, patches.channels);
    check_plan<T>(config, plan);
    ForwardCache<T> cache;
    return run_encoder(params, config, patch_matrix<T>(patches), plan, cache);
}

template <typename T>
Mat<T> encoder_stack(const ModelParams<T>& params, const ModelConfig& config,
                     const Mat<T>& tokens) {
    ForwardCache<T> cache;
    return run_encoder_stack(params, config, tokens, cache);
}

template <typename T>
Mat<T> decoder_tokens(const ModelParams<T>& params, const ModelConfig& config,
                      const Mat<T>& latents, const MaskPlan& plan) {
    check_plan<T>(config, plan);
    return decoder_input(params, config, latents, plan);
}

template <typename T>
Mat<T> decode_matrix(const ModelParams<T>& params, const ModelConfig& config,
                     const Mat<T>& latents, const MaskPlan& plan) {
    check_plan<T>(config, plan);
    if (latents.rows() != plan.num_visible() || latents.cols() != config.enc_dim) {
        throw Error(ErrorCode::GeometryMismatch, "latent count does not match plan");
    }
    ForwardCache<T> cache;
    return run_decoder(params, config, latents, plan, cache);
}

template <typename T>
PatchSequence decode(const ModelParams<T>& params, const ModelConfig& config,
                     const Mat<T>& latents, const MaskPlan& plan) {
    return to_patch_sequence(decode_matrix(params, config, latents, plan).template cast<float>(),
                             config.grid(), config.channels);
}

template <typename T>
Raster reconstruct(const ModelParams<T>& params, const ModelConfig& config, const Raster& image,
                   const MaskPlan& plan) {
    if (image.height() != config.image_size || image.width() != config.image_size) {
        throw Error(ErrorCode::GeometryMismatch, "image size does not match model");
    }
    PatchSequence seq = patchify(image, config.patch_size);
    check_geometry(config, seq.grid, seq.channels);
    check_plan<T>(config, plan);
    if (plan.masked.empty()) return image;

    ForwardCache<T> cache;
    const Mat<T> latents = run_encoder(params, config, patch_matrix<T>(seq), plan, cache);
    const Mat<T> pred = run_decoder(params, config, latents, plan, cache);
    for (int i : plan.masked) {
        auto& patch = seq.patches[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < patch.size(); ++j) {
            const T v = pred(i, static_cast<Eigen::Index>(j));
            // NaN maps to 0 so a diverged model still yields a valid image.
            patch[j] = std::isfinite(static_cast<double>(v))
                           ? static_cast<float>(std::clamp(v, T(0), T(1)))
                           : (v > T(0) ? 1.0f : 0.0f);
        }
    }
    return unpatchify(seq, true);
}

template <typename T>
T accumulate_gradient(const ModelParams<T>& params, const ModelConfig& config,
                      const PatchSequence& target, const MaskPlan& plan, ModelParams<T>& grads,
                      T weight) {
    check_geometry(config, target.grid, target.channels);
    check_plan<T>(config, plan);
    const Mat<T> target_m = patch_matrix<T>(target);

    ForwardCache<T> c;
    const Mat<T> latents = run_encoder(params, config, target_m, plan, c);
    const Mat<T> pred = run_decoder(params, config, latents, plan, c);

    // Masked mean squared error over every value of every masked patch.
    const auto n_values = static_cast<T>(plan.masked.size()) * static_cast<T>(target_m.cols());
    if (plan.masked.empty()) return T(0);
    Mat<T> dpred = Mat<T>::Zero(pred.rows(), pred.cols());
    T loss = 0;
    for (int i : plan.masked) {
        const auto diff = (pred.row(i) - target_m.row(i)).eval();
        loss += diff.squaredNorm();
        dpred.row(i) = diff * (T(2) * weight / n_values);
    }
    loss /= n_values;

    // Decoder.
    Mat<T> dx = linear_backward(params.head, c.dec_out, dpred, grads.head);
    dx = norm_backward(params.dec_norm, c.dec_norm, dx, grads.dec_norm);
    for (std::size_t l = params.decoder.size(); l-- > 0;) {
        dx = block_backward(params.decoder[l], config.dec_heads, c.decoder[l], dx, grads.decoder[l]);
    }
    // dx now holds the gradient of the assembled token sequence (the fixed
    // positional table takes none).
    Mat<T> dprojected(static_cast<Eigen::Index>(c.visible.size()), config.dec_dim);
    const auto flags = plan.mask_flags();
    Eigen::Index next_visible = 0;
    for (Eigen::Index i = 0; i < dx.rows(); ++i) {
        if (flags[static_cast<std::size_t>(i)]) {
            grads.mask_token.row(0) += dx.row(i);
        } else {
            dprojected.row(next_visible++) = dx.row(i);
        }
    }
    Mat<T> de = linear_backward(params.enc_to_dec, c.latents, dprojected, grads.enc_to_dec);

    // Encoder.
    de = norm_backward(params.enc_norm, c.enc_norm, de, grads.enc_norm);
    for (std::size_t l = params.encoder.size(); l-- > 0;) {
        de = block_backward(params.encoder[l], config.enc_heads, c.encoder[l], de, grads.encoder[l]);
    }
    linear_backward(params.patch_embed, c.visible_patches, de, grads.patch_embed);
    return loss;
}

#define PLANMAE_INSTANTIATE(T)                                                                   \
    template struct ModelParams<T>;                                                              \
    template ModelParams<T> init_params<T>(const ModelConfig&);                                  \
    template Mat<T> encode<T>(const ModelParams<T>&, const ModelConfig&, const PatchSequence&,   \
                              const MaskPlan&);                                                  \
    template Mat<T> decode_matrix<T>(const ModelParams<T>&, const ModelConfig&, const Mat<T>&,   \
                                     const MaskPlan&);                                           \
    template PatchSequence decode<T>(const ModelParams<T>&, const ModelConfig&, const Mat<T>&,   \
                                     const MaskPlan&);                                           \
    template Raster reconstruct<T>(const ModelParams<T>&, const ModelConfig&, const Raster&,     \
                                   const MaskPlan&);                                             \
    template T accumulate_gradient<T>(const ModelParams<T>&, const ModelConfig&,                 \
                                      const PatchSequence&, const MaskPlan&, ModelParams<T>&, T); \
    template Mat<T> patch_matrix<T>(const PatchSequence&);                                       \
    template Mat<T> encoder_stack<T>(const ModelParams<T>&, const ModelConfig&, const Mat<T>&);  \
    template Mat<T> decoder_tokens<T>(const ModelParams<T>&, const ModelConfig&, const Mat<T>&,  \
                                      const MaskPlan&);

PLANMAE_INSTANTIATE(float)
PLANMAE_INSTANTIATE(double)

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;

#undef PLANMAE_INSTANTIATE

}  // namespace planmae
