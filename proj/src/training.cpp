#include "planmae/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "planmae/error.hpp"
#include "planmae/rng.hpp"

namespace planmae {

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads.
template <typename Fn>
void parallel_for(std::size_t n, Fn fn) {
    const std::size_t workers =
        std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::int64_t epoch, std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, 0x65706f6368ULL, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }
    return order;
}

}  // namespace

LossReport masked_mse(const PatchSequence& pred, const PatchSequence& target, const MaskPlan& plan) {
    if (!(pred.grid == plan.grid) || !(target.grid == plan.grid) ||
        pred.channels != target.channels ||
        pred.patches.size() != static_cast<std::size_t>(plan.grid.num_patches()) ||
        target.patches.size() != pred.patches.size()) {
        throw Error(ErrorCode::GeometryMismatch, "prediction/target/plan geometry disagree");
    }
    LossReport report;
    double sum = 0.0;
    for (int i : plan.masked) {
        const auto& p = pred.patches[static_cast<std::size_t>(i)];
        const auto& t = target.patches[static_cast<std::size_t>(i)];
        if (p.size() != t.size() || p.size() != pred.patch_length()) {
            throw Error(ErrorCode::GeometryMismatch, "patch length mismatch");
        }
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double d = static_cast<double>(p[j]) - static_cast<double>(t[j]);
            sum += d * d;
        }
        report.n_masked_values += p.size();
    }
    report.loss = report.n_masked_values == 0 ? 0.0 : sum / static_cast<double>(report.n_masked_values);
    return report;
}

template <typename T>
GradResult<T> grad(const ModelParams<T>& params, const ModelConfig& config,
                   const std::vector<PatchSequence>& batch, const std::vector<MaskPlan>& plans,
                   T loss_scale) {
    if (batch.empty() || batch.size() != plans.size()) {
        throw Error(ErrorCode::ShapeMismatch, "batch and plan counts differ or are zero");
    }
    const T weight = loss_scale / static_cast<T>(batch.size());
    // Per-image gradients are summed in image order so the result does not
    // depend on the thread count.
    std::vector<ModelParams<T>> per_image(batch.size());
    std::vector<T> losses(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) {
        per_image[i] = ModelParams<T>::zeros(config);
        losses[i] = accumulate_gradient(params, config, batch[i], plans[i], per_image[i], weight);
    });
    GradResult<T> out{T(0), std::move(per_image[0])};
    auto total = tensor_list(out.grads);
    for (std::size_t i = 1; i < batch.size(); ++i) {
        const auto part = tensor_list(std::as_const(per_image[i]));
        for (std::size_t t = 0; t < total.size(); ++t) *total[t] += *part[t];
    }
    for (T l : losses) out.loss += l;
    out.loss /= static_cast<T>(batch.size());
    return out;
}

template GradResult<float> grad<float>(const ModelParams<float>&, const ModelConfig&,
                                       const std::vector<PatchSequence>&,
                                       const std::vector<MaskPlan>&, float);
template GradResult<double> grad<double>(const ModelParams<double>&, const ModelConfig&,
                                         const std::vector<PatchSequence>&,
                                         const std::vector<MaskPlan>&, double);

OptState OptState::for_params(const ModelConfig& config) {
    OptState s;
    s.m = ModelParams<float>::zeros(config);
    s.v = ModelParams<float>::zeros(config);
    return s;
}

void step(ModelParams<float>& params, OptState& opt, const ModelParams<float>& grads) {
    std::vector<std::string> names;
    for_each_tensor(params, [&](const std::string& name, const Mat<float>&) { names.push_back(name); });
    auto p = tensor_list(params);
    auto m = tensor_list(opt.m);
    auto v = tensor_list(opt.v);
    const auto g = tensor_list(grads);
    if (m.size() != p.size() || v.size() != p.size() || g.size() != p.size()) {
        throw Error(ErrorCode::ShapeMismatch, "optimizer/gradient layout differs from params");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i]->rows() != g[i]->rows() || p[i]->cols() != g[i]->cols() ||
            p[i]->rows() != m[i]->rows() || p[i]->cols() != m[i]->cols() ||
            p[i]->rows() != v[i]->rows() || p[i]->cols() != v[i]->cols()) {
            throw Error(ErrorCode::ShapeMismatch, "shape mismatch at " + names[i]);
        }
    }

    const std::int64_t t = opt.step + 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
    const auto b1 = static_cast<float>(opt.beta1);
    const auto b2 = static_cast<float>(opt.beta2);
    const auto lr = static_cast<float>(opt.learning_rate);
    const auto step_size = static_cast<float>(opt.learning_rate / bc1);
    const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
    const auto eps = static_cast<float>(opt.epsilon);
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto pa = p[i]->array();
        const auto ga = g[i]->array();
        auto ma = m[i]->array();
        auto va = v[i]->array();
        if (opt.weight_decay != 0.0 && ends_with(names[i], ".weight")) {
            pa *= 1.0f - lr * static_cast<float>(opt.weight_decay);
        }
        ma = b1 * ma + (1.0f - b1) * ga;
        va = b2 * va + (1.0f - b2) * ga.square();
        pa -= step_size * ma / (va.sqrt() * inv_sqrt_bc2 + eps);
    }
    opt.step = t;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw Error(ErrorCode::BadConfig, "batch_size must be >= 1");
    if (steps < 0) throw Error(ErrorCode::BadConfig, "steps must be >= 0");
    if (!(learning_rate >= 0.0)) throw Error(ErrorCode::BadConfig, "learning_rate must be >= 0");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) {
        throw Error(ErrorCode::BadConfig, "betas must lie in [0,1)");
    }
    if (!(epsilon > 0)) throw Error(ErrorCode::BadConfig, "epsilon must be positive");
    if (!(weight_decay >= 0)) throw Error(ErrorCode::BadConfig, "weight_decay must be >= 0");
    if (checkpoint_every < 0) throw Error(ErrorCode::BadConfig, "checkpoint_every must be >= 0");
    if (strategy.strategy == Strategy::custom) {
        throw Error(ErrorCode::BadConfig, "training strategy cannot be custom");
    }
}

std::int64_t TrainConfig::effective_warmup() const {
    if (warmup_steps >= 0) return warmup_steps;
    return steps / 20;
}

double TrainConfig::lr_at(std::int64_t s) const {
    const std::int64_t warmup = effective_warmup();
    if (s < warmup) {
        return learning_rate * static_cast<double>(s + 1) / static_cast<double>(warmup);
    }
    const double span = static_cast<double>(std::max<std::int64_t>(1, steps - warmup));
    const double progress = std::min(1.0, static_cast<double>(s - warmup) / span);
    return learning_rate * 0.5 * (1.0 + std::cos(M_PI * progress));
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"batch_size", c.batch_size},
            {"steps", c.steps},
            {"learning_rate", c.learning_rate},
            {"warmup_steps", c.warmup_steps},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"epsilon", c.epsilon},
            {"weight_decay", c.weight_decay},
            {"strategy", c.strategy.to_string()},
            {"seed", c.seed},
            {"checkpoint_every", c.checkpoint_every}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    if (!j.is_object()) throw Error(ErrorCode::BadConfig, "training config must be an object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "batch_size") c.batch_size = value.get<int>();
            else if (key == "steps") c.steps = value.get<std::int64_t>();
            else if (key == "learning_rate") c.learning_rate = value.get<double>();
            else if (key == "warmup_steps") c.warmup_steps = value.get<std::int64_t>();
            else if (key == "beta1") c.beta1 = value.get<double>();
            else if (key == "beta2") c.beta2 = value.get<double>();
            else if (key == "epsilon") c.epsilon = value.get<double>();
            else if (key == "weight_decay") c.weight_decay = value.get<double>();
            else if (key == "strategy") c.strategy = StrategySpec::parse(value.get<std::string>());
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "checkpoint_every") c.checkpoint_every = value.get<std::int64_t>();
            else throw Error(ErrorCode::BadConfig, "unknown training key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadConfig, std::string("training config: ") + e.what());
    }
    return c;
}

std::vector<std::size_t> batch_indices(const TrainConfig& config, std::size_t corpus_size,
                                       std::int64_t step) {
    if (corpus_size == 0) throw Error(ErrorCode::EmptyCorpus, "corpus is empty");
    std::vector<std::size_t> out;
    out.reserve(static_cast<std::size_t>(config.batch_size));
    std::int64_t cached_epoch = -1;
    std::vector<std::size_t> order;
    const auto n = static_cast<std::int64_t>(corpus_size);
    for (int j = 0; j < config.batch_size; ++j) {
        const std::int64_t pos = step * config.batch_size + j;
        const std::int64_t epoch = pos / n;
        if (epoch != cached_epoch) {
            order = epoch_order(config.seed, epoch, corpus_size);
            cached_epoch = epoch;
        }
        out.push_back(order[static_cast<std::size_t>(pos % n)]);
    }
    return out;
}

MaskPlan training_plan(const TrainConfig& config, const PatchGrid& grid, std::int64_t step,
                       std::size_t slot) {
    const std::uint64_t seed =
        derive_seed(config.seed, static_cast<std::uint64_t>(step) + 1, static_cast<std::uint64_t>(slot));
    return config.strategy.plan(grid, seed);
}

FitResult fit(const ModelConfig& config, const TrainConfig& train_cfg,
              const std::vector<Raster>& corpus, std::optional<TrainState> resume,
              const StepCallback& on_step) {
    config.validate();
    train_cfg.validate();
    if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "training corpus is empty");

    const PatchGrid grid = config.grid();
    std::vector<PatchSequence> patches;
    patches.reserve(corpus.size());
    for (const Raster& image : corpus) {
        if (image.height() != config.image_size || image.width() != config.image_size) {
            throw Error(ErrorCode::GeometryMismatch, "corpus image size does not match model");
        }
        patches.push_back(patchify(image, config.patch_size));
        check_geometry(config, patches.back().grid, patches.back().channels);
    }

    FitResult result;
    if (resume) {
        if (!(resume->model == config)) {
            throw Error(ErrorCode::BadConfig, "resume checkpoint was trained with a different model config");
        }
        result.state = std::move(*resume);
    } else {
        result.state = TrainState{config, init_params<float>(config), OptState::for_params(config)};
    }
    OptState& opt = result.state.opt;
    opt.beta1 = train_cfg.beta1;
    opt.beta2 = train_cfg.beta2;
    opt.epsilon = train_cfg.epsilon;
    opt.weight_decay = train_cfg.weight_decay;

    for (std::int64_t s = opt.step; s < train_cfg.steps; ++s) {
        const auto indices = batch_indices(train_cfg, patches.size(), s);
        std::vector<PatchSequence> batch;
        std::vector<MaskPlan> plans;
        double ratio_sum = 0.0;
        for (std::size_t j = 0; j < indices.size(); ++j) {
            batch.push_back(patches[indices[j]]);
            plans.push_back(training_plan(train_cfg, grid, s, j));
            ratio_sum += plans.back().realized_ratio();
        }
        const auto g = grad(result.state.params, config, batch, plans);
        opt.learning_rate = train_cfg.lr_at(s);
        step(result.state.params, opt, g.grads);

        const HistoryRow row{s + 1, static_cast<double>(g.loss),
                             ratio_sum / static_cast<double>(plans.size())};
        if (!std::isfinite(row.loss)) {
            throw Error(ErrorCode::BadConfig, "training diverged at step " + std::to_string(row.step));
        }
        result.history.push_back(row);
        if (on_step) on_step(result.state, row);
    }
    return result;
}

}  // namespace planmae
