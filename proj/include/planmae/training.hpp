#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "planmae/masking.hpp"
#include "planmae/model.hpp"
#include "planmae/patches.hpp"
#include "planmae/raster.hpp"

namespace planmae {

struct LossReport {
    double loss = 0.0;            // mean squared error over masked values
    std::size_t n_masked_values = 0;
    std::int64_t step = 0;
};

/// Mean over every value of every masked patch of (pred - target)^2.
/// Visible patches contribute nothing; an empty mask gives loss 0.
LossReport masked_mse(const PatchSequence& pred, const PatchSequence& target, const MaskPlan& plan);

/// Mean masked MSE over a batch and its gradient with respect to every
/// parameter. `loss_scale` multiplies the objective (and hence every
/// gradient entry).
template <typename T>
struct GradResult {
    T loss;
    ModelParams<T> grads;
};

template <typename T>
GradResult<T> grad(const ModelParams<T>& params, const ModelConfig& config,
                   const std::vector<PatchSequence>& batch, const std::vector<MaskPlan>& plans,
                   T loss_scale = T(1));

/// Adaptive-moment optimizer state with decoupled weight decay. Moments are
/// kept in the same layout as the parameters.
struct OptState {
    ModelParams<float> m;
    ModelParams<float> v;
    std::int64_t step = 0;
    double learning_rate = 1.5e-4;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double epsilon = 1e-8;
    double weight_decay = 0.05;

    static OptState for_params(const ModelConfig& config);
};

/// One bias-corrected update at `opt.learning_rate`. Weight decay applies to
/// `.weight` matrices only. Throws ShapeMismatch if layouts disagree.
void step(ModelParams<float>& params, OptState& opt, const ModelParams<float>& grads);

struct TrainConfig {
    int batch_size = 16;
    std::int64_t steps = 1000;
    double learning_rate = 1.5e-4;
    std::int64_t warmup_steps = -1;  // negative: 5% of steps
    double beta1 = 0.9;
    double beta2 = 0.95;
    double epsilon = 1e-8;
    double weight_decay = 0.05;
    StrategySpec strategy{Strategy::random, 0.75};
    std::uint64_t seed = 0;
    std::int64_t checkpoint_every = 0;  // 0: only the final checkpoint

    void validate() const;
    std::int64_t effective_warmup() const;
    /// Linear warmup then cosine decay to zero at `steps`.
    double lr_at(std::int64_t step) const;

    bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Corpus index for each slot of the batch at `step`: each epoch visits
/// the corpus in an order shuffled from (seed, epoch).
std::vector<std::size_t> batch_indices(const TrainConfig& config, std::size_t corpus_size,
                                       std::int64_t step);

/// Mask plan for batch slot `slot` at `step`. The random strategy is
/// reseeded from (seed, step, slot); geometric ones are fixed.
MaskPlan training_plan(const TrainConfig& config, const PatchGrid& grid, std::int64_t step,
                       std::size_t slot);

struct TrainState {
    ModelConfig model;
    ModelParams<float> params;
    OptState opt;
};

struct HistoryRow {
    std::int64_t step;  // 1-based
    double loss;
    double realized_ratio;
};

struct FitResult {
    TrainState state;
    std::vector<HistoryRow> history;
};

/// Called after each completed step with (state, step). Used for periodic
/// checkpoints and progress output.
using StepCallback = std::function<void(const TrainState&, const HistoryRow&)>;

/// Trains from `resume` (or fresh init) until train_cfg.steps. The result is
/// a pure function of (configs, seed, corpus, resume).
FitResult fit(const ModelConfig& config, const TrainConfig& train_cfg,
              const std::vector<Raster>& corpus, std::optional<TrainState> resume = std::nullopt,
              const StepCallback& on_step = {});

}  // namespace planmae
