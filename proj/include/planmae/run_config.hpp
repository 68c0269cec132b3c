#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "planmae/dataset.hpp"
#include "planmae/masking.hpp"
#include "planmae/metrics.hpp"
#include "planmae/model.hpp"
#include "planmae/service.hpp"
#include "planmae/training.hpp"

namespace planmae {

struct DatasetSection {
    std::string out;
    SplitCounts counts;
    std::uint64_t seed = 0;
    Mode mode = Mode::line_drawing;
    int resolution = 256;
};

struct MaskingSection {
    StrategySpec train{Strategy::random, 0.75};
    std::vector<StrategySpec> eval = default_eval_strategies();
    std::uint64_t seed = 0;
};

struct TrainingSection {
    TrainConfig train;  // strategy comes from the masking section
    std::string corpus;
    std::string out_dir = "runs/default";
};

/// Everything a subcommand needs. Sources in increasing precedence:
/// built-in defaults (optionally the "desk" profile), the JSON file, then
/// command-line flags. Unknown keys anywhere are rejected.
struct RunConfig {
    std::string profile = "default";
    ModelConfig model;
    TrainingSection training;
    DatasetSection dataset;
    MaskingSection masking;
    ServiceOptions service;

    static RunConfig defaults(const std::string& profile);
    /// Applies a JSON document on top of `base`.
    static RunConfig merge(RunConfig base, const nlohmann::json& doc);
    static RunConfig from_file(const std::filesystem::path& path, const std::string& profile = {});

    /// Fills derived fields and validates every section (BadConfig).
    void finalize();
    nlohmann::json to_json() const;
};

}  // namespace planmae
