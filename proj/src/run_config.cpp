#include "planmae/run_config.hpp"

#include <fstream>

#include "planmae/error.hpp"

namespace planmae {

namespace {

void reject_unknown(const nlohmann::json& obj, std::initializer_list<std::string_view> known,
                    const std::string& where) {
    if (!obj.is_object()) throw Error(ErrorCode::BadConfig, where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (auto k : known) ok = ok || key == k;
        if (!ok) throw Error(ErrorCode::BadConfig, "unknown key '" + key + "' in " + where);
    }
}

}  // namespace

RunConfig RunConfig::defaults(const std::string& profile) {
    RunConfig c;
    c.profile = profile;
    if (profile == "desk") {
        c.model = ModelConfig::desk();
        c.dataset.resolution = 64;
        c.training.train.learning_rate = 1e-3;
    } else if (profile != "default") {
        throw Error(ErrorCode::BadConfig, "unknown profile '" + profile + "'");
    }
    return c;
}

RunConfig RunConfig::merge(RunConfig c, const nlohmann::json& doc) {
    reject_unknown(doc, {"profile", "model", "training", "dataset", "masking", "service"}, "config");
    try {
        if (doc.contains("model")) c.model = model_config_from_json(doc["model"], c.model);
        if (doc.contains("training")) {
            nlohmann::json t = doc["training"];
            reject_unknown(t,
                           {"batch_size", "steps", "learning_rate", "warmup_steps", "beta1", "beta2",
                            "epsilon", "weight_decay", "seed", "checkpoint_every", "corpus", "out_dir"},
                           "training");
            if (t.contains("corpus")) c.training.corpus = t["corpus"].get<std::string>();
            if (t.contains("out_dir")) c.training.out_dir = t["out_dir"].get<std::string>();
            t.erase("corpus");
            t.erase("out_dir");
            c.training.train = train_config_from_json(t, c.training.train);
        }
        if (doc.contains("dataset")) {
            const auto& d = doc["dataset"];
            reject_unknown(d, {"out", "train", "val", "test", "seed", "mode", "resolution"}, "dataset");
            c.dataset.out = d.value("out", c.dataset.out);
            c.dataset.counts.train = d.value("train", c.dataset.counts.train);
            c.dataset.counts.val = d.value("val", c.dataset.counts.val);
            c.dataset.counts.test = d.value("test", c.dataset.counts.test);
            c.dataset.seed = d.value("seed", c.dataset.seed);
            if (d.contains("mode")) c.dataset.mode = mode_from_string(d["mode"].get<std::string>());
            c.dataset.resolution = d.value("resolution", c.dataset.resolution);
        }
        if (doc.contains("masking")) {
            const auto& m = doc["masking"];
            reject_unknown(m, {"strategy", "ratio", "side", "anchor", "seed", "eval_strategies"}, "masking");
            if (m.contains("strategy")) c.masking.train.strategy = strategy_from_string(m["strategy"].get<std::string>());
            c.masking.train.ratio = m.value("ratio", c.masking.train.ratio);
            if (m.contains("side")) c.masking.train.side = side_from_string(m["side"].get<std::string>());
            if (m.contains("anchor")) c.masking.train.anchor = anchor_from_string(m["anchor"].get<std::string>());
            c.masking.seed = m.value("seed", c.masking.seed);
            if (m.contains("eval_strategies")) {
                c.masking.eval.clear();
                for (const auto& s : m["eval_strategies"]) c.masking.eval.push_back(StrategySpec::parse(s.get<std::string>()));
            }
        }
        if (doc.contains("service")) c.service = service_options_from_json(doc["service"], c.service);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadConfig, e.what());
    }
    return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path, const std::string& profile) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadConfig, "config " + path.string() + ": " + e.what());
    }
    std::string chosen = profile;
    if (chosen.empty()) chosen = doc.value("profile", std::string("default"));
    return merge(defaults(chosen), doc);
}

void RunConfig::finalize() {
    model.validate();
    training.train.strategy = masking.train;
    training.train.validate();
    if (!(masking.train.ratio >= 0.0 && masking.train.ratio <= 1.0)) {
        throw Error(ErrorCode::BadRatio, "masking ratio outside [0,1]");
    }
    if (dataset.resolution <= 0) throw Error(ErrorCode::BadConfig, "dataset resolution must be positive");
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json training_json = planmae::to_json(training.train);
    training_json.erase("strategy");
    training_json["corpus"] = training.corpus;
    training_json["out_dir"] = training.out_dir;
    nlohmann::json eval = nlohmann::json::array();
    for (const auto& s : masking.eval) eval.push_back(s.to_string());
    return {
        {"profile", profile},
        {"model", planmae::to_json(model)},
        {"training", training_json},
        {"dataset",
         {{"out", dataset.out},
          {"train", dataset.counts.train},
          {"val", dataset.counts.val},
          {"test", dataset.counts.test},
          {"seed", dataset.seed},
          {"mode", to_string(dataset.mode)},
          {"resolution", dataset.resolution}}},
        {"masking",
         {{"strategy", to_string(masking.train.strategy)},
          {"ratio", masking.train.ratio},
          {"side", to_string(masking.train.side)},
          {"anchor", to_string(masking.train.anchor)},
          {"seed", masking.seed},
          {"eval_strategies", eval}}},
        {"service", planmae::to_json(service)},
    };
}

}  // namespace planmae
