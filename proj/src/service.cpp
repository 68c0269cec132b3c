#include "planmae/service.hpp"

#include <httplib.h>

#include <cmath>

#include "planmae/error.hpp"
#include "planmae/image_io.hpp"
#include "planmae/metrics.hpp"

namespace planmae {

struct InferenceService::Loaded {
    Checkpoint checkpoint;
    PatchGrid grid;
};

namespace {

HttpReply fail(int status, std::string code, std::string detail) {
    return {status, {{"error", std::move(code)}, {"detail", std::move(detail)}}};
}

nlohmann::json number_or_inf(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

}  // namespace

nlohmann::json to_json(const ServiceOptions& o) {
    return {{"host", o.host}, {"port", o.port}, {"max_body_bytes", o.max_body_bytes},
            {"cors_origin", o.cors_origin}};
}

ServiceOptions service_options_from_json(const nlohmann::json& j, ServiceOptions o) {
    if (!j.is_object()) throw Error(ErrorCode::BadConfig, "service config must be an object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "host") o.host = value.get<std::string>();
            else if (key == "port") o.port = value.get<int>();
            else if (key == "max_body_bytes") o.max_body_bytes = value.get<std::size_t>();
            else if (key == "cors_origin") o.cors_origin = value.get<std::string>();
            else throw Error(ErrorCode::BadConfig, "unknown service key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadConfig, std::string("service config: ") + e.what());
    }
    if (o.port < 0 || o.port > 65535) throw Error(ErrorCode::BadConfig, "port out of range");
    return o;
}

InferenceService::InferenceService(ServiceOptions options) : options_(std::move(options)) {}

InferenceService::~InferenceService() { stop(); }

void InferenceService::load(Checkpoint checkpoint) {
    auto loaded = std::make_shared<Loaded>();
    loaded->grid = checkpoint.config.grid();
    loaded->checkpoint = std::move(checkpoint);
    // Optimizer moments are not needed for inference.
    loaded->checkpoint.opt.reset();
    std::lock_guard lock(mutex_);
    loaded_ = std::move(loaded);
}

std::shared_ptr<const InferenceService::Loaded> InferenceService::current() const {
    std::lock_guard lock(mutex_);
    return loaded_;
}

bool InferenceService::model_loaded() const { return current() != nullptr; }

HttpReply InferenceService::health() const {
    if (!model_loaded()) return {503, {{"status", "loading"}, {"model_loaded", false}}};
    return {200, {{"status", "ok"}, {"model_loaded", true}}};
}

HttpReply InferenceService::model_card() const {
    const auto model = current();
    if (!model) return fail(503, "not_ready", "model not loaded");
    const ModelConfig& c = model->checkpoint.config;
    return {200,
            {{"image_size", c.image_size},
             {"patch_size", c.patch_size},
             {"rows", model->grid.rows},
             {"cols", model->grid.cols},
             {"num_patches", model->grid.num_patches()},
             {"channels", c.channels},
             {"mode", to_string(c.channels == 3 ? Mode::colored : Mode::line_drawing)},
             {"checkpoint_step", model->checkpoint.step}}};
}

HttpReply InferenceService::reconstruct(const std::string& request_body) const {
    const auto model = current();
    if (!model) return fail(503, "not_ready", "model not loaded");
    const ModelConfig& config = model->checkpoint.config;

    nlohmann::json req;
    try {
        req = nlohmann::json::parse(request_body);
    } catch (const nlohmann::json::exception& e) {
        return fail(400, "bad_request", std::string("body is not JSON: ") + e.what());
    }
    if (!req.is_object()) return fail(400, "bad_request", "body must be a JSON object");
    if (!req.contains("image") || !req["image"].is_string()) {
        return fail(400, "bad_image", "missing base64 'image'");
    }
    const bool has_mask = req.contains("masked");
    const bool has_strategy = req.contains("strategy");
    if (has_mask == has_strategy) {
        return fail(400, "bad_request", "give exactly one of 'strategy' or 'masked'");
    }

    Raster image;
    try {
        image = decode_png(base64_decode(req["image"].get<std::string>()));
    } catch (const Error& e) {
        return fail(400, "bad_image", e.what());
    }
    if (image.height() != config.image_size || image.width() != config.image_size) {
        return fail(400, "bad_geometry",
                    "image is " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                        ", model expects " + std::to_string(config.image_size) + " square");
    }
    image = convert_mode(image, config.channels == 3 ? Mode::colored : Mode::line_drawing);

    MaskPlan plan;
    try {
        if (has_mask) {
            if (!req["masked"].is_array()) return fail(400, "bad_mask", "'masked' must be an array");
            std::vector<int> indices;
            for (const auto& v : req["masked"]) {
                if (!v.is_number_integer()) return fail(400, "bad_mask", "mask indices must be integers");
                const auto idx = v.get<long long>();
                if (idx < 0 || idx >= model->grid.num_patches()) {
                    return fail(400, "bad_mask", "index " + std::to_string(idx) + " outside grid");
                }
                indices.push_back(static_cast<int>(idx));
            }
            plan = plan_explicit(model->grid, std::move(indices));
        } else {
            StrategySpec spec;
            spec.strategy = strategy_from_string(req["strategy"].get<std::string>());
            if (spec.strategy == Strategy::custom) {
                return fail(400, "bad_request", "use 'masked' for custom plans");
            }
            spec.ratio = req.value("ratio", spec.ratio);
            if (!(spec.ratio >= 0.0 && spec.ratio <= 1.0)) {
                return fail(400, "bad_request", "ratio outside [0,1]");
            }
            if (req.contains("side")) spec.side = side_from_string(req["side"].get<std::string>());
            if (req.contains("anchor")) spec.anchor = anchor_from_string(req["anchor"].get<std::string>());
            plan = spec.plan(model->grid, req.value("seed", std::uint64_t{0}));
        }
    } catch (const Error& e) {
        return fail(400, e.code() == ErrorCode::BadMask ? "bad_mask" : "bad_request", e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail(400, "bad_request", e.what());
    }

    try {
        const Raster recon = planmae::reconstruct(model->checkpoint.params, config, image, plan);
        nlohmann::json body = {{"reconstruction", base64_encode(encode_png(recon))},
                               {"masked_indices", plan.masked},
                               {"realized_ratio", plan.realized_ratio()}};
        if (req.value("return_metrics", false)) {
            body["metrics"] = {{"psnr", number_or_inf(psnr(recon, image))}, {"ssim", ssim(recon, image)}};
        }
        return {200, std::move(body)};
    } catch (const std::exception& e) {
        return fail(500, "internal", e.what());
    }
}

int InferenceService::bind() {
    server_ = std::make_unique<httplib::Server>();
    auto& srv = *server_;
    srv.set_payload_max_length(options_.max_body_bytes);
    srv.set_default_headers({{"Access-Control-Allow-Origin", options_.cors_origin},
                             {"Access-Control-Allow-Headers", "Content-Type"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});

    auto send = [](httplib::Response& res, const HttpReply& reply) {
        res.status = reply.status;
        res.set_content(reply.body.dump(), "application/json");
    };
    srv.Get("/v1/health", [this, send](const httplib::Request&, httplib::Response& res) {
        send(res, health());
    });
    srv.Get("/v1/model", [this, send](const httplib::Request&, httplib::Response& res) {
        send(res, model_card());
    });
    srv.Post("/v1/reconstruct", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, reconstruct(req.body));
    });
    srv.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    srv.set_error_handler([send](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        switch (res.status) {
            case 413: send(res, fail(413, "too_large", "request body exceeds the size cap")); break;
            case 404: send(res, fail(404, "not_found", "no such endpoint")); break;
            case 400: send(res, fail(400, "bad_request", "malformed HTTP request")); break;
            default: send(res, fail(res.status, "error", "request failed")); break;
        }
    });
    srv.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "unknown";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        send(res, fail(500, "internal", what));
    });

    if (options_.port == 0) return srv.bind_to_any_port(options_.host);
    return srv.bind_to_port(options_.host, options_.port) ? options_.port : -1;
}

bool InferenceService::serve() {
    if (!server_) return false;
    return server_->listen_after_bind();
}

void InferenceService::stop() {
    if (server_) server_->stop();
}

void InferenceService::wait_until_ready() const {
    if (server_) server_->wait_until_ready();
}

}  // namespace planmae
