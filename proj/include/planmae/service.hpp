#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "planmae/checkpoint.hpp"

namespace httplib {
class Server;
}

namespace planmae {

struct ServiceOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t max_body_bytes = 8u << 20;
    std::string cors_origin = "*";
};

nlohmann::json to_json(const ServiceOptions& options);
ServiceOptions service_options_from_json(const nlohmann::json& j, ServiceOptions base = {});

struct HttpReply {
    int status;
    nlohmann::json body;
};

/// JSON inference API under /v1:
///
///   GET  /v1/health       200 {"status":"ok","model_loaded":true}, 503 until a
///                         checkpoint is loaded
///   GET  /v1/model        image_size, patch_size, rows, cols, num_patches,
///                         channels, mode, checkpoint_step
///   POST /v1/reconstruct  {"image": base64 PNG,
///                          either "strategy","ratio"[,"seed","side","anchor"]
///                          or "masked": [indices],
///                          "return_metrics": bool}
///                         -> {"reconstruction": base64 PNG, "masked_indices",
///                             "realized_ratio"[, "metrics": {"psnr","ssim"}]}
///
/// Errors are {"error": code, "detail": text}: 400 bad_request / bad_image /
/// bad_geometry / bad_mask, 413 too_large, 503 not_ready, 500 internal.
/// Infinite PSNR is reported as the string "inf".
///
/// The loaded model is immutable; handlers share it without locking beyond
/// the pointer copy.
class InferenceService {
public:
    explicit InferenceService(ServiceOptions options = {});
    ~InferenceService();
    InferenceService(const InferenceService&) = delete;
    InferenceService& operator=(const InferenceService&) = delete;

    void load(Checkpoint checkpoint);
    bool model_loaded() const;

    HttpReply health() const;
    HttpReply model_card() const;
    HttpReply reconstruct(const std::string& request_body) const;

    /// Binds (port 0 picks a free port) and returns the bound port, or -1.
    int bind();
    /// Blocks serving requests until stop().
    bool serve();
    void stop();
    void wait_until_ready() const;

private:
    struct Loaded;
    std::shared_ptr<const Loaded> current() const;

    ServiceOptions options_;
    mutable std::mutex mutex_;
    std::shared_ptr<const Loaded> loaded_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace planmae
