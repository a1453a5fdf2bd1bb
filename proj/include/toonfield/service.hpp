#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "toonfield/errors.hpp"
#include "toonfield/trainer.hpp"

namespace httplib {
class Server;
}

namespace toonfield {

// Invalid request field. The HTTP layer answers 400 naming `field()`.
class RequestError : public ArgumentError {
public:
    RequestError(std::string field, const std::string& what)
        : ArgumentError(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// One image render. Without a style image or style seed the style path is disabled.
struct RenderSpec {
    int64_t seed = 0;
    double pitch = std::numbers::pi / 2;
    double yaw = std::numbers::pi / 2;
    int64_t split_index = 0;
    torch::Tensor style_image;          // [3, H, W] in [-1, 1]
    std::optional<int64_t> style_seed;
    int64_t resolution = 0;             // 0 = model.image_res
};

torch::Tensor identity_code(int64_t seed, int64_t z_dim);
torch::Tensor style_code_from_seed(int64_t seed, int64_t style_dim);

// Checks ranges against the model and service limits; throws RequestError.
void validate_spec(const LoadedModel& model, const RenderSpec& spec, int64_t max_resolution);

// Deterministic render: bin-midpoint depths, no gradient. Returns [3, res, res].
torch::Tensor render_single(const LoadedModel& model, const RenderSpec& spec);

// Style code [style_dim] for an image [3, H, W].
torch::Tensor encode_style_image(const LoadedModel& model, const torch::Tensor& image);

// HTTP front end over an immutable model snapshot.
//   GET  /health        {"status": "ok"}
//   GET  /model/info    site counts, resolution limits, pose bounds
//   POST /render        JSON request -> image/png
//   POST /style/encode  PNG body (or JSON {"image": base64}) -> {"code": [...]}
class RenderService {
public:
    RenderService(LoadedModel model, const ServiceConfig& cfg);
    ~RenderService();

    nlohmann::json info() const;
    RenderSpec parse_render_request(const nlohmann::json& body) const;
    std::string render_png(const RenderSpec& spec) const;

    // Binds (port 0 picks a free port) and serves on a background thread.
    int start(const std::string& host, int port);
    // Blocks until stop() is called from another thread or a signal handler.
    void listen(const std::string& host, int port);
    void stop();
    int port() const { return port_; }

private:
    void install_routes();

    LoadedModel model_;
    ServiceConfig cfg_;
    std::unique_ptr<httplib::Server> server_;
    std::unique_ptr<std::counting_semaphore<>> slots_;
    std::thread thread_;
    std::atomic<uint64_t> error_counter_{0};
    int port_ = 0;
};

}  // namespace toonfield
