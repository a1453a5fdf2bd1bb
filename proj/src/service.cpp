#include "toonfield/service.hpp"

#include <cmath>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <httplib.h>

#include "toonfield/camera.hpp"
#include "toonfield/image_io.hpp"

namespace toonfield {
namespace {

constexpr double kHalfPi = std::numbers::pi / 2;

template <typename T>
T field_value(const nlohmann::json& body, const std::string& name, T fallback) {
    auto it = body.find(name);
    if (it == body.end() || it->is_null()) return fallback;
    try {
        if constexpr (std::is_same_v<T, double>) {
            if (!it->is_number()) throw RequestError(name, "expected a number");
        } else if constexpr (std::is_integral_v<T>) {
            if (!it->is_number_integer()) throw RequestError(name, "expected an integer");
        } else {
            if (!it->is_string()) throw RequestError(name, "expected a string");
        }
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw RequestError(name, "value out of range");
    }
}

class Slot {
public:
    explicit Slot(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
    ~Slot() { s_.release(); }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

private:
    std::counting_semaphore<>& s_;
};

void json_reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

}  // namespace

torch::Tensor identity_code(int64_t seed, int64_t z_dim) {
    auto gen = make_generator(uint64_t(seed));
    return torch::randn({1, z_dim}, gen);
}

torch::Tensor style_code_from_seed(int64_t seed, int64_t style_dim) {
    auto gen = make_generator(uint64_t(seed) ^ 0x5354594C45ull);
    return torch::randn({1, style_dim}, gen);
}

void validate_spec(const LoadedModel& model, const RenderSpec& spec, int64_t max_resolution) {
    const auto& cfg = model.config;
    const int64_t n = cfg.model.n_sites();
    if (spec.split_index < 0 || spec.split_index > n)
        throw RequestError("split_index", "must be in [0, " + std::to_string(n) + "]");
    auto check_angle = [](const std::string& name, double v, double range) {
        if (!std::isfinite(v) || v < kHalfPi - range - 1e-9 || v > kHalfPi + range + 1e-9) {
            std::ostringstream msg;
            msg << std::setprecision(6) << "must be in [" << kHalfPi - range << ", " << kHalfPi + range << "]";
            throw RequestError(name, msg.str());
        }
    };
    check_angle("pitch", spec.pitch, cfg.camera.pitch_range);
    check_angle("yaw", spec.yaw, cfg.camera.yaw_range);
    const int64_t res = spec.resolution > 0 ? spec.resolution : cfg.model.image_res;
    if (spec.resolution < 0) throw RequestError("resolution", "must be positive");
    const int64_t factor = cfg.model.neural_renderer ? cfg.model.upsample_factor() : 1;
    if (res > max_resolution) throw RequestError("resolution", "exceeds " + std::to_string(max_resolution));
    if (res < 8 || res % factor != 0)
        throw RequestError("resolution", "must be >= 8 and a multiple of " + std::to_string(factor));
    if (spec.style_image.defined() && spec.style_seed)
        throw RequestError("style", "give either a style image or a style seed, not both");
}

torch::Tensor encode_style_image(const LoadedModel& model, const torch::Tensor& image) {
    torch::NoGradGuard no_grad;
    auto encoder = model.encoder;
    auto img = resize_square(image, model.config.model.image_res);
    return encoder->encode(img.unsqueeze(0))[0];
}

torch::Tensor render_single(const LoadedModel& model, const RenderSpec& spec) {
    torch::NoGradGuard no_grad;
    auto generator = model.generator;
    const auto& cfg = model.config;
    auto z_f = identity_code(spec.seed, cfg.model.z_dim);
    torch::Tensor z_s;
    if (spec.style_image.defined())
        z_s = encode_style_image(model, spec.style_image).unsqueeze(0);
    else if (spec.style_seed)
        z_s = style_code_from_seed(*spec.style_seed, cfg.model.style_dim);
    auto poses = torch::tensor({spec.pitch, spec.yaw}, torch::kFloat32).view({1, 2});
    RenderOptions opts;
    opts.resolution = spec.resolution;
    const int64_t split = z_s.defined() ? spec.split_index : cfg.model.n_sites();
    return generator->forward(z_f, z_s, poses, split, nullptr, opts)[0];
}

RenderService::RenderService(LoadedModel model, const ServiceConfig& cfg)
    : model_(std::move(model)), cfg_(cfg), server_(std::make_unique<httplib::Server>()) {
    if (cfg_.max_parallel < 1) throw ConfigError("service.max_parallel must be >= 1");
    slots_ = std::make_unique<std::counting_semaphore<>>(cfg_.max_parallel);
    install_routes();
}

RenderService::~RenderService() { stop(); }

nlohmann::json RenderService::info() const {
    const auto& c = model_.config;
    const int64_t n = c.model.n_sites();
    return {{"n_sites", n},
            {"backbone_sites", c.model.backbone_sites},
            {"renderer_sites", c.model.renderer_sites},
            {"split_index_min", 0},
            {"split_index_max", n},
            {"z_dim", c.model.z_dim},
            {"style_dim", c.model.style_dim},
            {"resolution", {{"default", c.model.image_res},
                            {"max", cfg_.max_resolution},
                            {"multiple_of", c.model.neural_renderer ? c.model.upsample_factor() : 1}}},
            {"pitch", {{"min", kHalfPi - c.camera.pitch_range}, {"max", kHalfPi + c.camera.pitch_range},
                       {"default", kHalfPi}}},
            {"yaw", {{"min", kHalfPi - c.camera.yaw_range}, {"max", kHalfPi + c.camera.yaw_range},
                     {"default", kHalfPi}}},
            {"config_hash", c.hash()}};
}

RenderSpec RenderService::parse_render_request(const nlohmann::json& body) const {
    if (!body.is_object()) throw RequestError("body", "expected a JSON object");
    static const std::set<std::string> known = {"seed", "pitch", "yaw", "split_index", "style", "style_seed",
                                                "resolution"};
    for (const auto& [key, value] : body.items())
        if (!known.count(key)) throw RequestError(key, "unknown field");
    RenderSpec spec;
    spec.seed = field_value<int64_t>(body, "seed", 0);
    spec.pitch = field_value<double>(body, "pitch", kHalfPi);
    spec.yaw = field_value<double>(body, "yaw", kHalfPi);
    spec.split_index = field_value<int64_t>(body, "split_index", 0);
    spec.resolution = field_value<int64_t>(body, "resolution", 0);
    if (body.contains("style_seed") && !body["style_seed"].is_null())
        spec.style_seed = field_value<int64_t>(body, "style_seed", 0);
    const auto style = field_value<std::string>(body, "style", "");
    if (!style.empty()) {
        try {
            spec.style_image = decode_png(base64_decode(style));
        } catch (const Error& e) {
            throw RequestError("style", std::string("not a base64 PNG: ") + e.what());
        }
    }
    validate_spec(model_, spec, cfg_.max_resolution);
    return spec;
}

std::string RenderService::render_png(const RenderSpec& spec) const { return encode_png(render_single(model_, spec)); }

void RenderService::install_routes() {
    auto& s = *server_;
    s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
    s.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    s.Get("/health", [](const httplib::Request&, httplib::Response& res) { json_reply(res, 200, {{"status", "ok"}}); });
    s.Get("/model/info", [this](const httplib::Request&, httplib::Response& res) { json_reply(res, 200, info()); });

    auto failure = [this](httplib::Response& res, const std::exception& e) {
        std::ostringstream id;
        id << std::hex << std::setw(8) << std::setfill('0')
           << (error_counter_.fetch_add(1) * 0x9E3779B1u + uint64_t(std::random_device{}()) % 0xFFFF);
        std::cerr << "request failed [" << id.str() << "]: " << e.what() << std::endl;
        json_reply(res, 500, {{"error", "render failed"}, {"id", id.str()}});
    };

    s.Post("/render", [this, failure](const httplib::Request& req, httplib::Response& res) {
        RenderSpec spec;
        try {
            spec = parse_render_request(nlohmann::json::parse(req.body));
        } catch (const nlohmann::json::parse_error&) {
            json_reply(res, 400, {{"error", "malformed JSON"}, {"field", "body"}});
            return;
        } catch (const RequestError& e) {
            json_reply(res, 400, {{"error", e.what()}, {"field", e.field()}});
            return;
        }
        try {
            Slot slot(*slots_);
            res.set_content(render_png(spec), "image/png");
            res.status = 200;
        } catch (const std::exception& e) {
            failure(res, e);
        }
    });

    s.Post("/style/encode", [this, failure](const httplib::Request& req, httplib::Response& res) {
        torch::Tensor image;
        try {
            const auto type = req.get_header_value("Content-Type");
            if (type.rfind("application/json", 0) == 0) {
                auto body = nlohmann::json::parse(req.body);
                if (!body.is_object() || !body.contains("image") || !body["image"].is_string())
                    throw RequestError("image", "expected a base64 PNG string");
                image = decode_png(base64_decode(body["image"].get<std::string>()));
            } else {
                image = decode_png(req.body);
            }
        } catch (const nlohmann::json::parse_error&) {
            json_reply(res, 400, {{"error", "malformed JSON"}, {"field", "body"}});
            return;
        } catch (const RequestError& e) {
            json_reply(res, 400, {{"error", e.what()}, {"field", e.field()}});
            return;
        } catch (const Error& e) {
            json_reply(res, 400, {{"error", std::string("not a PNG: ") + e.what()}, {"field", "image"}});
            return;
        }
        try {
            Slot slot(*slots_);
            auto code = encode_style_image(model_, image).contiguous();
            std::vector<float> values(code.data_ptr<float>(), code.data_ptr<float>() + code.numel());
            json_reply(res, 200, {{"dim", values.size()}, {"code", values}});
        } catch (const std::exception& e) {
            failure(res, e);
        }
    });
}

int RenderService::start(const std::string& host, int port) {
    if (thread_.joinable()) throw UsageError("service already running");
    port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (port_ <= 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void RenderService::listen(const std::string& host, int port) {
    if (!server_->bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    port_ = port;
    server_->listen_after_bind();
}

void RenderService::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace toonfield
