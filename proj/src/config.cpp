#include "toonfield/config.hpp"

#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <variant>

#include <openssl/evp.h>

#include "toonfield/errors.hpp"

namespace toonfield {
namespace {

using FieldRef = std::variant<int64_t*, double*, bool*, std::string*>;

struct Binding {
    std::string key;
    FieldRef ref;
};

template <typename C>
std::vector<Binding> bind(C& c) {
    return {
        {"model.z_dim", &c.model.z_dim},
        {"model.w_dim", &c.model.w_dim},
        {"model.style_dim", &c.model.style_dim},
        {"model.mapping_hidden", &c.model.mapping_hidden},
        {"model.mapping_layers", &c.model.mapping_layers},
        {"model.backbone_sites", &c.model.backbone_sites},
        {"model.renderer_sites", &c.model.renderer_sites},
        {"model.hidden", &c.model.hidden},
        {"model.feature_dim", &c.model.feature_dim},
        {"model.nr_channels0", &c.model.nr_channels0},
        {"model.nr_channels1", &c.model.nr_channels1},
        {"model.image_res", &c.model.image_res},
        {"model.gamma_scale", &c.model.gamma_scale},
        {"model.gamma_offset", &c.model.gamma_offset},
        {"model.coord_scale", &c.model.coord_scale},
        {"model.feature_clip", &c.model.feature_clip},
        {"model.sbm_init", &c.model.sbm_init},
        {"model.dense_skip", &c.model.dense_skip},
        {"model.neural_renderer", &c.model.neural_renderer},
        {"camera.fov_deg", &c.camera.fov_deg},
        {"camera.radius", &c.camera.radius},
        {"camera.near", &c.camera.near},
        {"camera.far", &c.camera.far},
        {"camera.pitch_range", &c.camera.pitch_range},
        {"camera.yaw_range", &c.camera.yaw_range},
        {"render.n_samples", &c.render.n_samples},
        {"render.chunk_rays", &c.render.chunk_rays},
        {"render.check_finite", &c.render.check_finite},
        {"disc.base_width", &c.disc.base_width},
        {"disc.max_width", &c.disc.max_width},
        {"disc.stages", &c.disc.stages},
        {"disc.pose_head", &c.disc.pose_head},
        {"encoder.compress_hidden", &c.encoder.compress_hidden},
        {"encoder.proj_hidden", &c.encoder.proj_hidden},
        {"encoder.proj_dim", &c.encoder.proj_dim},
        {"encoder.tau", &c.encoder.tau},
        {"encoder.extractor_seed", &c.encoder.extractor_seed},
        {"encoder.max_rotation_deg", &c.encoder.max_rotation_deg},
        {"encoder.max_translation", &c.encoder.max_translation},
        {"encoder.min_scale", &c.encoder.min_scale},
        {"encoder.max_scale", &c.encoder.max_scale},
        {"train.seed", &c.train.seed},
        {"train.batch_size", &c.train.batch_size},
        {"train.steps", &c.train.steps},
        {"train.checkpoint_every", &c.train.checkpoint_every},
        {"train.log_every", &c.train.log_every},
        {"train.lambda1", &c.train.lambda1},
        {"train.lambda2", &c.train.lambda2},
        {"train.lambda3", &c.train.lambda3},
        {"train.r1_lambda", &c.train.r1_lambda},
        {"train.lr_d", &c.train.lr_d},
        {"train.lr_g", &c.train.lr_g},
        {"train.lr_mapping", &c.train.lr_mapping},
        {"train.lr_encoder", &c.train.lr_encoder},
        {"train.adam_beta1", &c.train.adam_beta1},
        {"train.adam_beta2", &c.train.adam_beta2},
        {"train.finetune_encoder", &c.train.finetune_encoder},
        {"train.deterministic", &c.train.deterministic},
        {"train.objective", &c.train.objective},
        {"service.host", &c.service.host},
        {"service.port", &c.service.port},
        {"service.max_parallel", &c.service.max_parallel},
        {"service.max_resolution", &c.service.max_resolution},
    };
}

FieldRef find(std::vector<Binding>& table, const std::string& key) {
    for (auto& b : table)
        if (b.key == key) return b.ref;
    throw ConfigError("unknown configuration key '" + key + "'");
}

void assign_json(FieldRef ref, const std::string& key, const nlohmann::json& v) {
    try {
        std::visit(
            [&](auto* field) {
                using T = std::remove_pointer_t<decltype(field)>;
                if constexpr (std::is_same_v<T, int64_t>) {
                    if (!v.is_number_integer()) throw ConfigError("key '" + key + "' expects an integer");
                } else if constexpr (std::is_same_v<T, double>) {
                    if (!v.is_number()) throw ConfigError("key '" + key + "' expects a number");
                } else if constexpr (std::is_same_v<T, bool>) {
                    if (!v.is_boolean()) throw ConfigError("key '" + key + "' expects a boolean");
                } else {
                    if (!v.is_string()) throw ConfigError("key '" + key + "' expects a string");
                }
                *field = v.get<T>();
            },
            ref);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("key '" + key + "': " + e.what());
    }
}

void assign_text(FieldRef ref, const std::string& key, const std::string& text) {
    std::visit(
        [&](auto* field) {
            using T = std::remove_pointer_t<decltype(field)>;
            if constexpr (std::is_same_v<T, std::string>) {
                *field = text;
            } else if constexpr (std::is_same_v<T, bool>) {
                if (text == "true" || text == "1") *field = true;
                else if (text == "false" || text == "0") *field = false;
                else throw ConfigError("key '" + key + "' expects true/false, got '" + text + "'");
            } else {
                std::istringstream in(text);
                T value{};
                in >> value;
                if (in.fail() || !in.eof()) throw ConfigError("key '" + key + "': cannot parse '" + text + "'");
                *field = value;
            }
        },
        ref);
}

}  // namespace

Config Config::from_json(const nlohmann::json& flat) {
    if (!flat.is_object()) throw ConfigError("configuration must be a flat JSON object");
    Config c;
    auto table = bind(c);
    for (const auto& [key, value] : flat.items()) assign_json(find(table, key), key, value);
    c.validate();
    return c;
}

Config Config::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed configuration file " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::json Config::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    auto self = *this;
    for (const auto& b : bind(self)) std::visit([&](auto* field) { j[b.key] = *field; }, b.ref);
    return j;
}

void Config::set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override must look like key=value, got '" + assignment + "'");
    set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

void Config::set(const std::string& key, const std::string& value) {
    auto table = bind(*this);
    assign_text(find(table, key), key, value);
}

std::vector<std::string> Config::keys() const {
    auto self = *this;
    std::vector<std::string> out;
    for (const auto& b : bind(self)) out.push_back(b.key);
    return out;
}

void Config::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    require(model.z_dim > 0, "model.z_dim must be positive");
    require(model.w_dim > 0, "model.w_dim must be positive");
    require(model.style_dim == 512, "model.style_dim must be 512");
    require(model.mapping_layers >= 1, "model.mapping_layers must be >= 1");
    require(model.backbone_sites >= 2, "model.backbone_sites must be >= 2");
    require(model.renderer_sites >= 1 && model.renderer_sites <= 5, "model.renderer_sites must be in [1, 5]");
    require(model.hidden > 0 && model.feature_dim > 0, "model widths must be positive");
    require(model.image_res > 0, "model.image_res must be positive");
    require(!model.neural_renderer || model.image_res % model.upsample_factor() == 0,
            "model.image_res must be divisible by the neural-renderer upsampling factor");
    require(camera.radius > 0, "camera.radius must be positive");
    require(camera.near < camera.far, "camera.near must be < camera.far");
    require(camera.fov_deg > 0 && camera.fov_deg < 180, "camera.fov_deg must be in (0, 180)");
    require(render.n_samples >= 1, "render.n_samples must be >= 1");
    require(render.chunk_rays >= 1, "render.chunk_rays must be >= 1");
    require(disc.stages >= 1 && disc.base_width > 0, "disc.stages/base_width must be positive");
    require(encoder.tau > 0, "encoder.tau must be positive");
    require(train.batch_size >= 2, "train.batch_size must be >= 2");
    require(train.lambda1 >= 0 && train.lambda2 >= 0 && train.lambda3 >= 0 && train.r1_lambda >= 0,
            "loss weights must be nonnegative");
    require(train.objective == "nonsaturating" || train.objective == "literal",
            "train.objective must be 'nonsaturating' or 'literal'");
    require(service.max_parallel >= 1, "service.max_parallel must be >= 1");
}

std::string Config::hash() const {
    const auto text = to_json().dump();
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr);
    std::ostringstream out;
    for (int i = 0; i < 6; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return out.str();
}

Config Config::desk() {
    Config c;
    c.model.z_dim = 64;
    c.model.mapping_hidden = 64;
    c.model.hidden = 32;
    c.model.feature_dim = 16;
    c.model.nr_channels0 = 16;
    c.model.nr_channels1 = 16;
    c.model.image_res = 32;
    c.render.n_samples = 8;
    c.disc.base_width = 16;
    c.disc.max_width = 64;
    c.encoder.compress_hidden = 128;
    c.encoder.proj_hidden = 128;
    c.encoder.proj_dim = 64;
    c.train.batch_size = 4;
    c.train.lr_g = 2e-4;
    c.train.lr_mapping = 2e-5;
    return c;
}

}  // namespace toonfield
