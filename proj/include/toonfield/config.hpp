#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace toonfield {

struct ModelConfig {
    int64_t z_dim = 256;
    int64_t w_dim = 256;
    int64_t style_dim = 512;
    int64_t mapping_hidden = 256;
    int64_t mapping_layers = 4;
    int64_t backbone_sites = 8;   // FiLM layers, k
    int64_t renderer_sites = 3;   // neural-renderer blocks
    int64_t hidden = 128;
    int64_t feature_dim = 64;
    int64_t nr_channels0 = 64;
    int64_t nr_channels1 = 32;
    int64_t image_res = 128;
    double gamma_scale = 15.0;
    double gamma_offset = 30.0;
    double coord_scale = 1.0 / 0.12;
    double feature_clip = 10.0;
    double sbm_init = -4.0;
    bool dense_skip = true;
    bool neural_renderer = true;

    int64_t n_sites() const { return backbone_sites + renderer_sites; }
    int64_t upsample_factor() const { return int64_t{1} << (renderer_sites - 1); }
    // Side length of the volume-rendered feature grid when the neural renderer is on.
    int64_t feature_res() const { return neural_renderer ? image_res / upsample_factor() : image_res; }
};

struct CameraConfig {
    double fov_deg = 12.0;
    double radius = 1.0;
    double near = 0.88;
    double far = 1.12;
    double pitch_range = 0.2;
    double yaw_range = 0.4;
};

struct RenderConfig {
    int64_t n_samples = 24;
    int64_t chunk_rays = 4096;
    bool check_finite = true;
};

struct DiscConfig {
    int64_t base_width = 64;
    int64_t max_width = 256;
    int64_t stages = 4;
    bool pose_head = true;
};

struct EncoderConfig {
    int64_t compress_hidden = 512;
    int64_t proj_hidden = 256;
    int64_t proj_dim = 128;
    double tau = 0.1;
    int64_t extractor_seed = 1234;
    double max_rotation_deg = 15.0;
    double max_translation = 0.1;
    double min_scale = 0.9;
    double max_scale = 1.1;
};

struct TrainConfig {
    int64_t seed = 0;
    int64_t batch_size = 8;
    int64_t steps = 1000;
    int64_t checkpoint_every = 0;
    int64_t log_every = 1;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 1.0;
    double r1_lambda = 10.0;
    double lr_d = 2e-4;
    double lr_g = 2e-5;
    double lr_mapping = 2e-6;
    double lr_encoder = 1e-3;
    double adam_beta1 = 0.0;
    double adam_beta2 = 0.9;
    bool finetune_encoder = true;
    bool deterministic = true;
    // "nonsaturating": each player descends its own softplus objective.
    // "literal": D descends L_D and G descends L_G = -L_D^{no-R1} as written.
    std::string objective = "nonsaturating";
};

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int64_t port = 8080;
    int64_t max_parallel = 4;
    int64_t max_resolution = 256;
};

struct Config {
    ModelConfig model;
    CameraConfig camera;
    RenderConfig render;
    DiscConfig disc;
    EncoderConfig encoder;
    TrainConfig train;
    ServiceConfig service;

    // Throws ConfigError on unknown keys, type mismatches, or inconsistent values.
    static Config from_json(const nlohmann::json& flat);
    static Config from_file(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    // Applies a single "dotted.key=value" override.
    void set(const std::string& assignment);
    void set(const std::string& key, const std::string& value);
    std::vector<std::string> keys() const;

    void validate() const;
    // Short stable digest of the flattened configuration.
    std::string hash() const;

    // Reduced widths used by smoke tests and the acceptance suite.
    static Config desk();
};

}  // namespace toonfield
