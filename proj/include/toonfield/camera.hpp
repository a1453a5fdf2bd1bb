#pragma once

#include <cstdint>
#include <numbers>
#include <optional>

#include <torch/torch.h>

#include "toonfield/config.hpp"

namespace toonfield {

// Camera on a sphere looking at the origin. Position is
// radius * (sin(pitch) cos(yaw), cos(pitch), sin(pitch) sin(yaw)),
// so (pi/2, pi/2) sits on +z looking down -z.
struct CameraPose {
    double pitch = std::numbers::pi / 2;
    double yaw = std::numbers::pi / 2;
    double radius = 1.0;
    double fov_deg = 12.0;

    static CameraPose frontal() { return {}; }
};

// Per-pixel rays for a batch of poses.
//   origins    [B, R, 3]
//   directions [B, R, 3], unit norm
//   depths     [B, R, N_s], strictly increasing inside [near, far]
struct RayBundle {
    torch::Tensor origins;
    torch::Tensor directions;
    torch::Tensor depths;
    double near = 0.0;
    double far = 0.0;

    int64_t rays() const { return origins.size(1); }
    int64_t samples() const { return depths.size(2); }
};

// `poses` is [B, 2] (pitch, yaw) in radians. When `jitter` is null the depths
// are bin midpoints; otherwise each sample is drawn uniformly inside its bin.
RayBundle generate_rays(const torch::Tensor& poses, const CameraConfig& camera, int64_t resolution,
                        int64_t n_samples, torch::Generator* jitter);

// Single-pose convenience; the seed drives stratified jitter.
RayBundle generate_rays(const CameraPose& pose, int64_t resolution, int64_t n_samples, double near, double far,
                        std::optional<uint64_t> seed);

// Uniform pitch/yaw draw inside the configured display ranges around the frontal pose.
torch::Tensor sample_poses(int64_t batch, const CameraConfig& camera, torch::Generator& gen);

// K yaws evenly spaced over [pi/2 - yaw_range, pi/2 + yaw_range] (K = 1 gives the frontal yaw).
std::vector<double> multi_view_yaws(int64_t views, double yaw_range);

torch::Generator make_generator(uint64_t seed);

}  // namespace toonfield
