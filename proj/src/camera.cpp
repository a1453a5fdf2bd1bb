#include "toonfield/camera.hpp"

#include <cmath>

#include "toonfield/errors.hpp"

namespace toonfield {

torch::Generator make_generator(uint64_t seed) { return at::detail::createCPUGenerator(seed); }

RayBundle generate_rays(const torch::Tensor& poses, const CameraConfig& camera, int64_t resolution,
                        int64_t n_samples, torch::Generator* jitter) {
    if (resolution < 1) throw ArgumentError("ray resolution must be >= 1");
    if (n_samples < 1) throw ArgumentError("samples per ray must be >= 1");
    if (poses.dim() != 2 || poses.size(1) != 2) throw ArgumentError("poses must have shape [B, 2]");
    if (camera.radius <= 0) throw ArgumentError("camera radius must be positive");
    if (!(camera.near < camera.far)) throw ArgumentError("near bound must be below far bound");

    const auto f64 = torch::TensorOptions().dtype(torch::kFloat64);
    const auto p = poses.to(torch::kFloat64);
    const auto pitch = p.select(1, 0);
    const auto yaw = p.select(1, 1);
    const int64_t batch = p.size(0);

    auto position = torch::stack({torch::sin(pitch) * torch::cos(yaw), torch::cos(pitch),
                                  torch::sin(pitch) * torch::sin(yaw)},
                                 1) *
                    camera.radius;  // [B, 3]
    auto forward = -position / position.norm(2, 1, true);
    auto world_up = torch::tensor({0.0, 1.0, 0.0}, f64).expand_as(forward);
    auto right = torch::linalg_cross(forward, world_up, 1);
    auto right_norm = right.norm(2, 1, true);
    if ((right_norm < 1e-9).any().item<bool>()) throw ArgumentError("camera pose looks straight along the up axis");
    right = right / right_norm;
    auto up = torch::linalg_cross(right, forward, 1);

    // Pixel centres in normalised image coordinates, row-major, +v is up.
    const double half = std::tan(camera.fov_deg * std::numbers::pi / 360.0);
    auto centres = (torch::arange(resolution, f64) + 0.5) / double(resolution) * 2.0 - 1.0;
    auto grid = torch::meshgrid({centres, centres}, "ij");
    auto u = (grid[1] * half).reshape({1, -1, 1});   // columns
    auto v = (-grid[0] * half).reshape({1, -1, 1});  // rows
    auto dirs = forward.unsqueeze(1) + u * right.unsqueeze(1) + v * up.unsqueeze(1);
    dirs = dirs / dirs.norm(2, 2, true);

    const int64_t rays = resolution * resolution;
    const double bin = (camera.far - camera.near) / double(n_samples);
    auto offsets = jitter ? torch::rand({batch, rays, n_samples}, *jitter, f64)
                          : torch::full({batch, rays, n_samples}, 0.5, f64);
    auto depths = camera.near + (torch::arange(n_samples, f64).view({1, 1, -1}) + offsets) * bin;

    RayBundle out;
    out.origins = position.unsqueeze(1).expand({batch, rays, 3}).to(torch::kFloat32).contiguous();
    out.directions = dirs.to(torch::kFloat32).contiguous();
    out.depths = depths.to(torch::kFloat32).contiguous();
    out.near = camera.near;
    out.far = camera.far;
    return out;
}

RayBundle generate_rays(const CameraPose& pose, int64_t resolution, int64_t n_samples, double near, double far,
                        std::optional<uint64_t> seed) {
    CameraConfig camera;
    camera.radius = pose.radius;
    camera.fov_deg = pose.fov_deg;
    camera.near = near;
    camera.far = far;
    if (!std::isfinite(pose.pitch) || !std::isfinite(pose.yaw)) throw ArgumentError("pose angles must be finite");
    auto poses = torch::tensor({pose.pitch, pose.yaw}, torch::kFloat64).view({1, 2});
    if (seed) {
        auto gen = make_generator(*seed);
        return generate_rays(poses, camera, resolution, n_samples, &gen);
    }
    return generate_rays(poses, camera, resolution, n_samples, nullptr);
}

torch::Tensor sample_poses(int64_t batch, const CameraConfig& camera, torch::Generator& gen) {
    auto unit = torch::rand({batch, 2}, gen) * 2.0 - 1.0;
    auto range = torch::tensor({float(camera.pitch_range), float(camera.yaw_range)});
    return unit * range + float(std::numbers::pi / 2);
}

std::vector<double> multi_view_yaws(int64_t views, double yaw_range) {
    if (views < 1) throw ArgumentError("view count must be >= 1");
    const double centre = std::numbers::pi / 2;
    if (views == 1) return {centre};
    std::vector<double> out;
    for (int64_t v = 0; v < views; ++v)
        out.push_back(centre - yaw_range + 2.0 * yaw_range * double(v) / double(views - 1));
    return out;
}

}  // namespace toonfield
