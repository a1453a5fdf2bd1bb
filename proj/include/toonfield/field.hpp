#pragma once

#include <torch/torch.h>

#include "toonfield/camera.hpp"
#include "toonfield/config.hpp"

namespace toonfield {

// sin(gamma * (x W^T + b) + beta). gamma and beta broadcast against the output.
torch::Tensor film_layer(const torch::Tensor& x, const torch::Tensor& gamma, const torch::Tensor& beta,
                         const torch::Tensor& weight, const torch::Tensor& bias);

// Density [..., P] and features [..., P, M_f] at sample points.
struct FieldSamples {
    torch::Tensor sigma;
    torch::Tensor features;
};

// Per-layer FiLM modulation, each [B, k, hidden].
struct Modulation {
    torch::Tensor gamma;
    torch::Tensor beta;
};

// FiLM-SIREN backbone with per-layer density and feature heads whose
// outputs are summed before the clamps (dense skip connections). The last
// layer also sees the viewing direction, and density never does.
class RadianceFieldImpl : public torch::nn::Module {
public:
    explicit RadianceFieldImpl(const ModelConfig& cfg, bool check_finite = true);

    Modulation modulation(const torch::Tensor& w_bb);

    // points, view_dirs [B, P, 3]; w_bb [B, k, w_dim]
    FieldSamples forward(const torch::Tensor& points, const torch::Tensor& view_dirs, const torch::Tensor& w_bb);
    FieldSamples forward(const torch::Tensor& points, const torch::Tensor& view_dirs, const Modulation& mod);

    // Direct feature-to-colour head used when the neural renderer is bypassed.
    torch::Tensor to_rgb(const torch::Tensor& features);

    int64_t layers() const { return k_; }
    int64_t hidden() const { return hidden_; }
    int64_t feature_dim() const { return feature_dim_; }

    std::vector<torch::nn::Linear> film;
    std::vector<torch::nn::Linear> gamma_heads;
    std::vector<torch::nn::Linear> beta_heads;
    std::vector<torch::nn::Linear> density_heads;  // k - 1 heads
    std::vector<torch::nn::Linear> feature_heads;  // k heads
    torch::nn::Linear rgb_head{nullptr};

private:
    int64_t k_;
    int64_t hidden_;
    int64_t feature_dim_;
    int64_t w_dim_;
    double gamma_scale_;
    double gamma_offset_;
    double coord_scale_;
    double feature_clip_;
    bool dense_skip_;
    bool check_finite_;
};
TORCH_MODULE(RadianceField);

// Discrete compositing along each ray.
//   alpha_j = 1 - exp(-sigma_j delta_j), delta_j = depth gap, last gap = far - depth_last
//   w_j = alpha_j prod_{m<j} (1 - alpha_m), output = sum_j w_j f_j
struct Composite {
    torch::Tensor features;  // [..., R, M]
    torch::Tensor weights;   // [..., R, N_s]
};

// sigma [..., R, N_s], features [..., R, N_s, M], depths [..., R, N_s].
// Throws PreconditionError on negative density or non-increasing depths.
Composite volume_render(const torch::Tensor& sigma, const torch::Tensor& features, const torch::Tensor& depths,
                        double far);

// Renders an S x S grid of composited features, shape [B, M_f, S, S].
// Rays are processed in chunks of `chunk_rays` per batch element.
torch::Tensor render_feature_grid(RadianceField& field, const torch::Tensor& poses, const torch::Tensor& w_bb,
                                  const CameraConfig& camera, int64_t resolution, int64_t n_samples,
                                  int64_t chunk_rays, torch::Generator* jitter);

}  // namespace toonfield
