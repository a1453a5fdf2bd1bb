#pragma once

#include <torch/torch.h>

#include "toonfield/config.hpp"

namespace toonfield {

struct DiscOutput {
    torch::Tensor logit;  // [B]
    torch::Tensor pose;   // [B, 2] (pitch, yaw), undefined without a pose head
    torch::Tensor gsp;    // [B, d_g], global sum pooled trunk features
};

class ResidualDownImpl : public torch::nn::Module {
public:
    ResidualDownImpl(int64_t in, int64_t out);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
};
TORCH_MODULE(ResidualDown);

// Residual CNN trunk with global sum pooling, a logit head, an optional pose
// head and an optional embedder head for projection conditioning.
class DiscriminatorImpl : public torch::nn::Module {
public:
    DiscriminatorImpl(const DiscConfig& cfg, int64_t image_res, bool pose_head, int64_t embed_dim);

    DiscOutput forward(const torch::Tensor& img);
    // base_logit(img) + <gsp(img), embed(code)>. Needs an embedder head.
    torch::Tensor conditional(const torch::Tensor& img, const torch::Tensor& style_code);
    torch::Tensor conditional(const DiscOutput& out, const torch::Tensor& style_code);

    int64_t feature_dim() const { return feature_dim_; }
    bool has_pose_head() const { return !pose_head.is_empty(); }
    bool has_embedder() const { return !embed.is_empty(); }

    torch::nn::Conv2d from_rgb{nullptr};
    torch::nn::ModuleList trunk;
    torch::nn::Linear logit_head{nullptr};
    torch::nn::Linear pose_head{nullptr};
    torch::nn::Linear embed{nullptr};

private:
    int64_t image_res_;
    int64_t feature_dim_;
    int64_t embed_dim_;
};
TORCH_MODULE(Discriminator);

enum class DiscKind { real, style, conditional };

// D_r, D_s and D_c: one architecture, three parameter sets.
struct DiscriminatorSet {
    DiscriminatorSet(const Config& cfg);

    Discriminator& get(DiscKind kind);
    DiscOutput forward(const torch::Tensor& img, DiscKind kind) { return get(kind)->forward(img); }

    Discriminator real{nullptr};
    Discriminator style{nullptr};
    Discriminator conditional{nullptr};
};

}  // namespace toonfield
