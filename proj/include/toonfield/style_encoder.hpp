#pragma once

#include <memory>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "toonfield/config.hpp"

namespace toonfield {

// Fixed perceptual feature extractor. Parameters never train.
class PerceptualExtractor : public torch::nn::Module {
public:
    // img [B, 3, H, W] in [-1, 1] -> [B, feature_dim()]
    virtual torch::Tensor forward(const torch::Tensor& img) = 0;
    virtual int64_t feature_dim() const = 0;
};

// Three strided conv stages with frozen random weights drawn from `seed`.
// Features are the per-channel mean and standard deviation of every stage,
// concatenated: 2 * (16 + 32 + 64) = 224 values for any input size >= 8.
class RandomConvExtractor : public PerceptualExtractor {
public:
    explicit RandomConvExtractor(int64_t seed);

    torch::Tensor forward(const torch::Tensor& img) override;
    int64_t feature_dim() const override { return 224; }

    // Per-stage activation maps, used by the perceptual distance proxy.
    std::vector<torch::Tensor> stages(const torch::Tensor& img);

private:
    std::vector<torch::nn::Conv2d> convs_;
};

// Style encoder: frozen extractor -> trainable compressor to 512-dim codes,
// plus a projection head used only by the contrastive objective.
class StyleEncoderImpl : public torch::nn::Module {
public:
    explicit StyleEncoderImpl(const Config& cfg, std::shared_ptr<PerceptualExtractor> extractor = nullptr);

    torch::Tensor extract_features(const torch::Tensor& img);
    // img [B, 3, H, W] -> z_s [B, 512]
    torch::Tensor encode(const torch::Tensor& img);
    // z_s [B, 512] -> u_s [B, proj_dim]
    torch::Tensor project(const torch::Tensor& codes);
    torch::Tensor represent(const torch::Tensor& img) { return project(encode(img)); }

    // Compressor and projection head only.
    std::vector<torch::Tensor> trainable_parameters();

    std::shared_ptr<PerceptualExtractor> extractor;
    torch::nn::Sequential compressor{nullptr};
    torch::nn::Sequential head{nullptr};
};
TORCH_MODULE(StyleEncoder);

// Random affine augmentation parameters.
struct AffineParams {
    double rotation = 0.0;     // radians
    double translate_x = 0.0;  // fraction of image width
    double translate_y = 0.0;
    double scale = 1.0;
    bool flip = false;

    static AffineParams identity() { return {}; }
};

AffineParams draw_affine(const EncoderConfig& cfg, torch::Generator& gen);
// Bilinear resampling with reflection padding. img [3, H, W] or [B, 3, H, W] (one param set for all).
torch::Tensor apply_affine(const torch::Tensor& img, const AffineParams& params);
// Deterministic per seed.
torch::Tensor augment(const torch::Tensor& img, uint64_t seed, const EncoderConfig& cfg);
// Independent draw per batch element.
torch::Tensor augment_batch(const torch::Tensor& imgs, torch::Generator& gen, const EncoderConfig& cfg);

// Eq.-2-style contrastive loss, implemented exactly as the printed form whose
// denominator excludes both the anchor and its positive:
//   l_ij = -log( exp(sim_ij / tau) / sum_{k != i, k != j} exp(sim_ik / tau) )
// averaged over every ordered positive pair. The value may be negative.
// reps [2N, d]; `pairs` must be a perfect matching of the 2N rows.
torch::Tensor nt_xent_loss(const torch::Tensor& reps, const std::vector<std::pair<int64_t, int64_t>>& pairs,
                           double tau);

// (0,1), (2,3), ... for a batch of N anchors interleaved with their augmentations.
std::vector<std::pair<int64_t, int64_t>> interleaved_pairs(int64_t n);

// Stack anchors and augmentations as [x0, aug(x0), x1, aug(x1), ...].
torch::Tensor interleave(const torch::Tensor& anchors, const torch::Tensor& augmented);

}  // namespace toonfield
