#pragma once

#include <torch/torch.h>

#include "toonfield/config.hpp"

namespace toonfield {

enum class LatentKind { identity, style };

// Per-layer latent rows in W+ space, shape [B, n, w_dim].
using LatentStack = torch::Tensor;

// Blended conditioning: backbone rows [B, k, w] feed the FiLM layers,
// renderer rows [B, n_nr, w] feed the neural renderer.
struct FusedLatents {
    torch::Tensor backbone;
    torch::Tensor renderer;
};

// 4 affine layers with leaky activations, mapping a code to n stacked rows.
class MappingNetworkImpl : public torch::nn::Module {
public:
    MappingNetworkImpl(int64_t in_dim, int64_t hidden, int64_t layers, int64_t n_sites, int64_t w_dim);

    // code [B, in_dim] -> [B, n_sites, w_dim]
    LatentStack forward(const torch::Tensor& code);

    int64_t in_dim() const { return in_dim_; }
    torch::nn::Linear final_layer() const { return layers_.back(); }

private:
    int64_t in_dim_;
    int64_t n_sites_;
    int64_t w_dim_;
    std::vector<torch::nn::Linear> layers_;
};
TORCH_MODULE(MappingNetwork);

// Identity and style mapping networks. Same architecture, separate parameters.
class DualMappingImpl : public torch::nn::Module {
public:
    explicit DualMappingImpl(const ModelConfig& cfg);

    LatentStack map_to_wplus(const torch::Tensor& code, LatentKind which);

    MappingNetwork identity{nullptr};
    MappingNetwork style{nullptr};
};
TORCH_MODULE(DualMapping);

// Learnable per-row style weights gated by a split index.
//
// effective(i)[l] = 0 for l < i and logistic(raw[l]) for l >= i, so i = n
// disables the style path and i = 0 gives every row its learned weight.
class BlendWeights {
public:
    explicit BlendWeights(torch::Tensor raw, int64_t split_index = 0);

    // Returns a copy whose effective vector is zeroed below `i`.
    BlendWeights with_split_index(int64_t i) const;
    torch::Tensor effective() const;

    const torch::Tensor& raw() const { return raw_; }
    int64_t split_index() const { return split_; }
    int64_t size() const { return raw_.size(0); }

private:
    torch::Tensor raw_;
    int64_t split_;
};

// Convex row blend f + e * (s - f). Equal inputs and e = 0 both reproduce f exactly.
torch::Tensor blend_rows(const torch::Tensor& identity_rows, const torch::Tensor& style_rows,
                         const torch::Tensor& weights);

// Style blending module: raw weights plus the projection units applied to
// renderer rows before blending.
class StyleBlenderImpl : public torch::nn::Module {
public:
    explicit StyleBlenderImpl(const ModelConfig& cfg);

    BlendWeights weights(int64_t split_index) const;

    // Throws ArgumentError unless 0 <= split_index <= n.
    FusedLatents blend(const LatentStack& w_f, const LatentStack& w_s, int64_t split_index);
    // The style path disabled entirely: the output depends only on w_f.
    FusedLatents identity_only(const LatentStack& w_f);

    // Renderer-row projection of a stack, for the identity or the style path.
    torch::Tensor project_renderer_rows(const LatentStack& w, LatentKind which);

    int64_t backbone_sites() const { return k_; }
    int64_t renderer_sites() const { return n_nr_; }
    int64_t n_sites() const { return k_ + n_nr_; }

    torch::Tensor raw;  // [n]

private:
    int64_t k_;
    int64_t n_nr_;
    std::vector<torch::nn::Linear> trans_identity_;
    std::vector<torch::nn::Linear> trans_style_;
};
TORCH_MODULE(StyleBlender);

}  // namespace toonfield
