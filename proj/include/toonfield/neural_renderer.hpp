#pragma once

#include <torch/torch.h>

#include "toonfield/config.hpp"

namespace toonfield {

// Per-sample 1x1 convolution with weights scaled by `styles` [B, C_in] and,
// when `demodulate` is set, renormalised to unit L2 norm per output channel:
//   w'[b,o,c] = w[o,c] s[b,c] / sqrt(sum_c (w[o,c] s[b,c])^2 + eps)
// x [B, C_in, H, W], weight [C_out, C_in] -> [B, C_out, H, W]
torch::Tensor modulated_conv1x1(const torch::Tensor& x, const torch::Tensor& styles, const torch::Tensor& weight,
                                bool demodulate = true, double eps = 1e-8);

// A modulated 1x1 conv together with its affine style projection A and output bias.
class ModConv1x1Impl : public torch::nn::Module {
public:
    ModConv1x1Impl(int64_t w_dim, int64_t in_channels, int64_t out_channels, bool demodulate);

    // x [B, C_in, H, W], style_row [B, w_dim]
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& style_row);

    torch::nn::Linear affine{nullptr};
    torch::Tensor weight;
    torch::Tensor bias;

private:
    bool demodulate_;
};
TORCH_MODULE(ModConv1x1);

// Squashes to the open interval (-1, 1).
torch::Tensor h_rgb(const torch::Tensor& x);

// Bilinear 2x upsampling with half-pixel centres.
torch::Tensor upsample2x(const torch::Tensor& x);

// Shallow 1x1 upsampler from the feature grid to the final image. Block 0
// refines at the input resolution; every later block upsamples 2x first.
// Each block has two modulated convs (w_{2j}, w_{2j+1}) driven by its own
// renderer row plus a to_rgb output accumulated through the skip path.
class NeuralRendererImpl : public torch::nn::Module {
public:
    explicit NeuralRendererImpl(const ModelConfig& cfg);

    // features [B, M_f, S, S], w_nr [B, n_nr, w_dim] -> [B, 3, S * 2^(n_nr-1), ...]
    torch::Tensor forward(const torch::Tensor& features, const torch::Tensor& w_nr);

    int64_t blocks() const { return int64_t(convs.size()) / 2; }

    std::vector<ModConv1x1> convs;
    std::vector<ModConv1x1> to_rgb;

private:
    int64_t feature_dim_;
    int64_t w_dim_;
};
TORCH_MODULE(NeuralRenderer);

}  // namespace toonfield
