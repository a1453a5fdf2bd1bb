#include "toonfield/neural_renderer.hpp"

#include <cmath>

#include "toonfield/errors.hpp"

namespace toonfield {

torch::Tensor modulated_conv1x1(const torch::Tensor& x, const torch::Tensor& styles, const torch::Tensor& weight,
                                bool demodulate, double eps) {
    if (x.dim() != 4 || weight.dim() != 2 || x.size(1) != weight.size(1))
        throw ConfigError("modulated conv expects x [B, C_in, H, W] and weight [C_out, C_in]");
    if (styles.dim() != 2 || styles.size(0) != x.size(0) || styles.size(1) != weight.size(1))
        throw ConfigError("modulation must have shape [B, C_in]");
    auto w = weight.unsqueeze(0) * styles.unsqueeze(1);  // [B, O, C]
    if (demodulate) w = w * torch::rsqrt(w.pow(2).sum(2, true) + eps);
    const auto b = x.size(0);
    auto out = torch::bmm(w, x.reshape({b, x.size(1), -1}));
    return out.view({b, weight.size(0), x.size(2), x.size(3)});
}

ModConv1x1Impl::ModConv1x1Impl(int64_t w_dim, int64_t in_channels, int64_t out_channels, bool demodulate)
    : demodulate_(demodulate) {
    affine = register_module("affine", torch::nn::Linear(w_dim, in_channels));
    weight = register_parameter("weight", torch::randn({out_channels, in_channels}) / std::sqrt(double(in_channels)));
    bias = register_parameter("bias", torch::zeros({out_channels}));
    torch::NoGradGuard guard;
    affine->bias.fill_(1.0);
}

torch::Tensor ModConv1x1Impl::forward(const torch::Tensor& x, const torch::Tensor& style_row) {
    auto styles = affine->forward(style_row);
    return modulated_conv1x1(x, styles, weight, demodulate_) + bias.view({1, -1, 1, 1});
}

torch::Tensor h_rgb(const torch::Tensor& x) { return torch::tanh(x); }

torch::Tensor upsample2x(const torch::Tensor& x) {
    namespace F = torch::nn::functional;
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

NeuralRendererImpl::NeuralRendererImpl(const ModelConfig& cfg) : feature_dim_(cfg.feature_dim), w_dim_(cfg.w_dim) {
    int64_t in = cfg.feature_dim;
    for (int64_t j = 0; j < cfg.renderer_sites; ++j) {
        const int64_t out = j == 0 ? cfg.nr_channels0 : cfg.nr_channels1;
        const auto tag = std::to_string(j);
        convs.push_back(register_module("conv" + std::to_string(2 * j), ModConv1x1(w_dim_, in, out, true)));
        convs.push_back(register_module("conv" + std::to_string(2 * j + 1), ModConv1x1(w_dim_, out, out, true)));
        to_rgb.push_back(register_module("to_rgb" + tag, ModConv1x1(w_dim_, out, 3, false)));
        in = out;
    }
}

torch::Tensor NeuralRendererImpl::forward(const torch::Tensor& features, const torch::Tensor& w_nr) {
    if (features.dim() != 4 || features.size(1) != feature_dim_)
        throw ConfigError("feature grid must have shape [B, " + std::to_string(feature_dim_) + ", S, S]");
    if (w_nr.dim() != 3 || w_nr.size(1) != blocks() || w_nr.size(2) != w_dim_ || w_nr.size(0) != features.size(0))
        throw ConfigError("renderer latents must have shape [B, " + std::to_string(blocks()) + ", " +
                          std::to_string(w_dim_) + "]");
    auto x = features;
    torch::Tensor rgb;
    for (int64_t j = 0; j < blocks(); ++j) {
        const auto row = w_nr.select(1, j);
        if (j > 0) x = upsample2x(x);
        x = torch::leaky_relu(convs[2 * j]->forward(x, row), 0.2);
        x = torch::leaky_relu(convs[2 * j + 1]->forward(x, row), 0.2);
        auto y = to_rgb[j]->forward(x, row);
        rgb = rgb.defined() ? upsample2x(rgb) + y : y;
    }
    return h_rgb(rgb);
}

}  // namespace toonfield
