#pragma once

#include <optional>

#include <torch/torch.h>

#include "toonfield/config.hpp"
#include "toonfield/field.hpp"
#include "toonfield/latent.hpp"
#include "toonfield/neural_renderer.hpp"

namespace toonfield {

struct RenderOptions {
    int64_t resolution = 0;  // 0 = model.image_res
    int64_t n_samples = 0;   // 0 = render.n_samples
    std::optional<bool> neural_renderer;  // unset = model.neural_renderer
};

// Full conditional generator: dual mapping, style blending, radiance field and neural renderer.
class GeneratorImpl : public torch::nn::Module {
public:
    explicit GeneratorImpl(const Config& cfg);

    // An undefined `z_s` disables the style path; otherwise rows are blended at `split_index`.
    FusedLatents fuse(const torch::Tensor& z_f, const torch::Tensor& z_s, int64_t split_index);

    // poses [B, 2] -> image [B, 3, res, res] in (-1, 1).
    torch::Tensor forward(const torch::Tensor& z_f, const torch::Tensor& z_s, const torch::Tensor& poses,
                          int64_t split_index, torch::Generator* jitter, const RenderOptions& opts = {});
    torch::Tensor render(const FusedLatents& fused, const torch::Tensor& poses, torch::Generator* jitter,
                         const RenderOptions& opts = {});

    torch::Tensor feature_grid(const FusedLatents& fused, const torch::Tensor& poses, int64_t resolution,
                               int64_t n_samples, torch::Generator* jitter);

    const Config& config() const { return cfg_; }
    int64_t n_sites() const { return cfg_.model.n_sites(); }

    // Named parameter groups: mapping, sbm, film, heads, renderer.
    std::vector<std::pair<std::string, std::vector<torch::Tensor>>> parameter_groups();

    DualMapping mapping{nullptr};
    StyleBlender sbm{nullptr};
    RadianceField field{nullptr};
    NeuralRenderer renderer{nullptr};

private:
    Config cfg_;
};
TORCH_MODULE(Generator);

}  // namespace toonfield
