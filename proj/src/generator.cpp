#include "toonfield/generator.hpp"

#include "toonfield/errors.hpp"

namespace toonfield {

GeneratorImpl::GeneratorImpl(const Config& cfg) : cfg_(cfg) {
    cfg_.validate();
    mapping = register_module("mapping", DualMapping(cfg_.model));
    sbm = register_module("sbm", StyleBlender(cfg_.model));
    field = register_module("field", RadianceField(cfg_.model, cfg_.render.check_finite));
    renderer = register_module("renderer", NeuralRenderer(cfg_.model));
}

FusedLatents GeneratorImpl::fuse(const torch::Tensor& z_f, const torch::Tensor& z_s, int64_t split_index) {
    auto w_f = mapping->map_to_wplus(z_f, LatentKind::identity);
    if (!z_s.defined()) {
        if (split_index < 0 || split_index > n_sites())
            throw ArgumentError("split index " + std::to_string(split_index) + " outside [0, " +
                                std::to_string(n_sites()) + "]");
        return sbm->identity_only(w_f);
    }
    if (z_s.size(0) != z_f.size(0)) throw ConfigError("identity and style batches differ");
    auto w_s = mapping->map_to_wplus(z_s, LatentKind::style);
    return sbm->blend(w_f, w_s, split_index);
}

torch::Tensor GeneratorImpl::feature_grid(const FusedLatents& fused, const torch::Tensor& poses, int64_t resolution,
                                          int64_t n_samples, torch::Generator* jitter) {
    return render_feature_grid(field, poses, fused.backbone, cfg_.camera, resolution, n_samples,
                               cfg_.render.chunk_rays, jitter);
}

torch::Tensor GeneratorImpl::render(const FusedLatents& fused, const torch::Tensor& poses, torch::Generator* jitter,
                                    const RenderOptions& opts) {
    const int64_t res = opts.resolution > 0 ? opts.resolution : cfg_.model.image_res;
    const int64_t ns = opts.n_samples > 0 ? opts.n_samples : cfg_.render.n_samples;
    const bool use_nr = opts.neural_renderer.value_or(cfg_.model.neural_renderer);
    if (use_nr) {
        const int64_t factor = cfg_.model.upsample_factor();
        if (res % factor != 0)
            throw ArgumentError("resolution " + std::to_string(res) + " is not divisible by the upsampling factor " +
                                std::to_string(factor));
        auto grid = feature_grid(fused, poses, res / factor, ns, jitter);
        return renderer->forward(grid, fused.renderer);
    }
    auto grid = feature_grid(fused, poses, res, ns, jitter);  // [B, M, res, res]
    auto rgb = field->to_rgb(grid.permute({0, 2, 3, 1}));
    return h_rgb(rgb.permute({0, 3, 1, 2}).contiguous());
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& z_f, const torch::Tensor& z_s, const torch::Tensor& poses,
                                     int64_t split_index, torch::Generator* jitter, const RenderOptions& opts) {
    if (poses.size(0) != z_f.size(0)) throw ConfigError("pose batch does not match identity batch");
    return render(fuse(z_f, z_s, split_index), poses, jitter, opts);
}

std::vector<std::pair<std::string, std::vector<torch::Tensor>>> GeneratorImpl::parameter_groups() {
    std::vector<torch::Tensor> film_params;
    std::vector<torch::Tensor> head_params;
    for (auto& p : field->named_parameters()) {
        const auto& key = p.key();
        if (key.rfind("density", 0) == 0 || key.rfind("feature", 0) == 0) head_params.push_back(p.value());
        else if (key.rfind("rgb", 0) != 0) film_params.push_back(p.value());
    }
    return {
        {"mapping", mapping->parameters()},
        {"sbm", sbm->parameters()},
        {"film", film_params},
        {"heads", head_params},
        {"renderer", renderer->parameters()},
    };
}

}  // namespace toonfield
