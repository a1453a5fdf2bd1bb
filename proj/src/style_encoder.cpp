#include "toonfield/style_encoder.hpp"

#include <cmath>
#include <numbers>

#include "toonfield/camera.hpp"
#include "toonfield/errors.hpp"

namespace toonfield {

RandomConvExtractor::RandomConvExtractor(int64_t seed) {
    auto gen = make_generator(uint64_t(seed));
    const int64_t widths[] = {3, 16, 32, 64};
    torch::NoGradGuard guard;
    for (int s = 0; s < 3; ++s) {
        auto conv = register_module(
            "conv" + std::to_string(s),
            torch::nn::Conv2d(torch::nn::Conv2dOptions(widths[s], widths[s + 1], 3).stride(2).padding(1)));
        const double fan_in = double(widths[s] * 9);
        conv->weight.copy_(torch::randn(conv->weight.sizes(), gen) * std::sqrt(2.0 / fan_in));
        conv->bias.copy_(torch::randn(conv->bias.sizes(), gen) * 0.1);
        conv->weight.set_requires_grad(false);
        conv->bias.set_requires_grad(false);
        convs_.push_back(conv);
    }
}

std::vector<torch::Tensor> RandomConvExtractor::stages(const torch::Tensor& img) {
    if (img.dim() != 4 || img.size(1) != 3) throw ArgumentError("images must have shape [B, 3, H, W]");
    if (img.size(2) < 8 || img.size(3) < 8) throw ArgumentError("images must be at least 8x8");
    std::vector<torch::Tensor> out;
    auto x = img;
    for (auto& conv : convs_) {
        x = torch::relu(conv->forward(x));
        out.push_back(x);
    }
    return out;
}

torch::Tensor RandomConvExtractor::forward(const torch::Tensor& img) {
    std::vector<torch::Tensor> stats;
    for (const auto& x : stages(img)) {
        auto flat = x.flatten(2);
        stats.push_back(flat.mean(2));
        stats.push_back(torch::sqrt(flat.var(2, false) + 1e-8));
    }
    return torch::cat(stats, 1);
}

StyleEncoderImpl::StyleEncoderImpl(const Config& cfg, std::shared_ptr<PerceptualExtractor> ext) {
    extractor = ext ? std::move(ext) : std::make_shared<RandomConvExtractor>(cfg.encoder.extractor_seed);
    register_module("extractor", extractor);
    const auto& e = cfg.encoder;
    compressor = register_module(
        "compressor", torch::nn::Sequential(torch::nn::Linear(extractor->feature_dim(), e.compress_hidden),
                                            torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
                                            torch::nn::Linear(e.compress_hidden, cfg.model.style_dim)));
    head = register_module("head", torch::nn::Sequential(
                                       torch::nn::Linear(cfg.model.style_dim, e.proj_hidden),
                                       torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
                                       torch::nn::Linear(e.proj_hidden, e.proj_dim)));
}

torch::Tensor StyleEncoderImpl::extract_features(const torch::Tensor& img) { return extractor->forward(img); }

torch::Tensor StyleEncoderImpl::encode(const torch::Tensor& img) { return compressor->forward(extract_features(img)); }

torch::Tensor StyleEncoderImpl::project(const torch::Tensor& codes) { return head->forward(codes); }

std::vector<torch::Tensor> StyleEncoderImpl::trainable_parameters() {
    auto params = compressor->parameters();
    for (auto& p : head->parameters()) params.push_back(p);
    return params;
}

AffineParams draw_affine(const EncoderConfig& cfg, torch::Generator& gen) {
    auto u = torch::rand({5}, gen, torch::kFloat64);
    auto a = u.accessor<double, 1>();
    AffineParams p;
    const double max_rot = cfg.max_rotation_deg * std::numbers::pi / 180.0;
    p.rotation = (2.0 * a[0] - 1.0) * max_rot;
    p.translate_x = (2.0 * a[1] - 1.0) * cfg.max_translation;
    p.translate_y = (2.0 * a[2] - 1.0) * cfg.max_translation;
    p.scale = cfg.min_scale + a[3] * (cfg.max_scale - cfg.min_scale);
    p.flip = a[4] < 0.5;
    return p;
}

torch::Tensor apply_affine(const torch::Tensor& img, const AffineParams& params) {
    namespace F = torch::nn::functional;
    const bool single = img.dim() == 3;
    auto x = single ? img.unsqueeze(0) : img;
    if (x.dim() != 4) throw ArgumentError("image must be [3, H, W] or [B, 3, H, W]");
    // theta maps output normalised coordinates to input coordinates.
    const double c = std::cos(params.rotation) / params.scale;
    const double s = std::sin(params.rotation) / params.scale;
    const double fx = params.flip ? -1.0 : 1.0;
    auto theta = torch::tensor({c * fx, -s, -2.0 * params.translate_x, s * fx, c, -2.0 * params.translate_y},
                               torch::TensorOptions().dtype(x.scalar_type()))
                     .view({1, 2, 3})
                     .expand({x.size(0), 2, 3});
    auto grid = F::affine_grid(theta, x.sizes(), false);
    auto out = F::grid_sample(x, grid,
                              F::GridSampleFuncOptions()
                                  .mode(torch::kBilinear)
                                  .padding_mode(torch::kReflection)
                                  .align_corners(false));
    return single ? out.squeeze(0) : out;
}

torch::Tensor augment(const torch::Tensor& img, uint64_t seed, const EncoderConfig& cfg) {
    auto gen = make_generator(seed);
    return apply_affine(img, draw_affine(cfg, gen));
}

torch::Tensor augment_batch(const torch::Tensor& imgs, torch::Generator& gen, const EncoderConfig& cfg) {
    std::vector<torch::Tensor> out;
    out.reserve(imgs.size(0));
    for (int64_t b = 0; b < imgs.size(0); ++b) out.push_back(apply_affine(imgs[b], draw_affine(cfg, gen)));
    return torch::stack(out);
}

torch::Tensor nt_xent_loss(const torch::Tensor& reps, const std::vector<std::pair<int64_t, int64_t>>& pairs,
                           double tau) {
    if (!(tau > 0)) throw ArgumentError("temperature must be positive");
    if (reps.dim() != 2) throw ArgumentError("representations must be [2N, d]");
    const int64_t total = reps.size(0);
    if (total % 2 != 0 || total < 4) throw ArgumentError("contrastive batch needs 2N rows with N >= 2");
    if (int64_t(pairs.size()) * 2 != total) throw ArgumentError("every sample needs exactly one positive partner");

    std::vector<int64_t> partner(total, -1);
    for (const auto& [i, j] : pairs) {
        if (i < 0 || j < 0 || i >= total || j >= total || i == j || partner[i] != -1 || partner[j] != -1)
            throw ArgumentError("positive pairs must form a perfect matching of the batch");
        partner[i] = j;
        partner[j] = i;
    }

    auto u = torch::nn::functional::normalize(reps, torch::nn::functional::NormalizeFuncOptions().dim(1));
    auto logits = torch::mm(u, u.t()) / tau;
    auto partner_idx = torch::tensor(partner, torch::kLong).view({-1, 1});
    auto eye = torch::eye(total, torch::TensorOptions().dtype(torch::kBool));
    auto positive_mask = torch::zeros({total, total}, torch::kBool).scatter_(1, partner_idx, true);
    auto negatives = logits.masked_fill(eye | positive_mask, -std::numeric_limits<double>::infinity());
    auto positive = logits.gather(1, partner_idx).squeeze(1);
    return (torch::logsumexp(negatives, 1) - positive).mean();
}

std::vector<std::pair<int64_t, int64_t>> interleaved_pairs(int64_t n) {
    std::vector<std::pair<int64_t, int64_t>> out;
    for (int64_t i = 0; i < n; ++i) out.emplace_back(2 * i, 2 * i + 1);
    return out;
}

torch::Tensor interleave(const torch::Tensor& anchors, const torch::Tensor& augmented) {
    if (anchors.sizes() != augmented.sizes()) throw ArgumentError("anchor and augmented batches differ in shape");
    auto stacked = torch::stack({anchors, augmented}, 1);  // [N, 2, ...]
    std::vector<int64_t> shape{anchors.size(0) * 2};
    for (int64_t d = 1; d < anchors.dim(); ++d) shape.push_back(anchors.size(d));
    return stacked.reshape(shape);
}

}  // namespace toonfield
