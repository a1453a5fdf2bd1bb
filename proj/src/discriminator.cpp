#include "toonfield/discriminator.hpp"

#include <cmath>

#include "toonfield/errors.hpp"

namespace toonfield {

ResidualDownImpl::ResidualDownImpl(int64_t in, int64_t out) {
    using torch::nn::Conv2dOptions;
    conv1_ = register_module("conv1", torch::nn::Conv2d(Conv2dOptions(in, out, 3).padding(1)));
    conv2_ = register_module("conv2", torch::nn::Conv2d(Conv2dOptions(out, out, 3).padding(1)));
    skip_ = register_module("skip", torch::nn::Conv2d(Conv2dOptions(in, out, 1).bias(false)));
}

torch::Tensor ResidualDownImpl::forward(const torch::Tensor& x) {
    auto h = torch::leaky_relu(conv1_->forward(x), 0.2);
    h = torch::leaky_relu(conv2_->forward(h), 0.2);
    h = torch::avg_pool2d(h, 2);
    auto s = torch::avg_pool2d(skip_->forward(x), 2);
    return (h + s) * M_SQRT1_2;
}

DiscriminatorImpl::DiscriminatorImpl(const DiscConfig& cfg, int64_t image_res, bool with_pose, int64_t embed_dim)
    : image_res_(image_res), embed_dim_(embed_dim) {
    if (image_res % (int64_t{1} << cfg.stages) != 0)
        throw ConfigError("discriminator input " + std::to_string(image_res) + " is not divisible by 2^" +
                          std::to_string(cfg.stages));
    from_rgb = register_module("from_rgb", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, cfg.base_width, 1)));
    trunk = register_module("trunk", torch::nn::ModuleList());
    int64_t width = cfg.base_width;
    for (int64_t s = 0; s < cfg.stages; ++s) {
        const int64_t out = std::min(width * 2, cfg.max_width);
        trunk->push_back(ResidualDown(width, out));
        width = out;
    }
    feature_dim_ = width;
    logit_head = register_module("logit", torch::nn::Linear(width, 1));
    if (with_pose) pose_head = register_module("pose", torch::nn::Linear(width, 2));
    if (embed_dim > 0) {
        embed = register_module("embed", torch::nn::Linear(embed_dim, width));
        torch::NoGradGuard guard;
        embed->weight.zero_();
        embed->bias.zero_();
    }
}

DiscOutput DiscriminatorImpl::forward(const torch::Tensor& img) {
    if (img.dim() != 4 || img.size(1) != 3 || img.size(2) != image_res_ || img.size(3) != image_res_)
        throw ConfigError("discriminator expects images of shape [B, 3, " + std::to_string(image_res_) + ", " +
                          std::to_string(image_res_) + "]");
    auto h = torch::leaky_relu(from_rgb->forward(img), 0.2);
    for (const auto& stage : *trunk) h = stage->as<ResidualDown>()->forward(h);
    DiscOutput out;
    out.gsp = h.sum({2, 3});
    out.logit = logit_head->forward(out.gsp).squeeze(1);
    if (!pose_head.is_empty()) out.pose = pose_head->forward(out.gsp);
    return out;
}

torch::Tensor DiscriminatorImpl::conditional(const DiscOutput& out, const torch::Tensor& style_code) {
    if (embed.is_empty()) throw ConfigError("discriminator has no embedder head");
    if (style_code.dim() != 2 || style_code.size(1) != embed_dim_ || style_code.size(0) != out.logit.size(0))
        throw ConfigError("style codes must have shape [B, " + std::to_string(embed_dim_) + "]");
    return out.logit + (out.gsp * embed->forward(style_code)).sum(1);
}

torch::Tensor DiscriminatorImpl::conditional(const torch::Tensor& img, const torch::Tensor& style_code) {
    return conditional(forward(img), style_code);
}

DiscriminatorSet::DiscriminatorSet(const Config& cfg) {
    const auto res = cfg.model.image_res;
    real = Discriminator(cfg.disc, res, cfg.disc.pose_head, 0);
    style = Discriminator(cfg.disc, res, cfg.disc.pose_head, 0);
    conditional = Discriminator(cfg.disc, res, false, cfg.model.style_dim);
}

Discriminator& DiscriminatorSet::get(DiscKind kind) {
    switch (kind) {
        case DiscKind::real: return real;
        case DiscKind::style: return style;
        case DiscKind::conditional: return conditional;
    }
    throw ArgumentError("unknown discriminator kind");
}

}  // namespace toonfield
