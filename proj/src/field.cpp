#include "toonfield/field.hpp"

#include <cmath>

#include "toonfield/errors.hpp"

namespace toonfield {

torch::Tensor film_layer(const torch::Tensor& x, const torch::Tensor& gamma, const torch::Tensor& beta,
                         const torch::Tensor& weight, const torch::Tensor& bias) {
    if (x.size(-1) != weight.size(1))
        throw ConfigError("FiLM input width " + std::to_string(x.size(-1)) + " does not match weight columns " +
                          std::to_string(weight.size(1)));
    if (bias.defined() && bias.size(0) != weight.size(0)) throw ConfigError("FiLM bias does not match weight rows");
    return torch::sin(gamma * torch::nn::functional::linear(x, weight, bias) + beta);
}

RadianceFieldImpl::RadianceFieldImpl(const ModelConfig& cfg, bool check_finite)
    : k_(cfg.backbone_sites),
      hidden_(cfg.hidden),
      feature_dim_(cfg.feature_dim),
      w_dim_(cfg.w_dim),
      gamma_scale_(cfg.gamma_scale),
      gamma_offset_(cfg.gamma_offset),
      coord_scale_(cfg.coord_scale),
      feature_clip_(cfg.feature_clip),
      dense_skip_(cfg.dense_skip),
      check_finite_(check_finite) {
    if (k_ < 2) throw ConfigError("radiance field needs at least two FiLM layers");
    torch::NoGradGuard guard;
    for (int64_t i = 0; i < k_; ++i) {
        const int64_t in = i == 0 ? 3 : (i + 1 == k_ ? hidden_ + 3 : hidden_);
        auto layer = register_module("film" + std::to_string(i), torch::nn::Linear(in, hidden_));
        // SIREN frequency-aware init: the first layer spans [-1/in, 1/in].
        const double bound = i == 0 ? 1.0 / double(in) : std::sqrt(6.0 / double(in)) / 25.0;
        layer->weight.uniform_(-bound, bound);
        film.push_back(layer);

        auto g = register_module("gamma" + std::to_string(i), torch::nn::Linear(w_dim_, hidden_));
        g->weight.mul_(0.25);
        gamma_heads.push_back(g);
        auto b = register_module("beta" + std::to_string(i), torch::nn::Linear(w_dim_, hidden_));
        b->weight.zero_();
        b->bias.zero_();
        beta_heads.push_back(b);

        if (i + 1 < k_) density_heads.push_back(register_module("density" + std::to_string(i), torch::nn::Linear(hidden_, 1)));
        feature_heads.push_back(
            register_module("feature" + std::to_string(i), torch::nn::Linear(hidden_, feature_dim_)));
    }
    rgb_head = register_module("rgb", torch::nn::Linear(feature_dim_, 3));
}

Modulation RadianceFieldImpl::modulation(const torch::Tensor& w_bb) {
    if (w_bb.dim() != 3 || w_bb.size(1) != k_ || w_bb.size(2) != w_dim_)
        throw ConfigError("backbone latents must have shape [B, " + std::to_string(k_) + ", " +
                          std::to_string(w_dim_) + "]");
    std::vector<torch::Tensor> gammas;
    std::vector<torch::Tensor> betas;
    for (int64_t i = 0; i < k_; ++i) {
        const auto row = w_bb.select(1, i);
        gammas.push_back(gamma_heads[i]->forward(row) * gamma_scale_ + gamma_offset_);
        betas.push_back(beta_heads[i]->forward(row));
    }
    return {torch::stack(gammas, 1), torch::stack(betas, 1)};
}

FieldSamples RadianceFieldImpl::forward(const torch::Tensor& points, const torch::Tensor& view_dirs,
                                        const torch::Tensor& w_bb) {
    return forward(points, view_dirs, modulation(w_bb));
}

FieldSamples RadianceFieldImpl::forward(const torch::Tensor& points, const torch::Tensor& view_dirs,
                                        const Modulation& mod) {
    if (points.dim() != 3 || points.size(2) != 3 || view_dirs.sizes() != points.sizes())
        throw ConfigError("points and view directions must both have shape [B, P, 3]");
    if (mod.gamma.size(0) != points.size(0)) throw ConfigError("latent batch does not match point batch");

    auto x = points * coord_scale_;
    torch::Tensor sigma_sum;
    torch::Tensor feature_sum;
    for (int64_t i = 0; i < k_; ++i) {
        if (i + 1 == k_) x = torch::cat({x, view_dirs}, -1);
        const auto gamma = mod.gamma.select(1, i).unsqueeze(1);
        const auto beta = mod.beta.select(1, i).unsqueeze(1);
        x = film_layer(x, gamma, beta, film[i]->weight, film[i]->bias);
        if (check_finite_ && !torch::isfinite(x).all().item<bool>())
            throw NumericError("non-finite FiLM activation", int(i));

        const bool density_site = i + 1 < k_ && (dense_skip_ || i + 2 == k_);
        const bool feature_site = dense_skip_ || i + 1 == k_;
        if (density_site) {
            auto s = density_heads[i]->forward(x);
            sigma_sum = sigma_sum.defined() ? sigma_sum + s : s;
        }
        if (feature_site) {
            auto f = feature_heads[i]->forward(x);
            feature_sum = feature_sum.defined() ? feature_sum + f : f;
        }
    }
    FieldSamples out;
    out.sigma = torch::softplus(sigma_sum).squeeze(-1);
    out.features = torch::clamp(feature_sum, -feature_clip_, feature_clip_);
    return out;
}

torch::Tensor RadianceFieldImpl::to_rgb(const torch::Tensor& features) { return rgb_head->forward(features); }

Composite volume_render(const torch::Tensor& sigma, const torch::Tensor& features, const torch::Tensor& depths,
                        double far) {
    if (sigma.sizes() != depths.sizes()) throw ConfigError("density and depth shapes differ");
    if (features.dim() != sigma.dim() + 1 || features.sizes().slice(0, sigma.dim()) != sigma.sizes())
        throw ConfigError("feature shape must be density shape plus a channel dimension");
    if ((sigma < 0).any().item<bool>()) throw PreconditionError("volume density must be nonnegative");
    const int64_t n = depths.size(-1);
    if (n > 1 && (depths.diff(1, -1) <= 0).any().item<bool>())
        throw PreconditionError("sample depths must be strictly increasing along each ray");

    auto last_gap = (far - depths.narrow(-1, n - 1, 1));
    auto deltas = n > 1 ? torch::cat({depths.diff(1, -1), last_gap}, -1) : last_gap;
    auto alpha = 1.0 - torch::exp(-sigma * deltas);
    auto survive = torch::cat({torch::ones_like(alpha.narrow(-1, 0, 1)), 1.0 - alpha.narrow(-1, 0, n - 1)}, -1);
    auto transmittance = torch::cumprod(survive, -1);
    Composite out;
    out.weights = alpha * transmittance;
    out.features = (out.weights.unsqueeze(-1) * features).sum(-2);
    return out;
}

torch::Tensor render_feature_grid(RadianceField& field, const torch::Tensor& poses, const torch::Tensor& w_bb,
                                  const CameraConfig& camera, int64_t resolution, int64_t n_samples,
                                  int64_t chunk_rays, torch::Generator* jitter) {
    if (chunk_rays < 1) throw ArgumentError("chunk size must be >= 1");
    const auto rays = generate_rays(poses, camera, resolution, n_samples, jitter);
    const auto dtype = field->film[0]->weight.scalar_type();
    const auto origins = rays.origins.to(dtype);
    const auto dirs = rays.directions.to(dtype);
    const auto depths = rays.depths.to(dtype);
    const auto mod = field->modulation(w_bb);
    const int64_t batch = poses.size(0);
    const int64_t total = rays.rays();

    std::vector<torch::Tensor> chunks;
    for (int64_t start = 0; start < total; start += chunk_rays) {
        const int64_t len = std::min(chunk_rays, total - start);
        auto o = origins.narrow(1, start, len).unsqueeze(2);  // [B, c, 1, 3]
        auto d = dirs.narrow(1, start, len).unsqueeze(2);
        auto t = depths.narrow(1, start, len);                // [B, c, N]
        auto pts = (o + d * t.unsqueeze(-1)).reshape({batch, len * n_samples, 3});
        auto view = d.expand({batch, len, n_samples, 3}).reshape({batch, len * n_samples, 3});
        auto samples = field->forward(pts, view, mod);
        auto sigma = samples.sigma.view({batch, len, n_samples});
        auto feats = samples.features.view({batch, len, n_samples, -1});
        chunks.push_back(volume_render(sigma, feats, t, rays.far).features);
    }
    auto flat = torch::cat(chunks, 1);  // [B, R, M]
    return flat.permute({0, 2, 1}).reshape({batch, -1, resolution, resolution});
}

}  // namespace toonfield
