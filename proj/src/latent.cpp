#include "toonfield/latent.hpp"

#include "toonfield/errors.hpp"

namespace toonfield {

MappingNetworkImpl::MappingNetworkImpl(int64_t in_dim, int64_t hidden, int64_t layers, int64_t n_sites,
                                       int64_t w_dim)
    : in_dim_(in_dim), n_sites_(n_sites), w_dim_(w_dim) {
    if (layers < 1) throw ConfigError("mapping network needs at least one layer");
    int64_t width = in_dim;
    for (int64_t l = 0; l < layers; ++l) {
        const bool last = l + 1 == layers;
        const int64_t out = last ? n_sites * w_dim : hidden;
        layers_.push_back(register_module("fc" + std::to_string(l), torch::nn::Linear(width, out)));
        width = out;
    }
    // Small final layer keeps the initial W+ rows near zero.
    torch::NoGradGuard guard;
    layers_.back()->weight.mul_(0.25);
}

LatentStack MappingNetworkImpl::forward(const torch::Tensor& code) {
    if (code.dim() != 2 || code.size(1) != in_dim_)
        throw ConfigError("mapping network expects codes of shape [B, " + std::to_string(in_dim_) + "]");
    auto h = code;
    for (size_t l = 0; l < layers_.size(); ++l) {
        h = layers_[l]->forward(h);
        if (l + 1 < layers_.size()) h = torch::leaky_relu(h, 0.2);
    }
    return h.view({code.size(0), n_sites_, w_dim_});
}

DualMappingImpl::DualMappingImpl(const ModelConfig& cfg) {
    identity = register_module(
        "identity", MappingNetwork(cfg.z_dim, cfg.mapping_hidden, cfg.mapping_layers, cfg.n_sites(), cfg.w_dim));
    style = register_module(
        "style", MappingNetwork(cfg.style_dim, cfg.mapping_hidden, cfg.mapping_layers, cfg.n_sites(), cfg.w_dim));
}

LatentStack DualMappingImpl::map_to_wplus(const torch::Tensor& code, LatentKind which) {
    return which == LatentKind::identity ? identity->forward(code) : style->forward(code);
}

BlendWeights::BlendWeights(torch::Tensor raw, int64_t split_index) : raw_(std::move(raw)), split_(0) {
    if (raw_.dim() != 1) throw ConfigError("blend weights must be a vector");
    *this = with_split_index(split_index);
}

BlendWeights BlendWeights::with_split_index(int64_t i) const {
    if (i < 0 || i > size())
        throw ArgumentError("split index " + std::to_string(i) + " outside [0, " + std::to_string(size()) + "]");
    BlendWeights out = *this;
    out.split_ = i;
    return out;
}

torch::Tensor BlendWeights::effective() const {
    auto rows = torch::arange(size(), torch::TensorOptions().dtype(torch::kLong).device(raw_.device()));
    return torch::where(rows >= split_, torch::sigmoid(raw_), torch::zeros_like(raw_));
}

torch::Tensor blend_rows(const torch::Tensor& identity_rows, const torch::Tensor& style_rows,
                         const torch::Tensor& weights) {
    if (identity_rows.sizes() != style_rows.sizes())
        throw ConfigError("identity and style stacks must have identical shapes");
    // weights [rows] broadcast over [B, rows, w]
    const auto e = weights.view({1, -1, 1});
    const auto mixed = identity_rows + e * (style_rows - identity_rows);
    // Rows with zero weight keep the identity bits (including signed zeros).
    return torch::where(e == 0, identity_rows, mixed);
}

StyleBlenderImpl::StyleBlenderImpl(const ModelConfig& cfg) : k_(cfg.backbone_sites), n_nr_(cfg.renderer_sites) {
    raw = register_parameter("raw", torch::full({cfg.n_sites()}, cfg.sbm_init));
    for (int64_t j = 0; j < n_nr_; ++j) {
        trans_identity_.push_back(
            register_module("trans_identity" + std::to_string(j), torch::nn::Linear(cfg.w_dim, cfg.w_dim)));
        trans_style_.push_back(
            register_module("trans_style" + std::to_string(j), torch::nn::Linear(cfg.w_dim, cfg.w_dim)));
    }
}

BlendWeights StyleBlenderImpl::weights(int64_t split_index) const { return BlendWeights(raw, split_index); }

torch::Tensor StyleBlenderImpl::project_renderer_rows(const LatentStack& w, LatentKind which) {
    if (w.dim() != 3 || w.size(1) != n_sites())
        throw ConfigError("latent stack must have shape [B, " + std::to_string(n_sites()) + ", w]");
    auto& trans = which == LatentKind::identity ? trans_identity_ : trans_style_;
    std::vector<torch::Tensor> rows;
    rows.reserve(n_nr_);
    for (int64_t j = 0; j < n_nr_; ++j) rows.push_back(trans[j]->forward(w.select(1, k_ + j)));
    return torch::stack(rows, 1);
}

FusedLatents StyleBlenderImpl::blend(const LatentStack& w_f, const LatentStack& w_s, int64_t split_index) {
    if (w_f.sizes() != w_s.sizes()) throw ConfigError("identity and style stacks must have identical shapes");
    const auto e = weights(split_index).effective();
    FusedLatents out;
    out.backbone = blend_rows(w_f.narrow(1, 0, k_), w_s.narrow(1, 0, k_), e.narrow(0, 0, k_));
    out.renderer = blend_rows(project_renderer_rows(w_f, LatentKind::identity),
                              project_renderer_rows(w_s, LatentKind::style), e.narrow(0, k_, n_nr_));
    return out;
}

FusedLatents StyleBlenderImpl::identity_only(const LatentStack& w_f) {
    return {w_f.narrow(1, 0, k_), project_renderer_rows(w_f, LatentKind::identity)};
}

}  // namespace toonfield
