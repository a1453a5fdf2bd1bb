#include "toonfield/losses.hpp"

#include <cmath>

#include "toonfield/errors.hpp"

namespace toonfield {

double softminus(double x) {
    // -log(1 + e^{-x}) = min(x, 0) - log1p(e^{-|x|})
    return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x)));
}

torch::Tensor softminus(const torch::Tensor& x) { return -torch::softplus(-x); }

torch::Tensor adversarial_term(const torch::Tensor& fake_logits, const torch::Tensor& real_logits) {
    torch::Tensor total;
    if (fake_logits.defined()) total = softminus(fake_logits).mean();
    if (real_logits.defined()) {
        auto r = softminus(-real_logits).mean();
        total = total.defined() ? total + r : r;
    }
    if (!total.defined()) throw ArgumentError("adversarial term needs fake or real logits");
    return total;
}

torch::Tensor r1_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& logits_fn,
                         const torch::Tensor& images, double lambda) {
    if (!images.requires_grad()) throw UsageError("R1 penalty needs images that require grad");
    if (lambda < 0) throw ArgumentError("R1 weight must be nonnegative");
    auto logits = logits_fn(images);
    auto zero = torch::zeros({}, images.options().requires_grad(false));
    if (!logits.requires_grad()) return zero;
    auto grads = torch::autograd::grad({logits.sum()}, {images}, {}, /*retain_graph=*/true,
                                       /*create_graph=*/true, /*allow_unused=*/true)[0];
    if (!grads.defined()) return zero;
    return grads.pow(2).flatten(1).sum(1).mean() * lambda;
}

torch::Tensor pose_consistency_loss(const torch::Tensor& predicted, const torch::Tensor& target) {
    if (predicted.sizes() != target.sizes() || predicted.dim() != 2 || predicted.size(1) != 2)
        throw ArgumentError("poses must both have shape [B, 2]");
    return (predicted - target).pow(2).sum(1).mean();
}

void LossWeights::validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || r1_lambda < 0)
        throw ConfigError("loss weights must be nonnegative");
}

TotalLoss total_loss(const LossParts& p, const LossWeights& w) {
    w.validate();
    auto val = [](const torch::Tensor& t) { return t.defined() ? t : torch::zeros({}); };
    auto real = val(p.real) + val(p.real_pose);
    auto style = val(p.style) + val(p.style_pose);
    TotalLoss out;
    out.d_no_r1 = w.lambda1 * real + w.lambda2 * style + w.lambda3 * val(p.latent);
    out.d = out.d_no_r1 + w.lambda1 * val(p.real_r1) + w.lambda2 * val(p.style_r1);
    out.g = -out.d_no_r1;
    return out;
}

EmbeddingQueue::EmbeddingQueue(int64_t capacity) : capacity_(capacity) {
    if (capacity < 1) throw ArgumentError("queue capacity must be >= 1");
}

void EmbeddingQueue::push(const torch::Tensor& codes) {
    if (codes.dim() != 2) throw ArgumentError("queued codes must be [B, d]");
    auto detached = codes.detach();
    for (int64_t b = 0; b < detached.size(0); ++b) {
        rows_.push_back(detached[b].clone());
        if (int64_t(rows_.size()) > capacity_) rows_.pop_front();
    }
}

torch::Tensor EmbeddingQueue::pop_all() {
    if (rows_.empty()) throw UsageError("embedding queue is empty");
    auto out = torch::stack(std::vector<torch::Tensor>(rows_.begin(), rows_.end()));
    rows_.clear();
    return out;
}

torch::Tensor EmbeddingQueue::snapshot() const {
    if (rows_.empty()) return {};
    return torch::stack(std::vector<torch::Tensor>(rows_.begin(), rows_.end()));
}

void EmbeddingQueue::restore(const torch::Tensor& rows) {
    rows_.clear();
    if (rows.defined() && rows.numel() > 0) push(rows);
}

}  // namespace toonfield
