#include "toonfield/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "toonfield/camera.hpp"
#include "toonfield/errors.hpp"

namespace toonfield {
namespace {

torch::Tensor as_matrix(const torch::Tensor& t, const char* name) {
    if (!t.defined() || t.dim() != 2) throw ArgumentError(std::string(name) + " must be a 2-D feature array");
    if (t.size(0) < 2) throw ArgumentError(std::string(name) + " needs at least two rows");
    auto d = t.detach().to(torch::kFloat64).contiguous();
    if (!torch::isfinite(d).all().item<bool>()) throw ArgumentError(std::string(name) + " contains NaN or Inf");
    return d;
}

torch::Tensor covariance(const torch::Tensor& x, const torch::Tensor& mu) {
    auto c = x - mu;
    return c.t().mm(c) / double(x.size(0) - 1);
}

// Square root of a symmetric PSD matrix plus the smallest eigenvalue seen.
std::pair<torch::Tensor, double> sym_sqrt(const torch::Tensor& m, double eps) {
    auto sym = (m + m.t()) / 2.0;
    auto [vals, vecs] = torch::linalg_eigh(sym);
    const double min_val = vals.min().item<double>();
    auto clamped = torch::where(vals < 0, torch::full_like(vals, eps), vals);
    return {vecs.mm(torch::diag(clamped.sqrt())).mm(vecs.t()), min_val};
}

uint64_t row_hash(const double* row, int64_t d) {
    uint64_t h = 0xcbf29ce484222325ull;
    const auto* bytes = reinterpret_cast<const unsigned char*>(row);
    for (int64_t i = 0; i < d * int64_t(sizeof(double)); ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

torch::Tensor hash_ordered(const torch::Tensor& x) {
    const int64_t n = x.size(0), d = x.size(1);
    const double* p = x.data_ptr<double>();
    std::vector<std::pair<uint64_t, int64_t>> keys(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) keys[size_t(i)] = {row_hash(p + i * d, d), i};
    std::sort(keys.begin(), keys.end());
    std::vector<int64_t> order;
    order.reserve(size_t(n));
    for (const auto& k : keys) order.push_back(k.second);
    return x.index_select(0, torch::tensor(order, torch::kInt64));
}

double mmd_block(const torch::Tensor& x, const torch::Tensor& y) {
    const double d = double(x.size(1));
    const double m = double(x.size(0));
    auto kernel = [&](const torch::Tensor& a, const torch::Tensor& b) { return (a.mm(b.t()) / d + 1.0).pow(3); };
    auto kxx = kernel(x, x);
    auto kyy = kernel(y, y);
    auto kxy = kernel(x, y);
    const double sxx = (kxx.sum() - kxx.diagonal().sum()).item<double>();
    const double syy = (kyy.sum() - kyy.diagonal().sum()).item<double>();
    const double sxy = kxy.sum().item<double>();
    return sxx / (m * (m - 1)) + syy / (m * (m - 1)) - 2.0 * sxy / (m * m);
}

}  // namespace

void write_report(std::ostream& out, const MetricReport& r) {
    nlohmann::json rec = {{"name", r.name}, {"value", r.value}, {"n_samples", r.n_samples},
                          {"config_hash", r.config_hash}};
    out << rec.dump() << '\n';
}

double fid(const torch::Tensor& features_a, const torch::Tensor& features_b, double eps) {
    auto a = as_matrix(features_a, "features_a");
    auto b = as_matrix(features_b, "features_b");
    if (a.size(1) != b.size(1)) throw ArgumentError("feature dimensions differ");
    auto mu_a = a.mean(0, true);
    auto mu_b = b.mean(0, true);
    auto cov_a = covariance(a, mu_a);
    auto cov_b = covariance(b, mu_b);
    auto [root_a, min_a] = sym_sqrt(cov_a, eps);
    auto [root_prod, min_p] = sym_sqrt(root_a.mm(cov_b).mm(root_a), eps);
    const double scale = std::max(1.0, cov_a.diagonal().abs().max().item<double>());
    if (std::min(min_a, min_p) < -eps * scale)
        std::cerr << "warning: fid covariance square root hit negative eigenvalue " << std::min(min_a, min_p)
                  << "; clamped to " << eps << '\n';
    const double mean_term = (mu_a - mu_b).pow(2).sum().item<double>();
    const double trace = (cov_a.trace() + cov_b.trace() - 2.0 * root_prod.trace()).item<double>();
    return mean_term + trace;
}

double kid(const torch::Tensor& features_a, const torch::Tensor& features_b, int64_t block_size) {
    auto a = as_matrix(features_a, "features_a");
    auto b = as_matrix(features_b, "features_b");
    if (a.size(1) != b.size(1)) throw ArgumentError("feature dimensions differ");
    if (block_size < 2) throw ArgumentError("KID block size must be >= 2");
    if (block_size > a.size(0) || block_size > b.size(0))
        throw ArgumentError("KID block size " + std::to_string(block_size) + " exceeds the number of samples");
    a = hash_ordered(a);
    b = hash_ordered(b);
    const int64_t blocks = std::min(a.size(0), b.size(0)) / block_size;
    double total = 0.0;
    for (int64_t k = 0; k < blocks; ++k)
        total += mmd_block(a.slice(0, k * block_size, (k + 1) * block_size),
                           b.slice(0, k * block_size, (k + 1) * block_size));
    return total / double(blocks);
}

double inception_score(const torch::Tensor& class_probs) {
    if (!class_probs.defined() || class_probs.dim() != 2 || class_probs.size(0) < 1)
        throw ArgumentError("class probabilities must be [N, C]");
    auto p = class_probs.detach().to(torch::kFloat64);
    if ((p < 0).any().item<bool>() || !torch::isfinite(p).all().item<bool>())
        throw ArgumentError("class probabilities must be finite and non-negative");
    if (((p.sum(1) - 1.0).abs() > 1e-6).any().item<bool>()) throw ArgumentError("rows must sum to 1");
    auto marginal = p.mean(0, true).expand_as(p);
    auto terms = torch::where(p > 0, p * (p.log() - marginal.log()), torch::zeros_like(p));
    return std::exp(terms.sum(1).mean().item<double>());
}

double lpips_diversity(const torch::Tensor& images, const ImageDistance& distance) {
    if (!images.defined() || images.dim() != 5) throw ArgumentError("images must be [identities, styles, 3, H, W]");
    const int64_t n_id = images.size(0), n_st = images.size(1);
    if (n_st < 2) throw ArgumentError("diversity needs at least two styles per identity");
    if (n_id < 1) throw ArgumentError("diversity needs at least one identity");
    std::vector<int64_t> first, second;
    for (int64_t i = 0; i < n_st; ++i)
        for (int64_t j = i + 1; j < n_st; ++j) {
            first.push_back(i);
            second.push_back(j);
        }
    auto ia = torch::tensor(first, torch::kInt64);
    auto ib = torch::tensor(second, torch::kInt64);
    double total = 0.0;
    for (int64_t n = 0; n < n_id; ++n) {
        auto d = distance(images[n].index_select(0, ia), images[n].index_select(0, ib));
        total += d.to(torch::kFloat64).mean().item<double>();
    }
    return total / double(n_id);
}

double lpips_diversity(Generator& generator, const torch::Tensor& identity_codes, const torch::Tensor& style_codes,
                       const ImageDistance& distance, int64_t resolution) {
    torch::NoGradGuard no_grad;
    const int64_t n_st = style_codes.size(0);
    auto poses = torch::tensor({CameraPose::frontal().pitch, CameraPose::frontal().yaw}, torch::kFloat32)
                     .view({1, 2})
                     .expand({n_st, 2});
    RenderOptions opts;
    opts.resolution = resolution;
    std::vector<torch::Tensor> rows;
    for (int64_t n = 0; n < identity_codes.size(0); ++n) {
        auto z_f = identity_codes[n].unsqueeze(0).expand({n_st, identity_codes.size(1)});
        rows.push_back(generator->forward(z_f, style_codes, poses, 0, nullptr, opts));
    }
    return lpips_diversity(torch::stack(rows), distance);
}

MetricNetwork::MetricNetwork(int64_t seed, int64_t classes)
    : extractor_(std::make_shared<RandomConvExtractor>(seed)) {
    if (classes < 2) throw ArgumentError("need at least two classes");
    auto gen = make_generator(uint64_t(seed) + 1);
    classifier_ = torch::randn({extractor_->feature_dim(), classes}, gen) / std::sqrt(double(extractor_->feature_dim()));
}

torch::Tensor MetricNetwork::features(const torch::Tensor& images) {
    torch::NoGradGuard no_grad;
    return extractor_->forward(images);
}

torch::Tensor MetricNetwork::class_probs(const torch::Tensor& images) {
    auto f = features(images).to(torch::kFloat64);
    auto logits = (f - f.mean(1, true)).mm(classifier_.to(torch::kFloat64)) * 4.0;
    return torch::softmax(logits, 1);
}

torch::Tensor MetricNetwork::perceptual_distance(const torch::Tensor& a, const torch::Tensor& b) {
    torch::NoGradGuard no_grad;
    if (a.sizes() != b.sizes()) throw ArgumentError("distance inputs must have equal shapes");
    auto sa = extractor_->stages(a);
    auto sb = extractor_->stages(b);
    auto total = torch::zeros({a.size(0)});
    for (size_t s = 0; s < sa.size(); ++s) {
        auto na = sa[s] / (sa[s].norm(2, 1, true) + 1e-10);
        auto nb = sb[s] / (sb[s].norm(2, 1, true) + 1e-10);
        total = total + (na - nb).pow(2).sum(1).mean({1, 2});
    }
    return total;
}

ImageDistance MetricNetwork::distance_fn() {
    return [this](const torch::Tensor& a, const torch::Tensor& b) { return perceptual_distance(a, b); };
}

}  // namespace toonfield
