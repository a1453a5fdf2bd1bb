#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. Everything here works in double precision with plain
// loops where possible so it shares no code path with the library.

#include <cmath>
#include <functional>
#include <vector>

#include <torch/torch.h>

namespace oracle {

// Central differences of a scalar function of a double tensor.
inline torch::Tensor central_diff(const std::function<double(const torch::Tensor&)>& f, const torch::Tensor& x,
                                  double h = 1e-6) {
    auto base = x.detach().to(torch::kFloat64).contiguous().clone();
    auto grad = torch::zeros_like(base);
    auto flat = base.view({-1});
    auto g = grad.view({-1});
    for (int64_t i = 0; i < flat.numel(); ++i) {
        const double v = flat[i].item<double>();
        flat[i] = v + h;
        const double up = f(base);
        flat[i] = v - h;
        const double down = f(base);
        flat[i] = v;
        g[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

inline double rel_err(const torch::Tensor& a, const torch::Tensor& b) {
    auto x = a.to(torch::kFloat64), y = b.to(torch::kFloat64);
    const double denom = std::max({x.norm().item<double>(), y.norm().item<double>(), 1e-30});
    return (x - y).norm().item<double>() / denom;
}

// Step-by-step front-to-back compositing of one ray.
inline std::vector<double> composite_ray(const std::vector<double>& sigma, const std::vector<std::vector<double>>& f,
                                         const std::vector<double>& depth, double far) {
    const size_t n = sigma.size();
    const size_t m = f.empty() ? 0 : f[0].size();
    std::vector<double> out(m, 0.0);
    double transmittance = 1.0;
    for (size_t j = 0; j < n; ++j) {
        const double delta = (j + 1 < n ? depth[j + 1] : far) - depth[j];
        const double alpha = 1.0 - std::exp(-sigma[j] * delta);
        const double w = transmittance * alpha;
        for (size_t c = 0; c < m; ++c) out[c] += w * f[j][c];
        transmittance *= 1.0 - alpha;
    }
    return out;
}

// Pixels on one axis of a res x res output reached by grid site u after
// `ups` bilinear 2x upsamplings with half-pixel centres (align_corners=false).
// One stage maps input index u to output indices o whose sample position
// (o + 0.5)/2 - 0.5, clamped at the border, has u among its two taps.
inline std::vector<bool> bilinear_reach(int64_t in_size, int64_t u, int64_t ups) {
    std::vector<bool> reach(size_t(in_size), false);
    reach[size_t(u)] = true;
    int64_t size = in_size;
    for (int64_t s = 0; s < ups; ++s) {
        std::vector<bool> next(size_t(size * 2), false);
        for (int64_t o = 0; o < size * 2; ++o) {
            const double pos = std::max(0.0, (double(o) + 0.5) / 2.0 - 0.5);
            const int64_t lo = int64_t(std::floor(pos));
            const int64_t hi = std::min(lo + 1, size - 1);
            const double frac = pos - double(lo);
            const bool lo_hit = reach[size_t(lo)] && (1.0 - frac) > 0.0;
            const bool hi_hit = reach[size_t(hi)] && (frac > 0.0 || hi == lo);
            next[size_t(o)] = lo_hit || hi_hit;
        }
        reach = std::move(next);
        size *= 2;
    }
    return reach;
}

}  // namespace oracle
