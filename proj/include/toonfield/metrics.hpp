#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <string>

#include <torch/torch.h>

#include "toonfield/generator.hpp"
#include "toonfield/style_encoder.hpp"

namespace toonfield {

struct MetricReport {
    std::string name;
    double value = 0.0;
    int64_t n_samples = 0;
    std::string config_hash;
};

// One JSON object per line.
void write_report(std::ostream& out, const MetricReport& report);

// Frechet distance between Gaussian fits of two feature sets [N, d].
// Computed in double precision. The covariance-product square root comes from
// an eigendecomposition of the symmetrised product sqrt(A) B sqrt(A); negative
// eigenvalues are clamped to `eps` and a warning is written to stderr.
double fid(const torch::Tensor& features_a, const torch::Tensor& features_b, double eps = 1e-6);

// Unbiased MMD^2 with kernel (x.y / d + 1)^3, averaged over blocks of
// `block_size` rows per set. Rows are assigned to blocks by a hash of their
// contents, so the estimate does not depend on row order.
// Throws ArgumentError when block_size exceeds either set size or is < 2.
double kid(const torch::Tensor& features_a, const torch::Tensor& features_b, int64_t block_size = 1000);

// exp(mean_n KL(p_n || mean_m p_m)). Rows must sum to 1 within 1e-6.
double inception_score(const torch::Tensor& class_probs);

using ImageDistance = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>;

// Mean over identities of the mean pairwise distance between the renders of
// one identity under every style. `images` is [n_identities, n_styles, 3, H, W];
// `distance` maps two [P, 3, H, W] batches to [P] distances.
double lpips_diversity(const torch::Tensor& images, const ImageDistance& distance);

// Renders every identity code under every style code at the frontal pose with
// split index 0 and scores them with lpips_diversity.
double lpips_diversity(Generator& generator, const torch::Tensor& identity_codes, const torch::Tensor& style_codes,
                       const ImageDistance& distance, int64_t resolution = 0);

// Fixed random-CNN stand-ins for the Inception network and the learned
// perceptual metric. Deterministic per seed.
class MetricNetwork {
public:
    explicit MetricNetwork(int64_t seed = 4321, int64_t classes = 10);

    // Non-negative activation statistics [N, 224].
    torch::Tensor features(const torch::Tensor& images);
    // Softmax class probabilities [N, classes].
    torch::Tensor class_probs(const torch::Tensor& images);
    // Mean squared difference of unit-normalised stage activations, per pair.
    torch::Tensor perceptual_distance(const torch::Tensor& a, const torch::Tensor& b);
    ImageDistance distance_fn();

private:
    std::shared_ptr<RandomConvExtractor> extractor_;
    torch::Tensor classifier_;
};

}  // namespace toonfield
