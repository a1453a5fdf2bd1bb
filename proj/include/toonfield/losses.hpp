#pragma once

#include <deque>
#include <functional>

#include <torch/torch.h>

namespace toonfield {

// f(x) = -log(1 + e^{-x}), evaluated without overflow for large |x|.
double softminus(double x);
torch::Tensor softminus(const torch::Tensor& x);

// Discriminator objective on precomputed logits:
//   mean f(fake) + mean f(-real)
// Either side may be undefined (skipped).
torch::Tensor adversarial_term(const torch::Tensor& fake_logits, const torch::Tensor& real_logits);

// lambda * mean_b ||d logit_b / d x_b||^2 over the batch.
// `images` must require grad; the returned penalty keeps the graph for backprop.
torch::Tensor r1_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& logits_fn,
                         const torch::Tensor& images, double lambda);

// Mean over the batch of the squared L2 distance between (pitch, yaw) pairs.
torch::Tensor pose_consistency_loss(const torch::Tensor& predicted, const torch::Tensor& target);

struct LossWeights {
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 1.0;
    double r1_lambda = 10.0;

    void validate() const;
};

// Individual terms of the discriminator objective. Adversarial terms exclude
// R1, which is carried separately. Undefined tensors count as zero.
struct LossParts {
    torch::Tensor real;        // L_r without R1
    torch::Tensor real_r1;
    torch::Tensor real_pose;
    torch::Tensor style;       // L_s without R1
    torch::Tensor style_r1;
    torch::Tensor style_pose;
    torch::Tensor latent;      // L_c (conditional discriminator)
};

struct TotalLoss {
    torch::Tensor d;        // L_D
    torch::Tensor d_no_r1;  // L_D without R1 terms
    torch::Tensor g;        // L_G = -L_D^{no-R1}
};

// L_D = l1 (L_real + L_real_pose) + l2 (L_style + L_style_pose) + l3 L_latent.
TotalLoss total_loss(const LossParts& parts, const LossWeights& weights);

// FIFO of style codes from the previous batch, used as negative conditions.
class EmbeddingQueue {
public:
    explicit EmbeddingQueue(int64_t capacity);

    // Appends rows of `codes` [B, d], evicting the oldest beyond capacity.
    void push(const torch::Tensor& codes);
    // Removes and returns all stored rows as [n, d]. Throws UsageError when empty.
    torch::Tensor pop_all();

    bool empty() const { return rows_.empty(); }
    int64_t size() const { return int64_t(rows_.size()); }
    int64_t capacity() const { return capacity_; }

    // Stored rows as one tensor (undefined when empty), for checkpointing.
    torch::Tensor snapshot() const;
    void restore(const torch::Tensor& rows);

private:
    int64_t capacity_;
    std::deque<torch::Tensor> rows_;
};

}  // namespace toonfield
