#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>

#include <torch/torch.h>

#include "toonfield/checkpoint.hpp"
#include "toonfield/config.hpp"
#include "toonfield/discriminator.hpp"
#include "toonfield/generator.hpp"
#include "toonfield/losses.hpp"
#include "toonfield/style_encoder.hpp"

namespace toonfield {

struct Datasets {
    torch::Tensor natural;  // [N, 3, H, W] real face photos
    torch::Tensor styles;   // [M, 3, H, W] artistic references
};

struct StepMetrics {
    int64_t step = 0;
    std::map<std::string, double> values;
};

// One JSON object per line: {"step": s, "name": "...", "value": v}.
void append_metrics(std::ostream& out, const StepMetrics& metrics);

// Two-stage adversarial trainer.
//
// Stage 1 trains G and D_r on natural faces with the style path disabled.
// Stage 2 adds style injection through the blender, D_s, D_c with negative
// codes from the embedding queue, and optional contrastive fine-tuning of the
// style encoder. Every step draws its randomness from (seed, step), so a
// restored checkpoint continues bit-identically in deterministic mode.
class Trainer {
public:
    Trainer(const Config& cfg, int stage, Datasets data);
    ~Trainer();

    // Initialises stage-2 training from a stage-1 checkpoint (weights only, step 0).
    void load_stage1(const Checkpoint& ckpt);
    // Resumes exactly: weights, optimiser moments, queue and step.
    void restore(const Checkpoint& ckpt);
    Checkpoint checkpoint();

    StepMetrics step();

    int stage() const { return stage_; }
    int64_t current_step() const { return step_; }
    const Config& config() const { return cfg_; }
    const EmbeddingQueue& queue() const { return queue_; }

    // Loss terms for the next step's batch without updating anything. With
    // `for_generator` the graph reaches the generator (no R1 terms).
    TotalLoss inspect_losses(bool for_generator);

    Generator generator{nullptr};
    DiscriminatorSet discs;
    StyleEncoder encoder{nullptr};

private:
    struct Batch {
        torch::Tensor real;
        torch::Tensor styles;
        torch::Tensor z_f;
        torch::Tensor z_s;
        torch::Tensor negatives;  // queued codes from the previous batch, may be undefined
        torch::Tensor poses;
    };
    struct Evaluated {
        LossParts parts;
        torch::Tensor update;  // objective actually descended by the player
    };
    Batch sample_batch(torch::Generator& gen, bool consume_queue);
    Evaluated evaluate(const Batch& batch, torch::Generator& gen, bool for_generator);
    void check_finite(const std::vector<torch::Tensor>& params, const std::string& what) const;

    Config cfg_;
    int stage_;
    Datasets data_;
    LossWeights weights_;
    EmbeddingQueue queue_;
    std::unique_ptr<torch::optim::Adam> opt_g_;
    std::unique_ptr<torch::optim::Adam> opt_d_;
    std::unique_ptr<torch::optim::Adam> opt_e_;
    int64_t step_ = 0;
};

// Trains the compressor and projection head alone with the contrastive
// objective on augmented pairs. Returns the per-step loss curve.
std::vector<double> contrastive_pretrain(StyleEncoder& encoder, const torch::Tensor& styles, const Config& cfg,
                                         int64_t steps, int64_t batch, uint64_t seed);

// Runs `cfg.train.steps` steps of the given stage, writing checkpoints every
// `cfg.train.checkpoint_every` steps (and at the end) as ckpt_stage{s}_{step}.tfck,
// plus metrics.jsonl. Stage 2 requires `init` (a stage-1 checkpoint) unless
// `resume` is given.
std::vector<std::filesystem::path> train(int stage, const Config& cfg, const Datasets& data,
                                         const std::filesystem::path& out_dir,
                                         const std::optional<std::filesystem::path>& init,
                                         const std::optional<std::filesystem::path>& resume = std::nullopt);

// Loads a generator (and its config) from a trainer checkpoint.
struct LoadedModel {
    Config config;
    Generator generator{nullptr};
    StyleEncoder encoder{nullptr};
};
LoadedModel load_model(const Checkpoint& ckpt);
LoadedModel load_model(const std::filesystem::path& path);
// Checkpoint holding only freshly initialised weights (used for untrained demos and tests).
Checkpoint initial_checkpoint(const Config& cfg);

}  // namespace toonfield
