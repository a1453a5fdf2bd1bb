#include "toonfield/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "toonfield/camera.hpp"
#include "toonfield/errors.hpp"

namespace toonfield {
namespace {

uint64_t mix(uint64_t seed, uint64_t step) {
    uint64_t x = seed ^ (step * 0x9E3779B97F4A7C15ull);
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::unique_ptr<torch::optim::Adam> make_adam(std::vector<torch::optim::OptimizerParamGroup> groups,
                                              const TrainConfig& t, double lr) {
    auto opts = torch::optim::AdamOptions(lr).betas({t.adam_beta1, t.adam_beta2});
    return std::make_unique<torch::optim::Adam>(std::move(groups), opts);
}

torch::optim::OptimizerParamGroup group(std::vector<torch::Tensor> params, const TrainConfig& t, double lr) {
    return torch::optim::OptimizerParamGroup(
        std::move(params), std::make_unique<torch::optim::AdamOptions>(
                               torch::optim::AdamOptions(lr).betas({t.adam_beta1, t.adam_beta2})));
}

void store_adam(Checkpoint& ckpt, const std::string& prefix, torch::optim::Adam& opt) {
    const auto& groups = opt.param_groups();
    for (size_t g = 0; g < groups.size(); ++g) {
        const auto& params = groups[g].params();
        for (size_t i = 0; i < params.size(); ++i) {
            auto it = opt.state().find(params[i].unsafeGetTensorImpl());
            if (it == opt.state().end()) continue;
            auto& st = static_cast<torch::optim::AdamParamState&>(*it->second);
            const auto key = prefix + "." + std::to_string(g) + "." + std::to_string(i);
            ckpt.arrays[key + ".step"] = torch::tensor(st.step(), torch::kInt64);
            ckpt.arrays[key + ".exp_avg"] = st.exp_avg().detach().clone();
            ckpt.arrays[key + ".exp_avg_sq"] = st.exp_avg_sq().detach().clone();
        }
    }
}

void restore_adam(const Checkpoint& ckpt, const std::string& prefix, torch::optim::Adam& opt) {
    opt.state().clear();
    const auto& groups = opt.param_groups();
    for (size_t g = 0; g < groups.size(); ++g) {
        const auto& params = groups[g].params();
        for (size_t i = 0; i < params.size(); ++i) {
            const auto key = prefix + "." + std::to_string(g) + "." + std::to_string(i);
            auto step = ckpt.arrays.find(key + ".step");
            if (step == ckpt.arrays.end()) continue;
            auto m = ckpt.arrays.find(key + ".exp_avg");
            auto v = ckpt.arrays.find(key + ".exp_avg_sq");
            if (m == ckpt.arrays.end() || v == ckpt.arrays.end())
                throw IntegrityError("arrays", "incomplete optimiser state for " + key);
            if (m->second.sizes() != params[i].sizes())
                throw ConfigError("optimiser state " + key + " does not match the model");
            auto st = std::make_unique<torch::optim::AdamParamState>();
            st->step(step->second.item<int64_t>());
            st->exp_avg(m->second.clone());
            st->exp_avg_sq(v->second.clone());
            opt.state()[params[i].unsafeGetTensorImpl()] = std::move(st);
        }
    }
}

std::vector<torch::Tensor> params_of(std::initializer_list<torch::nn::Module*> modules) {
    std::vector<torch::Tensor> out;
    for (auto* m : modules)
        for (auto& p : m->parameters())
            if (p.requires_grad()) out.push_back(p);
    return out;
}

torch::Tensor take(const torch::Tensor& data, int64_t batch, torch::Generator& gen) {
    auto idx = torch::randint(data.size(0), {batch}, gen, torch::kInt64);
    return data.index_select(0, idx);
}

void check_images(const torch::Tensor& t, int64_t res, const std::string& name) {
    if (!t.defined() || t.dim() != 4 || t.size(1) != 3 || t.size(2) != res || t.size(3) != res)
        throw UsageError(name + " images must be [N, 3, " + std::to_string(res) + ", " + std::to_string(res) + "]");
    if (t.size(0) < 1) throw UsageError(name + " dataset is empty");
}

}  // namespace

void append_metrics(std::ostream& out, const StepMetrics& metrics) {
    for (const auto& [name, value] : metrics.values) {
        nlohmann::json rec = {{"step", metrics.step}, {"name", name}, {"value", value}};
        out << rec.dump() << '\n';
    }
}

Trainer::Trainer(const Config& cfg, int stage, Datasets data)
    : discs((torch::manual_seed(cfg.train.seed), cfg)),
      cfg_(cfg),
      stage_(stage),
      data_(std::move(data)),
      queue_(cfg.train.batch_size) {
    cfg_.validate();
    if (stage != 1 && stage != 2) throw UsageError("stage must be 1 or 2");
    if (cfg_.train.deterministic) at::globalContext().setDeterministicAlgorithms(true, false);
    check_images(data_.natural, cfg_.model.image_res, "natural");
    if (stage_ == 2) check_images(data_.styles, cfg_.model.image_res, "style");

    generator = Generator(cfg_);
    encoder = StyleEncoder(cfg_);

    weights_ = {cfg_.train.lambda1, cfg_.train.lambda2, cfg_.train.lambda3, cfg_.train.r1_lambda};
    if (stage_ == 1) weights_.lambda2 = weights_.lambda3 = 0.0;
    weights_.validate();

    const auto& t = cfg_.train;
    std::vector<torch::optim::OptimizerParamGroup> g_groups;
    std::vector<torch::Tensor> rest;
    for (auto& [name, params] : generator->parameter_groups()) {
        if (name == "mapping")
            g_groups.push_back(group(params, t, t.lr_mapping));
        else
            rest.insert(rest.end(), params.begin(), params.end());
    }
    g_groups.push_back(group(rest, t, t.lr_g));
    opt_g_ = make_adam(std::move(g_groups), t, t.lr_g);

    std::vector<torch::optim::OptimizerParamGroup> d_groups;
    if (stage_ == 1)
        d_groups.push_back(group(params_of({discs.real.get()}), t, t.lr_d));
    else
        d_groups.push_back(
            group(params_of({discs.real.get(), discs.style.get(), discs.conditional.get()}), t, t.lr_d));
    opt_d_ = make_adam(std::move(d_groups), t, t.lr_d);

    std::vector<torch::optim::OptimizerParamGroup> e_groups;
    e_groups.push_back(group(encoder->trainable_parameters(), t, t.lr_encoder));
    opt_e_ = make_adam(std::move(e_groups), t, t.lr_encoder);
}

Trainer::~Trainer() = default;

void Trainer::load_stage1(const Checkpoint& ckpt) {
    if (stage_ != 2) throw UsageError("load_stage1 is only meaningful for stage 2");
    if (ckpt.stage != 1) throw UsageError("expected a stage-1 checkpoint, got stage " + std::to_string(ckpt.stage));
    restore_module(ckpt, "generator", *generator);
    restore_module(ckpt, "disc_real", *discs.real);
    restore_module(ckpt, "encoder", *encoder);
    step_ = 0;
}

void Trainer::restore(const Checkpoint& ckpt) {
    if (ckpt.stage != stage_)
        throw UsageError("checkpoint is from stage " + std::to_string(ckpt.stage) + ", trainer runs stage " +
                         std::to_string(stage_));
    restore_module(ckpt, "generator", *generator);
    restore_module(ckpt, "disc_real", *discs.real);
    restore_module(ckpt, "disc_style", *discs.style);
    restore_module(ckpt, "disc_conditional", *discs.conditional);
    restore_module(ckpt, "encoder", *encoder);
    restore_adam(ckpt, "opt_g", *opt_g_);
    restore_adam(ckpt, "opt_d", *opt_d_);
    restore_adam(ckpt, "opt_e", *opt_e_);
    auto q = ckpt.arrays.find("queue");
    queue_.restore(q == ckpt.arrays.end() ? torch::Tensor() : q->second);
    step_ = ckpt.step;
}

Checkpoint Trainer::checkpoint() {
    Checkpoint c;
    c.step = step_;
    c.stage = stage_;
    c.rng_seed = uint64_t(cfg_.train.seed);
    c.rng_counter = uint64_t(step_);
    c.config = cfg_.to_json();
    c.metadata = {{"config_hash", cfg_.hash()}, {"kind", "trainer"}};
    store_module(c, "generator", *generator);
    store_module(c, "disc_real", *discs.real);
    store_module(c, "disc_style", *discs.style);
    store_module(c, "disc_conditional", *discs.conditional);
    store_module(c, "encoder", *encoder);
    store_adam(c, "opt_g", *opt_g_);
    store_adam(c, "opt_d", *opt_d_);
    store_adam(c, "opt_e", *opt_e_);
    auto q = queue_.snapshot();
    if (q.defined()) c.arrays["queue"] = q.clone();
    c.sbm_raw = generator->sbm->raw.detach().clone();
    return c;
}

Trainer::Batch Trainer::sample_batch(torch::Generator& gen, bool consume_queue) {
    const int64_t b = cfg_.train.batch_size;
    Batch batch;
    batch.real = take(data_.natural, b, gen);
    batch.z_f = torch::randn({b, cfg_.model.z_dim}, gen);
    batch.poses = sample_poses(b, cfg_.camera, gen);
    if (stage_ == 2) {
        batch.styles = take(data_.styles, b, gen);
        torch::NoGradGuard no_grad;
        batch.z_s = encoder->encode(batch.styles);
        if (!queue_.empty()) batch.negatives = consume_queue ? queue_.pop_all() : queue_.snapshot();
    }
    return batch;
}

Trainer::Evaluated Trainer::evaluate(const Batch& batch, torch::Generator& gen, bool for_generator) {
    const int64_t n = generator->n_sites();
    auto render = [&](const torch::Tensor& z_f, const torch::Tensor& z_s, const torch::Tensor& poses,
                      int64_t split) {
        if (for_generator) return generator->forward(z_f, z_s, poses, split, &gen);
        torch::NoGradGuard no_grad;
        return generator->forward(z_f, z_s, poses, split, &gen);
    };
    auto r1 = [&](Discriminator& d, const torch::Tensor& images) {
        auto x = images.detach().requires_grad_(true);
        return r1_penalty([&](const torch::Tensor& in) { return d->forward(in).logit; }, x, weights_.r1_lambda);
    };
    auto sp = [](const torch::Tensor& x) { return torch::nn::functional::softplus(x).mean(); };
    // Non-saturating update for one branch: D pushes fakes down and reals up,
    // G pushes its fakes up.
    auto branch = [&](const torch::Tensor& fake, const torch::Tensor& real) {
        if (for_generator) return fake.defined() ? sp(-fake) : torch::zeros({});
        auto v = sp(-real);
        return fake.defined() ? v + sp(fake) : v;
    };
    auto val = [](const torch::Tensor& t) { return t.defined() ? t : torch::zeros({}); };

    Evaluated e;
    LossParts& p = e.parts;
    auto fake_r = discs.real->forward(render(batch.z_f, torch::Tensor(), batch.poses, n));
    auto real_r = discs.real->forward(batch.real).logit;
    p.real = adversarial_term(fake_r.logit, real_r);
    if (fake_r.pose.defined()) p.real_pose = pose_consistency_loss(fake_r.pose, batch.poses);
    if (!for_generator && weights_.r1_lambda > 0) p.real_r1 = r1(discs.real, batch.real);
    auto update = weights_.lambda1 * (branch(fake_r.logit, real_r) + val(p.real_pose) + val(p.real_r1));

    if (stage_ == 2) {
        auto fake_s = discs.style->forward(render(batch.z_f, batch.z_s, batch.poses, 0));
        auto real_s = discs.style->forward(batch.styles).logit;
        p.style = adversarial_term(fake_s.logit, real_s);
        if (fake_s.pose.defined()) p.style_pose = pose_consistency_loss(fake_s.pose, batch.poses);
        if (!for_generator && weights_.r1_lambda > 0) p.style_r1 = r1(discs.style, batch.styles);

        auto positive = discs.conditional->conditional(batch.styles, batch.z_s);
        torch::Tensor negative;
        if (batch.negatives.defined()) {
            const int64_t m = std::min(batch.negatives.size(0), batch.z_f.size(0));
            auto codes = batch.negatives.slice(0, 0, m);
            auto x_neg = render(batch.z_f.slice(0, 0, m), codes, batch.poses.slice(0, 0, m), 0);
            negative = discs.conditional->conditional(x_neg, codes);
        }
        p.latent = adversarial_term(negative, positive);
        update = update + weights_.lambda2 * (branch(fake_s.logit, real_s) + val(p.style_pose) + val(p.style_r1)) +
                 weights_.lambda3 * branch(negative, positive);
    }
    if (cfg_.train.objective == "literal") {
        auto total = total_loss(p, weights_);
        e.update = for_generator ? total.g : total.d;
    } else {
        e.update = update;
    }
    return e;
}

void Trainer::check_finite(const std::vector<torch::Tensor>& params, const std::string& what) const {
    for (size_t i = 0; i < params.size(); ++i)
        if (!torch::isfinite(params[i]).all().item<bool>())
            throw NumericError("non-finite parameter after " + what + " update at step " + std::to_string(step_),
                               int(i));
}

StepMetrics Trainer::step() {
    auto gen = make_generator(mix(uint64_t(cfg_.train.seed), uint64_t(step_)));
    Batch batch = sample_batch(gen, true);
    StepMetrics m;
    m.step = step_;

    auto d_params = params_of({discs.real.get()});
    if (stage_ == 2) d_params = params_of({discs.real.get(), discs.style.get(), discs.conditional.get()});

    opt_d_->zero_grad();
    auto d_eval = evaluate(batch, gen, false);
    const auto& parts = d_eval.parts;
    auto d_total = total_loss(parts, weights_);
    d_eval.update.backward();
    opt_d_->step();
    check_finite(d_params, "discriminator");

    auto record = [&](const std::string& name, const torch::Tensor& t) {
        if (t.defined()) m.values[name] = t.item<double>();
    };
    record("loss_d", d_total.d);
    record("loss_real", parts.real);
    record("r1_real", parts.real_r1);
    record("pose_real", parts.real_pose);
    record("loss_style", parts.style);
    record("r1_style", parts.style_r1);
    record("pose_style", parts.style_pose);
    record("loss_latent", parts.latent);

    for (auto& p : d_params) p.requires_grad_(false);
    opt_g_->zero_grad();
    auto g_eval = evaluate(batch, gen, true);
    auto g_total = total_loss(g_eval.parts, weights_);
    g_eval.update.backward();
    opt_g_->step();
    for (auto& p : d_params) p.requires_grad_(true);
    check_finite(generator->parameters(), "generator");
    record("loss_g", g_total.g);
    record("update_d", d_eval.update);
    record("update_g", g_eval.update);

    if (stage_ == 2 && cfg_.train.finetune_encoder) {
        opt_e_->zero_grad();
        auto augmented = augment_batch(batch.styles, gen, cfg_.encoder);
        auto reps = encoder->represent(interleave(batch.styles, augmented));
        auto loss = nt_xent_loss(reps, interleaved_pairs(batch.styles.size(0)), cfg_.encoder.tau);
        loss.backward();
        opt_e_->step();
        check_finite(encoder->trainable_parameters(), "encoder");
        record("contrastive", loss);
    }
    if (stage_ == 2) queue_.push(batch.z_s);

    for (const auto& [name, value] : m.values)
        if (!std::isfinite(value)) throw NumericError("non-finite " + name + " at step " + std::to_string(step_), -1);
    ++step_;
    return m;
}

TotalLoss Trainer::inspect_losses(bool for_generator) {
    auto gen = make_generator(mix(uint64_t(cfg_.train.seed), uint64_t(step_)));
    Batch batch = sample_batch(gen, false);
    return total_loss(evaluate(batch, gen, for_generator).parts, weights_);
}

std::vector<double> contrastive_pretrain(StyleEncoder& encoder, const torch::Tensor& styles, const Config& cfg,
                                         int64_t steps, int64_t batch, uint64_t seed) {
    if (steps < 1 || batch < 2) throw ArgumentError("contrastive pre-training needs steps >= 1 and batch >= 2");
    torch::optim::Adam opt(encoder->trainable_parameters(),
                           torch::optim::AdamOptions(cfg.train.lr_encoder)
                               .betas({cfg.train.adam_beta1, cfg.train.adam_beta2}));
    std::vector<double> losses;
    for (int64_t s = 0; s < steps; ++s) {
        auto gen = make_generator(mix(seed, uint64_t(s)));
        auto anchors = take(styles, batch, gen);
        auto reps = encoder->represent(interleave(anchors, augment_batch(anchors, gen, cfg.encoder)));
        auto loss = nt_xent_loss(reps, interleaved_pairs(batch), cfg.encoder.tau);
        opt.zero_grad();
        loss.backward();
        opt.step();
        losses.push_back(loss.item<double>());
    }
    return losses;
}

std::vector<std::filesystem::path> train(int stage, const Config& cfg, const Datasets& data,
                                         const std::filesystem::path& out_dir,
                                         const std::optional<std::filesystem::path>& init,
                                         const std::optional<std::filesystem::path>& resume) {
    Trainer trainer(cfg, stage, data);
    if (resume) {
        trainer.restore(load_checkpoint(*resume));
    } else if (stage == 2) {
        if (!init) throw UsageError("stage 2 needs a stage-1 checkpoint");
        if (!std::filesystem::exists(*init)) throw UsageError("stage-1 checkpoint not found: " + init->string());
        trainer.load_stage1(load_checkpoint(*init));
    }
    std::filesystem::create_directories(out_dir);
    std::ofstream log(out_dir / "metrics.jsonl", std::ios::app);
    if (!log) throw Error("cannot open " + (out_dir / "metrics.jsonl").string());

    std::vector<std::filesystem::path> written;
    auto save = [&] {
        std::ostringstream name;
        name << "ckpt_stage" << stage << "_" << std::setw(6) << std::setfill('0') << trainer.current_step() << ".tfck";
        auto path = out_dir / name.str();
        save_checkpoint(trainer.checkpoint(), path);
        written.push_back(path);
    };
    const int64_t every = cfg.train.checkpoint_every;
    while (trainer.current_step() < cfg.train.steps) {
        auto m = trainer.step();
        if (cfg.train.log_every > 0 && m.step % cfg.train.log_every == 0) {
            append_metrics(log, m);
            log.flush();
        }
        if (every > 0 && trainer.current_step() % every == 0 && trainer.current_step() < cfg.train.steps) save();
    }
    save();
    return written;
}

LoadedModel load_model(const Checkpoint& ckpt) {
    LoadedModel out;
    out.config = Config::from_json(ckpt.config);
    out.generator = Generator(out.config);
    out.encoder = StyleEncoder(out.config);
    restore_module(ckpt, "generator", *out.generator);
    restore_module(ckpt, "encoder", *out.encoder);
    out.generator->eval();
    out.encoder->eval();
    return out;
}

LoadedModel load_model(const std::filesystem::path& path) { return load_model(load_checkpoint(path)); }

Checkpoint initial_checkpoint(const Config& cfg) {
    cfg.validate();
    torch::manual_seed(cfg.train.seed);
    Generator g(cfg);
    StyleEncoder e(cfg);
    Checkpoint c;
    c.stage = 1;
    c.rng_seed = uint64_t(cfg.train.seed);
    c.config = cfg.to_json();
    c.metadata = {{"config_hash", cfg.hash()}, {"kind", "initial"}};
    store_module(c, "generator", *g);
    store_module(c, "encoder", *e);
    c.sbm_raw = g->sbm->raw.detach().clone();
    return c;
}

}  // namespace toonfield
