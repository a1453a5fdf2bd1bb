#include "toonfield/cli.hpp"

#include <atomic>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>

#include "toonfield/benchmark.hpp"
#include "toonfield/camera.hpp"
#include "toonfield/data.hpp"
#include "toonfield/errors.hpp"
#include "toonfield/image_io.hpp"
#include "toonfield/metrics.hpp"
#include "toonfield/service.hpp"
#include "toonfield/trainer.hpp"

namespace toonfield {
namespace {

std::atomic<RenderService*> g_running_service{nullptr};

void handle_signal(int) {
    if (auto* s = g_running_service.load()) s->stop();
}

struct Common {
    std::string config_file;
    std::string preset = "default";
    std::vector<std::string> overrides;

    Config build() const {
        Config cfg = preset == "desk" ? Config::desk() : Config();
        if (!config_file.empty()) cfg = Config::from_file(config_file);
        for (const auto& o : overrides) cfg.set(o);
        cfg.validate();
        return cfg;
    }
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_file, "JSON configuration file with flat dotted keys");
    cmd->add_option("--preset", c.preset, "Base configuration")->check(CLI::IsMember({"default", "desk"}));
    cmd->add_option("--set", c.overrides, "Override a configuration key (key=value), repeatable");
}

std::vector<std::pair<int64_t, int64_t>> parse_grid(const std::string& text) {
    std::vector<std::pair<int64_t, int64_t>> grid;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto x = item.find('x');
        if (x == std::string::npos) throw UsageError("grid entries look like RESxNS, got '" + item + "'");
        try {
            grid.emplace_back(std::stoll(item.substr(0, x)), std::stoll(item.substr(x + 1)));
        } catch (const std::exception&) {
            throw UsageError("grid entries look like RESxNS, got '" + item + "'");
        }
    }
    if (grid.empty()) throw UsageError("empty benchmark grid");
    return grid;
}

std::filesystem::path view_path(const std::filesystem::path& out, int64_t k) {
    auto name = out.stem().string() + "_v" + std::to_string(k) + out.extension().string();
    return out.parent_path() / name;
}

LoadedModel model_or_initial(const std::string& ckpt, const Config& cfg) {
    return ckpt.empty() ? load_model(initial_checkpoint(cfg)) : load_model(std::filesystem::path(ckpt));
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"toonfield: style-conditioned 3D-aware face generator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "toonfield 0.1.0");

    // train
    Common train_common;
    int stage = 1;
    std::string out_dir = "runs";
    std::string init_ckpt, resume_ckpt, data_dir, styles_dir;
    int64_t synthetic = 64;
    std::optional<int64_t> steps;
    auto* train_cmd = app.add_subcommand("train", "Run stage 1 or stage 2 training");
    add_common(train_cmd, train_common);
    train_cmd->add_option("--stage", stage, "Training stage")->check(CLI::IsMember({1, 2}));
    train_cmd->add_option("--out", out_dir, "Output directory for checkpoints and metrics.jsonl");
    train_cmd->add_option("--init", init_ckpt, "Stage-1 checkpoint (required for stage 2)");
    train_cmd->add_option("--resume", resume_ckpt, "Resume from a checkpoint of the same stage");
    train_cmd->add_option("--data", data_dir, "Folder of natural face PNGs (default: synthetic)");
    train_cmd->add_option("--styles", styles_dir, "Folder of style PNGs (default: synthetic)");
    train_cmd->add_option("--synthetic", synthetic, "Synthetic dataset size")->check(CLI::PositiveNumber);
    train_cmd->add_option("--steps", steps, "Override train.steps");

    // render
    Common render_common;
    std::string ckpt, style_path, out_path = "render.png";
    int64_t seed = 0, split_index = 0, res = 0, views = 0;
    std::optional<int64_t> style_seed;
    double pitch = std::numbers::pi / 2, yaw = std::numbers::pi / 2;
    auto* render_cmd = app.add_subcommand("render", "Render a face to PNG");
    add_common(render_cmd, render_common);
    render_cmd->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    render_cmd->add_option("--seed", seed, "Identity seed");
    auto* style_opt = render_cmd->add_option("--style", style_path, "Style image (PNG)")->check(CLI::ExistingFile);
    auto* style_seed_opt = render_cmd->add_option("--style-seed", style_seed, "Seed for a random style code");
    style_opt->excludes(style_seed_opt);
    render_cmd->add_option("--pitch", pitch, "Camera pitch (radians)");
    render_cmd->add_option("--yaw", yaw, "Camera yaw (radians)");
    render_cmd->add_option("--split-index", split_index, "Split index: 0 fully stylised, n fully natural");
    render_cmd->add_option("--res", res, "Output resolution (default: model.image_res)");
    render_cmd->add_option("--out", out_path, "Output PNG path");
    render_cmd->add_option("--views", views, "Render K evenly spaced yaws instead of --yaw")
        ->check(CLI::Range(int64_t{1}, int64_t{64}));

    // benchmark
    Common bench_common;
    std::string bench_ckpt, grid_text = "64x16,128x16,128x32", nr_mode = "both", bench_out;
    BenchmarkOptions bench_opts;
    auto* bench_cmd = app.add_subcommand("benchmark", "Time renders over a (res, ns) grid");
    add_common(bench_cmd, bench_common);
    bench_cmd->add_option("--ckpt", bench_ckpt, "Checkpoint (default: initial weights from the config)")
        ->check(CLI::ExistingFile);
    bench_cmd->add_option("--grid", grid_text, "Comma separated RESxNS pairs");
    bench_cmd->add_option("--nr", nr_mode, "Neural renderer")->check(CLI::IsMember({"on", "off", "both"}));
    bench_cmd->add_option("--frames", bench_opts.frames, "Timed frames per entry");
    bench_cmd->add_option("--warmup", bench_opts.warmup, "Warm-up frames per entry (>= 3)");
    bench_cmd->add_option("--out", bench_out, "Append JSON records to this file");

    // evaluate
    std::string eval_ckpt, real_dir, eval_out;
    int64_t samples = 200, identities = 4, n_styles = 4;
    auto* eval_cmd = app.add_subcommand("evaluate", "FID, KID, IS and pairwise diversity");
    eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--real", real_dir, "Folder of reference PNGs (default: synthetic faces)");
    eval_cmd->add_option("--samples", samples, "Generated and reference sample count")->check(CLI::Range(2, 100000));
    eval_cmd->add_option("--identities", identities, "Identities for the diversity protocol")
        ->check(CLI::PositiveNumber);
    eval_cmd->add_option("--styles", n_styles, "Styles per identity")->check(CLI::Range(2, 1000));
    eval_cmd->add_option("--out", eval_out, "Append JSON records to this file");

    // encode-style
    std::string enc_ckpt, enc_image;
    auto* enc_cmd = app.add_subcommand("encode-style", "Print the style code of an image as JSON");
    enc_cmd->add_option("--ckpt", enc_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    enc_cmd->add_option("--image", enc_image, "Style image (PNG)")->required()->check(CLI::ExistingFile);

    // serve
    Common serve_common;
    std::string serve_ckpt, host;
    int port = -1;
    int64_t max_parallel = 0;
    auto* serve_cmd = app.add_subcommand("serve", "HTTP render service");
    add_common(serve_cmd, serve_common);
    serve_cmd->add_option("--ckpt", serve_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    serve_cmd->add_option("--host", host, "Bind address (default: service.host)");
    serve_cmd->add_option("--port", port, "Port (default: service.port)")->check(CLI::Range(0, 65535));
    serve_cmd->add_option("--max-parallel", max_parallel, "Concurrent renders")->check(CLI::PositiveNumber);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : int(ExitCode::usage);
    }

    try {
        if (*train_cmd) {
            Config cfg = train_common.build();
            if (steps) cfg.train.steps = *steps;
            if (cfg.train.steps < 0) throw UsageError("--steps must be >= 0");
            const int64_t r = cfg.model.image_res;
            Datasets data;
            data.natural = data_dir.empty() ? synthetic_faces(synthetic, r, uint64_t(cfg.train.seed))
                                            : load_image_folder(data_dir, r);
            if (stage == 2)
                data.styles = styles_dir.empty() ? synthetic_styles(synthetic, r, uint64_t(cfg.train.seed) + 1)
                                                 : load_image_folder(styles_dir, r);
            std::optional<std::filesystem::path> init, resume;
            if (!init_ckpt.empty()) init = init_ckpt;
            if (!resume_ckpt.empty()) resume = resume_ckpt;
            for (const auto& p : train(stage, cfg, data, out_dir, init, resume)) out << p.string() << '\n';
        } else if (*render_cmd) {
            auto model = load_model(std::filesystem::path(ckpt));
            Config svc = render_common.build();
            RenderSpec spec;
            spec.seed = seed;
            spec.pitch = pitch;
            spec.split_index = split_index;
            spec.resolution = res;
            spec.style_seed = style_seed;
            if (!style_path.empty()) spec.style_image = read_png(style_path);
            const int64_t max_res = std::max<int64_t>(svc.service.max_resolution, 1024);
            std::vector<double> yaws = views > 0 ? multi_view_yaws(views, model.config.camera.yaw_range)
                                                 : std::vector<double>{yaw};
            for (size_t k = 0; k < yaws.size(); ++k) {
                spec.yaw = yaws[k];
                try {
                    validate_spec(model, spec, max_res);
                } catch (const RequestError& e) {
                    throw UsageError(std::string("--") + (e.field() == "split_index" ? "split-index"
                                                          : e.field() == "resolution" ? "res"
                                                                                      : e.field()) +
                                     ": " + e.what());
                }
                const auto path = views > 0 ? view_path(out_path, int64_t(k)) : std::filesystem::path(out_path);
                write_png(render_single(model, spec), path);
                out << path.string() << std::setprecision(17) << " pitch=" << spec.pitch << " yaw=" << spec.yaw
                    << '\n';
            }
        } else if (*bench_cmd) {
            Config cfg = bench_common.build();
            auto model = model_or_initial(bench_ckpt, cfg);
            const auto grid = parse_grid(grid_text);
            std::vector<SpeedReport> reports;
            for (bool nr : {true, false}) {
                if ((nr && nr_mode == "off") || (!nr && nr_mode == "on")) continue;
                auto r = speed_benchmark(model.generator, grid, nr, bench_opts);
                reports.insert(reports.end(), r.begin(), r.end());
            }
            print_speed_table(out, reports);
            if (!bench_out.empty()) {
                std::ofstream f(bench_out, std::ios::app);
                if (!f) throw Error("cannot open " + bench_out);
                write_speed_records(f, reports);
            }
        } else if (*eval_cmd) {
            auto model = load_model(std::filesystem::path(eval_ckpt));
            const auto& mc = model.config;
            torch::NoGradGuard no_grad;
            auto real = real_dir.empty() ? synthetic_faces(samples, mc.model.image_res, 7)
                                         : load_image_folder(real_dir, mc.model.image_res);
            auto gen = make_generator(uint64_t(mc.train.seed) + 99);
            std::vector<torch::Tensor> fakes;
            for (int64_t start = 0; start < samples; start += 16) {
                const int64_t b = std::min<int64_t>(16, samples - start);
                auto z = torch::randn({b, mc.model.z_dim}, gen);
                auto poses = sample_poses(b, mc.camera, gen);
                fakes.push_back(model.generator->forward(z, torch::Tensor(), poses, mc.model.n_sites(), nullptr));
            }
            auto fake = torch::cat(fakes);
            MetricNetwork net;
            auto fr = net.features(real), ff = net.features(fake);
            std::vector<MetricReport> reports;
            const auto hash = mc.hash();
            reports.push_back({"fid", fid(fr, ff), samples, hash});
            reports.push_back({"kid", kid(fr, ff, std::min<int64_t>({1000, fr.size(0), ff.size(0)})), samples, hash});
            reports.push_back({"is", inception_score(net.class_probs(fake)), samples, hash});
            auto ids = torch::randn({identities, mc.model.z_dim}, gen);
            auto styles = torch::randn({n_styles, mc.model.style_dim}, gen);
            reports.push_back(
                {"lpips_diversity", lpips_diversity(model.generator, ids, styles, net.distance_fn()), identities, hash});
            out << std::left << std::setw(18) << "metric" << "value\n";
            for (const auto& r : reports) out << std::setw(18) << r.name << r.value << '\n';
            if (!eval_out.empty()) {
                std::ofstream f(eval_out, std::ios::app);
                if (!f) throw Error("cannot open " + eval_out);
                for (const auto& r : reports) write_report(f, r);
            }
        } else if (*enc_cmd) {
            auto model = load_model(std::filesystem::path(enc_ckpt));
            auto code = encode_style_image(model, read_png(enc_image)).contiguous();
            std::vector<float> values(code.data_ptr<float>(), code.data_ptr<float>() + code.numel());
            out << nlohmann::json{{"dim", values.size()}, {"code", values}}.dump() << '\n';
        } else if (*serve_cmd) {
            Config cfg = serve_common.build();
            if (!host.empty()) cfg.service.host = host;
            if (port >= 0) cfg.service.port = port;
            if (max_parallel > 0) cfg.service.max_parallel = max_parallel;
            RenderService service(load_model(std::filesystem::path(serve_ckpt)), cfg.service);
            g_running_service = &service;
            std::signal(SIGINT, handle_signal);
            std::signal(SIGTERM, handle_signal);
            out << "listening on " << cfg.service.host << ":" << cfg.service.port << std::endl;
            service.listen(cfg.service.host, int(cfg.service.port));
            g_running_service = nullptr;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return int(e.exit_code());
    } catch (const c10::Error& e) {
        err << "error: " << e.what_without_backtrace() << '\n';
        return int(ExitCode::runtime);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return int(ExitCode::runtime);
    }
    return 0;
}

}  // namespace toonfield
