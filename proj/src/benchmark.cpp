#include "toonfield/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <new>

#include <nlohmann/json.hpp>

#include "toonfield/camera.hpp"
#include "toonfield/errors.hpp"

namespace toonfield {

std::vector<SpeedReport> speed_benchmark(Generator& generator, const std::vector<std::pair<int64_t, int64_t>>& grid,
                                         bool with_nr, const BenchmarkOptions& opts) {
    if (opts.frames < 1) throw ArgumentError("benchmark needs at least one timed frame");
    if (opts.warmup < 3) throw ArgumentError("benchmark needs at least three warm-up frames");
    torch::NoGradGuard no_grad;
    const auto& cfg = generator->config();
    auto gen = make_generator(opts.seed);
    auto z_f = torch::randn({1, cfg.model.z_dim}, gen);
    auto z_s = torch::randn({1, cfg.model.style_dim}, gen);
    auto pose = torch::tensor({CameraPose::frontal().pitch, CameraPose::frontal().yaw}, torch::kFloat32).view({1, 2});

    std::vector<SpeedReport> reports;
    for (const auto& [res, ns] : grid) {
        SpeedReport r;
        r.resolution = res;
        r.n_samples_per_ray = ns;
        r.with_nr = with_nr;
        RenderOptions ro;
        ro.resolution = res;
        ro.n_samples = ns;
        ro.neural_renderer = with_nr;
        try {
            auto fused = generator->fuse(z_f, z_s, 0);
            for (int64_t i = 0; i < opts.warmup; ++i) generator->render(fused, pose, nullptr, ro);
            std::vector<double> seconds;
            for (int64_t i = 0; i < opts.frames; ++i) {
                const auto t0 = std::chrono::steady_clock::now();
                auto img = generator->render(fused, pose, nullptr, ro);
                (void)img.data_ptr<float>();
                const auto t1 = std::chrono::steady_clock::now();
                seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
            }
            std::sort(seconds.begin(), seconds.end());
            const size_t n = seconds.size();
            const double median = n % 2 ? seconds[n / 2] : 0.5 * (seconds[n / 2 - 1] + seconds[n / 2]);
            r.fps = 1.0 / std::max(median, 1e-12);
            r.frames_timed = opts.frames;
        } catch (const c10::OutOfMemoryError&) {
            r.out_of_memory = true;
        } catch (const std::bad_alloc&) {
            r.out_of_memory = true;
        }
        reports.push_back(r);
    }
    return reports;
}

void print_speed_table(std::ostream& out, const std::vector<SpeedReport>& reports) {
    out << std::left << std::setw(6) << "res" << std::setw(6) << "ns" << std::setw(8) << "nr" << "fps\n";
    for (const auto& r : reports) {
        out << std::setw(6) << r.resolution << std::setw(6) << r.n_samples_per_ray << std::setw(8)
            << (r.with_nr ? "w/" : "w/o");
        if (r.out_of_memory)
            out << "OOM\n";
        else
            out << std::fixed << std::setprecision(2) << r.fps << '\n';
        out.unsetf(std::ios::fixed);
    }
}

void write_speed_records(std::ostream& out, const std::vector<SpeedReport>& reports) {
    for (const auto& r : reports) {
        nlohmann::json rec = {{"name", "fps"},
                              {"resolution", r.resolution},
                              {"n_samples_per_ray", r.n_samples_per_ray},
                              {"with_nr", r.with_nr},
                              {"frames_timed", r.frames_timed}};
        if (r.out_of_memory)
            rec["value"] = "OOM";
        else
            rec["value"] = r.fps;
        out << rec.dump() << '\n';
    }
}

}  // namespace toonfield
