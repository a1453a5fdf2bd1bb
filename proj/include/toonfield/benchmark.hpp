#pragma once

#include <ostream>
#include <utility>
#include <vector>

#include "toonfield/generator.hpp"

namespace toonfield {

struct SpeedReport {
    int64_t resolution = 0;
    int64_t n_samples_per_ray = 0;
    bool with_nr = false;
    double fps = 0.0;          // median over timed frames; 0 when out of memory
    int64_t frames_timed = 0;
    bool out_of_memory = false;
};

struct BenchmarkOptions {
    int64_t frames = 5;
    int64_t warmup = 3;
    uint64_t seed = 0;
};

// Times single-image renders for every (resolution, samples-per-ray) pair.
// Without the neural renderer every output pixel is a volume-rendered ray.
// Warm-up frames are excluded; allocation failures are reported as
// out_of_memory instead of propagating.
std::vector<SpeedReport> speed_benchmark(Generator& generator, const std::vector<std::pair<int64_t, int64_t>>& grid,
                                         bool with_nr, const BenchmarkOptions& opts = {});

void print_speed_table(std::ostream& out, const std::vector<SpeedReport>& reports);
void write_speed_records(std::ostream& out, const std::vector<SpeedReport>& reports);

}  // namespace toonfield
