#include "toonfield/data.hpp"

#include <algorithm>
#include <numbers>

#include "toonfield/camera.hpp"
#include "toonfield/errors.hpp"
#include "toonfield/image_io.hpp"

namespace toonfield {
namespace {

struct Grid {
    torch::Tensor x;  // [res, res] in [-1, 1], columns
    torch::Tensor y;  // rows, +y down
};

Grid pixel_grid(int64_t res) {
    auto c = (torch::arange(res, torch::kFloat32) + 0.5f) / float(res) * 2.0f - 1.0f;
    auto g = torch::meshgrid({c, c}, "ij");
    return {g[1], g[0]};
}

torch::Tensor soft_ellipse(const Grid& g, double cx, double cy, double rx, double ry, double softness) {
    auto d = ((g.x - cx) / rx).pow(2) + ((g.y - cy) / ry).pow(2);
    return torch::sigmoid((1.0 - d) / softness);
}

torch::Tensor paint(const torch::Tensor& canvas, const torch::Tensor& mask, const torch::Tensor& colour) {
    return canvas * (1.0 - mask) + mask * colour.view({3, 1, 1});
}

}  // namespace

torch::Tensor synthetic_faces(int64_t count, int64_t res, uint64_t seed) {
    if (count < 1 || res < 8) throw ArgumentError("need count >= 1 and res >= 8");
    auto gen = make_generator(seed);
    const auto g = pixel_grid(res);
    std::vector<torch::Tensor> out;
    for (int64_t n = 0; n < count; ++n) {
        auto r = torch::rand({16}, gen);
        auto a = r.accessor<float, 1>();
        auto bg_top = torch::tensor({0.2f + 0.5f * a[0], 0.3f + 0.4f * a[1], 0.4f + 0.5f * a[2]});
        auto bg = bg_top.view({3, 1, 1}) * (1.0 - 0.3 * (g.y + 1.0) / 2.0);
        auto skin = torch::tensor({0.75f + 0.2f * a[3], 0.55f + 0.2f * a[4], 0.45f + 0.2f * a[5]});
        const double cx = 0.15 * (a[6] - 0.5);
        const double cy = 0.1 * (a[7] - 0.5);
        const double rx = 0.48 + 0.1 * a[8];
        const double ry = 0.62 + 0.1 * a[9];
        auto img = paint(bg, soft_ellipse(g, cx, cy, rx, ry, 0.05), skin);
        auto hair = torch::tensor({0.1f + 0.4f * a[10], 0.05f + 0.3f * a[10], 0.05f + 0.2f * a[11]});
        auto hair_mask = soft_ellipse(g, cx, cy - ry * 0.75, rx * 1.05, ry * 0.45, 0.05) * (g.y < cy - ry * 0.35);
        img = paint(img, hair_mask, hair);
        auto dark = torch::tensor({0.1f, 0.08f, 0.08f});
        const double ey = cy - 0.12 + 0.05 * (a[12] - 0.5);
        const double ex = 0.2 + 0.04 * a[13];
        img = paint(img, soft_ellipse(g, cx - ex, ey, 0.08, 0.05, 0.1), dark);
        img = paint(img, soft_ellipse(g, cx + ex, ey, 0.08, 0.05, 0.1), dark);
        auto lips = torch::tensor({0.6f + 0.3f * a[14], 0.2f, 0.25f});
        img = paint(img, soft_ellipse(g, cx, cy + 0.3 + 0.05 * a[15], 0.18, 0.05, 0.1), lips);
        out.push_back(img.clamp(0, 1) * 2.0 - 1.0);
    }
    return torch::stack(out);
}

torch::Tensor synthetic_styles(int64_t count, int64_t res, uint64_t seed) {
    if (count < 1 || res < 8) throw ArgumentError("need count >= 1 and res >= 8");
    auto gen = make_generator(seed);
    const auto g = pixel_grid(res);
    std::vector<torch::Tensor> out;
    for (int64_t n = 0; n < count; ++n) {
        auto palette = torch::rand({3, 3}, gen);
        auto r = torch::rand({8}, gen);
        auto a = r.accessor<float, 1>();
        const int pattern = int(a[0] * 3.0f) % 3;
        const double freq = 3.0 + 6.0 * a[1];
        const double angle = std::numbers::pi * a[2];
        torch::Tensor texture;
        if (pattern == 0) {
            auto t = g.x * std::cos(angle) + g.y * std::sin(angle);
            texture = 0.5 + 0.5 * torch::sin(t * freq * std::numbers::pi);
        } else if (pattern == 1) {
            texture = 0.5 + 0.5 * torch::sign(torch::sin(g.x * freq * 2.0) * torch::sin(g.y * freq * 2.0));
        } else {
            auto rr = torch::sqrt(g.x.pow(2) + g.y.pow(2));
            texture = 0.5 + 0.5 * torch::cos(rr * freq * 2.0 * std::numbers::pi);
        }
        auto bg = palette[0].view({3, 1, 1}) * texture + palette[1].view({3, 1, 1}) * (1.0 - texture);
        const double rx = 0.45 + 0.15 * a[3];
        const double ry = 0.55 + 0.15 * a[4];
        auto face_colour = palette[2].view({3, 1, 1}) * (0.7 + 0.3 * texture);
        auto mask = soft_ellipse(g, 0.1 * (a[5] - 0.5), 0.1 * (a[6] - 0.5), rx, ry, 0.03);
        auto img = bg * (1.0 - mask) + face_colour * mask;
        auto eyes = soft_ellipse(g, -0.22, -0.1, 0.1, 0.07, 0.05) + soft_ellipse(g, 0.22, -0.1, 0.1, 0.07, 0.05);
        img = img * (1.0 - eyes * a[7]);
        out.push_back(img.clamp(0, 1) * 2.0 - 1.0);
    }
    return torch::stack(out);
}

torch::Tensor load_image_folder(const std::filesystem::path& dir, int64_t res) {
    if (!std::filesystem::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw UsageError("no PNG images in " + dir.string());
    std::vector<torch::Tensor> imgs;
    for (const auto& f : files) imgs.push_back(resize_square(read_png(f), res));
    return torch::stack(imgs);
}

}  // namespace toonfield
