#pragma once

#include <filesystem>
#include <string>

#include <torch/torch.h>

namespace toonfield {

// [3, H, W] in [-1, 1] -> 8-bit RGB via round((v + 1) * 127.5), clamped to [0, 255].
torch::Tensor to_rgb8(const torch::Tensor& img);

std::string encode_png(const torch::Tensor& img);
// Decodes RGB, RGBA, grey or palette PNGs into [3, H, W] in [-1, 1].
// Throws IntegrityError("png", ...) on malformed input.
torch::Tensor decode_png(const std::string& bytes);

void write_png(const torch::Tensor& img, const std::filesystem::path& path);
torch::Tensor read_png(const std::filesystem::path& path);

// Bilinear resize of [3, H, W] to [3, res, res] (no-op when already square at res).
torch::Tensor resize_square(const torch::Tensor& img, int64_t res);

std::string base64_encode(const std::string& bytes);
// Throws ArgumentError on malformed input.
std::string base64_decode(const std::string& text);

}  // namespace toonfield
