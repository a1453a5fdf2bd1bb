#pragma once

#include <filesystem>

#include <torch/torch.h>

namespace toonfield {

// Procedural stand-in for aligned face photos: a skin-toned ellipse with eyes
// and a mouth over a smooth background, jittered per image. [N, 3, res, res] in [-1, 1].
torch::Tensor synthetic_faces(int64_t count, int64_t res, uint64_t seed);

// Procedural "artistic" images: a face silhouette rendered with a per-image
// palette and a stripe/checker/ring texture. [N, 3, res, res] in [-1, 1].
torch::Tensor synthetic_styles(int64_t count, int64_t res, uint64_t seed);

// Every *.png in `dir` (sorted by name), resized to res x res.
torch::Tensor load_image_folder(const std::filesystem::path& dir, int64_t res);

}  // namespace toonfield
