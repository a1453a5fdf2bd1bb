#include "toonfield/image_io.hpp"

#include <csetjmp>
#include <cstring>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>
#include <png.h>

#include "toonfield/errors.hpp"

namespace toonfield {
namespace {

struct ReadCursor {
    const std::string* data;
    size_t pos = 0;
};

void read_callback(png_structp png, png_bytep out, png_size_t n) {
    auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (n > cur->data->size() - cur->pos) png_error(png, "unexpected end of PNG data");
    std::memcpy(out, cur->data->data() + cur->pos, n);
    cur->pos += n;
}

void write_callback(png_structp png, png_bytep data, png_size_t n) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), n);
}

void flush_callback(png_structp) {}

}  // namespace

torch::Tensor to_rgb8(const torch::Tensor& img) {
    if (img.dim() != 3 || img.size(0) != 3) throw ArgumentError("image must have shape [3, H, W]");
    auto v = torch::round((img.detach().cpu().to(torch::kFloat64) + 1.0) * 127.5);
    return v.clamp(0, 255).to(torch::kUInt8);
}

std::string encode_png(const torch::Tensor& img) {
    auto rgb = to_rgb8(img).permute({1, 2, 0}).contiguous();  // [H, W, 3]
    const auto height = rgb.size(0);
    const auto width = rgb.size(1);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    std::string out;
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("PNG encoding failed");
    }
    png_set_write_fn(png, &out, write_callback, flush_callback);
    png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    auto* base = rgb.data_ptr<uint8_t>();
    for (int64_t y = 0; y < height; ++y) png_write_row(png, base + y * width * 3);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

namespace {

// Keeps libpng quiet on stderr; the message surfaces in the thrown error instead.
struct PngMessages {
    std::string error;
};

void png_error_quiet(png_structp png, png_const_charp msg) {
    static_cast<PngMessages*>(png_get_error_ptr(png))->error = msg;
    png_longjmp(png, 1);
}

void png_warning_quiet(png_structp, png_const_charp) {}

}  // namespace

torch::Tensor decode_png(const std::string& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0)
        throw IntegrityError("png", "missing PNG signature");
    PngMessages messages;
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, &messages, png_error_quiet, png_warning_quiet);
    if (!png) throw Error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    ReadCursor cursor{&bytes};
    torch::Tensor pixels;
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IntegrityError("png", messages.error.empty() ? "malformed PNG data" : messages.error);
    }
    png_set_read_fn(png, &cursor, read_callback);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    const auto width = png_get_image_width(png, info);
    const auto height = png_get_image_height(png, info);
    if (png_get_channels(png, info) != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IntegrityError("png", "unsupported channel layout");
    }
    pixels = torch::empty({int64_t(height), int64_t(width), 3}, torch::kUInt8);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data_ptr<uint8_t>() + size_t(y) * width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return pixels.permute({2, 0, 1}).to(torch::kFloat32) / 127.5 - 1.0;
}

void write_png(const torch::Tensor& img, const std::filesystem::path& path) {
    const auto bytes = encode_png(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
}

torch::Tensor read_png(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open image " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return decode_png(buf.str());
}

torch::Tensor resize_square(const torch::Tensor& img, int64_t res) {
    if (img.size(1) == res && img.size(2) == res) return img;
    namespace F = torch::nn::functional;
    return F::interpolate(img.unsqueeze(0), F::InterpolateFuncOptions()
                                                .size(std::vector<int64_t>{res, res})
                                                .mode(torch::kBilinear)
                                                .align_corners(false)
                                                .antialias(true))
        .squeeze(0);
}

std::string base64_encode(const std::string& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), int(bytes.size()));
    out.resize(size_t(n));
    return out;
}

std::string base64_decode(const std::string& text) {
    std::string clean;
    clean.reserve(text.size());
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) clean.push_back(c);
    if (clean.size() % 4 != 0) throw ArgumentError("base64 length must be a multiple of 4");
    std::string out(3 * clean.size() / 4, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(clean.data()), int(clean.size()));
    if (n < 0) throw ArgumentError("malformed base64 payload");
    size_t padding = 0;
    if (!clean.empty() && clean.back() == '=') ++padding;
    if (clean.size() > 1 && clean[clean.size() - 2] == '=') ++padding;
    out.resize(size_t(n) - padding);
    return out;
}

}  // namespace toonfield
