// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

#include "memcc/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include <unistd.h>

namespace memcc {

std::string_view to_string(LoadErrorKind kind) {
    switch (kind) {
        case LoadErrorKind::missing_file: return "missing file";
        case LoadErrorKind::undecodable: return "undecodable file";
        case LoadErrorKind::dimension_mismatch: return "dimension mismatch";
        case LoadErrorKind::bad_manifest: return "bad manifest";
    }
    return "load error";
}

namespace io {

namespace {

// Owns a png_image and releases libpng state on scope exit.
struct PngImageGuard {
    png_image image{};
    PngImageGuard() { image.version = PNG_IMAGE_VERSION; }
    ~PngImageGuard() { png_image_free(&image); }
    PngImageGuard(const PngImageGuard&) = delete;
    PngImageGuard& operator=(const PngImageGuard&) = delete;
};

}  // namespace

LinearImage read_png(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
        throw LoadError(LoadErrorKind::missing_file, "no such file: " + path.string());
    }

    PngImageGuard guard;
    png_image& image = guard.image;
    if (png_image_begin_read_from_file(&image, path.c_str()) == 0) {
        throw LoadError(LoadErrorKind::undecodable, path.string() + ": " + image.message);
    }

    const bool sixteen = (image.format & PNG_FORMAT_FLAG_LINEAR) != 0;
    image.format = sixteen ? PNG_FORMAT_LINEAR_RGB : PNG_FORMAT_RGB;
    const int h = static_cast<int>(image.height);
    const int w = static_cast<int>(image.width);
    const std::size_t n = static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 3;

    LinearImage out(h, w);
    auto dst = out.data();
    if (sixteen) {
        std::vector<png_uint_16> buf(n);
        if (png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr) == 0) {
            throw LoadError(LoadErrorKind::undecodable, path.string() + ": " + image.message);
        }
        for (std::size_t i = 0; i < n; ++i) dst[i] = buf[i] / 65535.0;
    } else {
        std::vector<png_byte> buf(n);
        if (png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr) == 0) {
            throw LoadError(LoadErrorKind::undecodable, path.string() + ": " + image.message);
        }
        for (std::size_t i = 0; i < n; ++i) dst[i] = buf[i] / 255.0;
    }
    return out;
}

void write_png(const std::filesystem::path& path, const LinearImage& img, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16) throw DomainError("png bit depth must be 8 or 16");
    if (img.empty()) throw DomainError("cannot write an empty image");

    PngImageGuard guard;
    png_image& image = guard.image;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());

    auto src = img.data();
    auto quantize = [](double v, double scale) {
        if (!(v > 0.0)) return 0.0;  // also maps NaN to 0
        return std::round(std::min(v, 1.0) * scale);
    };

    std::vector<png_uint_16> buf16;
    std::vector<png_byte> buf8;
    const void* pixels = nullptr;
    if (bit_depth == 16) {
        image.format = PNG_FORMAT_LINEAR_RGB;
        buf16.resize(src.size());
        for (std::size_t i = 0; i < src.size(); ++i) buf16[i] = static_cast<png_uint_16>(quantize(src[i], 65535.0));
        pixels = buf16.data();
    } else {
        image.format = PNG_FORMAT_RGB;
        buf8.resize(src.size());
        for (std::size_t i = 0; i < src.size(); ++i) buf8[i] = static_cast<png_byte>(quantize(src[i], 255.0));
        pixels = buf8.data();
    }

    png_alloc_size_t size = 0;
    if (png_image_write_to_memory(&image, nullptr, &size, 0, pixels, 0, nullptr) == 0) {
        throw std::runtime_error("png encode failed: " + std::string(image.message));
    }
    std::vector<std::uint8_t> bytes(size);
    if (png_image_write_to_memory(&image, bytes.data(), &size, 0, pixels, 0, nullptr) == 0) {
        throw std::runtime_error("png encode failed: " + std::string(image.message));
    }
    bytes.resize(size);
    write_file_atomic(path, bytes);
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open for writing: " + tmp.string());
        f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        f.flush();
        if (!f) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw std::runtime_error("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw LoadError(LoadErrorKind::missing_file, "cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace io
}  // namespace memcc
