// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "memcc/core.hpp"

namespace memcc {

enum class LoadErrorKind {
    missing_file,
    undecodable,
    dimension_mismatch,
    bad_manifest,
};

std::string_view to_string(LoadErrorKind kind);

class LoadError : public std::runtime_error {
public:
    LoadError(LoadErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    LoadErrorKind kind() const noexcept { return kind_; }

private:
    LoadErrorKind kind_;
};

namespace io {

/// Decode an 8- or 16-bit RGB PNG. Samples are returned as value/255 or
/// value/65535 with no transfer function applied.
LinearImage read_png(const std::filesystem::path& path);

/// Encode `img` as an RGB PNG of the given bit depth (8 or 16). Components
/// are clipped to [0, 1]. The file is written atomically.
void write_png(const std::filesystem::path& path, const LinearImage& img, int bit_depth = 16);

/// Write `bytes` to a sibling temporary file, then rename it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

std::string read_file(const std::filesystem::path& path);

}  // namespace io
}  // namespace memcc
