// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace memcc {

using Rgb = std::array<double, 3>;

inline constexpr double kSqrt3 = 1.7320508075688772935;

/// Raised when an argument violates an operation's precondition.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Non-finite value produced inside a numerical stage. `layer()` is the
/// index of the network layer that produced it, or -1 outside the network.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, int layer)
        : std::runtime_error(what), layer_(layer) {}
    int layer() const noexcept { return layer_; }

private:
    int layer_;
};

/// Rescale `v` to L2 norm sqrt(3), so that neutral light is (1,1,1).
Rgb normalize(const Rgb& v);

/// Angle between two RGB directions in degrees, in [0, 180].
double angular_error(const Rgb& a, const Rgb& b);

/// Colour of a light. Always stored with strictly positive components
/// and L2 norm sqrt(3); only the direction carries information.
class Illuminant {
public:
    Illuminant() = default;
    explicit Illuminant(const Rgb& v);
    Illuminant(double r, double g, double b) : Illuminant(Rgb{r, g, b}) {}

    const Rgb& rgb() const noexcept { return rgb_; }
    double operator[](std::size_t c) const noexcept { return rgb_[c]; }

    friend bool operator==(const Illuminant&, const Illuminant&) = default;

private:
    Rgb rgb_{1.0, 1.0, 1.0};
};

double angular_error(const Illuminant& a, const Illuminant& b);

/// Dense H x W x 3 buffer of doubles, interleaved by pixel. The tag
/// parameter keeps scene images and illuminant fields apart at compile time.
template <class Tag>
class Image {
public:
    Image() = default;
    Image(int height, int width, double fill = 0.0)
        : height_(height), width_(width) {
        if (height < 0 || width < 0) throw DomainError("image dimensions must be non-negative");
        data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * 3, fill);
    }

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
    }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(int r, int c, int ch) noexcept { return data_[offset(r, c) + ch]; }
    double operator()(int r, int c, int ch) const noexcept { return data_[offset(r, c) + ch]; }

    Rgb pixel(int r, int c) const noexcept {
        const double* p = &data_[offset(r, c)];
        return {p[0], p[1], p[2]};
    }
    void set_pixel(int r, int c, const Rgb& v) noexcept {
        double* p = &data_[offset(r, c)];
        p[0] = v[0];
        p[1] = v[1];
        p[2] = v[2];
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    template <class Other>
    bool same_shape(const Image<Other>& o) const noexcept {
        return height_ == o.height() && width_ == o.width();
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t offset(int r, int c) const noexcept {
        return (static_cast<std::size_t>(r) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(c)) * 3;
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

/// Copy pixel data between image kinds.
template <class To, class From>
To retag(const Image<From>& src) {
    To out(src.height(), src.width());
    auto d = out.data();
    auto s = src.data();
    std::copy(s.begin(), s.end(), d.begin());
    return out;
}

/// Scene or ground-truth image in linear RGB, arbitrary exposure.
using LinearImage = Image<struct LinearTag>;

/// Throws DomainError unless every component is finite and >= 0.
void validate_linear(const LinearImage& img);

/// Largest component value of the image (0 for an empty image).
double max_component(const LinearImage& img);

struct Rect {
    int row0 = 0;
    int row1 = 0;  // exclusive
    int col0 = 0;
    int col1 = 0;  // exclusive

    int rows() const noexcept { return row1 - row0; }
    int cols() const noexcept { return col1 - col0; }
    std::size_t area() const noexcept { return static_cast<std::size_t>(rows()) * static_cast<std::size_t>(cols()); }
};

inline constexpr int kMapRows = 6;
inline constexpr int kMapCols = 10;
inline constexpr int kMapCells = kMapRows * kMapCols;

/// Partition of an image into 6 x 10 rectangles. All rows are H/6 tall and
/// all columns W/10 wide except the last row/column, which take the remainder.
class RegionGrid {
public:
    RegionGrid(int height, int width);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }

    const std::array<int, kMapRows + 1>& row_bounds() const noexcept { return rows_; }
    const std::array<int, kMapCols + 1>& col_bounds() const noexcept { return cols_; }

    Rect region(int row, int col) const noexcept {
        return {rows_[row], rows_[row + 1], cols_[col], cols_[col + 1]};
    }
    Rect region(int cell) const noexcept { return region(cell / kMapCols, cell % kMapCols); }

    int row_of(int r) const noexcept;
    int col_of(int c) const noexcept;
    int cell_of(int r, int c) const noexcept { return row_of(r) * kMapCols + col_of(c); }

    friend bool operator==(const RegionGrid&, const RegionGrid&) = default;

private:
    int height_;
    int width_;
    std::array<int, kMapRows + 1> rows_{};
    std::array<int, kMapCols + 1> cols_{};
};

RegionGrid make_region_grid(int height, int width);

/// 6 x 10 grid of illuminants in row-major order.
class EstimateMap {
public:
    EstimateMap() = default;
    explicit EstimateMap(const Illuminant& fill) { cells_.fill(fill); }

    Illuminant& operator[](int cell) noexcept { return cells_[static_cast<std::size_t>(cell)]; }
    const Illuminant& operator[](int cell) const noexcept { return cells_[static_cast<std::size_t>(cell)]; }
    Illuminant& at(int row, int col) noexcept { return (*this)[row * kMapCols + col]; }
    const Illuminant& at(int row, int col) const noexcept { return (*this)[row * kMapCols + col]; }

    auto begin() const noexcept { return cells_.begin(); }
    auto end() const noexcept { return cells_.end(); }

    friend bool operator==(const EstimateMap&, const EstimateMap&) = default;

private:
    std::array<Illuminant, kMapCells> cells_{};
};

/// Power-law transfer: encode raises to 1/exponent, decode to exponent.
struct GammaPolicy {
    double exponent = 2.2;
};

double gamma_encode(double x, GammaPolicy policy = {});
double gamma_decode(double x, GammaPolicy policy = {});

/// Componentwise power law. Components must lie in [0, 1].
LinearImage gamma_encode(const LinearImage& img, GammaPolicy policy = {});
LinearImage gamma_decode(const LinearImage& img, GammaPolicy policy = {});

}  // namespace memcc
