#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace solo {

/// Row-major H x W mask of 0/1 values.
struct BinaryMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> bits;

    BinaryMask() = default;
    BinaryMask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}

    std::uint8_t at(std::size_t y, std::size_t x) const { return bits[y * width + x]; }
    void set(std::size_t y, std::size_t x, bool on = true) { bits[y * width + x] = on ? 1 : 0; }

    std::size_t area() const;
    bool empty() const { return area() == 0; }
    bool same_extent(const BinaryMask& other) const
    {
        return height == other.height && width == other.width;
    }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Row-major H x W mask of probabilities in [0, 1].
struct SoftMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;
};

/// Pixel bounds of a mask's foreground, inclusive.
struct PixelBox {
    std::size_t x0, y0, x1, y1;
    std::size_t width() const { return x1 - x0 + 1; }
    std::size_t height() const { return y1 - y0 + 1; }
};

std::optional<PixelBox> foreground_box(const BinaryMask& mask);

struct Point {
    double x = 0;
    double y = 0;
    friend bool operator==(const Point&, const Point&) = default;
};

using Polygon = std::vector<Point>;

/// One ground-truth object.
struct InstanceAnnotation {
    int category = 0;  // 1..C
    BinaryMask mask;
    std::vector<Polygon> polygons;  // optional source outline(s)
};

/// Raised for unreadable or malformed inputs (exit code 2 in the CLI).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for invalid configuration (exit code 1 in the CLI).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when training produces a non-finite value (exit code 3 in the CLI).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace solo
