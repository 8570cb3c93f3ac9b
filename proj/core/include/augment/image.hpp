#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace augment {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kWhite{255, 255, 255};

/// 8-bit RGB raster, row-major, tightly packed.
class Image {
public:
    Image() = default;
    Image(int width, int height, Rgb fill = {0, 0, 0})
        : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height, fill) {
        if (width <= 0 || height <= 0) throw std::invalid_argument("image dimensions must be positive");
    }

    int width() const { return width_; }
    int height() const { return height_; }

    Rgb& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
    const Rgb& at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

    const std::vector<Rgb>& pixels() const { return pixels_; }
    Rgb* data() { return pixels_.data(); }
    const Rgb* data() const { return pixels_.data(); }

    /// Fills the clipped rectangle [x, x+w) x [y, y+h).
    void fill_rect(int x, int y, int w, int h, Rgb color);

    /// Crops to the clipped rectangle; throws if the clipped area is empty.
    Image crop(int x, int y, int w, int h) const;

    friend bool operator==(const Image&, const Image&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<Rgb> pixels_;
};

}  // namespace augment
