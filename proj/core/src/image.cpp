#include "augment/image.hpp"

#include <algorithm>

namespace augment {

void Image::fill_rect(int x, int y, int w, int h, Rgb color) {
    const int x0 = std::max(0, x);
    const int y0 = std::max(0, y);
    const int x1 = std::min(width_, x + w);
    const int y1 = std::min(height_, y + h);
    for (int yy = y0; yy < y1; ++yy)
        for (int xx = x0; xx < x1; ++xx) at(xx, yy) = color;
}

Image Image::crop(int x, int y, int w, int h) const {
    const int x0 = std::clamp(x, 0, width_);
    const int y0 = std::clamp(y, 0, height_);
    const int x1 = std::clamp(x + w, 0, width_);
    const int y1 = std::clamp(y + h, 0, height_);
    if (x1 <= x0 || y1 <= y0) throw std::invalid_argument("empty crop region");
    Image out(x1 - x0, y1 - y0);
    for (int yy = y0; yy < y1; ++yy)
        for (int xx = x0; xx < x1; ++xx) out.at(xx - x0, yy - y0) = at(xx, yy);
    return out;
}

}  // namespace augment
