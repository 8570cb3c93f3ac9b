#include "augment/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "augment/png_io.hpp"

namespace augment {

HeatmapGrid heatmap(const std::vector<Layout>& layouts, const CategoryLabel& category, int width,
                    int height) {
    if (width <= 0 || height <= 0)
        throw std::invalid_argument("heatmap resolution must be positive");
    HeatmapGrid grid;
    grid.width = width;
    grid.height = height;
    grid.counts.assign(static_cast<std::size_t>(width) * height, 0);

    for (const auto& layout : layouts) {
        const double sx = width / layout.image_frame.width;
        const double sy = height / layout.image_frame.height;
        for (const auto& o : layout.objects) {
            if (o.category.id != category.id) continue;
            const int x0 = std::clamp(static_cast<int>(std::floor(o.box.x * sx)), 0, width);
            const int y0 = std::clamp(static_cast<int>(std::floor(o.box.y * sy)), 0, height);
            const int x1 =
                std::clamp(static_cast<int>(std::ceil((o.box.x + o.box.w) * sx)), 0, width);
            const int y1 =
                std::clamp(static_cast<int>(std::ceil((o.box.y + o.box.h) * sy)), 0, height);
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) ++grid.at(x, y);
        }
    }
    return grid;
}

Image render_heatmap(const HeatmapGrid& grid) {
    const int peak = grid.counts.empty()
                         ? 0
                         : *std::max_element(grid.counts.begin(), grid.counts.end());
    Image img(grid.width, grid.height);
    for (int y = 0; y < grid.height; ++y) {
        for (int x = 0; x < grid.width; ++x) {
            const double t = peak == 0 ? 0.0 : static_cast<double>(grid.at(x, y)) / peak;
            // black -> orange -> white
            Rgb c;
            if (t < 0.5) {
                c.r = static_cast<std::uint8_t>(std::lround(2 * t * 255));
                c.g = static_cast<std::uint8_t>(std::lround(2 * t * 140));
                c.b = 0;
            } else {
                const double u = 2 * (t - 0.5);
                c.r = 255;
                c.g = static_cast<std::uint8_t>(std::lround(140 + u * 115));
                c.b = static_cast<std::uint8_t>(std::lround(u * 255));
            }
            img.at(x, y) = c;
        }
    }
    return img;
}

void save_heatmap(const HeatmapGrid& grid, const std::filesystem::path& png_path,
                  const std::filesystem::path& json_path) {
    write_png(render_heatmap(grid), png_path);
    nlohmann::json doc;
    doc["width"] = grid.width;
    doc["height"] = grid.height;
    doc["counts"] = grid.counts;
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("cannot write " + json_path.string());
    out << doc.dump() << "\n";
}

}  // namespace augment
