#pragma once

#include <filesystem>
#include <vector>

#include "augment/image.hpp"
#include "augment/types.hpp"

namespace augment {

/// Integer coverage grid: cell value = number of boxes of the category
/// covering that cell after rescaling boxes onto the grid.
struct HeatmapGrid {
    int width = 0;
    int height = 0;
    std::vector<int> counts;  // row-major

    int& at(int x, int y) { return counts[static_cast<std::size_t>(y) * width + x]; }
    int at(int x, int y) const { return counts[static_cast<std::size_t>(y) * width + x]; }
    long total() const {
        long t = 0;
        for (int c : counts) t += c;
        return t;
    }
};

HeatmapGrid heatmap(const std::vector<Layout>& layouts, const CategoryLabel& category, int width,
                    int height);

/// Fixed black-orange-white colormap render of a grid.
Image render_heatmap(const HeatmapGrid& grid);

void save_heatmap(const HeatmapGrid& grid, const std::filesystem::path& png_path,
                  const std::filesystem::path& json_path);

}  // namespace augment
