#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "augment/types.hpp"

namespace fixtures {

/// Unique temp directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("augment_" + tag + "_" + std::to_string(counter()++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::filesystem::path path_;
};

struct CocoAnnotation {
    std::int64_t id;
    std::int64_t image_id;
    int category_id;
    double x, y, w, h;
};

struct CocoImage {
    std::int64_t id;
    std::string file_name;
    double width, height;
};

inline void write_coco(const std::filesystem::path& path, const std::vector<CocoImage>& images,
                       const std::vector<CocoAnnotation>& annotations,
                       const std::vector<std::pair<int, std::string>>& categories) {
    nlohmann::json doc;
    doc["images"] = nlohmann::json::array();
    for (const auto& im : images)
        doc["images"].push_back({{"id", im.id},
                                 {"file_name", im.file_name},
                                 {"width", im.width},
                                 {"height", im.height}});
    doc["annotations"] = nlohmann::json::array();
    for (const auto& a : annotations)
        doc["annotations"].push_back({{"id", a.id},
                                      {"image_id", a.image_id},
                                      {"category_id", a.category_id},
                                      {"bbox", {a.x, a.y, a.w, a.h}}});
    doc["categories"] = nlohmann::json::array();
    for (const auto& [id, name] : categories)
        doc["categories"].push_back({{"id", id}, {"name", name}});
    std::ofstream out(path);
    out << doc.dump(2);
}

/// A 10-layout, 2-category set over a 640x480 frame.
inline void write_demo_coco(const std::filesystem::path& path, int n_images = 10) {
    std::vector<CocoImage> images;
    std::vector<CocoAnnotation> anns;
    std::int64_t ann_id = 1;
    for (int i = 0; i < n_images; ++i) {
        images.push_back({i + 1, "img_" + std::to_string(i + 1) + ".png", 640, 480});
        anns.push_back({ann_id++, i + 1, 1, 20.0 + 6 * i, 30.0 + 4 * i, 120, 90});
        anns.push_back({ann_id++, i + 1, 2, 360.0 - 5 * i, 250.0 + 3 * i, 150, 110});
    }
    write_coco(path, images, anns, {{1, "cat"}, {2, "car"}});
}

inline augment::Layout simple_layout(double frame_w = 640, double frame_h = 480) {
    augment::Layout l;
    l.image_frame = {frame_w, frame_h};
    l.objects = {{{1, "cat"}, {40, 40, 160, 120}}, {{2, "car"}, {330, 230, 180, 140}}};
    l.caption = augment::make_caption(l.objects);
    return l;
}

}  // namespace fixtures
