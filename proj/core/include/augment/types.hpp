#pragma once

#include <cctype>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace augment {

/// Axis-aligned box in COCO convention: [x, y, w, h], pixels, top-left origin.
struct BBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    bool positive() const { return w > 0.0 && h > 0.0; }

    bool inside(double frame_w, double frame_h) const {
        return positive() && x >= 0.0 && y >= 0.0 && x + w <= frame_w && y + h <= frame_h;
    }

    /// Mirror around the vertical axis of a frame: x' = W - x - w.
    BBox flipped_x(double frame_w) const { return {frame_w - x - w, y, w, h}; }

    friend bool operator==(const BBox&, const BBox&) = default;
};

struct CategoryLabel {
    int id = 0;
    std::string name;

    friend bool operator==(const CategoryLabel&, const CategoryLabel&) = default;
    friend auto operator<=>(const CategoryLabel& a, const CategoryLabel& b) {
        return a.id <=> b.id;
    }
};

class CategoryRegistry {
public:
    void add(int id, std::string name) {
        if (name.empty()) throw std::invalid_argument("category name must be non-empty");
        auto [it, inserted] = by_id_.emplace(id, CategoryLabel{id, std::move(name)});
        if (!inserted) throw std::invalid_argument("duplicate category id " + std::to_string(id));
    }

    const CategoryLabel& get(int id) const {
        auto it = by_id_.find(id);
        if (it == by_id_.end())
            throw std::out_of_range("unknown category id " + std::to_string(id));
        return it->second;
    }

    bool contains(int id) const { return by_id_.count(id) != 0; }

    /// Case-insensitive lookup by name.
    const CategoryLabel* find_name(const std::string& name) const {
        auto lower = [](const std::string& s) {
            std::string out = s;
            for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            return out;
        };
        const std::string needle = lower(name);
        for (const auto& [_, c] : by_id_)
            if (lower(c.name) == needle) return &c;
        return nullptr;
    }

    std::vector<CategoryLabel> all() const {
        std::vector<CategoryLabel> out;
        out.reserve(by_id_.size());
        for (const auto& [_, c] : by_id_) out.push_back(c);
        return out;
    }

    std::size_t size() const { return by_id_.size(); }

private:
    std::map<int, CategoryLabel> by_id_;
};

struct ImageFrame {
    double width = 0.0;
    double height = 0.0;

    friend bool operator==(const ImageFrame&, const ImageFrame&) = default;
};

enum class LayoutSource { ground_truth, llm_generated, gmm_generated, oversampled };

const char* to_string(LayoutSource s);
LayoutSource layout_source_from_string(const std::string& s);

struct LayoutObject {
    CategoryLabel category;
    BBox box;

    friend bool operator==(const LayoutObject&, const LayoutObject&) = default;
};

/// Category-labelled boxes plus a caption; the unit of layout generation
/// and of image-synthesis conditioning.
struct Layout {
    std::int64_t image_id = 0;
    std::string file_name;
    ImageFrame image_frame;
    std::vector<LayoutObject> objects;
    std::string caption;
    LayoutSource source = LayoutSource::ground_truth;

    bool valid() const {
        for (const auto& o : objects)
            if (!o.box.inside(image_frame.width, image_frame.height)) return false;
        return true;
    }

    /// Per-category instance counts, keyed by category id.
    std::map<int, int> category_counts() const {
        std::map<int, int> counts;
        for (const auto& o : objects) ++counts[o.category.id];
        return counts;
    }
};

/// Caption from object order: "a cat, a car, an orange".
std::string make_caption(const std::vector<LayoutObject>& objects);

/// "a" / "an" by leading-vowel heuristic.
std::string article_for(const std::string& name);

struct FewShotSet {
    int shots = 0;
    std::vector<Layout> layouts;
    CategoryRegistry categories;
    std::vector<std::string> warnings;
};

}  // namespace augment
