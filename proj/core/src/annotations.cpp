#include "augment/annotations.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "augment/rng.hpp"

namespace augment {

using nlohmann::json;

const char* to_string(LayoutSource s) {
    switch (s) {
        case LayoutSource::ground_truth: return "ground_truth";
        case LayoutSource::llm_generated: return "llm_generated";
        case LayoutSource::gmm_generated: return "gmm_generated";
        case LayoutSource::oversampled: return "oversampled";
    }
    return "unknown";
}

LayoutSource layout_source_from_string(const std::string& s) {
    if (s == "ground_truth") return LayoutSource::ground_truth;
    if (s == "llm_generated") return LayoutSource::llm_generated;
    if (s == "gmm_generated") return LayoutSource::gmm_generated;
    if (s == "oversampled") return LayoutSource::oversampled;
    throw std::invalid_argument("unknown layout source: " + s);
}

std::string article_for(const std::string& name) {
    if (name.empty()) return "a";
    switch (std::tolower(static_cast<unsigned char>(name.front()))) {
        case 'a': case 'e': case 'i': case 'o': case 'u': return "an";
        default: return "a";
    }
}

std::string make_caption(const std::vector<LayoutObject>& objects) {
    std::string caption;
    for (const auto& o : objects) {
        if (!caption.empty()) caption += ", ";
        caption += article_for(o.category.name) + " " + o.category.name;
    }
    return caption;
}

namespace {

std::set<std::int64_t> read_shot_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CocoParseError("cannot open shot list: " + path.string());
    std::set<std::int64_t> ids;
    std::string line;
    while (std::getline(in, line)) {
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r");
        ids.insert(std::stoll(line.substr(first, last - first + 1)));
    }
    return ids;
}

}  // namespace

FewShotSet load_coco(const std::filesystem::path& path,
                     const std::optional<std::filesystem::path>& shot_list) {
    std::ifstream in(path);
    if (!in) throw CocoParseError("cannot open " + path.string());

    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw CocoParseError("malformed JSON in " + path.string() + " at byte " +
                             std::to_string(e.byte) + ": " + e.what());
    }

    FewShotSet set;
    for (const auto& c : doc.at("categories"))
        set.categories.add(c.at("id").get<int>(), c.at("name").get<std::string>());

    struct ImageInfo {
        std::string file_name;
        double width, height;
    };
    std::map<std::int64_t, ImageInfo> images;
    for (const auto& im : doc.at("images")) {
        images[im.at("id").get<std::int64_t>()] = {
            im.value("file_name", std::string{}),
            im.at("width").get<double>(),
            im.at("height").get<double>(),
        };
    }

    std::optional<std::set<std::int64_t>> selected;
    if (shot_list) selected = read_shot_list(*shot_list);

    std::map<std::int64_t, std::vector<LayoutObject>> per_image;
    for (const auto& ann : doc.at("annotations")) {
        const auto ann_id = ann.at("id").get<std::int64_t>();
        if (selected && !selected->count(ann_id)) continue;

        const auto image_id = ann.at("image_id").get<std::int64_t>();
        auto img_it = images.find(image_id);
        if (img_it == images.end())
            throw AnnotationValidationError(ann_id, "references unknown image " +
                                                        std::to_string(image_id));

        const auto cat_id = ann.at("category_id").get<int>();
        if (!set.categories.contains(cat_id))
            throw AnnotationValidationError(ann_id, "unknown category id " +
                                                        std::to_string(cat_id));

        const auto& bb = ann.at("bbox");
        if (bb.size() != 4) throw AnnotationValidationError(ann_id, "bbox must have 4 entries");
        BBox box{bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(),
                 bb[3].get<double>()};
        if (!box.positive())
            throw AnnotationValidationError(ann_id, "degenerate box (w, h must be > 0)");
        if (!box.inside(img_it->second.width, img_it->second.height)) {
            std::ostringstream os;
            os << "box [" << box.x << ", " << box.y << ", " << box.w << ", " << box.h
               << "] outside image bounds " << img_it->second.width << "x"
               << img_it->second.height;
            throw AnnotationValidationError(ann_id, os.str());
        }
        per_image[image_id].push_back({set.categories.get(cat_id), box});
    }

    for (auto& [image_id, objects] : per_image) {
        const auto& info = images.at(image_id);
        Layout layout;
        layout.image_id = image_id;
        layout.file_name = info.file_name;
        layout.image_frame = {info.width, info.height};
        layout.objects = std::move(objects);
        layout.caption = make_caption(layout.objects);
        layout.source = LayoutSource::ground_truth;
        set.layouts.push_back(std::move(layout));
    }

    // Few-shot splits declare k per instance; real splits overshoot per
    // image, so mismatched counts warn instead of failing.
    std::map<int, int> totals;
    for (const auto& l : set.layouts)
        for (const auto& [cat, n] : l.category_counts()) totals[cat] += n;
    if (!totals.empty()) {
        std::map<int, int> freq;
        for (const auto& [_, n] : totals) ++freq[n];
        int mode = 0, best = 0;
        for (const auto& [n, f] : freq)
            if (f > best) best = f, mode = n;
        set.shots = mode;
        for (const auto& [cat, n] : totals) {
            if (n != mode)
                set.warnings.push_back("category '" + set.categories.get(cat).name + "' has " +
                                       std::to_string(n) + " instances, expected " +
                                       std::to_string(mode) + " for the inferred shot setting");
        }
    }
    return set;
}

Layout flip_layout_x(const Layout& layout) {
    Layout out = layout;
    for (auto& o : out.objects) o.box = o.box.flipped_x(layout.image_frame.width);
    return out;
}

std::vector<Layout> oversample_gtos(const FewShotSet& set, int alpha, std::uint64_t rng_seed) {
    if (alpha < 1) throw std::invalid_argument("oversampling ratio must be >= 1");
    std::vector<Layout> out;
    out.reserve(set.layouts.size() * static_cast<std::size_t>(alpha));
    for (std::size_t i = 0; i < set.layouts.size(); ++i) {
        for (int r = 0; r < alpha; ++r) {
            Rng rng(mix_seed(rng_seed, i, static_cast<std::uint64_t>(r)));
            Layout copy = uniform01(rng) < 0.5 ? flip_layout_x(set.layouts[i]) : set.layouts[i];
            copy.source = LayoutSource::oversampled;
            out.push_back(std::move(copy));
        }
    }
    return out;
}

void emit_coco(const std::vector<Layout>& layouts,
               const std::vector<std::string>& image_files,
               const std::filesystem::path& path) {
    if (layouts.size() != image_files.size())
        throw std::invalid_argument("layout/image count mismatch: " +
                                    std::to_string(layouts.size()) + " layouts vs " +
                                    std::to_string(image_files.size()) + " images");
    for (std::size_t i = 0; i < layouts.size(); ++i) {
        if (!layouts[i].valid())
            throw std::invalid_argument("layout " + std::to_string(i) +
                                        " has a box outside its image frame; refusing to write");
    }

    json doc;
    doc["images"] = json::array();
    doc["annotations"] = json::array();
    doc["categories"] = json::array();

    std::map<int, std::string> categories;
    std::int64_t next_ann_id = 1;
    for (std::size_t i = 0; i < layouts.size(); ++i) {
        const auto& l = layouts[i];
        const std::int64_t image_id = static_cast<std::int64_t>(i) + 1;
        doc["images"].push_back({{"id", image_id},
                                 {"file_name", image_files[i]},
                                 {"width", l.image_frame.width},
                                 {"height", l.image_frame.height}});
        for (const auto& o : l.objects) {
            categories.emplace(o.category.id, o.category.name);
            doc["annotations"].push_back(
                {{"id", next_ann_id++},
                 {"image_id", image_id},
                 {"category_id", o.category.id},
                 {"bbox", {o.box.x, o.box.y, o.box.w, o.box.h}},
                 {"area", o.box.w * o.box.h},
                 {"iscrowd", 0}});
        }
    }
    for (const auto& [id, name] : categories)
        doc["categories"].push_back({{"id", id}, {"name", name}});

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

}  // namespace augment
