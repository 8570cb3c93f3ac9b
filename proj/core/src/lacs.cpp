#include "augment/lacs.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "augment/lis.hpp"

namespace augment {

double softmax_first(double z0, double z1) {
    // Computed via the stable form; equals e^z0 / (e^z0 + e^z1).
    return 1.0 / (1.0 + std::exp(z1 - z0));
}

namespace {

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

}  // namespace

Image mask_category(const Image& image, const Layout& layout, const CategoryLabel& category) {
    bool found = false;
    Image out = image;
    for (const auto& o : layout.objects) {
        if (o.category.id != category.id) continue;
        found = true;
        const int x0 = static_cast<int>(std::floor(o.box.x));
        const int y0 = static_cast<int>(std::floor(o.box.y));
        const int x1 = static_cast<int>(std::ceil(o.box.x + o.box.w));
        const int y1 = static_cast<int>(std::ceil(o.box.y + o.box.h));
        out.fill_rect(x0, y0, x1 - x0, y1 - y0, kWhite);
    }
    if (!found)
        throw std::invalid_argument("category '" + category.name + "' does not occur in layout");
    return out;
}

double category_cs(const ImageTextScorer& scorer, const Image& image,
                   const CategoryLabel& category) {
    const auto z = scorer.logits(image, {lowercase(category.name), "background"});
    return softmax_first(z.at(0), z.at(1));
}

double category_cs_mask(const ImageTextScorer& scorer, const Image& masked_image,
                        const CategoryLabel& category) {
    const auto z = scorer.logits(masked_image, {lowercase(category.name), "white space"});
    return softmax_first(z.at(0), z.at(1));
}

SampleScore score_sample(const ImageTextScorer& scorer, const Image& image, const Layout& layout,
                         int sample_ref) {
    if (layout.objects.empty()) throw std::invalid_argument("layout has no objects to score");

    // One (cs, cs_mask) pair per distinct category; all boxes of the
    // category are masked together.
    std::map<int, CategoryLabel> distinct;
    for (const auto& o : layout.objects) distinct.emplace(o.category.id, o.category);

    SampleScore score;
    score.sample_ref = sample_ref;
    for (const auto& [_, cat] : distinct) {
        CategoryScore cs;
        cs.category = cat;
        cs.cs = category_cs(scorer, image, cat);
        cs.cs_mask = category_cs_mask(scorer, mask_category(image, layout, cat), cat);
        cs.delta = cs.cs - cs.cs_mask;
        score.per_category.push_back(std::move(cs));
    }
    double sum = 0.0;
    for (const auto& c : score.per_category) sum += c.delta;
    score.lacs = sum / static_cast<double>(score.per_category.size());
    return score;
}

std::vector<int> rank_and_pick(const std::vector<SampleScore>& scores, int top_n) {
    if (top_n < 1 || top_n > static_cast<int>(scores.size()))
        throw std::invalid_argument("top_n out of range [1, " + std::to_string(scores.size()) +
                                    "]");
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a].lacs > scores[b].lacs; });
    std::vector<int> picked(order.begin(), order.begin() + top_n);
    std::vector<int> refs;
    refs.reserve(picked.size());
    for (int i : picked) refs.push_back(scores[i].sample_ref);
    return refs;
}

double mlacs(const std::vector<SampleScore>& scores) {
    if (scores.empty()) throw std::invalid_argument("mlacs of an empty score list");
    double sum = 0.0;
    for (const auto& s : scores) sum += s.lacs;
    return sum / static_cast<double>(scores.size());
}

double cs_crop(const ImageTextScorer& scorer, const Image& image, const Layout& layout,
               const std::vector<CategoryLabel>& registry) {
    if (layout.objects.empty()) throw std::invalid_argument("layout has no objects to score");

    std::vector<std::string> texts;
    texts.reserve(registry.size() + 1);
    std::map<int, std::size_t> index_of;
    for (const auto& c : registry) {
        index_of[c.id] = texts.size();
        texts.push_back(lowercase(c.name));
    }
    texts.push_back("background");

    double sum = 0.0;
    int counted = 0;
    for (const auto& o : layout.objects) {
        Image crop;
        try {
            crop = image.crop(static_cast<int>(std::floor(o.box.x)),
                              static_cast<int>(std::floor(o.box.y)),
                              static_cast<int>(std::ceil(o.box.w)),
                              static_cast<int>(std::ceil(o.box.h)));
        } catch (const std::invalid_argument&) {
            continue;  // degenerate crop after clamping; excluded from the mean
        }
        const auto z = scorer.logits(crop, texts);
        const double zmax = *std::max_element(z.begin(), z.end());
        double denom = 0.0;
        for (double zi : z) denom += std::exp(zi - zmax);
        sum += std::exp(z[index_of.at(o.category.id)] - zmax) / denom;
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("all crops degenerate");
    return sum / counted;
}

std::vector<double> MockImageTextScorer::logits(const Image& image,
                                                const std::vector<std::string>& texts) const {
    const double total = static_cast<double>(image.pixels().size());
    std::map<Rgb, double, decltype([](const Rgb& a, const Rgb& b) {
                 return std::tie(a.r, a.g, a.b) < std::tie(b.r, b.g, b.b);
             })>
        histogram;
    for (const auto& p : image.pixels()) histogram[p] += 1.0;

    auto fraction = [&](Rgb color) {
        auto it = histogram.find(color);
        return it == histogram.end() ? 0.0 : it->second / total;
    };

    std::vector<double> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        double z;
        if (text == "background") {
            const double f = fraction(kMockBackground);
            z = 10.0 * f / (f + 0.01);
        } else if (text == "white space") {
            const double f = fraction(kWhite);
            z = 5.0 * f / (f + 0.05);
        } else {
            const double f = fraction(category_color(text));
            z = 10.0 * f / (f + 0.01);
        }
        out.push_back(z);
    }
    return out;
}

}  // namespace augment
